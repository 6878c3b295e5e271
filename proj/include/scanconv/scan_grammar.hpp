#pragma once

// The SCAN command language: tokens, parse trees, the interpreter that maps
// commands to action sequences, and exhaustive enumeration of all commands.
//
// Phrase structure:
//   C -> S and S | S after S | S
//   S -> V twice | V thrice | V
//   V -> D | U' opposite left|right | U' around left|right | U
//   D -> U left | U right | turn left | turn right
// with U in {walk, look, run, jump} and U' = U + {turn}.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scanconv {

enum class CommandToken : std::uint8_t {
  kWalk,
  kLook,
  kRun,
  kJump,
  kTurn,
  kLeft,
  kRight,
  kOpposite,
  kAround,
  kTwice,
  kThrice,
  kAnd,
  kAfter,
};

enum class ActionToken : std::uint8_t {
  kWalk,
  kLook,
  kRun,
  kJump,
  kLeftTurn,
  kRightTurn,
};

inline constexpr std::size_t kNumCommandTokens = 13;
inline constexpr std::size_t kNumActionTokens = 6;
inline constexpr std::size_t kMaxCommandLength = 9;
inline constexpr std::size_t kMaxActionLength = 48;

inline constexpr std::array<CommandToken, kNumCommandTokens> kAllCommandTokens = {
    CommandToken::kWalk,     CommandToken::kLook,   CommandToken::kRun,
    CommandToken::kJump,     CommandToken::kTurn,   CommandToken::kLeft,
    CommandToken::kRight,    CommandToken::kOpposite, CommandToken::kAround,
    CommandToken::kTwice,    CommandToken::kThrice, CommandToken::kAnd,
    CommandToken::kAfter};

inline constexpr std::array<ActionToken, kNumActionTokens> kAllActionTokens = {
    ActionToken::kWalk,     ActionToken::kLook, ActionToken::kRun,
    ActionToken::kJump,     ActionToken::kLeftTurn, ActionToken::kRightTurn};

using Command = std::vector<CommandToken>;
using ActionSequence = std::vector<ActionToken>;

/// A command paired with its gold execution.
struct Example {
  Command command;
  ActionSequence actions;

  friend bool operator==(const Example&, const Example&) = default;
};

// Token spelling. Action names default to WALK/LTURN/...; the corpus naming
// (I_WALK, I_TURN_LEFT, ...) is used by the published SCAN files.
enum class ActionNaming { kCanonical, kScanCorpus };

std::string_view to_string(CommandToken token);
std::string_view to_string(ActionToken token, ActionNaming naming = ActionNaming::kCanonical);
CommandToken parse_command_token(std::string_view word);
/// Accepts either naming.
ActionToken parse_action_token(std::string_view word);

/// True for walk/look/run/jump.
bool is_primitive_verb(CommandToken token);
ActionToken action_of(CommandToken primitive_verb);

std::string render(std::span<const CommandToken> command);
std::string render(std::span<const ActionToken> actions,
                   ActionNaming naming = ActionNaming::kCanonical);
Command parse_command_text(std::string_view text);
ActionSequence parse_action_text(std::string_view text);

// ---------------------------------------------------------------------------
// Parse trees

enum class Direction : std::uint8_t {
  kPlain,
  kLeft,
  kRight,
  kOppositeLeft,
  kOppositeRight,
  kAroundLeft,
  kAroundRight,
};

enum class Repetition : std::uint8_t { kOnce, kTwice, kThrice };

enum class Conjunction : std::uint8_t { kNone, kAnd, kAfter };

/// V node: a verb (primitive or `turn`) with its direction modifier.
struct VerbPhrase {
  CommandToken verb = CommandToken::kWalk;
  Direction direction = Direction::kPlain;

  friend bool operator==(const VerbPhrase&, const VerbPhrase&) = default;
};

/// S node.
struct RepeatedPhrase {
  VerbPhrase phrase;
  Repetition repetition = Repetition::kOnce;

  friend bool operator==(const RepeatedPhrase&, const RepeatedPhrase&) = default;
};

/// C node. `second` is present iff `conjunction != kNone`.
struct ParseTree {
  Conjunction conjunction = Conjunction::kNone;
  RepeatedPhrase first;
  std::optional<RepeatedPhrase> second;

  friend bool operator==(const ParseTree&, const ParseTree&) = default;
};

/// Throws UngrammaticalCommand when no derivation exists.
ParseTree parse(std::span<const CommandToken> tokens);

/// Leaves of the tree, left to right.
Command render_tree(const ParseTree& tree);

ActionSequence interpret(const VerbPhrase& phrase);
ActionSequence interpret(const RepeatedPhrase& phrase);
ActionSequence interpret(const ParseTree& tree);

/// interpret(parse(command)).
ActionSequence execute(std::span<const CommandToken> command);

/// Every grammatical command exactly once, in a fixed order: single phrases,
/// then all `and` pairs, then all `after` pairs.
const std::vector<Example>& enumerate_all();

/// All 34 V phrases and all 102 S phrases, in enumeration order.
std::vector<VerbPhrase> all_verb_phrases();
std::vector<RepeatedPhrase> all_repeated_phrases();

/// Leaves of a single S phrase.
Command render_phrase(const RepeatedPhrase& phrase);

// ---------------------------------------------------------------------------
// Text serialization: `IN: <command words> OUT: <action words>`

std::string format_line(const Example& example,
                        ActionNaming naming = ActionNaming::kCanonical);
/// Throws MalformedLine / UnknownToken. Does not check grammaticality.
Example parse_line(std::string_view line);

struct CorpusCheck {
  std::size_t lines = 0;
  std::size_t matches = 0;
  std::vector<std::size_t> mismatched_lines;  // 1-based
};

/// Re-executes every IN field of a corpus file and compares against its OUT.
CorpusCheck verify_corpus(const std::string& path);

}  // namespace scanconv
