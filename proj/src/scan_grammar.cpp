#include "scanconv/scan_grammar.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "scanconv/errors.hpp"

namespace scanconv {

namespace {

constexpr std::array<std::string_view, kNumCommandTokens> kCommandNames = {
    "walk", "look", "run", "jump", "turn", "left", "right",
    "opposite", "around", "twice", "thrice", "and", "after"};

constexpr std::array<std::string_view, kNumActionTokens> kActionNames = {
    "WALK", "LOOK", "RUN", "JUMP", "LTURN", "RTURN"};

constexpr std::array<std::string_view, kNumActionTokens> kCorpusActionNames = {
    "I_WALK", "I_LOOK", "I_RUN", "I_JUMP", "I_TURN_LEFT", "I_TURN_RIGHT"};

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' ||
                                 text[pos] == '\r' || text[pos] == '\n'))
      ++pos;
    std::size_t end = pos;
    while (end < text.size() && text[end] != ' ' && text[end] != '\t' &&
           text[end] != '\r' && text[end] != '\n')
      ++end;
    if (end > pos) words.push_back(text.substr(pos, end - pos));
    pos = end;
  }
  return words;
}

bool is_side(CommandToken t) {
  return t == CommandToken::kLeft || t == CommandToken::kRight;
}

[[noreturn]] void ungrammatical(std::span<const CommandToken> tokens, std::string_view why) {
  throw UngrammaticalCommand("'" + render(tokens) + "': " + std::string(why));
}

VerbPhrase parse_verb_phrase(std::span<const CommandToken> tokens,
                             std::span<const CommandToken> whole) {
  if (tokens.empty()) ungrammatical(whole, "empty phrase");
  const CommandToken verb = tokens[0];
  const bool turn = verb == CommandToken::kTurn;
  if (!is_primitive_verb(verb) && !turn) ungrammatical(whole, "phrase must start with a verb");

  if (tokens.size() == 1) {
    if (turn) ungrammatical(whole, "'turn' needs a direction");
    return {verb, Direction::kPlain};
  }
  if (tokens.size() == 2) {
    if (!is_side(tokens[1])) ungrammatical(whole, "expected left/right after verb");
    return {verb, tokens[1] == CommandToken::kLeft ? Direction::kLeft : Direction::kRight};
  }
  if (tokens.size() == 3) {
    if (!is_side(tokens[2])) ungrammatical(whole, "expected left/right");
    const bool left = tokens[2] == CommandToken::kLeft;
    if (tokens[1] == CommandToken::kOpposite)
      return {verb, left ? Direction::kOppositeLeft : Direction::kOppositeRight};
    if (tokens[1] == CommandToken::kAround)
      return {verb, left ? Direction::kAroundLeft : Direction::kAroundRight};
    ungrammatical(whole, "expected opposite/around");
  }
  ungrammatical(whole, "verb phrase too long");
}

RepeatedPhrase parse_repeated_phrase(std::span<const CommandToken> tokens,
                                     std::span<const CommandToken> whole) {
  if (tokens.empty()) ungrammatical(whole, "empty phrase");
  Repetition rep = Repetition::kOnce;
  if (tokens.back() == CommandToken::kTwice) rep = Repetition::kTwice;
  if (tokens.back() == CommandToken::kThrice) rep = Repetition::kThrice;
  if (rep != Repetition::kOnce) tokens = tokens.first(tokens.size() - 1);
  return {parse_verb_phrase(tokens, whole), rep};
}

void append_repeated(ActionSequence& out, const ActionSequence& unit, std::size_t times) {
  for (std::size_t i = 0; i < times; ++i) out.insert(out.end(), unit.begin(), unit.end());
}

}  // namespace

std::string_view to_string(CommandToken token) {
  return kCommandNames[static_cast<std::size_t>(token)];
}

std::string_view to_string(ActionToken token, ActionNaming naming) {
  const auto i = static_cast<std::size_t>(token);
  return naming == ActionNaming::kScanCorpus ? kCorpusActionNames[i] : kActionNames[i];
}

CommandToken parse_command_token(std::string_view word) {
  for (std::size_t i = 0; i < kCommandNames.size(); ++i)
    if (kCommandNames[i] == word) return static_cast<CommandToken>(i);
  throw UnknownToken("command word '" + std::string(word) + "'");
}

ActionToken parse_action_token(std::string_view word) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i)
    if (kActionNames[i] == word || kCorpusActionNames[i] == word)
      return static_cast<ActionToken>(i);
  throw UnknownToken("action '" + std::string(word) + "'");
}

bool is_primitive_verb(CommandToken token) {
  return token == CommandToken::kWalk || token == CommandToken::kLook ||
         token == CommandToken::kRun || token == CommandToken::kJump;
}

ActionToken action_of(CommandToken primitive_verb) {
  switch (primitive_verb) {
    case CommandToken::kWalk: return ActionToken::kWalk;
    case CommandToken::kLook: return ActionToken::kLook;
    case CommandToken::kRun: return ActionToken::kRun;
    case CommandToken::kJump: return ActionToken::kJump;
    default: throw UngrammaticalCommand("'" + std::string(to_string(primitive_verb)) +
                                        "' is not a primitive verb");
  }
}

std::string render(std::span<const CommandToken> command) {
  std::string out;
  for (const auto t : command) {
    if (!out.empty()) out += ' ';
    out += to_string(t);
  }
  return out;
}

std::string render(std::span<const ActionToken> actions, ActionNaming naming) {
  std::string out;
  for (const auto a : actions) {
    if (!out.empty()) out += ' ';
    out += to_string(a, naming);
  }
  return out;
}

Command parse_command_text(std::string_view text) {
  Command out;
  for (const auto w : split_words(text)) out.push_back(parse_command_token(w));
  return out;
}

ActionSequence parse_action_text(std::string_view text) {
  ActionSequence out;
  for (const auto w : split_words(text)) out.push_back(parse_action_token(w));
  return out;
}

ParseTree parse(std::span<const CommandToken> tokens) {
  if (tokens.empty()) throw UngrammaticalCommand("empty command");
  std::optional<std::size_t> split;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == CommandToken::kAnd || tokens[i] == CommandToken::kAfter) {
      if (split) ungrammatical(tokens, "more than one conjunction");
      split = i;
    }
  }
  ParseTree tree;
  if (!split) {
    tree.first = parse_repeated_phrase(tokens, tokens);
    return tree;
  }
  tree.conjunction =
      tokens[*split] == CommandToken::kAnd ? Conjunction::kAnd : Conjunction::kAfter;
  tree.first = parse_repeated_phrase(tokens.first(*split), tokens);
  tree.second = parse_repeated_phrase(tokens.subspan(*split + 1), tokens);
  return tree;
}

Command render_phrase(const RepeatedPhrase& phrase) {
  Command out{phrase.phrase.verb};
  switch (phrase.phrase.direction) {
    case Direction::kPlain: break;
    case Direction::kLeft: out.push_back(CommandToken::kLeft); break;
    case Direction::kRight: out.push_back(CommandToken::kRight); break;
    case Direction::kOppositeLeft:
      out.insert(out.end(), {CommandToken::kOpposite, CommandToken::kLeft});
      break;
    case Direction::kOppositeRight:
      out.insert(out.end(), {CommandToken::kOpposite, CommandToken::kRight});
      break;
    case Direction::kAroundLeft:
      out.insert(out.end(), {CommandToken::kAround, CommandToken::kLeft});
      break;
    case Direction::kAroundRight:
      out.insert(out.end(), {CommandToken::kAround, CommandToken::kRight});
      break;
  }
  if (phrase.repetition == Repetition::kTwice) out.push_back(CommandToken::kTwice);
  if (phrase.repetition == Repetition::kThrice) out.push_back(CommandToken::kThrice);
  return out;
}

Command render_tree(const ParseTree& tree) {
  Command out = render_phrase(tree.first);
  if (tree.conjunction != Conjunction::kNone) {
    out.push_back(tree.conjunction == Conjunction::kAnd ? CommandToken::kAnd
                                                        : CommandToken::kAfter);
    const Command second = render_phrase(*tree.second);
    out.insert(out.end(), second.begin(), second.end());
  }
  return out;
}

ActionSequence interpret(const VerbPhrase& phrase) {
  const bool turn = phrase.verb == CommandToken::kTurn;
  ActionSequence verb_action;
  if (!turn) verb_action.push_back(action_of(phrase.verb));

  const auto with_turns = [&](ActionToken turn_token, std::size_t turns_before_each,
                              std::size_t units) {
    ActionSequence unit(turns_before_each, turn_token);
    unit.insert(unit.end(), verb_action.begin(), verb_action.end());
    ActionSequence out;
    append_repeated(out, unit, units);
    return out;
  };

  switch (phrase.direction) {
    case Direction::kPlain: return verb_action;
    case Direction::kLeft: return with_turns(ActionToken::kLeftTurn, 1, 1);
    case Direction::kRight: return with_turns(ActionToken::kRightTurn, 1, 1);
    case Direction::kOppositeLeft: {
      ActionSequence out(2, ActionToken::kLeftTurn);
      out.insert(out.end(), verb_action.begin(), verb_action.end());
      return out;
    }
    case Direction::kOppositeRight: {
      ActionSequence out(2, ActionToken::kRightTurn);
      out.insert(out.end(), verb_action.begin(), verb_action.end());
      return out;
    }
    case Direction::kAroundLeft: return with_turns(ActionToken::kLeftTurn, 1, 4);
    case Direction::kAroundRight: return with_turns(ActionToken::kRightTurn, 1, 4);
  }
  return verb_action;
}

ActionSequence interpret(const RepeatedPhrase& phrase) {
  const ActionSequence unit = interpret(phrase.phrase);
  const std::size_t times = phrase.repetition == Repetition::kOnce    ? 1
                            : phrase.repetition == Repetition::kTwice ? 2
                                                                      : 3;
  ActionSequence out;
  append_repeated(out, unit, times);
  return out;
}

ActionSequence interpret(const ParseTree& tree) {
  ActionSequence first = interpret(tree.first);
  if (tree.conjunction == Conjunction::kNone) return first;
  ActionSequence second = interpret(*tree.second);
  if (tree.conjunction == Conjunction::kAfter) std::swap(first, second);
  first.insert(first.end(), second.begin(), second.end());
  return first;
}

ActionSequence execute(std::span<const CommandToken> command) {
  return interpret(parse(command));
}

std::vector<VerbPhrase> all_verb_phrases() {
  std::vector<VerbPhrase> out;
  constexpr std::array<CommandToken, 4> prims = {CommandToken::kWalk, CommandToken::kLook,
                                                 CommandToken::kRun, CommandToken::kJump};
  constexpr std::array<CommandToken, 5> verbs = {CommandToken::kWalk, CommandToken::kLook,
                                                 CommandToken::kRun, CommandToken::kJump,
                                                 CommandToken::kTurn};
  for (const auto u : prims) out.push_back({u, Direction::kPlain});
  for (const auto u : verbs) {
    for (const auto d : {Direction::kLeft, Direction::kRight, Direction::kOppositeLeft,
                         Direction::kOppositeRight, Direction::kAroundLeft,
                         Direction::kAroundRight})
      out.push_back({u, d});
  }
  return out;
}

std::vector<RepeatedPhrase> all_repeated_phrases() {
  std::vector<RepeatedPhrase> out;
  for (const auto& v : all_verb_phrases())
    for (const auto r : {Repetition::kOnce, Repetition::kTwice, Repetition::kThrice})
      out.push_back({v, r});
  return out;
}

const std::vector<Example>& enumerate_all() {
  static const std::vector<Example> all = [] {
    const auto phrases = all_repeated_phrases();
    std::vector<Command> rendered;
    std::vector<ActionSequence> executed;
    for (const auto& p : phrases) {
      rendered.push_back(render_phrase(p));
      executed.push_back(interpret(p));
    }
    std::vector<Example> out;
    out.reserve(phrases.size() + 2 * phrases.size() * phrases.size());
    for (std::size_t i = 0; i < phrases.size(); ++i) out.push_back({rendered[i], executed[i]});
    for (const auto conj : {CommandToken::kAnd, CommandToken::kAfter}) {
      for (std::size_t i = 0; i < phrases.size(); ++i) {
        for (std::size_t j = 0; j < phrases.size(); ++j) {
          Example ex;
          ex.command = rendered[i];
          ex.command.push_back(conj);
          ex.command.insert(ex.command.end(), rendered[j].begin(), rendered[j].end());
          const auto& a = conj == CommandToken::kAnd ? executed[i] : executed[j];
          const auto& b = conj == CommandToken::kAnd ? executed[j] : executed[i];
          ex.actions = a;
          ex.actions.insert(ex.actions.end(), b.begin(), b.end());
          out.push_back(std::move(ex));
        }
      }
    }
    for (const auto& ex : out) {
      if (ex.command.size() > kMaxCommandLength || ex.actions.size() > kMaxActionLength ||
          ex.actions.empty())
        throw std::logic_error("SCAN enumeration violates its length bounds");
    }
    return out;
  }();
  return all;
}

std::string format_line(const Example& example, ActionNaming naming) {
  return "IN: " + render(example.command) + " OUT: " + render(example.actions, naming);
}

Example parse_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  if (line.substr(0, 4) != "IN: ") throw MalformedLine("missing 'IN: ' prefix");
  const auto out_pos = line.find(" OUT: ");
  if (out_pos == std::string_view::npos) throw MalformedLine("missing ' OUT: ' marker");
  Example ex;
  ex.command = parse_command_text(line.substr(4, out_pos - 4));
  ex.actions = parse_action_text(line.substr(out_pos + 6));
  return ex;
}

CorpusCheck verify_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus '" + path + "'");
  CorpusCheck check;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++check.lines;
    bool ok = false;
    try {
      const Example ex = parse_line(line);
      ok = execute(ex.command) == ex.actions;
    } catch (const Error&) {
      ok = false;
    }
    if (ok)
      ++check.matches;
    else
      check.mismatched_lines.push_back(check.lines);
  }
  return check;
}

}  // namespace scanconv
