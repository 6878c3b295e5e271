#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "scanconv/errors.hpp"
#include "scanconv/rng.hpp"
#include "scanconv/scan_grammar.hpp"

namespace scanconv {
namespace {

// Reference grammar written directly over strings, sharing no code with the
// library: every command is generated from the productions and executed by
// the rewriting rules.
using Words = std::vector<std::string>;

Words words(const std::string& text) {
  std::istringstream in(text);
  Words out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string upper(const std::string& verb) {
  std::string s = verb;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

std::string turn(const std::string& dir) { return dir == "left" ? "LTURN" : "RTURN"; }

struct RefPhrase {
  std::string text;
  Words actions;
};

std::vector<RefPhrase> reference_v() {
  const Words u{"walk", "look", "run", "jump"};
  std::vector<RefPhrase> v;
  for (const auto& x : u) v.push_back({x, {upper(x)}});
  for (const auto& d : {"left", "right"}) {
    for (const auto& x : u) v.push_back({x + " " + d, {turn(d), upper(x)}});
    v.push_back({std::string("turn ") + d, {turn(d)}});
    for (const auto& x : u) v.push_back({x + " opposite " + d, {turn(d), turn(d), upper(x)}});
    v.push_back({std::string("turn opposite ") + d, {turn(d), turn(d)}});
    for (const auto& x : u) {
      Words a;
      for (int i = 0; i < 4; ++i) a.insert(a.end(), {turn(d), upper(x)});
      v.push_back({x + " around " + d, a});
    }
    v.push_back({std::string("turn around ") + d, Words(4, turn(d))});
  }
  return v;
}

std::vector<RefPhrase> reference_s() {
  std::vector<RefPhrase> s;
  for (const auto& p : reference_v()) {
    s.push_back(p);
    Words two = p.actions, three = p.actions;
    two.insert(two.end(), p.actions.begin(), p.actions.end());
    three.insert(three.end(), two.begin(), two.end());
    s.push_back({p.text + " twice", two});
    s.push_back({p.text + " thrice", three});
  }
  return s;
}

std::map<std::string, Words> reference_language() {
  std::map<std::string, Words> lang;
  const auto s = reference_s();
  for (const auto& a : s) lang[a.text] = a.actions;
  for (const auto& a : s)
    for (const auto& b : s) {
      Words ab = a.actions, ba = b.actions;
      ab.insert(ab.end(), b.actions.begin(), b.actions.end());
      ba.insert(ba.end(), a.actions.begin(), a.actions.end());
      lang[a.text + " and " + b.text] = ab;
      lang[a.text + " after " + b.text] = ba;
    }
  return lang;
}

const std::map<std::string, Words>& language() {
  static const auto lang = reference_language();
  return lang;
}

Words action_words(const ActionSequence& actions) { return words(render(actions)); }

ActionSequence run(const std::string& text) { return execute(parse_command_text(text)); }

TEST(Enumeration, MatchesClosedFormCount) {
  EXPECT_EQ(all_verb_phrases().size(), 34u);
  EXPECT_EQ(all_repeated_phrases().size(), 102u);
  EXPECT_EQ(enumerate_all().size(), 102u + 2u * 102u * 102u);
  EXPECT_EQ(enumerate_all().size(), 20910u);
}

TEST(Enumeration, AgreesWithReferenceGrammarPairForPair) {
  const auto& lang = language();
  ASSERT_EQ(lang.size(), 20910u);
  std::set<std::string> seen;
  for (const auto& ex : enumerate_all()) {
    const std::string text = render(ex.command);
    ASSERT_TRUE(seen.insert(text).second) << "duplicate " << text;
    const auto it = lang.find(text);
    ASSERT_NE(it, lang.end()) << text;
    EXPECT_EQ(action_words(ex.actions), it->second) << text;
  }
}

TEST(Enumeration, LengthBounds) {
  std::size_t max_cmd = 0, max_act = 0, min_act = 100;
  for (const auto& ex : enumerate_all()) {
    max_cmd = std::max(max_cmd, ex.command.size());
    max_act = std::max(max_act, ex.actions.size());
    min_act = std::min(min_act, ex.actions.size());
  }
  EXPECT_EQ(max_cmd, kMaxCommandLength);
  EXPECT_EQ(max_cmd, 9u);
  EXPECT_EQ(max_act, kMaxActionLength);
  EXPECT_EQ(max_act, 48u);
  EXPECT_EQ(min_act, 1u);
  EXPECT_EQ(run("walk around right thrice after jump around left thrice").size(), 48u);
}

TEST(Parse, SinglePrimitive) {
  const auto tree = parse(parse_command_text("jump"));
  EXPECT_EQ(tree.conjunction, Conjunction::kNone);
  EXPECT_EQ(tree.first.repetition, Repetition::kOnce);
  EXPECT_EQ(tree.first.phrase, (VerbPhrase{CommandToken::kJump, Direction::kPlain}));
  EXPECT_FALSE(tree.second.has_value());
}

TEST(Parse, AroundRight) {
  const auto tree = parse(parse_command_text("walk around right"));
  EXPECT_EQ(tree.first.phrase, (VerbPhrase{CommandToken::kWalk, Direction::kAroundRight}));
}

TEST(Parse, TurnLeftTwiceAndLook) {
  const auto tree = parse(parse_command_text("turn left twice and look"));
  EXPECT_EQ(tree.conjunction, Conjunction::kAnd);
  EXPECT_EQ(tree.first, (RepeatedPhrase{{CommandToken::kTurn, Direction::kLeft}, Repetition::kTwice}));
  ASSERT_TRUE(tree.second.has_value());
  EXPECT_EQ(*tree.second, (RepeatedPhrase{{CommandToken::kLook, Direction::kPlain}, Repetition::kOnce}));
}

TEST(Parse, RoundTripsEveryCommand) {
  for (const auto& ex : enumerate_all()) ASSERT_EQ(render_tree(parse(ex.command)), ex.command);
}

TEST(Parse, RejectsUngrammaticalCommands) {
  const char* bad[] = {
      "left jump",          "and walk",           "walk and",          "turn",
      "twice",              "jump twice twice",   "walk left left",    "walk opposite",
      "walk around",        "around right",       "opposite left",     "walk and and run",
      "walk and run and look", "walk after run after look", "walk and run after look",
      "turn twice",         "turn and walk",      "jump thrice twice", "walk right opposite",
      "walk opposite around left", "left",        "after",             "walk twice left",
      "jump jump",          "turn turn left",     "walk around right opposite left",
  };
  for (const char* text : bad) EXPECT_THROW(execute(parse_command_text(text)), UngrammaticalCommand) << text;
  EXPECT_THROW(parse(Command{}), UngrammaticalCommand);
}

TEST(Parse, RandomTokenStringsParseExactlyWhenInLanguage) {
  Rng rng(31);
  const auto& lang = language();
  int accepted = 0;
  for (int i = 0; i < 20000; ++i) {
    const std::size_t len = 1 + rng.below(6);
    Command c;
    for (std::size_t k = 0; k < len; ++k) c.push_back(kAllCommandTokens[rng.below(kNumCommandTokens)]);
    const bool member = lang.count(render(c)) > 0;
    if (member) {
      ++accepted;
      EXPECT_NO_THROW(parse(c)) << render(c);
    } else {
      EXPECT_THROW(parse(c), UngrammaticalCommand) << render(c);
    }
  }
  EXPECT_GT(accepted, 0);
}

TEST(Interpret, WorkedExamples) {
  EXPECT_EQ(render(run("jump")), "JUMP");
  EXPECT_EQ(render(run("jump twice")), "JUMP JUMP");
  EXPECT_EQ(render(run("run thrice")), "RUN RUN RUN");
  EXPECT_EQ(render(run("jump around right")), "RTURN JUMP RTURN JUMP RTURN JUMP RTURN JUMP");
  EXPECT_EQ(render(run("turn left twice after jump")), "JUMP LTURN LTURN");
  EXPECT_EQ(render(run("walk opposite left")), "LTURN LTURN WALK");
  EXPECT_EQ(render(run("look around right and jump left")),
            "RTURN LOOK RTURN LOOK RTURN LOOK RTURN LOOK LTURN JUMP");
  EXPECT_EQ(render(run("turn opposite right")), "RTURN RTURN");
  EXPECT_EQ(render(run("turn around left")), "LTURN LTURN LTURN LTURN");
}

// Random S phrases x, x1, x2 drawn from the full phrase inventory.
class Homomorphism : public ::testing::Test {
 protected:
  Command draw_phrase(std::span<const RepeatedPhrase> pool) {
    return render_phrase(pool[rng_.below(pool.size())]);
  }
  static Command join(Command a, CommandToken word) {
    a.push_back(word);
    return a;
  }
  static Command join(Command a, CommandToken word, const Command& b) {
    a.push_back(word);
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  static ActionSequence cat(ActionSequence a, const ActionSequence& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  Rng rng_{2024};
};

TEST_F(Homomorphism, TwiceAndThriceRepeat) {
  std::vector<RepeatedPhrase> once;
  for (const auto& p : all_repeated_phrases())
    if (p.repetition == Repetition::kOnce) once.push_back(p);
  ASSERT_EQ(once.size(), 34u);
  for (int i = 0; i < 1000; ++i) {
    const Command x = draw_phrase(once);
    const ActionSequence ex = execute(x);
    EXPECT_EQ(execute(join(x, CommandToken::kTwice)), cat(ex, ex));
    EXPECT_EQ(execute(join(x, CommandToken::kThrice)), cat(cat(ex, ex), ex));
  }
}

TEST_F(Homomorphism, AndConcatenatesAfterReverses) {
  const auto all = all_repeated_phrases();
  for (int i = 0; i < 1000; ++i) {
    const Command x1 = draw_phrase(all), x2 = draw_phrase(all);
    const ActionSequence e1 = execute(x1), e2 = execute(x2);
    EXPECT_EQ(execute(join(x1, CommandToken::kAnd, x2)), cat(e1, e2));
    EXPECT_EQ(execute(join(x1, CommandToken::kAfter, x2)), cat(e2, e1));
  }
}

TEST(Tokens, ThirteenCommandWordsSixActions) {
  std::set<std::string> cmd, act_canon, act_corpus;
  for (const auto t : kAllCommandTokens) {
    cmd.insert(std::string(to_string(t)));
    EXPECT_EQ(parse_command_token(to_string(t)), t);
  }
  for (const auto a : kAllActionTokens) {
    act_canon.insert(std::string(to_string(a)));
    act_corpus.insert(std::string(to_string(a, ActionNaming::kScanCorpus)));
    EXPECT_EQ(parse_action_token(to_string(a)), a);
    EXPECT_EQ(parse_action_token(to_string(a, ActionNaming::kScanCorpus)), a);
  }
  EXPECT_EQ(cmd.size(), 13u);
  EXPECT_EQ(act_canon, (std::set<std::string>{"WALK", "LOOK", "RUN", "JUMP", "LTURN", "RTURN"}));
  EXPECT_EQ(act_corpus.count("I_TURN_LEFT"), 1u);
  EXPECT_EQ(act_corpus.count("I_WALK"), 1u);
  EXPECT_THROW(parse_command_token("skip"), UnknownToken);
  EXPECT_THROW(parse_action_token("SKIP"), UnknownToken);
}

TEST(Serialization, LineFormat) {
  const Example ex{parse_command_text("walk opposite left"), run("walk opposite left")};
  EXPECT_EQ(format_line(ex), "IN: walk opposite left OUT: LTURN LTURN WALK");
  EXPECT_EQ(format_line(ex, ActionNaming::kScanCorpus), "IN: walk opposite left OUT: I_TURN_LEFT I_TURN_LEFT I_WALK");
  EXPECT_EQ(parse_line(format_line(ex)), ex);
  EXPECT_EQ(parse_line(format_line(ex, ActionNaming::kScanCorpus)), ex);
  EXPECT_THROW(parse_line("walk OUT: WALK"), MalformedLine);
  EXPECT_THROW(parse_line("IN: walk"), MalformedLine);
  EXPECT_THROW(parse_line("IN: hop OUT: WALK"), UnknownToken);
}

TEST(Serialization, EveryPairRoundTrips) {
  for (const auto& ex : enumerate_all()) {
    ASSERT_EQ(parse_line(format_line(ex)), ex);
    ASSERT_EQ(parse_line(format_line(ex, ActionNaming::kScanCorpus)), ex);
  }
}

TEST(Serialization, CorpusVerificationFlagsMismatches) {
  const auto path = std::filesystem::temp_directory_path() / "scanconv_corpus_test.txt";
  {
    std::ofstream out(path);
    for (const auto& ex : enumerate_all()) out << format_line(ex, ActionNaming::kScanCorpus) << '\n';
    out << "IN: jump twice OUT: I_JUMP\n";
  }
  const CorpusCheck check = verify_corpus(path.string());
  EXPECT_EQ(check.lines, 20911u);
  EXPECT_EQ(check.matches, 20910u);
  EXPECT_EQ(check.mismatched_lines, std::vector<std::size_t>{20911});
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace scanconv
