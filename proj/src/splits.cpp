#include "scanconv/splits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "scanconv/errors.hpp"
#include "scanconv/rng.hpp"

namespace scanconv {

namespace {

bool contains_token(const Command& c, CommandToken t) {
  return std::find(c.begin(), c.end(), t) != c.end();
}

bool contains_bigram(const Command& c, CommandToken a, CommandToken b) {
  for (std::size_t i = 0; i + 1 < c.size(); ++i)
    if (c[i] == a && c[i + 1] == b) return true;
  return false;
}

template <typename InTest>
DatasetSplit partition(SplitKind kind, InTest in_test) {
  DatasetSplit split;
  split.kind = kind;
  for (const auto& ex : enumerate_all()) (in_test(ex) ? split.test : split.train).push_back(ex);
  return split;
}

}  // namespace

std::string_view to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::kRandom: return "random";
    case SplitKind::kJump: return "jump";
    case SplitKind::kAroundRight: return "around-right";
    case SplitKind::kTurnLeft: return "turn-left";
    case SplitKind::kLength: return "length";
  }
  return "random";
}

SplitKind parse_split_kind(std::string_view name) {
  for (const auto k : {SplitKind::kRandom, SplitKind::kJump, SplitKind::kAroundRight,
                       SplitKind::kTurnLeft, SplitKind::kLength})
    if (to_string(k) == name) return k;
  throw UnknownSplit("'" + std::string(name) + "'");
}

std::string fnv1a_hex(std::string_view data) {
  const std::uint64_t h = Rng::hash(data);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 0; i < 16; ++i) out[15 - i] = kHex[(h >> (4 * i)) & 0xF];
  return out;
}

std::string DatasetSplit::content_hash() const {
  std::string buf;
  for (const auto& ex : train) buf += format_line(ex) + "\n";
  buf += "--\n";
  for (const auto& ex : test) buf += format_line(ex) + "\n";
  return fnv1a_hex(buf);
}

DatasetSplit build_random(std::uint64_t seed, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  const auto& all = enumerate_all();
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).split("random-split");
  // Fisher-Yates with our own index draws so the permutation does not depend
  // on the standard library's shuffle implementation.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(all.size()) + 0.5));
  std::vector<bool> in_train(all.size(), false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  DatasetSplit split;
  split.kind = SplitKind::kRandom;
  split.seed = seed;
  for (std::size_t i = 0; i < all.size(); ++i)
    (in_train[i] ? split.train : split.test).push_back(all[i]);
  return split;
}

DatasetSplit build_jump() {
  return partition(SplitKind::kJump, [](const Example& ex) {
    return contains_token(ex.command, CommandToken::kJump) && ex.command.size() > 1;
  });
}

DatasetSplit build_around_right() {
  return partition(SplitKind::kAroundRight, [](const Example& ex) {
    return contains_bigram(ex.command, CommandToken::kAround, CommandToken::kRight);
  });
}

DatasetSplit build_turn_left() {
  return partition(SplitKind::kTurnLeft, [](const Example& ex) {
    return contains_bigram(ex.command, CommandToken::kTurn, CommandToken::kLeft);
  });
}

DatasetSplit build_length(int max_train_actions) {
  DatasetSplit split = partition(SplitKind::kLength, [&](const Example& ex) {
    return static_cast<long>(ex.actions.size()) > max_train_actions;
  });
  split.max_train_actions = max_train_actions;
  if (split.train.empty() || split.test.empty())
    throw DegenerateSplit("length threshold " + std::to_string(max_train_actions) +
                          " leaves one side empty");
  return split;
}

DatasetSplit build_split(SplitKind kind, std::uint64_t seed) {
  switch (kind) {
    case SplitKind::kRandom: return build_random(seed);
    case SplitKind::kJump: return build_jump();
    case SplitKind::kAroundRight: return build_around_right();
    case SplitKind::kTurnLeft: return build_turn_left();
    case SplitKind::kLength: return build_length();
  }
  throw UnknownSplit("unhandled kind");
}

void write_examples(const std::vector<Example>& examples, const std::filesystem::path& file,
                    ActionNaming naming) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write '" + file.string() + "'");
  for (const auto& ex : examples) out << format_line(ex, naming) << '\n';
  if (!out) throw IoError("write failed for '" + file.string() + "'");
}

std::vector<Example> read_examples(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open '" + file.string() + "'");
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    out.push_back(parse_line(line));
  }
  return out;
}

void write_split(const DatasetSplit& split, const std::filesystem::path& dir,
                 ActionNaming naming) {
  std::filesystem::create_directories(dir);
  const std::string name = split.name();
  write_examples(split.train, dir / (name + ".train.txt"), naming);
  write_examples(split.test, dir / (name + ".test.txt"), naming);

  nlohmann::ordered_json meta;
  meta["name"] = name;
  meta["seed"] = split.seed ? nlohmann::ordered_json(*split.seed) : nlohmann::ordered_json();
  if (split.max_train_actions) meta["max_train_actions"] = *split.max_train_actions;
  meta["train_size"] = split.train.size();
  meta["test_size"] = split.test.size();
  meta["content_hash"] = split.content_hash();
  std::ofstream out(dir / (name + ".json"));
  if (!out) throw IoError("cannot write split sidecar in '" + dir.string() + "'");
  out << meta.dump(2) << '\n';
}

}  // namespace scanconv
