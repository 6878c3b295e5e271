#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scanconv/scan_grammar.hpp"

namespace scanconv {

enum class SplitKind { kRandom, kJump, kAroundRight, kTurnLeft, kLength };

std::string_view to_string(SplitKind kind);
/// Accepts random|jump|around-right|turn-left|length; throws UnknownSplit.
SplitKind parse_split_kind(std::string_view name);

struct DatasetSplit {
  SplitKind kind = SplitKind::kRandom;
  std::optional<std::uint64_t> seed;           // random split only
  std::optional<int> max_train_actions;        // length split only
  std::vector<Example> train;
  std::vector<Example> test;

  std::string name() const { return std::string(to_string(kind)); }
  /// Stable FNV-1a digest over the serialized train and test lists.
  std::string content_hash() const;
};

inline constexpr double kDefaultTrainFraction = 0.8;
inline constexpr int kDefaultLengthThreshold = 22;

/// |train| = floor(train_fraction * N + 0.5).
DatasetSplit build_random(std::uint64_t seed, double train_fraction = kDefaultTrainFraction);
DatasetSplit build_jump();
DatasetSplit build_around_right();
DatasetSplit build_turn_left();
/// Throws DegenerateSplit when either side would be empty.
DatasetSplit build_length(int max_train_actions = kDefaultLengthThreshold);

/// Dispatch by kind; `seed` is used by the random split only.
DatasetSplit build_split(SplitKind kind, std::uint64_t seed = 0);

/// Writes `<name>.train.txt`, `<name>.test.txt` and `<name>.json` into `dir`.
void write_split(const DatasetSplit& split, const std::filesystem::path& dir,
                 ActionNaming naming = ActionNaming::kCanonical);

std::vector<Example> read_examples(const std::filesystem::path& file);
void write_examples(const std::vector<Example>& examples, const std::filesystem::path& file,
                    ActionNaming naming = ActionNaming::kCanonical);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace scanconv
