#pragma once

#include <span>
#include <vector>

#include "scanconv/scan_grammar.hpp"

namespace scanconv {

// Source ids: pad, eos, then the 13 command words.
// Target ids: pad, bos, eos, then the 6 actions.
namespace vocab {

inline constexpr int kPad = 0;
inline constexpr int kSourceEos = 1;
inline constexpr int kTargetBos = 1;
inline constexpr int kTargetEos = 2;
inline constexpr int kSourceSize = 2 + static_cast<int>(kNumCommandTokens);
inline constexpr int kTargetSize = 3 + static_cast<int>(kNumActionTokens);

inline int source_id(CommandToken t) { return 2 + static_cast<int>(t); }
inline int target_id(ActionToken a) { return 3 + static_cast<int>(a); }
inline bool is_action_id(int id) { return id >= 3 && id < kTargetSize; }
inline ActionToken action_from_id(int id) { return static_cast<ActionToken>(id - 3); }

}  // namespace vocab

/// Padded token matrices for a group of examples, flattened row-major as
/// [batch, time]. Source rows are `command + eos`; decoder input rows are
/// `bos + actions`; decoder output rows are `actions + eos`.
struct Batch {
  long size = 0;
  long src_len = 0;  // max source length incl. eos
  long tgt_len = 0;  // max action length + 1; 0 for source-only batches
  std::vector<int> src;
  std::vector<int> src_lengths;
  std::vector<int> tgt_in;
  std::vector<int> tgt_out;
  std::vector<int> tgt_lengths;

  /// Non-pad target positions.
  long target_tokens() const;
};

Batch make_batch(std::span<const Example> examples);
Batch make_batch(std::span<const Example* const> examples);
Batch make_source_batch(std::span<const Command> commands);

}  // namespace scanconv
