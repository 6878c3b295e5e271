#include "scanconv/vocab.hpp"

#include <algorithm>

namespace scanconv {

namespace {

void fill_source(Batch& b, std::span<const Command* const> commands) {
  b.size = static_cast<long>(commands.size());
  b.src_len = 0;
  for (const auto* c : commands) b.src_len = std::max<long>(b.src_len, static_cast<long>(c->size()) + 1);
  b.src.assign(static_cast<std::size_t>(b.size * b.src_len), vocab::kPad);
  b.src_lengths.clear();
  for (long i = 0; i < b.size; ++i) {
    const Command& c = *commands[static_cast<std::size_t>(i)];
    auto* row = b.src.data() + i * b.src_len;
    for (std::size_t t = 0; t < c.size(); ++t) row[t] = vocab::source_id(c[t]);
    row[c.size()] = vocab::kSourceEos;
    b.src_lengths.push_back(static_cast<int>(c.size()) + 1);
  }
}

}  // namespace

long Batch::target_tokens() const {
  long n = 0;
  for (const int l : tgt_lengths) n += l;
  return n;
}

Batch make_batch(std::span<const Example* const> examples) {
  Batch b;
  std::vector<const Command*> commands;
  commands.reserve(examples.size());
  for (const auto* ex : examples) commands.push_back(&ex->command);
  fill_source(b, commands);

  for (const auto* ex : examples) b.tgt_len = std::max<long>(b.tgt_len, static_cast<long>(ex->actions.size()) + 1);
  b.tgt_in.assign(static_cast<std::size_t>(b.size * b.tgt_len), vocab::kPad);
  b.tgt_out.assign(static_cast<std::size_t>(b.size * b.tgt_len), vocab::kPad);
  for (long i = 0; i < b.size; ++i) {
    const ActionSequence& a = examples[static_cast<std::size_t>(i)]->actions;
    auto* in = b.tgt_in.data() + i * b.tgt_len;
    auto* out = b.tgt_out.data() + i * b.tgt_len;
    in[0] = vocab::kTargetBos;
    for (std::size_t t = 0; t < a.size(); ++t) {
      in[t + 1] = vocab::target_id(a[t]);
      out[t] = vocab::target_id(a[t]);
    }
    out[a.size()] = vocab::kTargetEos;
    b.tgt_lengths.push_back(static_cast<int>(a.size()) + 1);
  }
  return b;
}

Batch make_batch(std::span<const Example> examples) {
  std::vector<const Example*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& ex : examples) ptrs.push_back(&ex);
  return make_batch(std::span<const Example* const>(ptrs));
}

Batch make_source_batch(std::span<const Command> commands) {
  Batch b;
  std::vector<const Command*> ptrs;
  ptrs.reserve(commands.size());
  for (const auto& c : commands) ptrs.push_back(&c);
  fill_source(b, ptrs);
  return b;
}

}  // namespace scanconv
