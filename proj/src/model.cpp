#include "scanconv/model.hpp"

namespace scanconv {

namespace {

template <typename Scalar>
ag::Matrix<Scalar> glu_value(const ag::Matrix<Scalar>& x) {
  const ag::Index d = x.cols() / 2;
  const ag::Matrix<Scalar> gate =
      (Scalar(1) + (-x.rightCols(d).array()).exp()).inverse().matrix();
  return x.leftCols(d).cwiseProduct(gate);
}

}  // namespace

template <typename Scalar>
struct ConvSeq2Seq<Scalar>::DecodeState {
  Matrix z;         // [B*S, d]
  Matrix combined;  // [B*S, d]
  std::vector<int> src_lengths;
  Index src_len = 0;
  std::vector<Index> items;     // decoder row -> encoder item
  std::vector<Matrix> history;  // per layer, last (w-1) conv inputs [rows, (w-1)*d]
  // Effective decoder weights, resolved once per decode.
  Matrix fc1, fc2, fc3;
  std::vector<Matrix> conv, attn_in, attn_out;

  void select_rows(const std::vector<Index>& parents) {
    std::vector<Index> new_items;
    for (const Index p : parents) new_items.push_back(items[static_cast<std::size_t>(p)]);
    items = std::move(new_items);
    for (auto& h : history) {
      Matrix next(static_cast<Index>(parents.size()), h.cols());
      for (std::size_t r = 0; r < parents.size(); ++r) next.row(static_cast<Index>(r)) = h.row(parents[r]);
      h = std::move(next);
    }
  }
};

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Tensor ConvSeq2Seq<Scalar>::make_param(const std::string& name,
                                                                     Matrix value) {
  Tensor t = Tensor::parameter(std::move(value));
  params_.push_back({name, t});
  return t;
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Linear ConvSeq2Seq<Scalar>::make_linear(const Rng& rng,
                                                                      const std::string& name,
                                                                      int in, int out,
                                                                      double dropout) {
  Rng r = rng.split(name + ".weight");
  Matrix w(in, out);
  const double stddev = std::sqrt((1.0 - dropout) / in);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(r.normal(0.0, stddev));
  Linear l;
  if (config_.weight_norm) l.scale = make_param(name + ".weight_g", w.colwise().norm());
  l.weight = make_param(name + ".weight", std::move(w));
  l.bias = make_param(name + ".bias", Matrix::Zero(1, out));
  return l;
}

template <typename Scalar>
ConvSeq2Seq<Scalar>::ConvSeq2Seq(ModelConfig config, const Rng& init_rng)
    : config_(std::move(config)) {
  config_.validate();
  const int d = config_.embed_dim;
  const double p = config_.dropout;

  const auto normal = [&](const std::string& name, Index rows, Index cols, double stddev) {
    Rng r = init_rng.split(name);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(r.normal(0.0, stddev));
    return m;
  };
  const auto embedding = [&](const std::string& name, Index rows) {
    Matrix m = normal(name, rows, d, 0.1);
    m.row(vocab::kPad).setZero();
    return m;
  };
  const auto conv = [&](const std::string& name, int width) {
    Linear l;
    const double stddev = std::sqrt(4.0 * (1.0 - p) / (width * d));
    Matrix w = normal(name + ".weight", static_cast<Index>(width) * d, 2 * d, stddev);
    if (config_.weight_norm) l.scale = make_param(name + ".weight_g", w.colwise().norm());
    l.weight = make_param(name + ".weight", std::move(w));
    l.bias = make_param(name + ".bias", Matrix::Zero(1, 2 * d));
    return l;
  };

  src_embed_ = make_param("encoder.embed_tokens", embedding("encoder.embed_tokens", config_.src_vocab));
  src_pos_ = make_param("encoder.embed_positions",
                        normal("encoder.embed_positions", config_.max_positions, d, 0.1));
  enc_fc1_ = make_linear(init_rng, "encoder.fc1", d, d, p);
  for (int l = 0; l < config_.num_layers; ++l)
    enc_convs_.push_back(conv("encoder.convs." + std::to_string(l), config_.enc_kernel_width));
  enc_fc2_ = make_linear(init_rng, "encoder.fc2", d, d, p);

  tgt_embed_ = make_param("decoder.embed_tokens", embedding("decoder.embed_tokens", config_.tgt_vocab));
  tgt_pos_ = make_param("decoder.embed_positions",
                        normal("decoder.embed_positions", config_.max_positions, d, 0.1));
  dec_fc1_ = make_linear(init_rng, "decoder.fc1", d, d, p);
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string base = "decoder.layers." + std::to_string(l);
    dec_convs_.push_back(conv(base + ".conv", config_.dec_kernel_width));
    attn_in_.push_back(make_linear(init_rng, base + ".attention.in_projection", d, d, 0.0));
    attn_out_.push_back(make_linear(init_rng, base + ".attention.out_projection", d, d, 0.0));
  }
  dec_fc2_ = make_linear(init_rng, "decoder.fc2", d, d, p);
  dec_fc3_ = make_linear(init_rng, "decoder.fc3", d, config_.tgt_vocab, p);
}

template <typename Scalar>
std::vector<typename ConvSeq2Seq<Scalar>::Tensor> ConvSeq2Seq<Scalar>::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

template <typename Scalar>
std::size_t ConvSeq2Seq<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.size());
  return n;
}

template <typename Scalar>
ConvSeq2Seq<Scalar> ConvSeq2Seq<Scalar>::clone() const {
  ConvSeq2Seq copy(config_, Rng(0));
  for (std::size_t i = 0; i < params_.size(); ++i)
    copy.params_[i].tensor.mutable_value() = params_[i].tensor.value();
  return copy;
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Tensor& ConvSeq2Seq<Scalar>::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p.tensor;
  throw InvalidConfig("no parameter named '" + name + "'");
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Tensor ConvSeq2Seq<Scalar>::effective_weight(Tape& tape,
                                                                           const Linear& l) const {
  return l.scale.defined() ? ag::weight_norm(tape, l.weight, l.scale) : l.weight;
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Matrix ConvSeq2Seq<Scalar>::effective_weight(const Linear& l) const {
  Tape tape(false);
  return effective_weight(tape, l).value();
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Tensor ConvSeq2Seq<Scalar>::apply(Tape& tape, const Tensor& x,
                                                                const Linear& l) const {
  return ag::linear(tape, x, effective_weight(tape, l), l.bias);
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::EncoderOutput ConvSeq2Seq<Scalar>::encode(Tape& tape,
                                                                        const Batch& batch,
                                                                        Rng* dropout_rng) const {
  const Index B = batch.size, S = batch.src_len;
  if (S > config_.max_positions)
    throw PositionOverflow("source length " + std::to_string(S) + " exceeds " +
                           std::to_string(config_.max_positions) + " positions");
  if (B < 1 || S < 1) throw ShapeMismatch("empty source batch");
  const auto drop = [&](const Tensor& t) {
    return dropout_rng ? ag::dropout(tape, t, config_.dropout, true, *dropout_rng) : t;
  };
  const Scalar half = Scalar(std::sqrt(0.5));

  std::vector<int> positions(static_cast<std::size_t>(B * S));
  ag::ColVector<Scalar> keep(B * S);
  EncoderOutput enc;
  enc.batch = B;
  enc.src_len = S;
  enc.src_lengths = batch.src_lengths;
  enc.pad_mask.resize(static_cast<std::size_t>(B * S));
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < S; ++t) {
      const auto i = static_cast<std::size_t>(b * S + t);
      positions[i] = static_cast<int>(t);
      const bool pad = t >= batch.src_lengths[static_cast<std::size_t>(b)];
      enc.pad_mask[i] = pad;
      keep(static_cast<Index>(i)) = pad ? Scalar(0) : Scalar(1);
    }

  Tensor e = ag::add(tape, ag::embed(tape, src_embed_, batch.src), ag::embed(tape, src_pos_, positions));
  e = drop(e);
  Tensor x = apply(tape, e, enc_fc1_);
  for (const auto& conv : enc_convs_) {
    const Tensor residual = x;
    Tensor h = drop(ag::scale_rows(tape, x, keep));
    h = ag::conv1d(tape, h, effective_weight(tape, conv), config_.enc_kernel_width, S, ag::Padding::kSymmetric);
    h = ag::glu(tape, ag::add_row(tape, h, conv.bias));
    x = ag::add_scaled(tape, h, residual, half);
  }
  enc.z = ag::scale_rows(tape, apply(tape, x, enc_fc2_), keep);
  if (config_.scale_encoder_grad)
    enc.z = ag::scale_grad(tape, enc.z, Scalar(1.0 / (2.0 * static_cast<double>(config_.attention_layers.size()))));
  enc.e = e;
  enc.combined = ag::add_scaled(tape, enc.z, e, half);
  return enc;
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::AttentionResult ConvSeq2Seq<Scalar>::attention(
    Tape& tape, int layer, const Tensor& state, const Tensor& target_embedding,
    const EncoderOutput& enc, Index tgt_len) const {
  const Index B = enc.batch, S = enc.src_len;
  if (state.rows() != B * tgt_len || target_embedding.rows() != state.rows())
    throw ShapeMismatch("attention state rows do not match batch * tgt_len");
  const auto l = static_cast<std::size_t>(layer);
  const Scalar half = Scalar(std::sqrt(0.5));

  Tensor query = ag::add_scaled(tape, apply(tape, state, attn_in_[l]),
                                target_embedding, half);
  Tensor scores = ag::bmm_nt(tape, query, enc.z, B);
  ag::BoolMask keep(B * tgt_len, S);
  ag::ColVector<Scalar> rescale(B * tgt_len);
  for (Index b = 0; b < B; ++b) {
    const int len = enc.src_lengths[static_cast<std::size_t>(b)];
    for (Index t = 0; t < tgt_len; ++t) {
      for (Index s = 0; s < S; ++s) keep(b * tgt_len + t, s) = s < len;
      rescale(b * tgt_len + t) = static_cast<Scalar>(len * std::sqrt(1.0 / len));
    }
  }
  AttentionResult r;
  r.weights = ag::masked_softmax(tape, scores, keep);
  r.context = ag::scale_rows(tape, ag::bmm(tape, r.weights, enc.combined, B), rescale);
  r.output = ag::add_scaled(tape, apply(tape, r.context, attn_out_[l]),
                            state, half);
  return r;
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Tensor ConvSeq2Seq<Scalar>::forward(Tape& tape, const Batch& batch,
                                                                   Rng* dropout_rng,
                                                                   DecoderTrace* trace) const {
  const Index B = batch.size, T = batch.tgt_len;
  if (T < 1) throw ShapeMismatch("batch has no target side");
  if (T > config_.max_positions)
    throw PositionOverflow("target length " + std::to_string(T) + " exceeds " +
                           std::to_string(config_.max_positions) + " positions");
  const EncoderOutput enc = encode(tape, batch, dropout_rng);
  const auto drop = [&](const Tensor& t) {
    return dropout_rng ? ag::dropout(tape, t, config_.dropout, true, *dropout_rng) : t;
  };
  const Scalar half = Scalar(std::sqrt(0.5));

  std::vector<int> positions(static_cast<std::size_t>(B * T));
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < T; ++t) positions[static_cast<std::size_t>(b * T + t)] = static_cast<int>(t);

  Tensor g = ag::add(tape, ag::embed(tape, tgt_embed_, batch.tgt_in), ag::embed(tape, tgt_pos_, positions));
  g = drop(g);
  Tensor x = apply(tape, g, dec_fc1_);
  if (trace) trace->layers.assign(static_cast<std::size_t>(config_.num_layers), std::nullopt);
  for (int l = 0; l < config_.num_layers; ++l) {
    const auto& conv = dec_convs_[static_cast<std::size_t>(l)];
    const Tensor residual = x;
    Tensor h = drop(x);
    h = ag::conv1d(tape, h, effective_weight(tape, conv), config_.dec_kernel_width, T, ag::Padding::kCausalLeft);
    h = ag::glu(tape, ag::add_row(tape, h, conv.bias));
    if (config_.attends(l + 1)) {
      AttentionResult r = attention(tape, l, h, g, enc, T);
      h = r.output;
      if (trace) trace->layers[static_cast<std::size_t>(l)] = std::move(r);
    }
    x = ag::add_scaled(tape, h, residual, half);
  }
  x = drop(apply(tape, x, dec_fc2_));
  return apply(tape, x, dec_fc3_);
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Tensor ConvSeq2Seq<Scalar>::loss(Tape& tape, const Batch& batch,
                                                                Rng* dropout_rng) const {
  const Tensor logits = forward(tape, batch, dropout_rng);
  return ag::cross_entropy(tape, logits, batch.tgt_out, vocab::kPad);
}

// ---------------------------------------------------------------------------
// Incremental decoding

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::EncoderOutput ConvSeq2Seq<Scalar>::encode_commands(
    std::span<const Command> commands) const {
  Tape tape(false);
  return encode(tape, make_source_batch(commands), nullptr);
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::DecodeState ConvSeq2Seq<Scalar>::start_decoding(
    const EncoderOutput& enc, std::vector<Index> rows_to_items) const {
  DecodeState s;
  s.z = enc.z.value();
  s.combined = enc.combined.value();
  s.src_lengths = enc.src_lengths;
  s.src_len = enc.src_len;
  const auto rows = static_cast<Index>(rows_to_items.size());
  s.items = std::move(rows_to_items);
  const Index hist_cols = static_cast<Index>(config_.dec_kernel_width - 1) * config_.embed_dim;
  s.history.assign(static_cast<std::size_t>(config_.num_layers), Matrix::Zero(rows, hist_cols));
  s.fc1 = effective_weight(dec_fc1_);
  s.fc2 = effective_weight(dec_fc2_);
  s.fc3 = effective_weight(dec_fc3_);
  for (int l = 0; l < config_.num_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    s.conv.push_back(effective_weight(dec_convs_[li]));
    s.attn_in.push_back(config_.attends(l + 1) ? effective_weight(attn_in_[li]) : Matrix());
    s.attn_out.push_back(config_.attends(l + 1) ? effective_weight(attn_out_[li]) : Matrix());
  }
  return s;
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Matrix ConvSeq2Seq<Scalar>::decode_step(
    DecodeState& state, const std::vector<int>& prev_tokens, Index step) const {
  if (step >= config_.max_positions)
    throw PositionOverflow("decoding step " + std::to_string(step) + " exceeds " +
                           std::to_string(config_.max_positions) + " positions");
  const Index R = static_cast<Index>(prev_tokens.size());
  const Index d = config_.embed_dim;
  const Index w = config_.dec_kernel_width;
  const Scalar half = Scalar(std::sqrt(0.5));

  Matrix g(R, d);
  for (Index r = 0; r < R; ++r)
    g.row(r) = tgt_embed_.value().row(prev_tokens[static_cast<std::size_t>(r)]) + tgt_pos_.value().row(step);
  Matrix x = g * state.fc1;
  x.rowwise() += dec_fc1_.bias.value().row(0);

  for (int l = 0; l < config_.num_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const Matrix residual = x;
    Matrix window(R, w * d);
    if (w > 1) window.leftCols((w - 1) * d) = state.history[li];
    window.rightCols(d) = x;
    if (w > 1) state.history[li] = window.rightCols((w - 1) * d);
    Matrix h = window * state.conv[li];
    h.rowwise() += dec_convs_[li].bias.value().row(0);
    h = glu_value<Scalar>(h);

    if (config_.attends(l + 1)) {
      Matrix q = h * state.attn_in[li];
      q.rowwise() += attn_in_[li].bias.value().row(0);
      q = (q + g) * half;
      Matrix ctx(R, d);
      for (Index r = 0; r < R; ++r) {
        const Index item = state.items[static_cast<std::size_t>(r)];
        const Index len = state.src_lengths[static_cast<std::size_t>(item)];
        const auto z = state.z.middleRows(item * state.src_len, len);
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> scores = q.row(r) * z.transpose();
        scores = (scores.array() - scores.maxCoeff()).exp().matrix();
        scores /= scores.sum();
        ctx.row(r) = scores * state.combined.middleRows(item * state.src_len, len) *
                     static_cast<Scalar>(len * std::sqrt(1.0 / static_cast<double>(len)));
      }
      Matrix out = ctx * state.attn_out[li];
      out.rowwise() += attn_out_[li].bias.value().row(0);
      h = (out + h) * half;
    }
    x = (h + residual) * half;
  }
  Matrix y = x * state.fc2;
  y.rowwise() += dec_fc2_.bias.value().row(0);
  Matrix logits = y * state.fc3;
  logits.rowwise() += dec_fc3_.bias.value().row(0);
  return logits;
}

namespace {

/// Best target id among eos and the actions.
template <typename Row>
int best_output(const Row& logits) {
  int best = vocab::kTargetEos;
  for (int id = 3; id < vocab::kTargetSize; ++id)
    if (logits(id) > logits(best)) best = id;
  return best;
}

}  // namespace

template <typename Scalar>
std::vector<ActionSequence> ConvSeq2Seq<Scalar>::greedy_decode(std::span<const Command> commands,
                                                               int max_len) const {
  std::vector<ActionSequence> out(commands.size());
  if (commands.empty() || max_len < 1) return out;
  if (max_len > config_.max_positions)
    throw PositionOverflow("max_len " + std::to_string(max_len) + " exceeds " +
                           std::to_string(config_.max_positions) + " positions");
  const EncoderOutput enc = encode_commands(commands);
  std::vector<Index> rows(commands.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Index>(i);
  DecodeState state = start_decoding(enc, rows);

  std::vector<int> prev(commands.size(), vocab::kTargetBos);
  std::vector<bool> done(commands.size(), false);
  std::size_t remaining = commands.size();
  for (Index step = 0; step < max_len && remaining > 0; ++step) {
    const Matrix logits = decode_step(state, prev, step);
    for (std::size_t r = 0; r < commands.size(); ++r) {
      if (done[r]) continue;
      const int tok = best_output(logits.row(static_cast<Index>(r)));
      prev[r] = tok;
      if (tok == vocab::kTargetEos) {
        done[r] = true;
        --remaining;
        continue;
      }
      out[r].push_back(vocab::action_from_id(tok));
      if (static_cast<int>(out[r].size()) >= max_len) {
        done[r] = true;
        --remaining;
      }
    }
  }
  return out;
}

template <typename Scalar>
ActionSequence ConvSeq2Seq<Scalar>::greedy_decode(const Command& command, int max_len) const {
  return greedy_decode(std::span<const Command>(&command, 1), max_len).front();
}

template <typename Scalar>
ActionSequence ConvSeq2Seq<Scalar>::beam_decode(const Command& command, int max_len,
                                                int beam_width) const {
  if (beam_width <= 1) return greedy_decode(command, max_len);
  if (max_len < 1) return {};
  if (max_len > config_.max_positions)
    throw PositionOverflow("max_len " + std::to_string(max_len) + " exceeds " +
                           std::to_string(config_.max_positions) + " positions");

  struct Hypothesis {
    std::vector<int> tokens;
    double score = 0.0;
  };
  struct Candidate {
    double score;
    Index parent;
    int token;
  };

  const EncoderOutput enc = encode_commands(std::span<const Command>(&command, 1));
  DecodeState state = start_decoding(enc, {0});
  std::vector<Hypothesis> alive(1);
  std::optional<Hypothesis> best_finished;

  for (Index step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<int> prev;
    for (const auto& h : alive) prev.push_back(h.tokens.empty() ? vocab::kTargetBos : h.tokens.back());
    const Matrix logits = decode_step(state, prev, step);

    std::vector<Candidate> cands;
    for (Index r = 0; r < static_cast<Index>(alive.size()); ++r) {
      double mx = logits(r, vocab::kTargetEos);
      for (int id = 3; id < vocab::kTargetSize; ++id) mx = std::max(mx, double(logits(r, id)));
      double z = std::exp(double(logits(r, vocab::kTargetEos)) - mx);
      for (int id = 3; id < vocab::kTargetSize; ++id) z += std::exp(double(logits(r, id)) - mx);
      const double lse = mx + std::log(z);
      const double base = alive[static_cast<std::size_t>(r)].score;
      cands.push_back({base + double(logits(r, vocab::kTargetEos)) - lse, r, vocab::kTargetEos});
      for (int id = 3; id < vocab::kTargetSize; ++id)
        cands.push_back({base + double(logits(r, id)) - lse, r, id});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    std::vector<Hypothesis> next;
    std::vector<Index> parents;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) >= beam_width) break;
      Hypothesis h = alive[static_cast<std::size_t>(c.parent)];
      h.score = c.score;
      if (c.token == vocab::kTargetEos) {
        if (!best_finished || h.score > best_finished->score) best_finished = h;
        continue;
      }
      h.tokens.push_back(c.token);
      if (static_cast<int>(h.tokens.size()) >= max_len) {
        if (!best_finished || h.score > best_finished->score) best_finished = h;
        continue;
      }
      next.push_back(std::move(h));
      parents.push_back(c.parent);
    }
    if (best_finished && (next.empty() || best_finished->score >= next.front().score)) break;
    alive = std::move(next);
    state.select_rows(parents);
  }

  const Hypothesis& best = best_finished ? *best_finished : alive.front();
  ActionSequence out;
  for (const int t : best.tokens) out.push_back(vocab::action_from_id(t));
  return out;
}

template <typename Scalar>
std::vector<ActionSequence> ConvSeq2Seq<Scalar>::decode(std::span<const Command> commands) const {
  if (config_.beam_width <= 1) return greedy_decode(commands, config_.max_decode_len);
  std::vector<ActionSequence> out;
  out.reserve(commands.size());
  for (const auto& c : commands) out.push_back(beam_decode(c, config_.max_decode_len, config_.beam_width));
  return out;
}

template <typename Scalar>
typename ConvSeq2Seq<Scalar>::Matrix ConvSeq2Seq<Scalar>::incremental_logits(
    const Command& command, const ActionSequence& forced) const {
  const EncoderOutput enc = encode_commands(std::span<const Command>(&command, 1));
  DecodeState state = start_decoding(enc, {0});
  Matrix out(static_cast<Index>(forced.size()) + 1, config_.tgt_vocab);
  std::vector<int> prev{vocab::kTargetBos};
  for (Index step = 0; step <= static_cast<Index>(forced.size()); ++step) {
    out.row(step) = decode_step(state, prev, step).row(0);
    if (step < static_cast<Index>(forced.size()))
      prev[0] = vocab::target_id(forced[static_cast<std::size_t>(step)]);
  }
  return out;
}

template class ConvSeq2Seq<float>;
template class ConvSeq2Seq<double>;

}  // namespace scanconv
