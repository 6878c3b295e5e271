#pragma once

// Convolutional encoder-decoder with gated linear units, learned positional
// embeddings and one attention step per decoder layer.
//
// Encoder:  e = dropout(tok + pos);  x = fc1(e)
//           per layer: x = (glu(conv_sym(dropout(mask(x)))) + x) * sqrt(.5)
//           z = mask(fc2(x));  c = (z + e) * sqrt(.5)
// Decoder:  g = dropout(tok + pos);  x = fc1(g)
//           per layer l: h = glu(conv_causal(dropout(x)))
//                        if l attends: h = attend(h, g, z, c)
//                        x = (h + x) * sqrt(.5)
//           logits = fc3(dropout(fc2(x)))
// Attention: q = (in_proj(h) + g) * sqrt(.5);  w = softmax(q z^T) over real
//           source positions;  ctx = (w c) * sqrt(src_len)
//           out = (out_proj(ctx) + h) * sqrt(.5)
// The gradient reaching z is scaled by 1 / (2 * attention layers) when
// config.scale_encoder_grad is on.
// Conv and linear weights are weight-normalized unless config.weight_norm is
// off; checkpoints then carry an extra `<name>.weight_g` per layer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scanconv/checkpoint.hpp"
#include "scanconv/errors.hpp"
#include "scanconv/model_config.hpp"
#include "scanconv/rng.hpp"
#include "scanconv/tensor.hpp"
#include "scanconv/vocab.hpp"

namespace scanconv {

template <typename Scalar>
class ConvSeq2Seq {
 public:
  using Tensor = ag::Tensor<Scalar>;
  using Tape = ag::Tape<Scalar>;
  using Matrix = ag::Matrix<Scalar>;
  using Index = ag::Index;

  /// Affine map x * W + b. With weight normalization W = v * diag(g / |v_j|),
  /// where `weight` holds v and `scale` holds g.
  struct Linear {
    Tensor weight;  // [in, out]
    Tensor scale;   // [1, out], undefined without weight normalization
    Tensor bias;    // [1, out]
  };

  struct EncoderOutput {
    Tensor z;         // final encoder layer outputs [B*S, d]
    Tensor e;         // input embeddings, token + position [B*S, d]
    Tensor combined;  // (z + e) * sqrt(.5), the attention values
    std::vector<bool> pad_mask;  // true at pad positions, [B*S]
    std::vector<int> src_lengths;
    Index batch = 0;
    Index src_len = 0;
  };

  struct AttentionResult {
    Tensor output;   // [B*T, d], includes the residual
    Tensor context;  // [B*T, d], weighted sum before the output projection
    Tensor weights;  // [B*T, S]
  };

  /// Per-decoder-layer attention results; entries for layers outside the
  /// attention mask stay undefined.
  struct DecoderTrace {
    std::vector<std::optional<AttentionResult>> layers;
  };

  /// Builds and initializes all parameters from `init_rng`. Each parameter
  /// draws from its own named stream, so the attention mask never changes
  /// the initial weights.
  ConvSeq2Seq(ModelConfig config, const Rng& init_rng);
  ConvSeq2Seq(ConvSeq2Seq&&) noexcept = default;
  ConvSeq2Seq& operator=(ConvSeq2Seq&&) noexcept = default;
  // Parameters are shared handles; use clone() for an independent copy.
  ConvSeq2Seq(const ConvSeq2Seq&) = delete;
  ConvSeq2Seq& operator=(const ConvSeq2Seq&) = delete;

  const ModelConfig& config() const { return config_; }
  std::vector<NamedParameter<Scalar>>& named_parameters() { return params_; }
  const std::vector<NamedParameter<Scalar>>& named_parameters() const { return params_; }
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  /// Deep copy of every parameter value into a fresh model.
  ConvSeq2Seq clone() const;
  Tensor& parameter(const std::string& name);

  /// Throws PositionOverflow when the source exceeds max_positions.
  /// `dropout_rng` null means evaluation mode.
  EncoderOutput encode(Tape& tape, const Batch& batch, Rng* dropout_rng) const;

  AttentionResult attention(Tape& tape, int layer, const Tensor& state,
                            const Tensor& target_embedding, const EncoderOutput& enc,
                            Index tgt_len) const;

  /// Teacher-forced logits [B*T, tgt_vocab].
  Tensor forward(Tape& tape, const Batch& batch, Rng* dropout_rng,
                 DecoderTrace* trace = nullptr) const;

  /// Mean cross-entropy over non-pad target positions.
  Tensor loss(Tape& tape, const Batch& batch, Rng* dropout_rng) const;

  /// Greedy decoding for each command, at most `max_len` actions each.
  std::vector<ActionSequence> greedy_decode(std::span<const Command> commands, int max_len) const;
  ActionSequence greedy_decode(const Command& command, int max_len) const;

  /// Beam search for a single command; beam_width 1 equals greedy decoding.
  ActionSequence beam_decode(const Command& command, int max_len, int beam_width) const;

  /// Uses config().beam_width and config().max_decode_len.
  std::vector<ActionSequence> decode(std::span<const Command> commands) const;

  /// Logits from the incremental decoder when fed `forced` (plus eos) one step
  /// at a time, [forced.size()+1, tgt_vocab]. Used to check that the
  /// incremental path agrees with forward().
  Matrix incremental_logits(const Command& command, const ActionSequence& forced) const;

 private:
  struct DecodeState;

  Tensor make_param(const std::string& name, Matrix value);
  Linear make_linear(const Rng& rng, const std::string& name, int in, int out, double dropout);

  Tensor effective_weight(Tape& tape, const Linear& l) const;
  Matrix effective_weight(const Linear& l) const;
  Tensor apply(Tape& tape, const Tensor& x, const Linear& l) const;

  EncoderOutput encode_commands(std::span<const Command> commands) const;
  DecodeState start_decoding(const EncoderOutput& enc, std::vector<Index> rows_to_items) const;
  Matrix decode_step(DecodeState& state, const std::vector<int>& prev_tokens, Index step) const;

  ModelConfig config_;
  std::vector<NamedParameter<Scalar>> params_;

  Tensor src_embed_, src_pos_;
  Linear enc_fc1_, enc_fc2_;
  std::vector<Linear> enc_convs_;  // weight [w*d, 2d]

  Tensor tgt_embed_, tgt_pos_;
  Linear dec_fc1_, dec_fc2_, dec_fc3_;
  std::vector<Linear> dec_convs_;
  std::vector<Linear> attn_in_, attn_out_;
};

extern template class ConvSeq2Seq<float>;
extern template class ConvSeq2Seq<double>;

}  // namespace scanconv
