#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "scanconv/vocab.hpp"

namespace scanconv {

/// Architecture hyperparameters of the convolutional encoder-decoder.
struct ModelConfig {
  int num_layers = 6;  // encoder and decoder depth
  int embed_dim = 512;
  int enc_kernel_width = 5;
  int dec_kernel_width = 5;
  double dropout = 0.25;
  std::vector<int> attention_layers = {1, 2, 3, 4, 5, 6};  // 1-based decoder layers
  int max_positions = 64;
  int src_vocab = vocab::kSourceSize;
  int tgt_vocab = vocab::kTargetSize;
  int max_decode_len = 60;
  int beam_width = 1;
  bool weight_norm = true;
  /// Scale the gradient reaching the encoder output by 1 / (2 * attention
  /// layers), as fairseq's fconv does.
  bool scale_encoder_grad = false;

  /// Throws InvalidConfig.
  void validate() const;
  bool attends(int layer) const;
  bool full_attention() const;
  std::string describe() const;

  /// 6 layers, 512 dims, widths 5/5, dropout 0.25, attention everywhere.
  static ModelConfig best_overall();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::vector<int> all_layers(int num_layers);
/// Layers {1..k}.
std::vector<int> bottom_layers(int num_layers, int k);
/// Layers {L-k+1..L}.
std::vector<int> top_layers(int num_layers, int k);

void to_json(nlohmann::ordered_json& j, const ModelConfig& c);
void from_json(const nlohmann::ordered_json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace scanconv
