#include "scanconv/model_config.hpp"

#include <algorithm>
#include <sstream>

#include "scanconv/errors.hpp"

namespace scanconv {

void ModelConfig::validate() const {
  const auto fail = [](const std::string& what) { throw InvalidConfig(what); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (enc_kernel_width < 1 || dec_kernel_width < 1) fail("kernel widths must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (max_positions < 1) fail("max_positions must be >= 1");
  if (src_vocab < vocab::kSourceSize || tgt_vocab < vocab::kTargetSize) fail("vocabulary too small");
  if (attention_layers.empty()) fail("attention mask must enable at least one layer");
  for (const int l : attention_layers)
    if (l < 1 || l > num_layers) fail("attention layer " + std::to_string(l) + " outside 1.." + std::to_string(num_layers));
  if (max_decode_len < 1) fail("max_decode_len must be >= 1");
  if (beam_width < 1) fail("beam_width must be >= 1");
}

bool ModelConfig::attends(int layer) const {
  return std::find(attention_layers.begin(), attention_layers.end(), layer) != attention_layers.end();
}

bool ModelConfig::full_attention() const {
  for (int l = 1; l <= num_layers; ++l)
    if (!attends(l)) return false;
  return true;
}

std::string ModelConfig::describe() const {
  std::ostringstream os;
  os << "L" << num_layers << "_d" << embed_dim << "_k" << enc_kernel_width << "x" << dec_kernel_width
     << "_do" << dropout;
  if (!weight_norm) os << "_nown";
  if (scale_encoder_grad) os << "_gs";
  if (!full_attention()) {
    os << "_att";
    for (const int l : attention_layers) os << l;
  }
  return os.str();
}

ModelConfig ModelConfig::best_overall() {
  ModelConfig c;
  c.num_layers = 6;
  c.embed_dim = 512;
  c.enc_kernel_width = 5;
  c.dec_kernel_width = 5;
  c.dropout = 0.25;
  c.attention_layers = all_layers(6);
  return c;
}

std::vector<int> all_layers(int num_layers) { return bottom_layers(num_layers, num_layers); }

std::vector<int> bottom_layers(int num_layers, int k) {
  std::vector<int> out;
  for (int l = 1; l <= std::min(k, num_layers); ++l) out.push_back(l);
  return out;
}

std::vector<int> top_layers(int num_layers, int k) {
  std::vector<int> out;
  for (int l = std::max(1, num_layers - k + 1); l <= num_layers; ++l) out.push_back(l);
  return out;
}

namespace {

template <typename Json>
void write(Json& j, const ModelConfig& c) {
  j = Json::object();
  j["num_layers"] = c.num_layers;
  j["embed_dim"] = c.embed_dim;
  j["enc_kernel_width"] = c.enc_kernel_width;
  j["dec_kernel_width"] = c.dec_kernel_width;
  j["dropout"] = c.dropout;
  j["attention_layers"] = c.attention_layers;
  j["max_positions"] = c.max_positions;
  j["src_vocab"] = c.src_vocab;
  j["tgt_vocab"] = c.tgt_vocab;
  j["max_decode_len"] = c.max_decode_len;
  j["beam_width"] = c.beam_width;
  j["weight_norm"] = c.weight_norm;
  j["scale_encoder_grad"] = c.scale_encoder_grad;
}

template <typename Json>
void read(const Json& j, ModelConfig& c) {
  ModelConfig d;
  c.num_layers = j.value("num_layers", d.num_layers);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.enc_kernel_width = j.value("enc_kernel_width", d.enc_kernel_width);
  c.dec_kernel_width = j.value("dec_kernel_width", d.dec_kernel_width);
  c.dropout = j.value("dropout", d.dropout);
  if (j.contains("attention_layers"))
    c.attention_layers = j.at("attention_layers").template get<std::vector<int>>();
  else
    c.attention_layers = all_layers(c.num_layers);
  c.max_positions = j.value("max_positions", d.max_positions);
  c.src_vocab = j.value("src_vocab", d.src_vocab);
  c.tgt_vocab = j.value("tgt_vocab", d.tgt_vocab);
  c.max_decode_len = j.value("max_decode_len", d.max_decode_len);
  c.beam_width = j.value("beam_width", d.beam_width);
  c.weight_norm = j.value("weight_norm", d.weight_norm);
  c.scale_encoder_grad = j.value("scale_encoder_grad", d.scale_encoder_grad);
}

}  // namespace

void to_json(nlohmann::ordered_json& j, const ModelConfig& c) { write(j, c); }
void from_json(const nlohmann::ordered_json& j, ModelConfig& c) { read(j, c); }
void to_json(nlohmann::json& j, const ModelConfig& c) { write(j, c); }
void from_json(const nlohmann::json& j, ModelConfig& c) { read(j, c); }

}  // namespace scanconv
