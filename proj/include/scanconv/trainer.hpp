#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "scanconv/model.hpp"
#include "scanconv/splits.hpp"

namespace scanconv {

/// Everything needed to reproduce one training run.
struct TrainSpec {
  ModelConfig model;
  double lr = 0.01;
  int batch_tokens = 25;
  std::int64_t num_samples = 100000;
  std::uint64_t seed = 1;
  double momentum = 0.99;
  double clip_norm = 25.0;
  /// Extra copies of each one-word command added to the sampling pool.
  int oversample_primitive = 0;
  /// Optimizer steps per point of the loss curve.
  int log_interval = 50;

  /// Throws InvalidConfig.
  void validate() const;

  /// lr 0.01, 25-token batches, on ModelConfig::best_overall().
  static TrainSpec best_overall();

  friend bool operator==(const TrainSpec&, const TrainSpec&) = default;
};

struct TrainReport {
  double final_loss = 0.0;          // mean over the last log interval
  std::vector<double> loss_curve;   // mean loss per log interval
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::int64_t num_samples = 0;
  std::int64_t num_steps = 0;
  std::string checkpoint;           // filled in by callers that persist the model
};

struct TrainResult {
  ConvSeq2Seq<float> model;
  TrainReport report;
};

/// Called after every optimizer step with (step index, batch loss, model).
using StepCallback = std::function<void(std::int64_t, double, const ConvSeq2Seq<float>&)>;

/// `count` uniform draws with replacement. Throws EmptyTrainingSet.
std::vector<const Example*> sample_stream(std::span<const Example> pool, std::int64_t count, Rng& rng);

/// Greedy packing of consecutive items: a batch is closed when the next
/// item's source tokens (command + eos) would push it past `batch_tokens`.
/// Throws ItemTooLarge when a single item does not fit.
std::vector<std::vector<const Example*>> make_batches(std::span<const Example* const> stream,
                                                      int batch_tokens);

/// One pass over the sampled stream, one NAG step per batch. Throws
/// DivergenceDetected when the loss becomes non-finite.
TrainResult train(const TrainSpec& spec, const DatasetSplit& split,
                  const StepCallback& on_step = {});

/// The pool `train` samples from: split.train plus oversampled primitives.
std::vector<Example> training_pool(const TrainSpec& spec, const DatasetSplit& split);

void to_json(nlohmann::ordered_json& j, const TrainSpec& s);
void from_json(const nlohmann::ordered_json& j, TrainSpec& s);
void from_json(const nlohmann::json& j, TrainSpec& s);
void to_json(nlohmann::ordered_json& j, const TrainReport& r);
void from_json(const nlohmann::ordered_json& j, TrainReport& r);

}  // namespace scanconv
