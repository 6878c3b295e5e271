#include "scanconv/trainer.hpp"

#include <chrono>
#include <cmath>

#include "scanconv/errors.hpp"
#include "scanconv/optimizer.hpp"

namespace scanconv {

void TrainSpec::validate() const {
  model.validate();
  if (!(lr >= 0.0)) throw InvalidConfig("lr must be >= 0");
  if (batch_tokens < 1) throw InvalidConfig("batch_tokens must be >= 1");
  if (num_samples < 0) throw InvalidConfig("num_samples must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidConfig("momentum must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw InvalidConfig("clip_norm must be > 0");
  if (oversample_primitive < 0) throw InvalidConfig("oversample_primitive must be >= 0");
  if (log_interval < 1) throw InvalidConfig("log_interval must be >= 1");
}

TrainSpec TrainSpec::best_overall() {
  TrainSpec s;
  s.model = ModelConfig::best_overall();
  s.lr = 0.01;
  s.batch_tokens = 25;
  return s;
}

std::vector<const Example*> sample_stream(std::span<const Example> pool, std::int64_t count, Rng& rng) {
  if (pool.empty()) throw EmptyTrainingSet("cannot sample from an empty training set");
  std::vector<const Example*> out;
  out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  for (std::int64_t i = 0; i < count; ++i) out.push_back(&pool[rng.below(pool.size())]);
  return out;
}

std::vector<std::vector<const Example*>> make_batches(std::span<const Example* const> stream,
                                                      int batch_tokens) {
  std::vector<std::vector<const Example*>> batches;
  std::vector<const Example*> current;
  long used = 0;
  for (const Example* ex : stream) {
    const long tokens = static_cast<long>(ex->command.size()) + 1;
    if (tokens > batch_tokens)
      throw ItemTooLarge("'" + render(ex->command) + "' needs " + std::to_string(tokens) +
                         " source tokens, batch budget is " + std::to_string(batch_tokens));
    if (used + tokens > batch_tokens) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(ex);
    used += tokens;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

std::vector<Example> training_pool(const TrainSpec& spec, const DatasetSplit& split) {
  std::vector<Example> pool = split.train;
  if (spec.oversample_primitive > 0) {
    for (const auto& ex : split.train)
      if (ex.command.size() == 1)
        for (int k = 0; k < spec.oversample_primitive; ++k) pool.push_back(ex);
  }
  return pool;
}

TrainResult train(const TrainSpec& spec, const DatasetSplit& split, const StepCallback& on_step) {
  spec.validate();
  const auto started = std::chrono::steady_clock::now();
  const std::vector<Example> pool = training_pool(spec, split);
  if (pool.empty()) throw EmptyTrainingSet("split '" + split.name() + "' has no training pairs");

  const Rng root(spec.seed);
  TrainResult result{ConvSeq2Seq<float>(spec.model, root.split("init")), {}};
  Rng sampling = root.split("sample");
  Rng dropout = root.split("dropout");

  const auto stream = sample_stream(pool, spec.num_samples, sampling);
  const auto batches = make_batches(stream, spec.batch_tokens);

  ag::NagOptimizer<float> optimizer(result.model.parameters(),
                                    {spec.lr, spec.momentum, spec.clip_norm});
  TrainReport& report = result.report;
  report.seed = spec.seed;
  report.num_samples = spec.num_samples;

  double window_sum = 0.0;
  int window_count = 0;
  for (const auto& items : batches) {
    const Batch batch = make_batch(std::span<const Example* const>(items));
    ag::Tape<float> tape;
    const auto loss = result.model.loss(tape, batch, &dropout);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw DivergenceDetected("non-finite loss at step " + std::to_string(report.num_steps) +
                               " (seed " + std::to_string(spec.seed) + ")");
    tape.backward(loss);
    optimizer.step();
    if (on_step) on_step(report.num_steps, value, result.model);
    ++report.num_steps;
    window_sum += value;
    if (++window_count == spec.log_interval) {
      report.loss_curve.push_back(window_sum / window_count);
      window_sum = 0.0;
      window_count = 0;
    }
  }
  if (window_count > 0) report.loss_curve.push_back(window_sum / window_count);
  report.final_loss = report.loss_curve.empty() ? 0.0 : report.loss_curve.back();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

void to_json(nlohmann::ordered_json& j, const TrainSpec& s) {
  j = nlohmann::ordered_json::object();
  j["model"] = s.model;
  j["lr"] = s.lr;
  j["batch_tokens"] = s.batch_tokens;
  j["num_samples"] = s.num_samples;
  j["seed"] = s.seed;
  j["momentum"] = s.momentum;
  j["clip_norm"] = s.clip_norm;
  j["oversample_primitive"] = s.oversample_primitive;
  j["log_interval"] = s.log_interval;
}

namespace {

template <typename Json>
void read_spec(const Json& j, TrainSpec& s) {
  const TrainSpec d;
  // A bare ModelConfig object is accepted as a TrainSpec with default training fields.
  if (j.contains("model"))
    s.model = j.at("model").template get<ModelConfig>();
  else
    s.model = j.template get<ModelConfig>();
  s.lr = j.value("lr", d.lr);
  s.batch_tokens = j.value("batch_tokens", d.batch_tokens);
  s.num_samples = j.value("num_samples", d.num_samples);
  s.seed = j.value("seed", d.seed);
  s.momentum = j.value("momentum", d.momentum);
  s.clip_norm = j.value("clip_norm", d.clip_norm);
  s.oversample_primitive = j.value("oversample_primitive", d.oversample_primitive);
  s.log_interval = j.value("log_interval", d.log_interval);
}

}  // namespace

void from_json(const nlohmann::ordered_json& j, TrainSpec& s) { read_spec(j, s); }
void from_json(const nlohmann::json& j, TrainSpec& s) { read_spec(j, s); }

void to_json(nlohmann::ordered_json& j, const TrainReport& r) {
  j = nlohmann::ordered_json::object();
  j["final_loss"] = r.final_loss;
  j["loss_curve"] = r.loss_curve;
  j["wall_seconds"] = r.wall_seconds;
  j["seed"] = r.seed;
  j["num_samples"] = r.num_samples;
  j["num_steps"] = r.num_steps;
  j["checkpoint"] = r.checkpoint;
}

void from_json(const nlohmann::ordered_json& j, TrainReport& r) {
  r.final_loss = j.at("final_loss").get<double>();
  r.loss_curve = j.at("loss_curve").get<std::vector<double>>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.num_samples = j.at("num_samples").get<std::int64_t>();
  r.num_steps = j.at("num_steps").get<std::int64_t>();
  r.checkpoint = j.value("checkpoint", std::string());
}

}  // namespace scanconv
