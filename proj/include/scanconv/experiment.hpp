#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "scanconv/evaluator.hpp"
#include "scanconv/splits.hpp"
#include "scanconv/trainer.hpp"

namespace scanconv {

/// Part of every run-cache key; bump when training or evaluation changes.
inline constexpr std::string_view kCodeVersion = "scanconv-1.0";

/// Published CNN accuracies (%) on the three main splits: mean, std.
struct ReferenceResult {
  std::string_view split;
  double mean;
  double std;
};
inline constexpr ReferenceResult kPublishedCnn[] = {
    {"random", 100.0, 0.0}, {"jump", 69.2, 8.2}, {"around-right", 56.7, 10.2}};

inline constexpr std::int64_t kDeskSamples = 20000;
inline constexpr std::int64_t kPaperSamples = 100000;

/// 6 layers, 128 dims, widths 5/5, dropout 0.25, lr 0.01, 200-token batches,
/// kDeskSamples samples.
TrainSpec desk_spec();
/// TrainSpec::best_overall() with kPaperSamples samples.
TrainSpec paper_spec();

/// Identifies a training configuration independent of its seed.
std::string config_id(const TrainSpec& spec);
/// Cache key of one (config, seed, split) run under kCodeVersion. A limited
/// evaluation is a different run.
std::string run_id(const TrainSpec& spec, const DatasetSplit& split,
                   const std::optional<std::size_t>& eval_limit = std::nullopt);
/// Config label plus batch size and learning rate.
std::string describe(const TrainSpec& spec);

/// Everything persisted about one run; reports are computed from these alone.
struct RunRecord {
  std::string run_id;
  std::string config_id;
  std::string label;  // short human-readable config description
  TrainSpec spec;     // includes the seed
  std::string split;
  std::string split_hash;
  std::string code_version;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  std::int64_t num_test = 0;
  std::int64_t num_correct = 0;
  TrainReport train;
  double eval_seconds = 0.0;
};

void to_json(nlohmann::ordered_json& j, const RunRecord& r);
void from_json(const nlohmann::ordered_json& j, RunRecord& r);

/// One JSON file per run under `<root>/runs/`.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_of(const std::string& run_id) const;
  std::optional<RunRecord> load(const std::string& run_id) const;
  /// Written to a temporary file and renamed, so a killed sweep never leaves a
  /// partial record.
  void store(const RunRecord& record) const;
  /// Every record, sorted by run id.
  std::vector<RunRecord> load_all() const;

 private:
  std::filesystem::path root_;
};

struct RunRequest {
  TrainSpec spec;
  SplitKind split = SplitKind::kRandom;
};

struct SweepOptions {
  int workers = 1;
  /// Testing hook: stop scheduling after this many freshly trained runs, as if
  /// the process had been interrupted.
  std::optional<int> stop_after;
  /// Testing hook: evaluate only the first N test items.
  std::optional<std::size_t> eval_limit;
  bool save_checkpoints = false;
  /// Seed of the random split; the other splits are fixed.
  std::uint64_t split_seed = 1;
  /// Called from the writer for each finished run, cached or not.
  std::function<void(const RunRecord&, bool cached)> on_run;
};

struct SweepOutcome {
  std::vector<RunRecord> records;  // in request order; missing when interrupted
  std::vector<std::string> trained;  // run ids trained in this invocation
  std::vector<std::string> cached;
  int failed = 0;
  bool interrupted = false;
};

/// Trains and evaluates one run without touching any cache.
RunRecord execute_run(const TrainSpec& spec, const DatasetSplit& split,
                      const std::optional<std::size_t>& eval_limit = std::nullopt,
                      const std::filesystem::path& checkpoint = {});

/// Runs every request not already in `store` on a bounded worker pool. Records
/// are persisted by a single writer as runs finish. Per-run failures are
/// recorded, not thrown.
SweepOutcome run_sweep(const std::vector<RunRequest>& requests, const RunStore& store,
                       const SweepOptions& options);

struct GridSpec {
  std::vector<int> batch_tokens{25, 50, 100, 200, 500, 1000};
  std::vector<double> lr{0.1, 0.01, 0.001};
  std::vector<int> embed_dim{128, 256, 512};
  std::vector<int> num_layers{6, 7, 8, 9, 10};
  std::vector<int> kernel{3, 4, 5};
  std::vector<double> dropout{0.0, 0.25, 0.5};
  int seeds = 5;
  std::vector<SplitKind> splits{SplitKind::kRandom, SplitKind::kJump, SplitKind::kAroundRight};
  std::int64_t num_samples = 100000;

  std::size_t size() const;
  /// All configurations (seed 1), batch_tokens varying slowest.
  std::vector<TrainSpec> configs() const;
  /// A deterministic subset of `budget` configurations, in grid order.
  std::vector<TrainSpec> subsample(std::size_t budget) const;
};

/// Seeds 1..n for each config and each split.
std::vector<RunRequest> expand(const std::vector<TrainSpec>& configs, int seeds,
                               const std::vector<SplitKind>& splits);

struct SplitSummary {
  double mean = 0.0;  // over successful seeds
  double std = 0.0;   // population std over successful seeds
  std::vector<double> accuracies;  // ordered by seed
  int failures = 0;
};

struct ConfigResult {
  std::string config_id;
  std::string label;
  TrainSpec spec;  // seed of the first record
  std::map<std::string, SplitSummary> splits;  // keyed by split name
};

/// Groups records by config, ordered by config id. Splits with no successful
/// seed are omitted.
std::vector<ConfigResult> aggregate(const std::vector<RunRecord>& records);

struct RankedConfig {
  std::string config_id;
  std::map<std::string, int> ranks;
  int rank_sum = 0;
  double mean_accuracy = 0.0;  // over splits
};

struct RankOutcome {
  std::string best;
  std::vector<RankedConfig> table;  // best first
};

/// Competition ranks per split by mean accuracy (ties share the smaller
/// rank); the winner minimizes the rank sum, ties broken by mean accuracy over
/// splits and then config id. Throws IncompleteResults when a config lacks one
/// of `splits`.
RankOutcome rank_aggregate(const std::vector<ConfigResult>& results,
                           const std::vector<std::string>& splits);

struct TopKRow {
  std::string config_id;
  std::string label;
  double mean = 0.0;
  double std = 0.0;
};

struct TopKTable {
  std::string split;
  std::vector<TopKRow> rows;
  double average = 0.0;  // mean of the row means
};

/// Throws InsufficientResults when fewer than k configs have the split.
TopKTable top_k_table(const std::vector<ConfigResult>& results, std::size_t k,
                      const std::string& split);

/// Base config with encoder width e and decoder width d, e and d in 1..5,
/// encoder width varying slowest.
std::vector<TrainSpec> kernel_grid_configs(const TrainSpec& base);

struct AttentionMask {
  std::string name;  // bottomK, topK or full
  std::vector<int> layers;
};

/// bottom1..bottom(L-1), top1..top(L-1), full.
std::vector<AttentionMask> attention_masks(int num_layers);
std::vector<TrainSpec> attention_ablation_configs(const TrainSpec& base);

enum class StudyKind { kTrain, kGrid, kKernel, kAttention };
std::string_view to_string(StudyKind kind);
StudyKind parse_study_kind(std::string_view name);

/// Persisted beside the run records so `report` can rebuild every table.
struct Study {
  StudyKind kind = StudyKind::kGrid;
  std::vector<std::string> splits;
  TrainSpec base;  // kernel and attention studies
  std::vector<std::string> run_ids;  // requested runs, in order
};

void to_json(nlohmann::ordered_json& j, const Study& s);
void from_json(const nlohmann::ordered_json& j, Study& s);
void save_study(const std::filesystem::path& root, const Study& study);
Study load_study(const std::filesystem::path& root);

/// Writes report.json, report.csv and report.md into `dir`. Everything except
/// the `generated_at` lines is a function of (study, records). Throws IoError.
void emit_report(const std::filesystem::path& dir, const Study& study,
                 const std::vector<RunRecord>& records, const std::string& generated_at);

/// Columns of report.csv.
inline constexpr std::string_view kReportCsvHeader =
    "config_id,label,split,n_seeds,n_failed,mean,std,seed_accuracies";

}  // namespace scanconv
