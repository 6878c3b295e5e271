// scanconv: generate SCAN data, train and evaluate the convolutional
// seq2seq model, and run the hyperparameter and ablation studies.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "scanconv/checkpoint.hpp"
#include "scanconv/errors.hpp"
#include "scanconv/evaluator.hpp"
#include "scanconv/experiment.hpp"
#include "scanconv/scan_grammar.hpp"
#include "scanconv/splits.hpp"
#include "scanconv/trainer.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace scanconv;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

struct Options {
  std::string out = "runs";
  std::string model_dir;
  std::string split = "random";
  std::vector<std::string> splits;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 1;
  int seeds = 0;
  std::optional<std::int64_t> num_samples;
  bool paper_scale = false;
  std::optional<std::size_t> budget;
  std::string config;
  bool corpus_names = false;
  std::optional<double> lr;
  std::optional<int> batch_tokens;
  std::optional<int> oversample;
  int workers = 1;
  std::optional<int> stop_after;
  std::optional<std::size_t> eval_limit;
  bool save_checkpoints = false;
};

ActionNaming naming(const Options& o) { return o.corpus_names ? ActionNaming::kScanCorpus : ActionNaming::kCanonical; }

/// Desk or paper defaults, then --config, then individual flags.
TrainSpec resolve_spec(const Options& o) {
  TrainSpec spec = o.paper_scale ? paper_spec() : desk_spec();
  if (!o.config.empty()) {
    // Fields missing from the file keep their desk or paper-scale values.
    const auto j = ojson::parse(read_file(o.config));
    if (j.contains("model")) {
      ojson merged = spec;
      merged.merge_patch(j);
      spec = merged.get<TrainSpec>();
    } else {
      spec.model = j.get<ModelConfig>();
    }
  }
  if (o.num_samples) spec.num_samples = *o.num_samples;
  if (o.lr) spec.lr = *o.lr;
  if (o.batch_tokens) spec.batch_tokens = *o.batch_tokens;
  if (o.oversample) spec.oversample_primitive = *o.oversample;
  spec.seed = o.seed;
  spec.validate();
  return spec;
}

std::vector<SplitKind> resolve_splits(const Options& o, std::vector<SplitKind> fallback) {
  if (o.splits.empty()) return fallback;
  std::vector<SplitKind> out;
  for (const auto& s : o.splits) out.push_back(parse_split_kind(s));
  return out;
}

std::vector<std::string> names(const std::vector<SplitKind>& kinds) {
  std::vector<std::string> out;
  for (const auto k : kinds) out.push_back(std::string(to_string(k)));
  return out;
}

int cmd_generate(const Options& o) {
  const auto& all = enumerate_all();
  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_examples(all, dir / "tasks.txt", naming(o));
  std::cout << "wrote " << all.size() << " pairs to " << (dir / "tasks.txt").string() << "\n";
  return 0;
}

int cmd_split(const Options& o) {
  const DatasetSplit split = build_split(parse_split_kind(o.split), o.seed);
  write_split(split, o.out, naming(o));
  std::cout << split.name() << ": train " << split.train.size() << ", test " << split.test.size() << ", hash "
            << split.content_hash() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const TrainSpec spec = resolve_spec(o);
  const DatasetSplit split = build_split(parse_split_kind(o.split), o.split_seed);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::cerr << "training " << describe(spec) << " on " << split.name() << " (" << spec.num_samples
            << " samples, seed " << spec.seed << ")\n";
  double window = 0.0;
  int count = 0;
  TrainResult result = train(spec, split, [&](std::int64_t step, double loss, const ConvSeq2Seq<float>&) {
    window += loss;
    if (++count == spec.log_interval) {
      std::cerr << "step " << step + 1 << " loss " << window / count << "\n";
      window = 0.0;
      count = 0;
    }
  });
  save_checkpoint(dir / "model.ckpt", result.model.named_parameters());
  result.report.checkpoint = "model.ckpt";
  ojson j = ojson::object();
  j["spec"] = spec;
  j["split"] = split.name();
  j["split_seed"] = o.split_seed;
  j["split_hash"] = split.content_hash();
  j["report"] = result.report;
  write_file(dir / "train.json", j.dump(2) + "\n");
  std::cout << "final loss " << result.report.final_loss << " after " << result.report.num_steps << " steps, "
            << result.report.wall_seconds << " s; checkpoint " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  const fs::path model_dir(o.model_dir.empty() ? o.out : o.model_dir);
  const auto meta = ojson::parse(read_file(model_dir / "train.json"));
  const TrainSpec spec = meta.at("spec").get<TrainSpec>();
  ConvSeq2Seq<float> model(spec.model, Rng(0));
  load_checkpoint(model_dir / "model.ckpt", model.named_parameters());

  const DatasetSplit split = build_split(parse_split_kind(o.split), o.split_seed);
  std::span<const Example> test(split.test);
  if (o.eval_limit && *o.eval_limit < test.size()) test = test.first(*o.eval_limit);
  const EvalResult eval = evaluate(model, test);
  const fs::path file = fs::path(o.out) / ("eval-" + split.name() + ".json");
  ojson j = eval;
  j["split"] = split.name();
  j["split_hash"] = split.content_hash();
  write_file(file, j.dump(2) + "\n");
  std::cout << split.name() << " accuracy " << eval.accuracy << " (" << eval.num_correct() << "/" << eval.items.size()
            << "); items in " << file.string() << "\n";
  return 0;
}

int cmd_analyze(const Options& o) {
  const fs::path dir(o.out);
  const auto j = ojson::parse(read_file(dir / ("eval-" + o.split + ".json")));
  const EvalResult eval = j.get<EvalResult>();
  const WordErrorProfile profile = word_error_profile(eval);
  const auto pairs = minimal_pairs(eval);
  const LengthErrorStats lengths = length_error_stats(eval);

  ojson out = ojson::object();
  out["split"] = o.split;
  out["accuracy"] = eval.accuracy;
  out["word_errors"] = profile;
  out["num_minimal_pairs"] = pairs.size();
  out["minimal_pairs"] = pairs;
  out["length_errors"] = lengths;
  write_file(dir / ("analysis-" + o.split + ".json"), out.dump(2) + "\n");
  write_file(dir / ("word-errors-" + o.split + ".csv"), word_profile_csv(profile));

  std::cout << "accuracy " << eval.accuracy << ", " << pairs.size() << " minimal pairs\n";
  for (const auto& w : profile.words)
    std::cout << "  " << to_string(w.word) << ": " << w.n_wrong << "/" << w.n << "\n";
  if (lengths.mean)
    std::cout << "length delta over " << lengths.count << " errors: mean " << *lengths.mean << ", variance "
              << *lengths.variance << "\n";
  else
    std::cout << "no errors, length statistics undefined\n";
  return 0;
}

int finish_study(const Options& o, Study study, const std::vector<RunRequest>& requests) {
  const RunStore store(o.out);
  SweepOptions so;
  so.workers = o.workers;
  so.stop_after = o.stop_after;
  so.eval_limit = o.eval_limit;
  so.save_checkpoints = o.save_checkpoints;
  so.split_seed = o.split_seed;
  so.on_run = [](const RunRecord& r, bool cached) {
    std::cerr << (cached ? "cached  " : "trained ") << r.label << " " << r.split << " seed " << r.spec.seed << ": "
              << (r.ok ? std::to_string(r.accuracy) : "FAILED " + r.error) << "\n";
  };

  std::map<SplitKind, DatasetSplit> splits;
  for (const auto& r : requests) {
    if (!splits.contains(r.split)) splits.emplace(r.split, build_split(r.split, o.split_seed));
    study.run_ids.push_back(run_id(r.spec, splits.at(r.split), o.eval_limit));
  }
  save_study(o.out, study);
  const SweepOutcome outcome = run_sweep(requests, store, so);

  ojson sweep = ojson::object();
  sweep["requested"] = requests.size();
  sweep["trained"] = outcome.trained;
  sweep["cached"] = outcome.cached;
  sweep["failed"] = outcome.failed;
  sweep["interrupted"] = outcome.interrupted;
  write_file(fs::path(o.out) / "last_sweep.json", sweep.dump(2) + "\n");

  emit_report(o.out, study, store.load_all(), utc_now());
  std::cout << "runs: " << requests.size() << " requested, " << outcome.trained.size() << " trained, "
            << outcome.cached.size() << " cached, " << outcome.failed << " failed"
            << (outcome.interrupted ? ", interrupted" : "") << "; report in " << o.out << "\n";
  return 0;
}

int cmd_grid(const Options& o) {
  GridSpec grid;
  grid.num_samples = o.num_samples.value_or(o.paper_scale ? kPaperSamples : kDeskSamples);
  grid.seeds = o.seeds > 0 ? o.seeds : 5;
  grid.splits = resolve_splits(o, grid.splits);
  const std::size_t budget = o.budget.value_or(o.paper_scale ? grid.size() : 10);
  const auto configs = grid.subsample(budget);
  std::cerr << configs.size() << " of " << grid.size() << " configs, " << grid.seeds << " seeds, "
            << grid.splits.size() << " splits\n";
  Study study;
  study.kind = StudyKind::kGrid;
  study.splits = names(grid.splits);
  return finish_study(o, study, expand(configs, grid.seeds, grid.splits));
}

int cmd_ablate(const Options& o, StudyKind kind) {
  Study study;
  study.kind = kind;
  study.base = resolve_spec(o);
  study.base.seed = 1;
  const auto splits = resolve_splits(o, {SplitKind::kRandom, SplitKind::kJump, SplitKind::kAroundRight});
  study.splits = names(splits);
  const auto configs =
      kind == StudyKind::kKernel ? kernel_grid_configs(study.base) : attention_ablation_configs(study.base);
  return finish_study(o, study, expand(configs, o.seeds > 0 ? o.seeds : 3, splits));
}

int cmd_report(const Options& o) {
  const Study study = load_study(o.out);
  emit_report(o.out, study, RunStore(o.out).load_all(), utc_now());
  std::cout << "report written to " << o.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutional seq2seq experiments on SCAN"};
  app.require_subcommand(1);
  Options o;

  const auto add_out = [&](CLI::App* c, const std::string& help) { c->add_option("--out", o.out, help); };
  const auto add_split = [&](CLI::App* c) {
    c->add_option("--split", o.split, "random|jump|around-right|turn-left|length")
        ->check(CLI::IsMember({"random", "jump", "around-right", "turn-left", "length"}));
  };
  const auto add_training = [&](CLI::App* c) {
    c->add_option("--config", o.config, "JSON ModelConfig or TrainSpec");
    c->add_option("--num-samples", o.num_samples, "training samples (desk default 20000)");
    c->add_flag("--paper-scale", o.paper_scale, "512-dim best-overall model, 100000 samples");
    c->add_option("--lr", o.lr, "learning rate");
    c->add_option("--batch-tokens", o.batch_tokens, "source tokens per batch");
    c->add_option("--oversample-primitive", o.oversample, "extra copies of each one-word command");
  };
  const auto add_sweep = [&](CLI::App* c) {
    c->add_option("--seeds", o.seeds, "seeds per config");
    c->add_option("--split", o.splits, "splits to run (repeatable)")
        ->check(CLI::IsMember({"random", "jump", "around-right", "turn-left", "length"}));
    c->add_option("--workers", o.workers, "concurrent runs")->check(CLI::PositiveNumber);
    c->add_option("--stop-after", o.stop_after, "stop after N newly trained runs (simulated interruption)");
    c->add_option("--eval-limit", o.eval_limit, "evaluate only the first N test items");
    c->add_flag("--save-checkpoints", o.save_checkpoints, "keep a checkpoint per run");
  };

  auto* generate = app.add_subcommand("generate", "enumerate every command and write tasks.txt");
  add_out(generate, "output directory");
  generate->add_flag("--scan-corpus-names", o.corpus_names, "spell actions as I_WALK, I_TURN_LEFT, ...");

  auto* split = app.add_subcommand("split", "build a named split and write it");
  add_out(split, "output directory");
  add_split(split);
  split->add_option("--seed", o.seed, "random split seed");
  split->add_flag("--scan-corpus-names", o.corpus_names, "spell actions as I_WALK, I_TURN_LEFT, ...");

  auto* train_cmd = app.add_subcommand("train", "train one model and save model.ckpt and train.json");
  add_out(train_cmd, "output directory");
  add_split(train_cmd);
  add_training(train_cmd);
  train_cmd->add_option("--seed", o.seed, "training seed");
  train_cmd->add_option("--split-seed", o.split_seed, "random split seed");

  auto* eval_cmd = app.add_subcommand("evaluate", "exact-match accuracy of a trained model");
  add_out(eval_cmd, "directory for eval-<split>.json (and the model, unless --model)");
  eval_cmd->add_option("--model", o.model_dir, "directory holding model.ckpt and train.json");
  add_split(eval_cmd);
  eval_cmd->add_option("--split-seed", o.split_seed, "random split seed");
  eval_cmd->add_option("--eval-limit", o.eval_limit, "evaluate only the first N test items");

  auto* analyze = app.add_subcommand("analyze", "word error profile, minimal pairs and length errors");
  add_out(analyze, "directory holding eval-<split>.json");
  add_split(analyze);

  auto* grid = app.add_subcommand("grid", "hyperparameter grid with rank aggregation");
  add_out(grid, "study directory");
  add_sweep(grid);
  grid->add_option("--budget", o.budget, "number of configs to sample (desk default 10)");
  grid->add_option("--num-samples", o.num_samples, "training samples per run");
  grid->add_flag("--paper-scale", o.paper_scale, "full grid, 100000 samples");

  auto* kernel = app.add_subcommand("ablate-kernel", "encoder x decoder kernel widths 1..5");
  add_out(kernel, "study directory");
  add_sweep(kernel);
  add_training(kernel);

  auto* attention = app.add_subcommand("ablate-attention", "attention on bottomK / topK decoder layers");
  add_out(attention, "study directory");
  add_sweep(attention);
  add_training(attention);

  auto* report = app.add_subcommand("report", "rebuild report.{json,csv,md} from stored runs");
  add_out(report, "study directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(o);
    if (split->parsed()) return cmd_split(o);
    if (train_cmd->parsed()) return cmd_train(o);
    if (eval_cmd->parsed()) return cmd_evaluate(o);
    if (analyze->parsed()) return cmd_analyze(o);
    if (grid->parsed()) return cmd_grid(o);
    if (kernel->parsed()) return cmd_ablate(o, StudyKind::kKernel);
    if (attention->parsed()) return cmd_ablate(o, StudyKind::kAttention);
    if (report->parsed()) return cmd_report(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
