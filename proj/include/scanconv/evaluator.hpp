#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "scanconv/model.hpp"
#include "scanconv/scan_grammar.hpp"

namespace scanconv {

/// Anything that maps commands to action sequences.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<ActionSequence> predict(std::span<const Command> commands) const = 0;
};

/// Decodes with the model's configured strategy, in chunks.
class ModelPredictor final : public Predictor {
 public:
  explicit ModelPredictor(const ConvSeq2Seq<float>& model, std::size_t chunk = 256)
      : model_(model), chunk_(chunk) {}
  std::vector<ActionSequence> predict(std::span<const Command> commands) const override;

 private:
  const ConvSeq2Seq<float>& model_;
  std::size_t chunk_;
};

/// Runs the grammar interpreter, so it is always right.
class OraclePredictor final : public Predictor {
 public:
  std::vector<ActionSequence> predict(std::span<const Command> commands) const override;
};

/// Emits the same sequence for every command.
class ConstantPredictor final : public Predictor {
 public:
  explicit ConstantPredictor(ActionSequence output) : output_(std::move(output)) {}
  std::vector<ActionSequence> predict(std::span<const Command> commands) const override;

 private:
  ActionSequence output_;
};

struct ItemRecord {
  Command command;
  ActionSequence gold;
  ActionSequence prediction;
  bool correct = false;

  friend bool operator==(const ItemRecord&, const ItemRecord&) = default;
};

struct EvalResult {
  double accuracy = 0.0;  // exact match over whole sequences
  std::vector<ItemRecord> items;

  std::size_t num_correct() const;
};

EvalResult evaluate(const Predictor& predictor, std::span<const Example> test);
EvalResult evaluate(const ConvSeq2Seq<float>& model, std::span<const Example> test);

struct WordStats {
  CommandToken word{};
  std::int64_t n = 0;        // test commands containing the word
  std::int64_t n_wrong = 0;  // of those, wrongly executed
  std::optional<double> rate;  // n_wrong / n, empty when n == 0
};

/// One entry per command word, in CommandToken order. A word occurring
/// twice in a command counts once.
struct WordErrorProfile {
  std::vector<WordStats> words;

  const WordStats& at(CommandToken word) const;
};

WordErrorProfile word_error_profile(const EvalResult& eval);

struct MinimalPair {
  ItemRecord correct;
  ItemRecord wrong;
  std::size_t position = 0;  // index of the differing verb
};

/// Commands equal except for one primitive verb (walk, look, run, jump) at a
/// single position, one executed correctly and the other not.
std::vector<MinimalPair> minimal_pairs(const EvalResult& eval);

/// Statistics of |prediction| - |gold| over wrong items. Mean and variance
/// stay empty when there are no errors; the variance is the population one.
struct LengthErrorStats {
  std::int64_t count = 0;
  std::optional<double> mean;
  std::optional<double> variance;
  std::map<std::int64_t, std::int64_t> histogram;  // delta -> items
};

LengthErrorStats length_error_stats(const EvalResult& eval);

void to_json(nlohmann::ordered_json& j, const ItemRecord& r);
void from_json(const nlohmann::ordered_json& j, ItemRecord& r);
void to_json(nlohmann::ordered_json& j, const EvalResult& e);
void from_json(const nlohmann::ordered_json& j, EvalResult& e);
void to_json(nlohmann::ordered_json& j, const WordErrorProfile& p);
void to_json(nlohmann::ordered_json& j, const MinimalPair& p);
void to_json(nlohmann::ordered_json& j, const LengthErrorStats& s);

/// Columns: word,n,n_wrong,rate. The rate is empty for absent words.
std::string word_profile_csv(const WordErrorProfile& profile);

}  // namespace scanconv
