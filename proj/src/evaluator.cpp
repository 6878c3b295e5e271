#include "scanconv/evaluator.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "scanconv/errors.hpp"

namespace scanconv {

std::vector<ActionSequence> ModelPredictor::predict(std::span<const Command> commands) const {
  std::vector<ActionSequence> out;
  out.reserve(commands.size());
  for (std::size_t begin = 0; begin < commands.size(); begin += chunk_) {
    const auto part = model_.decode(commands.subspan(begin, std::min(chunk_, commands.size() - begin)));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<ActionSequence> OraclePredictor::predict(std::span<const Command> commands) const {
  std::vector<ActionSequence> out;
  out.reserve(commands.size());
  for (const auto& c : commands) out.push_back(execute(c));
  return out;
}

std::vector<ActionSequence> ConstantPredictor::predict(std::span<const Command> commands) const {
  return std::vector<ActionSequence>(commands.size(), output_);
}

std::size_t EvalResult::num_correct() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const ItemRecord& r) { return r.correct; }));
}

EvalResult evaluate(const Predictor& predictor, std::span<const Example> test) {
  std::vector<Command> commands;
  commands.reserve(test.size());
  for (const auto& ex : test) commands.push_back(ex.command);
  auto predictions = predictor.predict(commands);
  if (predictions.size() != test.size())
    throw ShapeMismatch("predictor returned " + std::to_string(predictions.size()) + " outputs for " +
                        std::to_string(test.size()) + " commands");

  EvalResult result;
  result.items.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    ItemRecord r{test[i].command, test[i].actions, std::move(predictions[i]), false};
    r.correct = r.prediction == r.gold;
    result.items.push_back(std::move(r));
  }
  result.accuracy = test.empty() ? 0.0
                                 : static_cast<double>(result.num_correct()) / static_cast<double>(test.size());
  return result;
}

EvalResult evaluate(const ConvSeq2Seq<float>& model, std::span<const Example> test) {
  return evaluate(ModelPredictor(model), test);
}

const WordStats& WordErrorProfile::at(CommandToken word) const {
  for (const auto& w : words)
    if (w.word == word) return w;
  throw UnknownToken(std::string(to_string(word)));
}

WordErrorProfile word_error_profile(const EvalResult& eval) {
  WordErrorProfile profile;
  for (const auto word : kAllCommandTokens) {
    WordStats w;
    w.word = word;
    profile.words.push_back(w);
  }
  for (const auto& item : eval.items) {
    std::vector<bool> seen(kNumCommandTokens, false);
    for (const auto tok : item.command) seen[static_cast<std::size_t>(tok)] = true;
    for (std::size_t t = 0; t < kNumCommandTokens; ++t) {
      if (!seen[t]) continue;
      ++profile.words[t].n;
      if (!item.correct) ++profile.words[t].n_wrong;
    }
  }
  for (auto& w : profile.words)
    if (w.n > 0) w.rate = static_cast<double>(w.n_wrong) / static_cast<double>(w.n);
  return profile;
}

std::vector<MinimalPair> minimal_pairs(const EvalResult& eval) {
  // Bucket by (position, command with that verb blanked out); two commands
  // differing in exactly one verb meet in exactly one bucket.
  std::map<std::vector<int>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < eval.items.size(); ++i) {
    const auto& cmd = eval.items[i].command;
    for (std::size_t p = 0; p < cmd.size(); ++p) {
      if (!is_primitive_verb(cmd[p])) continue;
      std::vector<int> key{static_cast<int>(p)};
      for (std::size_t q = 0; q < cmd.size(); ++q) key.push_back(q == p ? -1 : static_cast<int>(cmd[q]));
      buckets[key].push_back(i);
    }
  }
  std::vector<MinimalPair> out;
  for (const auto& [key, members] : buckets) {
    for (const std::size_t a : members) {
      if (!eval.items[a].correct) continue;
      for (const std::size_t b : members) {
        const auto& wrong = eval.items[b];
        if (wrong.correct || wrong.command == eval.items[a].command) continue;
        out.push_back({eval.items[a], wrong, static_cast<std::size_t>(key.front())});
      }
    }
  }
  return out;
}

LengthErrorStats length_error_stats(const EvalResult& eval) {
  LengthErrorStats s;
  std::vector<double> deltas;
  for (const auto& item : eval.items) {
    if (item.correct) continue;
    const auto delta = static_cast<std::int64_t>(item.prediction.size()) - static_cast<std::int64_t>(item.gold.size());
    ++s.histogram[delta];
    deltas.push_back(static_cast<double>(delta));
  }
  s.count = static_cast<std::int64_t>(deltas.size());
  if (deltas.empty()) return s;
  double mean = 0.0;
  for (const double d : deltas) mean += d;
  mean /= static_cast<double>(deltas.size());
  double var = 0.0;
  for (const double d : deltas) var += (d - mean) * (d - mean);
  s.mean = mean;
  s.variance = var / static_cast<double>(deltas.size());
  return s;
}

void to_json(nlohmann::ordered_json& j, const ItemRecord& r) {
  j = nlohmann::ordered_json::object();
  j["command"] = render(r.command);
  j["gold"] = render(r.gold);
  j["prediction"] = render(r.prediction);
  j["correct"] = r.correct;
}

void from_json(const nlohmann::ordered_json& j, ItemRecord& r) {
  r.command = parse_command_text(j.at("command").get<std::string>());
  r.gold = parse_action_text(j.at("gold").get<std::string>());
  r.prediction = parse_action_text(j.at("prediction").get<std::string>());
  r.correct = j.at("correct").get<bool>();
}

void to_json(nlohmann::ordered_json& j, const EvalResult& e) {
  j = nlohmann::ordered_json::object();
  j["accuracy"] = e.accuracy;
  j["num_items"] = e.items.size();
  j["num_correct"] = e.num_correct();
  j["items"] = e.items;
}

void from_json(const nlohmann::ordered_json& j, EvalResult& e) {
  e.accuracy = j.at("accuracy").get<double>();
  e.items = j.at("items").get<std::vector<ItemRecord>>();
}

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void to_json(nlohmann::ordered_json& j, const WordErrorProfile& p) {
  j = nlohmann::ordered_json::array();
  for (const auto& w : p.words) {
    nlohmann::ordered_json row;
    row["word"] = std::string(to_string(w.word));
    row["n"] = w.n;
    row["n_wrong"] = w.n_wrong;
    row["rate"] = optional_number(w.rate);
    j.push_back(std::move(row));
  }
}

void to_json(nlohmann::ordered_json& j, const MinimalPair& p) {
  j = nlohmann::ordered_json::object();
  j["correct"] = p.correct;
  j["wrong"] = p.wrong;
  j["position"] = p.position;
}

void to_json(nlohmann::ordered_json& j, const LengthErrorStats& s) {
  j = nlohmann::ordered_json::object();
  j["count"] = s.count;
  j["defined"] = s.mean.has_value();
  j["mean"] = optional_number(s.mean);
  j["variance"] = optional_number(s.variance);
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [delta, n] : s.histogram) hist[std::to_string(delta)] = n;
  j["histogram"] = std::move(hist);
}

std::string word_profile_csv(const WordErrorProfile& profile) {
  std::ostringstream os;
  os << "word,n,n_wrong,rate\n";
  for (const auto& w : profile.words) {
    os << to_string(w.word) << ',' << w.n << ',' << w.n_wrong << ',';
    if (w.rate) os << std::setprecision(6) << *w.rate;
    os << '\n';
  }
  return os.str();
}

}  // namespace scanconv
