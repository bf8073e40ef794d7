#include "eatt/toy/task.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "eatt/error.hpp"
#include "eatt/random.hpp"

namespace eatt::toy {

std::string_view to_string(TaskKind task) { return task == TaskKind::Copy ? "copy" : "reverse"; }

TaskKind parse_task_kind(std::string_view name) {
  if (name == "copy") return TaskKind::Copy;
  if (name == "reverse" || name == "reversal") return TaskKind::Reverse;
  throw FormatError("unknown task '" + std::string(name) + "'");
}

void ToyTaskConfig::validate() const {
  if (vocab_size <= kFirstSymbol)
    throw DomainError("task: vocab_size must exceed " + std::to_string(kFirstSymbol) +
                      " (pad, bos and eos are reserved)");
  if (seq_len < 2) throw DomainError("task: seq_len must be at least 2");
  const std::size_t lo = effective_min_len();
  if (lo < 1 || lo > seq_len) throw DomainError("task: min_len must lie in [1, seq_len]");
  if (eval_examples == 0) throw DomainError("task: eval_examples must be positive");
}

void to_json(nlohmann::json& j, const ToyTaskConfig& c) {
  j = {{"task", to_string(c.task)},         {"vocab_size", c.vocab_size},
       {"seq_len", c.seq_len},              {"min_len", c.min_len},
       {"train_examples", c.train_examples}, {"eval_examples", c.eval_examples},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ToyTaskConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "task")
      c.task = parse_task_kind(value.get<std::string>());
    else if (key == "vocab_size")
      c.vocab_size = value.get<int>();
    else if (key == "seq_len")
      c.seq_len = value.get<std::size_t>();
    else if (key == "min_len")
      c.min_len = value.get<std::size_t>();
    else if (key == "train_examples")
      c.train_examples = value.get<std::size_t>();
    else if (key == "eval_examples")
      c.eval_examples = value.get<std::size_t>();
    else if (key == "seed")
      c.seed = value.get<std::uint64_t>();
    else
      throw FormatError("task config: unknown key '" + key + "'");
  }
}

std::vector<int> make_target(TaskKind task, const std::vector<int>& source) {
  std::vector<int> t = source;
  if (task == TaskKind::Reverse) std::reverse(t.begin(), t.end());
  return t;
}

ToyDataset generate_task(const ToyTaskConfig& cfg) {
  cfg.validate();
  const std::size_t lo = cfg.effective_min_len();
  const std::size_t symbols = static_cast<std::size_t>(cfg.vocab_size - kFirstSymbol);

  // Distinct sources available; capped to avoid overflow.
  double available = 0.0;
  for (std::size_t len = lo; len <= cfg.seq_len; ++len) available += std::pow(static_cast<double>(symbols), len);
  const std::size_t wanted = cfg.train_examples + cfg.eval_examples;
  if (static_cast<double>(wanted) > available)
    throw ExhaustionError("task: " + std::to_string(wanted) + " examples requested but only " +
                          std::to_string(static_cast<unsigned long long>(available)) + " distinct sources exist");

  // Lengths are drawn in proportion to how many sources they admit, capped
  // at uniform, so short lengths never become the bottleneck.
  std::vector<double> weight;
  for (std::size_t len = lo; len <= cfg.seq_len; ++len)
    weight.push_back(std::min(1.0, std::pow(static_cast<double>(symbols), len) / static_cast<double>(wanted)));
  double total = 0.0;
  for (double w : weight) total += w;

  std::mt19937_64 rng(cfg.seed);
  std::set<std::vector<int>> seen;
  std::vector<Example> all;
  all.reserve(wanted);
  const std::size_t max_attempts = 50 * wanted + 1000;
  for (std::size_t attempt = 0; all.size() < wanted; ++attempt) {
    if (attempt == max_attempts)
      throw ExhaustionError("task: could not draw " + std::to_string(wanted) + " distinct sources");
    double u = uniform01(rng) * total;
    std::size_t k = 0;
    while (k + 1 < weight.size() && u >= weight[k]) u -= weight[k++];
    std::vector<int> src(lo + k);
    for (int& s : src) s = kFirstSymbol + static_cast<int>(uniform_index(rng, symbols));
    if (!seen.insert(src).second) continue;
    Example ex{src, make_target(cfg.task, src)};
    all.push_back(std::move(ex));
  }

  ToyDataset ds;
  ds.eval.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.eval_examples));
  ds.train.assign(all.begin() + static_cast<std::ptrdiff_t>(cfg.eval_examples), all.end());
  return ds;
}

}  // namespace eatt::toy
