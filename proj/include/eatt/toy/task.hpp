#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace eatt::toy {

// Reserved token ids; symbols occupy [kFirstSymbol, vocab_size).
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFirstSymbol = 3;

enum class TaskKind { Copy, Reverse };

std::string_view to_string(TaskKind task);
TaskKind parse_task_kind(std::string_view name);  // copy, reverse

struct ToyTaskConfig {
  TaskKind task = TaskKind::Copy;
  int vocab_size = 16;
  std::size_t seq_len = 12;  // longest source
  // Shortest source; 0 means ceil(seq_len / 2). Varying the length keeps
  // reversal from being solvable by a fixed position permutation.
  std::size_t min_len = 0;
  std::size_t train_examples = 20000;
  std::size_t eval_examples = 256;
  std::uint64_t seed = 1;

  std::size_t effective_min_len() const { return min_len == 0 ? (seq_len + 1) / 2 : min_len; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ToyTaskConfig& c);
// Missing keys keep their defaults; unknown keys throw FormatError.
void from_json(const nlohmann::json& j, ToyTaskConfig& c);

struct Example {
  std::vector<int> source;
  std::vector<int> target;  // without bos/eos
};

struct ToyDataset {
  std::vector<Example> train;
  std::vector<Example> eval;
};

// Distinct sources drawn from the seeded generator; the train and eval
// splits never share a source. Throws ExhaustionError when more examples
// are requested than distinct sources exist.
ToyDataset generate_task(const ToyTaskConfig& cfg);

std::vector<int> make_target(TaskKind task, const std::vector<int>& source);

}  // namespace eatt::toy
