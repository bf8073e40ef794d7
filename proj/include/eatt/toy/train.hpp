#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "eatt/binarize.hpp"
#include "eatt/checkpoint.hpp"
#include "eatt/toy/model.hpp"
#include "eatt/toy/schedule.hpp"
#include "eatt/toy/task.hpp"

namespace eatt::toy {

struct TrainConfig {
  long steps = 3000;
  std::size_t batch_size = 32;
  long eval_every = 500;
  std::uint64_t seed = 1;  // parameter init, batch sampling and dropout
  // The inverse-sqrt shape and peak of lr_schedule with a 1000-step warmup:
  // 8000 warmup steps would not finish within a desk-scale budget.
  LrSchedule schedule{0.001, 1000.0, 20000.0};
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// One evaluation: teacher-forced loss and greedy-decode token accuracy on
// the eval split. lr is the rate used for the step that produced the state
// (0 before the first step).
struct MetricRow {
  long step = 0;
  double loss = 0.0;
  double token_accuracy = 0.0;
  double lr = 0.0;
};

// "step,loss,token_accuracy,lr"
std::string metrics_to_csv(std::span<const MetricRow> rows);

struct TrainState {
  ModelConfig model_config;
  ToyTaskConfig task_config;
  TrainConfig train_config;
  long step = 0;
  ToyModel model;
  ParamMap adam_m;
  ParamMap adam_v;
  std::mt19937_64 rng;
  std::vector<MetricRow> history;
  std::vector<double> train_losses;  // one per step taken
};

// Fresh parameters and zero moments at step 0.
TrainState init_train_state(const ModelConfig& model, const ToyTaskConfig& task, const TrainConfig& train);

using ProgressFn = std::function<void(const MetricRow&)>;

// Advances `state` to `target_step`, evaluating at step 0 (when nothing has
// been recorded yet), every eval_every steps and at target_step. Throws
// DivergenceError on a non-finite loss.
void run_training(TrainState& state, const ToyDataset& data, long target_step, const ProgressFn& progress = {});

// generate_task, init_train_state and run_training to train.steps.
TrainState train(const ModelConfig& model, const ToyTaskConfig& task, const TrainConfig& train,
                 const ProgressFn& progress = {});

struct EvalResult {
  double loss = 0.0;
  double token_accuracy = 0.0;
};

// Accuracy counts every target position plus eos; generation runs for the
// full target length regardless of early eos.
EvalResult evaluate(const ToyModel& model, std::span<const Example> examples, std::size_t chunk = 64);

// Fraction of ones in each binarized representation over the valid
// (non-padding) positions of `examples`, one row per (module, layer):
// encoder-self, decoder-self, decoder-cross-query, decoder-cross-key.
// Empty when no role uses E-ATT.
std::vector<NonzeroStats> collect_binarization_stats(const ToyModel& model, std::span<const Example> examples,
                                                     std::size_t chunk = 64);

// Parameters, Adam moments ("adam.m.<name>", "adam.v.<name>"), and in meta
// the step, configs, rng state, metric history and per-step losses.
Checkpoint to_checkpoint(const TrainState& state);
TrainState from_checkpoint(const Checkpoint& ckpt);

}  // namespace eatt::toy
