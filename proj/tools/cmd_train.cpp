#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "commands.hpp"
#include "eatt/checkpoint.hpp"
#include "eatt/error.hpp"
#include "eatt/toy/train.hpp"
#include "json.hpp"
#include "output.hpp"

namespace eatt::cli {

namespace {

struct TrainArgs {
  std::optional<std::string> config_file;
  std::optional<std::string> resume;
  std::string checkpoint = "checkpoint.json";
  bool no_checkpoint = false;
  std::optional<std::string> metrics_out;
  bool quiet = false;

  // Overrides; applied only when given on the command line.
  std::string task;
  std::string attention;
  long steps = 0;
  std::size_t dim = 0, layers = 0, heads = 0, ffn_dim = 0, batch_size = 0, seq_len = 0, min_len = 0;
  std::size_t train_examples = 0, eval_examples = 0;
  int vocab_size = 0;
  long eval_every = 0;
  std::uint64_t seed = 0;
  double dropout = 0, tau = 0, lr_peak = 0, warmup = 0, decay_ref = 0;

  CLI::App* cmd = nullptr;
  bool given(const char* flag) const { return cmd->count(flag) > 0; }
};

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed config file " + path + ": " + e.what());
  }
}

// Config file first, then explicit flags on top.
void build_configs(const TrainArgs& a, toy::ModelConfig& model, toy::ToyTaskConfig& task, toy::TrainConfig& train) {
  if (a.config_file) {
    const nlohmann::json j = load_json(*a.config_file);
    for (const auto& [key, value] : j.items()) {
      if (key == "model")
        from_json(value, model);
      else if (key == "task")
        from_json(value, task);
      else if (key == "train")
        from_json(value, train);
      else
        throw FormatError("config file: unknown section '" + key + "' (expected model, task, train)");
    }
  }
  if (a.given("--task")) task.task = toy::parse_task_kind(a.task);
  if (a.given("--vocab-size")) task.vocab_size = a.vocab_size;
  if (a.given("--seq-len")) task.seq_len = a.seq_len;
  if (a.given("--min-len")) task.min_len = a.min_len;
  if (a.given("--train-examples")) task.train_examples = a.train_examples;
  if (a.given("--eval-examples")) task.eval_examples = a.eval_examples;
  if (a.given("--attention")) model.attention = toy::parse_role_kinds(a.attention, model.attention);
  if (a.given("--dim")) model.d = a.dim;
  if (a.given("--layers")) model.layers = a.layers;
  if (a.given("--heads")) model.heads = a.heads;
  if (a.given("--ffn-dim")) model.ffn_dim = a.ffn_dim;
  if (a.given("--dropout")) model.dropout = a.dropout;
  if (a.given("--tau")) model.tau = a.tau;
  if (a.given("--steps")) train.steps = a.steps;
  if (a.given("--batch-size")) train.batch_size = a.batch_size;
  if (a.given("--eval-every")) train.eval_every = a.eval_every;
  if (a.given("--lr-peak")) train.schedule.peak = a.lr_peak;
  if (a.given("--warmup")) train.schedule.warmup = a.warmup;
  if (a.given("--decay-ref")) train.schedule.decay_ref = a.decay_ref;
  if (a.given("--seed")) task.seed = train.seed = a.seed;
}

int run_train(const TrainArgs& a) {
  toy::TrainState state;
  if (a.resume) {
    for (const char* flag : {"--config", "--task", "--vocab-size", "--seq-len", "--min-len", "--train-examples",
                             "--eval-examples", "--attention", "--dim", "--layers", "--heads", "--ffn-dim",
                             "--dropout", "--tau", "--batch-size", "--eval-every", "--lr-peak", "--warmup",
                             "--decay-ref", "--seed"})
      if (a.given(flag)) {
        std::cerr << "eatt train: " << flag << " cannot be combined with --resume\n";
        return kExitUsage;
      }
    state = toy::from_checkpoint(load_checkpoint(*a.resume));
    if (a.given("--steps")) state.train_config.steps = a.steps;
  } else {
    toy::ModelConfig model;
    toy::ToyTaskConfig task;
    toy::TrainConfig train;
    build_configs(a, model, task, train);
    state = toy::init_train_state(model, task, train);
  }

  const nlohmann::json effective = {
      {"model", state.model_config}, {"task", state.task_config}, {"train", state.train_config}};
  std::cerr << "effective config: " << effective.dump() << '\n';

  const toy::ToyDataset data = toy::generate_task(state.task_config);
  const toy::ProgressFn progress = [&](const toy::MetricRow& r) {
    if (a.quiet) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "step %6ld  loss %.4f  token_accuracy %.4f  lr %.3e\n", r.step, r.loss,
                  r.token_accuracy, r.lr);
    std::cerr << buf;
  };
  toy::run_training(state, data, state.train_config.steps, progress);

  if (a.metrics_out) emit(a.metrics_out, toy::metrics_to_csv(state.history));
  if (!a.no_checkpoint) save_checkpoint(a.checkpoint, toy::to_checkpoint(state));

  const toy::MetricRow& last = state.history.back();
  char buf[160];
  std::snprintf(buf, sizeof buf, "final step %ld: token_accuracy %.4f loss %.4f\n", last.step, last.token_accuracy,
                last.loss);
  std::cout << buf;
  return kExitOk;
}

}  // namespace

void register_train(CLI::App& app, int& status) {
  auto args = std::make_shared<TrainArgs>();
  auto* cmd = app.add_subcommand("train", "Train a toy encoder-decoder on copy or reversal");
  args->cmd = cmd;
  TrainArgs& a = *args;
  cmd->add_option("--config", a.config_file, "JSON file with model/task/train sections; flags override it");
  cmd->add_option("--resume", a.resume, "Continue from a checkpoint manifest");
  cmd->add_option("--checkpoint", a.checkpoint, "Where to write the final checkpoint manifest")->capture_default_str();
  cmd->add_flag("--no-checkpoint", a.no_checkpoint, "Skip writing the final checkpoint");
  cmd->add_option("--metrics-out", a.metrics_out, "Write step,loss,token_accuracy,lr CSV here");
  cmd->add_flag("--quiet,-q", a.quiet, "No per-evaluation progress on stderr");

  cmd->add_option("--task", a.task, "copy or reverse");
  cmd->add_option("--attention", a.attention, "Role assignments, e.g. all=e-att or cross=e-att,self=vanilla");
  cmd->add_option("--steps", a.steps, "Training steps")->check(CLI::NonNegativeNumber);
  cmd->add_option("--dim", a.dim, "Model dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--layers", a.layers, "Layers per stack")->check(CLI::PositiveNumber);
  cmd->add_option("--heads", a.heads, "Attention heads")->check(CLI::PositiveNumber);
  cmd->add_option("--ffn-dim", a.ffn_dim, "Feed-forward width (default 4 * dim)");
  cmd->add_option("--dropout", a.dropout, "Dropout rate");
  cmd->add_option("--tau", a.tau, "Binarization threshold");
  cmd->add_option("--seed", a.seed, "Seed for data, initialisation and batching");
  cmd->add_option("--vocab-size", a.vocab_size, "Vocabulary size including pad, bos, eos");
  cmd->add_option("--seq-len", a.seq_len, "Longest source sequence");
  cmd->add_option("--min-len", a.min_len, "Shortest source sequence (0: half of --seq-len)");
  cmd->add_option("--train-examples", a.train_examples, "Training split size");
  cmd->add_option("--eval-examples", a.eval_examples, "Evaluation split size");
  cmd->add_option("--batch-size", a.batch_size, "Examples per step")->check(CLI::PositiveNumber);
  cmd->add_option("--eval-every", a.eval_every, "Steps between evaluations")->check(CLI::PositiveNumber);
  cmd->add_option("--lr-peak", a.lr_peak, "Schedule peak learning rate");
  cmd->add_option("--warmup", a.warmup, "Schedule warmup steps");
  cmd->add_option("--decay-ref", a.decay_ref, "Schedule inverse-sqrt decay reference step");
  cmd->callback([args, &status] { status = run_train(*args); });
}

}  // namespace eatt::cli
