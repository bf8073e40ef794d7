#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "commands.hpp"
#include "eatt/binarize.hpp"
#include "eatt/checkpoint.hpp"
#include "eatt/toy/train.hpp"
#include "json.hpp"
#include "output.hpp"

namespace eatt::cli {

namespace {

struct StatsArgs {
  std::string checkpoint;
  std::optional<std::string> task;
  FormatFlags format;
  std::optional<std::string> output;
};

std::string render(const std::vector<NonzeroStats>& stats, Format format) {
  char buf[128];
  if (format == Format::Csv) return stats_to_csv(stats);
  if (format == Format::Json) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : stats) {
      std::snprintf(buf, sizeof buf, "%.5f", s.rho);
      j.push_back({{"module_label", s.module_label}, {"layer_index", s.layer_index}, {"rho", std::stod(buf)}});
    }
    return j.dump(2) + "\n";
  }
  std::snprintf(buf, sizeof buf, "%-20s %5s %8s\n", "module", "layer", "rho");
  std::string out = buf;
  for (const auto& s : stats) {
    std::snprintf(buf, sizeof buf, "%-20s %5d %8.5f\n", s.module_label.c_str(), s.layer_index, s.rho);
    out += buf;
  }
  return out;
}

int run_stats(const StatsArgs& a) {
  const toy::TrainState state = toy::from_checkpoint(load_checkpoint(a.checkpoint));
  if (!state.model_config.uses_eatt()) {
    std::cerr << "eatt stats: checkpoint " << a.checkpoint << " has no e-att attention role ("
              << toy::format_role_kinds(state.model_config.attention) << ")\n";
    return kExitUsage;
  }
  toy::ToyTaskConfig task = state.task_config;
  if (a.task) task.task = toy::parse_task_kind(*a.task);
  const toy::ToyDataset data = toy::generate_task(task);
  const auto stats = toy::collect_binarization_stats(state.model, data.eval);
  emit(a.output, render(stats, a.format.resolve(Format::Csv)));
  return kExitOk;
}

}  // namespace

void register_stats(CLI::App& app, int& status) {
  auto args = std::make_shared<StatsArgs>();
  auto* cmd = app.add_subcommand("stats", "Nonzero ratio of each binarized representation in a trained model");
  cmd->add_option("--checkpoint", args->checkpoint, "Checkpoint manifest written by train")->required();
  cmd->add_option("--task", args->task, "Evaluate on copy or reverse instead of the trained task");
  args->format.add_to(*cmd);
  cmd->add_option("--output,-o", args->output, "Write to a file instead of stdout");
  cmd->callback([args, &status] { status = run_stats(*args); });
}

}  // namespace eatt::cli
