#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "commands.hpp"
#include "eatt/gradcheck.hpp"
#include "json.hpp"
#include "output.hpp"

namespace eatt::cli {

namespace {

struct GradcheckArgs {
  std::vector<std::string> ops{"all"};
  std::uint64_t seed = 7;
  int trials = 5;
  FormatFlags format;
  std::optional<std::string> output;
};

std::string render(const std::vector<GradCheckRow>& rows, Format format) {
  char buf[256];
  std::string out;
  if (format == Format::Json) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
      j.push_back({{"op", to_string(r.op)},
                   {"trial", r.trial},
                   {"max_error", r.max_error},
                   {"tolerance", r.tolerance},
                   {"pass", r.pass},
                   {"detail", r.detail}});
    return j.dump(2) + "\n";
  }
  if (format == Format::Csv) {
    out = "op,trial,max_error,tolerance,pass,detail\n";
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%s,%d,%.3e,%.0e,%s,%s\n", std::string(to_string(r.op)).c_str(), r.trial,
                    r.max_error, r.tolerance, r.pass ? "true" : "false", csv_field(r.detail).c_str());
      out += buf;
    }
    return out;
  }
  std::snprintf(buf, sizeof buf, "%-18s %5s %12s %10s  %s\n", "op", "trial", "max_error", "tolerance", "result");
  out = buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-18s %5d %12.3e %10.0e  %s%s%s\n", std::string(to_string(r.op)).c_str(), r.trial,
                  r.max_error, r.tolerance, r.pass ? "pass" : "FAIL", r.detail.empty() ? "" : "  ", r.detail.c_str());
    out += buf;
  }
  return out;
}

int run_gradcheck(const GradcheckArgs& a) {
  std::vector<GradOp> ops;
  for (const auto& n : a.ops) {
    if (n == "all") {
      ops = {GradOp::Binarize, GradOp::L1Attention, GradOp::VanillaAttention, GradOp::Dense, GradOp::RandInit};
      break;
    }
    ops.push_back(parse_grad_op(n));
  }
  std::vector<GradCheckRow> rows;
  for (GradOp op : ops) {
    auto part = run_gradcheck(op, a.seed, a.trials);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  emit(a.output, render(rows, a.format.resolve(Format::Text)));
  for (const auto& r : rows)
    if (!r.pass) return 1;
  return kExitOk;
}

}  // namespace

void register_gradcheck(CLI::App& app, int& status) {
  auto args = std::make_shared<GradcheckArgs>();
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference and surrogate-gradient checks in 64-bit");
  cmd->add_option("--op", args->ops, "binarize, l1-attention, vanilla-attention, dense, randinit or all")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--seed", args->seed, "Random seed")->capture_default_str();
  cmd->add_option("--trials", args->trials, "Random instances per op")->check(CLI::PositiveNumber)->capture_default_str();
  args->format.add_to(*cmd);
  cmd->add_option("--output,-o", args->output, "Write to a file instead of stdout");
  cmd->callback([args, &status] { status = run_gradcheck(*args); });
}

}  // namespace eatt::cli
