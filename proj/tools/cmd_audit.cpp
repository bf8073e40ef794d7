#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "commands.hpp"
#include "eatt/energy.hpp"
#include "json.hpp"
#include "output.hpp"

namespace eatt::cli {

namespace {

struct AuditArgs {
  std::uint64_t seq_len = 4;
  std::uint64_t dim = 8;
  std::uint64_t seed = 1;
  FormatFlags format;
  std::optional<std::string> output;
};

std::string render(const std::vector<AuditRow>& rows, Format format) {
  if (format == Format::Json) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
      j.push_back({{"variant", to_string(r.variant)},
                   {"level", to_string(r.level)},
                   {"l", r.l},
                   {"d", r.d},
                   {"expected_additions", r.expected.additions},
                   {"measured_additions", r.measured.additions},
                   {"expected_multiplications", r.expected.multiplications},
                   {"measured_multiplications", r.measured.multiplications},
                   {"match", r.match()}});
    return j.dump(2) + "\n";
  }
  const bool csv = format == Format::Csv;
  std::string out = csv ? "variant,level,l,d,expected_additions,measured_additions,expected_multiplications,"
                          "measured_multiplications,match\n"
                        : "";
  char buf[256];
  if (!csv) {
    std::snprintf(buf, sizeof buf, "%-8s %-10s %5s %5s %14s %14s %14s %14s  %s\n", "variant", "level", "l", "d",
                  "exp_add", "meas_add", "exp_mul", "meas_mul", "verdict");
    out = buf;
  }
  for (const auto& r : rows) {
    const auto u = [](std::uint64_t v) { return static_cast<unsigned long long>(v); };
    std::snprintf(buf, sizeof buf,
                  csv ? "%s,%s,%llu,%llu,%llu,%llu,%llu,%llu,%s\n"
                      : "%-8s %-10s %5llu %5llu %14llu %14llu %14llu %14llu  %s\n",
                  std::string(to_string(r.variant)).c_str(), std::string(to_string(r.level)).c_str(), u(r.l), u(r.d),
                  u(r.expected.additions), u(r.measured.additions), u(r.expected.multiplications),
                  u(r.measured.multiplications), r.match() ? (csv ? "true" : "match") : (csv ? "false" : "MISMATCH"));
    out += buf;
  }
  return out;
}

int run_audit(const AuditArgs& a) {
  const auto rows = audit_op_counts(a.seq_len, a.dim, a.seed);
  emit(a.output, render(rows, a.format.resolve(Format::Text)));
  bool ok = true;
  for (const auto& r : rows)
    if (!r.match()) {
      ok = false;
      std::cerr << "eatt audit: " << to_string(r.variant) << " " << to_string(r.level) << " expected "
                << r.expected.additions << " additions / " << r.expected.multiplications << " multiplications, measured "
                << r.measured.additions << " / " << r.measured.multiplications << '\n';
    }
  return ok ? kExitOk : kExitAuditMismatch;
}

}  // namespace

void register_audit(CLI::App& app, int& status) {
  auto args = std::make_shared<AuditArgs>();
  auto* cmd = app.add_subcommand("audit", "Compare instrumented op counts with the closed-form formulas");
  cmd->add_option("--seq-len,-l", args->seq_len, "Sequence length l")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--dim,-d", args->dim, "Model dimension d")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", args->seed, "Seed for the random inputs and weights")->capture_default_str();
  args->format.add_to(*cmd);
  cmd->add_option("--output,-o", args->output, "Write to a file instead of stdout");
  cmd->callback([args, &status] { status = run_audit(*args); });
}

}  // namespace eatt::cli
