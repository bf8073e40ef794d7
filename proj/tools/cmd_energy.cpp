#include <cstdint>
#include <iostream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "commands.hpp"
#include "eatt/energy.hpp"
#include "eatt/error.hpp"
#include "output.hpp"

namespace eatt::cli {

namespace {

struct EnergyArgs {
  std::vector<std::string> variants{"e-att"};
  std::vector<std::string> levels{"attention"};
  std::vector<std::string> chips{"asic"};
  std::uint64_t seq_len = 22;
  std::uint64_t dim = 512;
  std::vector<std::string> sweeps;
  bool inexact = false;
  FormatFlags format;
  std::optional<std::string> output;
};

template <class E>
std::vector<E> parse_list(const std::vector<std::string>& names, std::vector<E> all, E (*parse)(std::string_view)) {
  std::vector<E> out;
  for (const auto& n : names) {
    if (n == "all") return all;
    out.push_back(parse(n));
  }
  return out;
}

bool contains_all(const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (n == "all") return true;
  return false;
}

// "d=64..1024:64" or "l=10..30"; the step defaults to 1.
void apply_sweep(const std::string& spec, std::vector<std::uint64_t>& lengths, std::vector<std::uint64_t>& dims) {
  const auto eq = spec.find('=');
  const auto dots = spec.find("..");
  if (eq == std::string::npos || dots == std::string::npos || dots < eq)
    throw FormatError("sweep '" + spec + "' is not of the form d=a..b[:step] or l=a..b[:step]");
  const std::string axis = spec.substr(0, eq);
  const auto colon = spec.find(':', dots);
  std::uint64_t lo = 0, hi = 0, step = 1;
  try {
    lo = std::stoull(spec.substr(eq + 1, dots - eq - 1));
    hi = std::stoull(spec.substr(dots + 2, colon == std::string::npos ? std::string::npos : colon - dots - 2));
    if (colon != std::string::npos) step = std::stoull(spec.substr(colon + 1));
  } catch (const std::exception&) {
    throw FormatError("sweep '" + spec + "' has a malformed number");
  }
  if (lo == 0 || hi < lo || step == 0) throw FormatError("sweep '" + spec + "' needs 1 <= a <= b and step >= 1");
  std::vector<std::uint64_t> values;
  for (std::uint64_t v = lo; v <= hi; v += step) values.push_back(v);
  if (axis == "d")
    dims = values;
  else if (axis == "l")
    lengths = values;
  else
    throw FormatError("sweep axis must be d or l, got '" + axis + "'");
}

int run_energy(const EnergyArgs& a) {
  const auto variants = parse_list<AttentionKind>(
      a.variants, {AttentionKind::Vanilla, AttentionKind::Dense, AttentionKind::RandInit, AttentionKind::EAtt},
      &parse_attention_kind);
  const auto levels = parse_list<CostLevel>(
      a.levels, {CostLevel::Alignment, CostLevel::Attention, CostLevel::TransformerBlock}, &parse_cost_level);
  const auto chips = parse_list<ChipKind>(a.chips, {ChipKind::Asic, ChipKind::Fpga}, &parse_chip);
  std::vector<std::uint64_t> lengths{a.seq_len};
  std::vector<std::uint64_t> dims{a.dim};
  for (const auto& s : a.sweeps) apply_sweep(s, lengths, dims);

  // Pairs reached through "all" that the cost model leaves undefined are
  // skipped; an explicitly requested one is an error.
  const bool expanded = contains_all(a.variants) || contains_all(a.levels);
  std::vector<EnergyReport> rows;
  for (AttentionKind v : variants)
    for (CostLevel lv : levels) {
      try {
        const auto part = report_sweep(std::span(&v, 1), std::span(&lv, 1), chips, lengths, dims, !a.inexact);
        rows.insert(rows.end(), part.begin(), part.end());
      } catch (const UnsupportedError& e) {
        if (expanded) continue;
        std::cerr << "eatt energy: " << e.what() << '\n';
        return kExitUsage;
      }
    }
  switch (a.format.resolve(Format::Text)) {
    case Format::Csv: emit(a.output, reports_to_csv(rows)); break;
    case Format::Json: emit(a.output, reports_to_json(rows).dump(2) + "\n"); break;
    case Format::Text: emit(a.output, reports_to_text(rows)); break;
  }
  return kExitOk;
}

}  // namespace

void register_energy(CLI::App& app, int& status) {
  auto args = std::make_shared<EnergyArgs>();
  auto* cmd = app.add_subcommand("energy", "Closed-form op counts and energy ratios versus vanilla attention");
  cmd->add_option("--variant", args->variants, "vanilla, dense, rand-init, e-att or all (comma-separated)")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--level", args->levels, "alignment, attention, block or all")->delimiter(',')->capture_default_str();
  cmd->add_option("--chip", args->chips, "asic, fpga or all")->delimiter(',')->capture_default_str();
  cmd->add_option("--seq-len,-l", args->seq_len, "Sequence length l")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--dim,-d", args->dim, "Model dimension d")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--sweep", args->sweeps, "Range over d or l: d=a..b[:step] (repeatable)");
  cmd->add_flag("--inexact", args->inexact, "Drop the lower-order 2ld term");
  args->format.add_to(*cmd);
  cmd->add_option("--output,-o", args->output, "Write to a file instead of stdout");
  cmd->callback([args, &status] { status = run_energy(*args); });
}

}  // namespace eatt::cli
