#pragma once

// Closed-form operation counts and energy cost for the attention variants,
// at three granularities. Counts assume query and key sequences of equal
// length l and model dimension d. Activations (softmax, relu) are free.
//
// Multiplications
//   level       Vanilla         Dense          RandInit      EAtt
//   alignment   2ld^2 + l^2d    ld^2 + l^2d    0             0
//   attention   3ld^2 + 2l^2d   2ld^2 + 2l^2d  ld^2 + l^2d   ld^2 + l^2d
//   block       12ld^2 + 2l^2d  -              -             10ld^2 + l^2d
// Additions equal multiplications except for EAtt:
//   alignment 2ld + l^2d, attention ld^2 + 2ld + 2l^2d,
//   block 10ld^2 + 2ld + 2l^2d.
// The inexact form drops the lower-order 2ld term.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "eatt/attention.hpp"
#include "eatt/op_counter.hpp"

namespace eatt {

enum class CostLevel { Alignment, Attention, TransformerBlock };
enum class ChipKind { Asic, Fpga };

std::string_view to_string(CostLevel level);
std::string_view to_string(ChipKind chip);
CostLevel parse_cost_level(std::string_view name);  // alignment, attention, block
ChipKind parse_chip(std::string_view name);         // asic, fpga

// Joules per fp32 operation.
struct ChipProfile {
  ChipKind kind = ChipKind::Asic;
  double e_add = 0.0;
  double e_mul = 0.0;

  static ChipProfile asic() { return {ChipKind::Asic, 0.9e-12, 3.7e-12}; }
  static ChipProfile fpga() { return {ChipKind::Fpga, 0.4e-12, 18.8e-12}; }
  static ChipProfile of(ChipKind kind) { return kind == ChipKind::Asic ? asic() : fpga(); }
};

// Throws UnsupportedError for Dense/RandInit at block level and DomainError
// when l or d is zero.
OpCount count_ops(AttentionKind variant, CostLevel level, std::uint64_t l, std::uint64_t d, bool exact = true);

double energy_joules(const OpCount& counts, const ChipProfile& chip);

// 100 * energy(variant) / energy(vanilla) at the same level, chip, l and d.
double energy_ratio(AttentionKind variant, CostLevel level, const ChipProfile& chip, std::uint64_t l,
                    std::uint64_t d, bool exact = true);

struct EnergyReport {
  AttentionKind variant = AttentionKind::Vanilla;
  CostLevel level = CostLevel::Alignment;
  ChipKind chip = ChipKind::Asic;
  std::uint64_t l = 0;
  std::uint64_t d = 0;
  OpCount counts;
  double joules = 0.0;
  double baseline_joules = 0.0;
  double ratio_percent = 0.0;
};

EnergyReport make_report(AttentionKind variant, CostLevel level, const ChipProfile& chip, std::uint64_t l,
                         std::uint64_t d, bool exact = true);

// Cartesian product of the inputs, sorted by (variant, level, chip, l, d).
// Any unsupported (variant, level) pair throws.
std::vector<EnergyReport> report_sweep(std::span<const AttentionKind> variants, std::span<const CostLevel> levels,
                                       std::span<const ChipKind> chips, std::span<const std::uint64_t> lengths,
                                       std::span<const std::uint64_t> dims, bool exact = true);

// Serialised values: joules as "%.6e", ratio_percent to two decimals. CSV
// and JSON carry the same rounded values.
std::string reports_to_csv(std::span<const EnergyReport> rows);
nlohmann::json reports_to_json(std::span<const EnergyReport> rows);
std::string reports_to_text(std::span<const EnergyReport> rows);

// Runs `fn` in an instrumented region and returns the additions and
// multiplications it executed.
template <class F>
OpCount instrument_trace(F&& fn) {
  return instrument(std::forward<F>(fn)).count();
}

// One cell of the analytic-vs-instrumented comparison.
struct AuditRow {
  AttentionKind variant = AttentionKind::Vanilla;
  CostLevel level = CostLevel::Alignment;
  std::uint64_t l = 0;
  std::uint64_t d = 0;
  OpCount expected;
  OpCount measured;
  bool match() const { return expected == measured; }
};

// Runs single-head Vanilla and EAtt forwards on random [l, d] inputs under
// the op counter, at alignment and attention level, and pairs each trace
// with count_ops(exact = true). Throws UnsupportedError when the build has
// no counter hooks.
std::vector<AuditRow> audit_op_counts(std::uint64_t l, std::uint64_t d, std::uint64_t seed = 1);

}  // namespace eatt
