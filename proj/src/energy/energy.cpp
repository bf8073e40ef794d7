#include "eatt/energy.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>
#include <tuple>

#include "eatt/error.hpp"
#include "eatt/random.hpp"
#include "eatt/tape.hpp"

namespace eatt {

std::string_view to_string(CostLevel level) {
  switch (level) {
    case CostLevel::Alignment: return "alignment";
    case CostLevel::Attention: return "attention";
    case CostLevel::TransformerBlock: return "block";
  }
  return "?";
}

std::string_view to_string(ChipKind chip) { return chip == ChipKind::Asic ? "asic" : "fpga"; }

CostLevel parse_cost_level(std::string_view name) {
  if (name == "alignment") return CostLevel::Alignment;
  if (name == "attention") return CostLevel::Attention;
  if (name == "block" || name == "transformer-block") return CostLevel::TransformerBlock;
  throw FormatError("unknown cost level '" + std::string(name) + "'");
}

ChipKind parse_chip(std::string_view name) {
  if (name == "asic") return ChipKind::Asic;
  if (name == "fpga") return ChipKind::Fpga;
  throw FormatError("unknown chip '" + std::string(name) + "'");
}

OpCount count_ops(AttentionKind variant, CostLevel level, std::uint64_t l, std::uint64_t d, bool exact) {
  if (l == 0 || d == 0) throw DomainError("count_ops: l and d must be >= 1");
  const std::uint64_t ld2 = l * d * d;
  const std::uint64_t l2d = l * l * d;
  const std::uint64_t ld = exact ? l * d : 0;

  auto same = [](std::uint64_t n) { return OpCount{n, n}; };
  switch (variant) {
    case AttentionKind::Vanilla:
      switch (level) {
        case CostLevel::Alignment: return same(2 * ld2 + l2d);
        case CostLevel::Attention: return same(3 * ld2 + 2 * l2d);
        case CostLevel::TransformerBlock: return same(12 * ld2 + 2 * l2d);
      }
      break;
    case AttentionKind::Dense:
      switch (level) {
        case CostLevel::Alignment: return same(ld2 + l2d);
        case CostLevel::Attention: return same(2 * ld2 + 2 * l2d);
        case CostLevel::TransformerBlock: break;
      }
      break;
    case AttentionKind::RandInit:
      switch (level) {
        case CostLevel::Alignment: return same(0);
        case CostLevel::Attention: return same(ld2 + l2d);
        case CostLevel::TransformerBlock: break;
      }
      break;
    case AttentionKind::EAtt:
      switch (level) {
        case CostLevel::Alignment: return {2 * ld + l2d, 0};
        case CostLevel::Attention: return {ld2 + 2 * ld + 2 * l2d, ld2 + l2d};
        case CostLevel::TransformerBlock: return {10 * ld2 + 2 * ld + 2 * l2d, 10 * ld2 + l2d};
      }
      break;
  }
  throw UnsupportedError("unsupported combination: variant " + std::string(to_string(variant)) + " at level " +
                         std::string(to_string(level)));
}

double energy_joules(const OpCount& counts, const ChipProfile& chip) {
  return chip.e_add * static_cast<double>(counts.additions) +
         chip.e_mul * static_cast<double>(counts.multiplications);
}

double energy_ratio(AttentionKind variant, CostLevel level, const ChipProfile& chip, std::uint64_t l,
                    std::uint64_t d, bool exact) {
  return make_report(variant, level, chip, l, d, exact).ratio_percent;
}

EnergyReport make_report(AttentionKind variant, CostLevel level, const ChipProfile& chip, std::uint64_t l,
                         std::uint64_t d, bool exact) {
  EnergyReport r;
  r.variant = variant;
  r.level = level;
  r.chip = chip.kind;
  r.l = l;
  r.d = d;
  r.counts = count_ops(variant, level, l, d, exact);
  r.joules = energy_joules(r.counts, chip);
  const OpCount base = count_ops(AttentionKind::Vanilla, level, l, d, exact);
  r.baseline_joules = energy_joules(base, chip);
  r.ratio_percent = variant == AttentionKind::Vanilla ? 100.0 : 100.0 * r.joules / r.baseline_joules;
  return r;
}

std::vector<EnergyReport> report_sweep(std::span<const AttentionKind> variants, std::span<const CostLevel> levels,
                                       std::span<const ChipKind> chips, std::span<const std::uint64_t> lengths,
                                       std::span<const std::uint64_t> dims, bool exact) {
  if (variants.empty() || levels.empty() || chips.empty() || lengths.empty() || dims.empty())
    throw DomainError("report_sweep: every range must be nonempty");
  std::vector<EnergyReport> rows;
  for (auto v : variants)
    for (auto lv : levels)
      for (auto c : chips)
        for (auto l : lengths)
          for (auto d : dims) rows.push_back(make_report(v, lv, ChipProfile::of(c), l, d, exact));
  std::sort(rows.begin(), rows.end(), [](const EnergyReport& a, const EnergyReport& b) {
    return std::tuple(a.variant, a.level, a.chip, a.l, a.d) < std::tuple(b.variant, b.level, b.chip, b.l, b.d);
  });
  return rows;
}

namespace {

std::string fmt_joules(double j) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6e", j);
  return buf;
}

std::string fmt_ratio(double r) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

}  // namespace

std::string reports_to_csv(std::span<const EnergyReport> rows) {
  std::ostringstream os;
  os << "variant,level,chip,l,d,additions,multiplications,joules,ratio_percent\n";
  for (const auto& r : rows)
    os << to_string(r.variant) << ',' << to_string(r.level) << ',' << to_string(r.chip) << ',' << r.l << ','
       << r.d << ',' << r.counts.additions << ',' << r.counts.multiplications << ',' << fmt_joules(r.joules)
       << ',' << fmt_ratio(r.ratio_percent) << '\n';
  return os.str();
}

nlohmann::json reports_to_json(std::span<const EnergyReport> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"variant", to_string(r.variant)},
                   {"level", to_string(r.level)},
                   {"chip", to_string(r.chip)},
                   {"l", r.l},
                   {"d", r.d},
                   {"additions", r.counts.additions},
                   {"multiplications", r.counts.multiplications},
                   {"joules", std::strtod(fmt_joules(r.joules).c_str(), nullptr)},
                   {"ratio_percent", std::strtod(fmt_ratio(r.ratio_percent).c_str(), nullptr)}});
  return out;
}

std::string reports_to_text(std::span<const EnergyReport> rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %-10s %-5s %6s %6s %16s %16s %14s %9s\n", "variant", "level", "chip", "l",
                "d", "additions", "multiplications", "joules", "ratio(%)");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %-10s %-5s %6llu %6llu %16llu %16llu %14s %9s\n",
                  std::string(to_string(r.variant)).c_str(), std::string(to_string(r.level)).c_str(),
                  std::string(to_string(r.chip)).c_str(), static_cast<unsigned long long>(r.l),
                  static_cast<unsigned long long>(r.d), static_cast<unsigned long long>(r.counts.additions),
                  static_cast<unsigned long long>(r.counts.multiplications), fmt_joules(r.joules).c_str(),
                  fmt_ratio(r.ratio_percent).c_str());
    os << buf;
  }
  return os.str();
}

std::vector<AuditRow> audit_op_counts(std::uint64_t l, std::uint64_t d, std::uint64_t seed) {
  if (!kOpCountersEnabled) throw UnsupportedError("audit: this build has no op-counter hooks");
  if (l == 0 || d == 0) throw DomainError("audit: l and d must be >= 1");
  std::mt19937_64 rng(seed);
  auto input = [&] {
    Tensor<float> t(Shape{l, d});
    for (auto& x : t.data()) x = static_cast<float>(uniform(rng, 0.0, 2.0));  // straddles tau = 1
    return t;
  };

  std::vector<AuditRow> rows;
  for (AttentionKind kind : {AttentionKind::Vanilla, AttentionKind::EAtt}) {
    const auto variant = AttentionVariant<float>::init({kind, d, 1, 0, 1.0}, rng);
    const Tensor<float> x = input();
    const Tensor<float> y = input();
    for (CostLevel level : {CostLevel::Alignment, CostLevel::Attention}) {
      Tape<float> tape;
      const auto attn = bind(tape, variant, false);
      const AttentionInputs<float> in{tape.constant(x), tape.constant(y), {}, {}, nullptr};
      const OpCount measured = instrument_trace([&] {
        if (level == CostLevel::Alignment)
          align(attn, in);
        else
          attend(attn, in);
      });
      rows.push_back({kind, level, l, d, count_ops(kind, level, l, d, true), measured});
    }
  }
  return rows;
}

}  // namespace eatt
