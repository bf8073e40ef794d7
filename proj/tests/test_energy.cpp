#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "eatt/attention.hpp"
#include "eatt/binarize.hpp"
#include "eatt/energy.hpp"
#include "eatt/error.hpp"
#include "eatt/ops.hpp"
#include "helpers.hpp"

using namespace eatt;

namespace {

using K = AttentionKind;
using L = CostLevel;

// Direct evaluation of the closed forms, independent of count_ops.
struct Poly {
  std::uint64_t ld2, l2d, ld;
  std::uint64_t at(std::uint64_t l, std::uint64_t d) const { return ld2 * l * d * d + l2d * l * l * d + ld * l * d; }
};

struct Expected {
  K kind;
  L level;
  Poly add, mul;
};

const Expected kTable[] = {
    {K::Vanilla, L::Alignment, {2, 1, 0}, {2, 1, 0}},
    {K::Vanilla, L::Attention, {3, 2, 0}, {3, 2, 0}},
    {K::Vanilla, L::TransformerBlock, {12, 2, 0}, {12, 2, 0}},
    {K::Dense, L::Alignment, {1, 1, 0}, {1, 1, 0}},
    {K::Dense, L::Attention, {2, 2, 0}, {2, 2, 0}},
    {K::RandInit, L::Alignment, {0, 0, 0}, {0, 0, 0}},
    {K::RandInit, L::Attention, {1, 1, 0}, {1, 1, 0}},
    {K::EAtt, L::Alignment, {0, 1, 2}, {0, 0, 0}},
    {K::EAtt, L::Attention, {1, 2, 2}, {1, 1, 0}},
    {K::EAtt, L::TransformerBlock, {10, 2, 2}, {10, 1, 0}},
};

double ratio_from_counts(const OpCount& v, const OpCount& base, double e_add, double e_mul) {
  return 100.0 * (e_add * v.additions + e_mul * v.multiplications) /
         (e_add * base.additions + e_mul * base.multiplications);
}

}  // namespace

TEST_CASE("count_ops matches the closed forms") {
  for (std::uint64_t l : {1u, 4u, 22u, 100u})
    for (std::uint64_t d : {1u, 8u, 512u, 1024u})
      for (const auto& e : kTable) {
        const OpCount c = count_ops(e.kind, e.level, l, d);
        CHECK(c.additions == e.add.at(l, d));
        CHECK(c.multiplications == e.mul.at(l, d));
      }
}

TEST_CASE("count_ops examples and errors") {
  CHECK(count_ops(K::Vanilla, L::Attention, 22, 512).multiplications == 3 * 22 * 512 * 512 + 2 * 22 * 22 * 512);
  CHECK(count_ops(K::RandInit, L::Alignment, 7, 9).multiplications == 0);
  const OpCount e = count_ops(K::EAtt, L::Alignment, 22, 512);
  CHECK(e.additions == 270336);
  CHECK(e.multiplications == 0);
  CHECK(count_ops(K::Dense, L::Alignment, 22, 512).multiplications == 5767168 + 247808);

  CHECK_THROWS_AS(count_ops(K::Dense, L::TransformerBlock, 22, 512), UnsupportedError);
  CHECK_THROWS_AS(count_ops(K::RandInit, L::TransformerBlock, 22, 512), UnsupportedError);
  CHECK_THROWS_AS(count_ops(K::Vanilla, L::Attention, 0, 512), DomainError);
  CHECK_THROWS_AS(count_ops(K::Vanilla, L::Attention, 22, 0), DomainError);
}

TEST_CASE("energy_joules") {
  CHECK(energy_joules({0, 0}, ChipProfile::asic()) == 0.0);
  CHECK(energy_joules({1, 1}, ChipProfile::asic()) == doctest::Approx(4.6e-12).epsilon(1e-12));
  CHECK(energy_joules({1, 1}, ChipProfile::fpga()) == doctest::Approx(19.2e-12).epsilon(1e-12));
  CHECK(energy_joules({270336, 0}, ChipProfile::asic()) == doctest::Approx(2.433024e-7).epsilon(1e-12));
}

TEST_CASE("E-ATT ratio table at l = 22, d = 512") {
  struct Row {
    L level;
    double asic, fpga;
  };
  const Row rows[] = {{L::Alignment, 0.45, 0.05}, {L::Attention, 34.09, 33.83}, {L::TransformerBlock, 83.17, 83.10}};
  for (const auto& r : rows) {
    CAPTURE(to_string(r.level));
    CHECK(std::abs(energy_ratio(K::EAtt, r.level, ChipProfile::asic(), 22, 512) - r.asic) <= 0.01);
    CHECK(std::abs(energy_ratio(K::EAtt, r.level, ChipProfile::fpga(), 22, 512) - r.fpga) <= 0.01);
  }
}

TEST_CASE("attention-level ratios of the comparison table") {
  const auto asic = ChipProfile::asic();
  CHECK(std::abs(energy_ratio(K::Dense, L::Attention, asic, 22, 512) - 67.59) <= 0.05);
  CHECK(std::abs(energy_ratio(K::RandInit, L::Attention, asic, 22, 512) - 33.80) <= 0.05);
  CHECK(std::abs(energy_ratio(K::EAtt, L::Attention, asic, 22, 512) - 34.10) <= 0.05);
  CHECK(energy_ratio(K::Vanilla, L::Attention, asic, 22, 512) == 100.0);
  // The table prints 51.10 and 0.44; the closed forms give 51.05 and 0.45.
  CHECK(std::abs(energy_ratio(K::Dense, L::Alignment, asic, 22, 512) - 51.10) <= 0.05);
  CHECK(std::abs(energy_ratio(K::EAtt, L::Alignment, asic, 22, 512) - 0.44) <= 0.01);
  CHECK(energy_ratio(K::RandInit, L::Alignment, asic, 22, 512) == 0.0);
}

TEST_CASE("ratios agree with an independent evaluation") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t l = 1 + uniform_index(rng, 200), d = 1 + uniform_index(rng, 2048);
    for (const auto& e : kTable) {
      for (auto chip : {ChipProfile::asic(), ChipProfile::fpga()}) {
        const double expected = ratio_from_counts({e.add.at(l, d), e.mul.at(l, d)},
                                                  count_ops(K::Vanilla, e.level, l, d), chip.e_add, chip.e_mul);
        CHECK(energy_ratio(e.kind, e.level, chip, l, d) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("invariants") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t l = 1 + uniform_index(rng, 100), d = 1 + uniform_index(rng, 1024);
    const double k = uniform(rng, 1e-3, 1e3);
    for (const auto& e : kTable) {
      for (auto chip : {ChipProfile::asic(), ChipProfile::fpga()}) {
        CHECK(energy_ratio(K::Vanilla, e.level, chip, l, d) == 100.0);
        const ChipProfile scaled{chip.kind, chip.e_add * k, chip.e_mul * k};
        CHECK(energy_ratio(e.kind, e.level, scaled, l, d) ==
              doctest::Approx(energy_ratio(e.kind, e.level, chip, l, d)).epsilon(1e-12));
        const EnergyReport r = make_report(e.kind, e.level, chip, l, d);
        CHECK(std::abs(r.ratio_percent - 100.0 * r.joules / r.baseline_joules) <= 1e-9 * r.ratio_percent);
      }
      const OpCount exact = count_ops(e.kind, e.level, l, d, true);
      const OpCount inexact = count_ops(e.kind, e.level, l, d, false);
      CHECK(inexact.additions <= exact.additions);
      CHECK(inexact.multiplications <= exact.multiplications);
    }
  }
  // Inexact / exact -> 1 as d grows with l fixed wherever an ld^2 term is present.
  for (L level : {L::Attention, L::TransformerBlock}) {
    double prev = 0.0;
    for (std::uint64_t d : {8u, 64u, 512u, 4096u, 32768u}) {
      const double r = static_cast<double>(count_ops(K::EAtt, level, 22, d, false).additions) /
                       static_cast<double>(count_ops(K::EAtt, level, 22, d, true).additions);
      CHECK(r > prev);
      prev = r;
    }
    CHECK(prev > 0.999);
  }
  // At alignment level the dropped 2ld term scales with d like l^2 d, so the
  // ratio stays at l / (l + 2).
  for (std::uint64_t d : {8u, 512u, 32768u}) {
    const auto inexact = count_ops(K::EAtt, L::Alignment, 22, d, false).additions;
    const auto exact = count_ops(K::EAtt, L::Alignment, 22, d, true).additions;
    CHECK(inexact * 24 == exact * 22);
  }
}

TEST_CASE("attention-level E-ATT ratio versus d") {
  // The ratio (4.6d + 5.5l + 1.8) / (13.8d + 9.2l) decreases towards 1/3 as d
  // grows with l fixed.
  for (std::uint64_t l : {1u, 22u, 100u}) {
    double prev = 101.0;
    for (std::uint64_t d = 64; d <= 1024; d += 64) {
      const double r = energy_ratio(K::EAtt, L::Attention, ChipProfile::asic(), l, d);
      const double ld = static_cast<double>(l), dd = static_cast<double>(d);
      CHECK(r == doctest::Approx(100.0 * (4.6 * dd + 5.5 * ld + 1.8) / (13.8 * dd + 9.2 * ld)).epsilon(1e-12));
      CHECK(r < prev);
      CHECK(r > 100.0 / 3.0);
      prev = r;
    }
  }
}

TEST_CASE("report_sweep") {
  const std::vector<K> one_variant{K::EAtt};
  const std::vector<L> one_level{L::Attention};
  const std::vector<ChipKind> one_chip{ChipKind::Asic};
  const std::vector<std::uint64_t> ls{22}, ds{512};
  const auto single = report_sweep(one_variant, one_level, one_chip, ls, ds);
  REQUIRE(single.size() == 1);
  CHECK(single[0].ratio_percent == energy_ratio(K::EAtt, L::Attention, ChipProfile::asic(), 22, 512));

  const std::vector<K> variants{K::EAtt, K::Vanilla};
  const std::vector<L> levels{L::Attention, L::Alignment};
  const std::vector<ChipKind> chips{ChipKind::Fpga, ChipKind::Asic};
  const std::vector<std::uint64_t> lengths{30, 10}, dims{64, 8, 16};
  const auto rows = report_sweep(variants, levels, chips, lengths, dims);
  CHECK(rows.size() == 2 * 2 * 2 * 2 * 3);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    CHECK(std::tie(a.variant, a.level, a.chip, a.l, a.d) < std::tie(b.variant, b.level, b.chip, b.l, b.d));
  }

  const std::vector<K> none;
  CHECK_THROWS_AS(report_sweep(none, levels, chips, lengths, dims), DomainError);
  const std::vector<K> dense{K::Dense};
  const std::vector<L> block{L::TransformerBlock};
  CHECK_THROWS_AS(report_sweep(dense, block, chips, lengths, dims), UnsupportedError);
}

TEST_CASE("serialisation") {
  const std::vector<EnergyReport> rows{make_report(K::EAtt, L::Alignment, ChipProfile::asic(), 22, 512),
                                       make_report(K::Vanilla, L::TransformerBlock, ChipProfile::fpga(), 22, 512)};
  const std::string csv = reports_to_csv(rows);
  std::istringstream in(csv);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  CHECK(header == "variant,level,chip,l,d,additions,multiplications,joules,ratio_percent");
  CHECK(first == "e-att,alignment,asic,22,512,270336,0,2.433024e-07,0.45");
  CHECK(second.rfind("vanilla,block,fpga,22,512,", 0) == 0);
  CHECK(second.substr(second.size() - 7) == ",100.00");

  const auto json = reports_to_json(rows);
  REQUIRE(json.is_array());
  REQUIRE(json.size() == 2);
  CHECK(json[0].at("variant") == "e-att");
  CHECK(json[0].at("level") == "alignment");
  CHECK(json[0].at("additions") == 270336);
  CHECK(json[0].at("multiplications") == 0);
  CHECK(json[0].at("joules").get<double>() == 2.433024e-07);
  CHECK(json[0].at("ratio_percent").get<double>() == 0.45);
  CHECK(json[1].at("ratio_percent").get<double>() == 100.0);
  for (const auto& key : {"variant", "level", "chip", "l", "d", "additions", "multiplications", "joules",
                          "ratio_percent"})
    CHECK(json[1].contains(key));

  CHECK(reports_to_text(rows).find("0.45") != std::string::npos);
}

TEST_CASE("names") {
  for (auto l : {L::Alignment, L::Attention, L::TransformerBlock}) CHECK(parse_cost_level(to_string(l)) == l);
  for (auto c : {ChipKind::Asic, ChipKind::Fpga}) CHECK(parse_chip(to_string(c)) == c);
  CHECK(parse_cost_level("transformer-block") == L::TransformerBlock);
  CHECK_THROWS_AS(parse_cost_level("layer"), FormatError);
  CHECK_THROWS_AS(parse_chip("gpu"), FormatError);
}

TEST_CASE("instrument_trace") {
  if constexpr (!kOpCountersEnabled) return;
  std::mt19937_64 rng(3);
  const auto mask = test::random_mask<double>(rng, {4, 8});
  const auto w = test::random_tensor(rng, {8, 8});
  const OpCount sel = instrument_trace([&] {
    Tape<double> t;
    selective_project(t.constant(mask), t.constant(w));
  });
  CHECK(sel.multiplications == 0);

  std::mt19937_64 init(4);
  const auto v = AttentionVariant<double>::init({K::Vanilla, 8, 1, 0, 1.0}, init);
  const auto x = test::random_tensor(rng, {4, 8});
  const OpCount align_ops = instrument_trace([&] {
    Tape<double> t;
    const auto b = bind(t, v, false);
    align(b, {t.constant(x), t.constant(x), {}, {}, nullptr});
  });
  CHECK(align_ops.multiplications == 640);

  CHECK_THROWS_AS(instrument_trace([] { instrument_trace([] {}); }), NestingError);
}

TEST_CASE("analytic counts equal executed traces") {
  if constexpr (!kOpCountersEnabled) {
    CHECK_THROWS_AS(audit_op_counts(4, 8), UnsupportedError);
    return;
  }
  for (auto [l, d] : {std::pair<std::uint64_t, std::uint64_t>{4, 8}, {7, 12}, {13, 32}, {22, 64}}) {
    const auto rows = audit_op_counts(l, d, 5);
    CHECK(rows.size() == 4);
    for (const auto& r : rows) {
      CAPTURE(to_string(r.variant));
      CAPTURE(to_string(r.level));
      CHECK(r.match());
      CHECK(r.expected == count_ops(r.variant, r.level, l, d, true));
      if (r.variant == K::EAtt && r.level == L::Alignment) CHECK(r.measured.multiplications == 0);
    }
  }
  CHECK_THROWS_AS(audit_op_counts(0, 8), DomainError);
}
