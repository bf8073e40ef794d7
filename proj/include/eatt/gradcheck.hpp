#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eatt/tape.hpp"
#include "eatt/tensor.hpp"

namespace eatt {

enum class GradOp { Binarize, L1Attention, VanillaAttention, Dense, RandInit };

// CLI spelling: binarize, l1-attention, vanilla-attention, dense, randinit.
std::string_view to_string(GradOp op);
GradOp parse_grad_op(std::string_view name);

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kGradientTolerance = 1e-4;
inline constexpr double kSurrogateTolerance = 1e-12;
// Floor on the denominator of the relative error. Entries whose true
// gradient is ~0 (softmax rows make some exactly 0) are judged by absolute
// error instead; central differences leave ~1e-11 of roundoff there.
inline constexpr double kRelativeErrorFloor = 1e-6;

struct GradCheckRow {
  GradOp op = GradOp::Binarize;
  int trial = 0;
  // Largest relative error over every checked input; for binarize the
  // largest absolute difference to the surrogate formula.
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

// |a - n| / max(|a|, |n|, kRelativeErrorFloor)
double relative_error(double analytic, double numeric);

// Central differences of `loss` with respect to every element of every
// input, compared with one reverse sweep. `build` must rebuild the same
// scalar from fresh variables on the given tape. Returns the largest
// relative error.
double max_gradient_error(const std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>& build,
                          std::span<const Tensor<double>> inputs, double h = kFiniteDifferenceStep);

// Random instances drawn away from kinks (|q - k| > 1e-3 for L1 scores,
// |pre-activation| > 1e-3 for Dense's relu). Deterministic in `seed`.
std::vector<GradCheckRow> run_gradcheck(GradOp op, std::uint64_t seed, int trials);

}  // namespace eatt
