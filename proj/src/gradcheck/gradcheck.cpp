#include "eatt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "eatt/attention.hpp"
#include "eatt/binarize.hpp"
#include "eatt/error.hpp"
#include "eatt/ops.hpp"
#include "eatt/random.hpp"

namespace eatt {

std::string_view to_string(GradOp op) {
  switch (op) {
    case GradOp::Binarize: return "binarize";
    case GradOp::L1Attention: return "l1-attention";
    case GradOp::VanillaAttention: return "vanilla-attention";
    case GradOp::Dense: return "dense";
    case GradOp::RandInit: return "randinit";
  }
  return "?";
}

GradOp parse_grad_op(std::string_view name) {
  if (name == "binarize") return GradOp::Binarize;
  if (name == "l1-attention") return GradOp::L1Attention;
  if (name == "vanilla-attention") return GradOp::VanillaAttention;
  if (name == "dense") return GradOp::Dense;
  if (name == "randinit" || name == "rand-init") return GradOp::RandInit;
  throw FormatError("unknown gradcheck op '" + std::string(name) + "'");
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / scale;
}

using Builder = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

namespace {

double evaluate(const Builder& build, std::span<const Tensor<double>> inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return build(tape, vars).value()[0];
}

}  // namespace

double max_gradient_error(const Builder& build, std::span<const Tensor<double>> inputs, double h) {
  std::vector<Tensor<double>> grads;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    tape.backward(build(tape, vars));
    for (const auto& v : vars) grads.push_back(tape.grad(v));
  }

  std::vector<Tensor<double>> probe(inputs.begin(), inputs.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].numel(); ++i) {
      const double x0 = probe[k][i];
      probe[k][i] = x0 + h;
      const double up = evaluate(build, probe);
      probe[k][i] = x0 - h;
      const double down = evaluate(build, probe);
      probe[k][i] = x0;
      worst = std::max(worst, relative_error(grads[k][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

namespace {

constexpr double kKinkMargin = 1e-3;

Tensor<double> random_tensor(std::mt19937_64& rng, Shape shape, double bound = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& x : t.data()) x = uniform(rng, -bound, bound);
  return t;
}

// Weighted sum of the output, so every output element gets a distinct
// upstream gradient.
Var<double> project_loss(Tape<double>& tape, const Var<double>& out, const Tensor<double>& weights) {
  return sum(mul(out, tape.constant(weights)));
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform_index(rng, hi - lo + 1));
}

bool clear_of_kinks(const Tensor<double>& q, const Tensor<double>& k) {
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t j = 0; j < k.rows(); ++j)
      for (std::size_t c = 0; c < q.cols(); ++c)
        if (std::abs(q.at(i, c) - k.at(j, c)) <= kKinkMargin) return false;
  return true;
}

Tensor<double> padding_mask(std::size_t l1, std::size_t l2, std::size_t valid) {
  Tensor<double> m(Shape{l1, l2});
  for (std::size_t i = 0; i < l1; ++i)
    for (std::size_t j = valid; j < l2; ++j) m.at(i, j) = -std::numeric_limits<double>::infinity();
  return m;
}

BoundAttention<double> bound_from(const AttentionConfig& cfg, std::initializer_list<const char*> names,
                                  std::span<const Var<double>> vars, std::size_t first) {
  BoundAttention<double> b;
  b.config = cfg;
  std::size_t i = first;
  for (const char* n : names) b.params.emplace(n, vars[i++]);
  return b;
}

GradCheckRow check_binarize(std::mt19937_64& rng, int trial) {
  const BinarizeSpec spec{1.0};
  const std::size_t n = pick(rng, 4, 12);
  Tensor<double> x = random_tensor(rng, {2, n}, 3.0);
  if (trial == 0) x[0] = spec.tau;  // the Gaussian peak
  Tensor<double> upstream = random_tensor(rng, {2, n});
  if (trial == 0) upstream[0] = 1.0;

  Tape<double> tape;
  const Var<double> xv = tape.variable(x);
  tape.backward(project_loss(tape, binarize(xv, spec), upstream));
  const Tensor<double> g = tape.grad(xv);

  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double expected =
        upstream[i] * std::sqrt(2.0 / std::numbers::pi) * std::exp(-2.0 * (x[i] - spec.tau) * (x[i] - spec.tau));
    worst = std::max(worst, std::abs(g[i] - expected));
  }
  GradCheckRow row{GradOp::Binarize, trial, worst, kSurrogateTolerance, worst <= kSurrogateTolerance, ""};
  if (trial == 0) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "surrogate at x = tau, upstream 1: %.5f", g[0]);
    row.detail = buf;
  }
  return row;
}

GradCheckRow check_l1_attention(std::mt19937_64& rng, int trial) {
  const std::size_t l1 = pick(rng, 2, 4), l2 = pick(rng, 2, 4), d = pick(rng, 2, 4) * 2;
  Tensor<double> q, k;
  do {
    q = random_tensor(rng, {l1, d});
    k = random_tensor(rng, {l2, d});
  } while (!clear_of_kinks(q, k));
  const Tensor<double> v = random_tensor(rng, {l2, d});
  const Tensor<double> w = random_tensor(rng, {l1, d});
  const Tensor<double> mask = padding_mask(l1, l2, trial % 2 == 1 ? l2 - 1 : l2);
  const double temperature = -1.0 / std::sqrt(static_cast<double>(d));

  const Builder build = [&](Tape<double>& tape, std::span<const Var<double>> in) {
    const Var<double> weights = softmax_rows(l1_pairwise(in[0], in[1]), temperature, &mask);
    return project_loss(tape, bmm(weights, in[2]), w);
  };
  const std::vector<Tensor<double>> inputs{q, k, v};
  const double err = max_gradient_error(build, inputs);
  return {GradOp::L1Attention, trial, err, kGradientTolerance, err <= kGradientTolerance, ""};
}

GradCheckRow check_vanilla(std::mt19937_64& rng, int trial) {
  const std::size_t l1 = pick(rng, 2, 4), l2 = pick(rng, 2, 4), d = pick(rng, 2, 4) * 2;
  const std::size_t heads = trial % 2 == 0 ? 1 : 2;
  const AttentionConfig cfg{AttentionKind::Vanilla, d, heads, 0, 1.0};
  const std::vector<Tensor<double>> inputs{random_tensor(rng, {l1, d}), random_tensor(rng, {l2, d}),
                                           random_tensor(rng, {d, d}), random_tensor(rng, {d, d}),
                                           random_tensor(rng, {d, d})};
  const Tensor<double> w = random_tensor(rng, {l1, d});
  const Tensor<double> mask = padding_mask(l1, l2, trial % 3 == 2 ? l2 - 1 : l2);

  const Builder build = [&](Tape<double>& tape, std::span<const Var<double>> in) {
    const auto attn = bound_from(cfg, {"w_q", "w_k", "w_v"}, in, 2);
    return project_loss(tape, vanilla_forward(attn, {in[0], in[1], {}, {}, &mask}).output, w);
  };
  const double err = max_gradient_error(build, inputs);
  char buf[32];
  std::snprintf(buf, sizeof buf, "heads=%zu", heads);
  return {GradOp::VanillaAttention, trial, err, kGradientTolerance, err <= kGradientTolerance, buf};
}

GradCheckRow check_dense(std::mt19937_64& rng, int trial) {
  const std::size_t l1 = pick(rng, 2, 4), l2 = pick(rng, 2, 4), d = pick(rng, 2, 4) * 2;
  const std::size_t max_len = l2 + 1;
  const AttentionConfig cfg{AttentionKind::Dense, d, 1, max_len, 1.0};
  const Tensor<double> w1 = random_tensor(rng, {d, d});
  Tensor<double> x;
  bool clear = false;
  while (!clear) {
    x = random_tensor(rng, {l1, d});
    clear = true;
    for (std::size_t i = 0; i < l1 && clear; ++i)
      for (std::size_t c = 0; c < d && clear; ++c) {
        double pre = 0.0;
        for (std::size_t p = 0; p < d; ++p) pre += x.at(i, p) * w1.at(p, c);
        clear = std::abs(pre) > kKinkMargin;
      }
  }
  const std::vector<Tensor<double>> inputs{x, random_tensor(rng, {l2, d}), w1, random_tensor(rng, {d, max_len}),
                                           random_tensor(rng, {d, d})};
  const Tensor<double> w = random_tensor(rng, {l1, d});

  const Builder build = [&](Tape<double>& tape, std::span<const Var<double>> in) {
    const auto attn = bound_from(cfg, {"w1", "w2", "w_v"}, in, 2);
    return project_loss(tape, dense_forward(attn, {in[0], in[1], {}, {}, nullptr}).output, w);
  };
  const double err = max_gradient_error(build, inputs);
  return {GradOp::Dense, trial, err, kGradientTolerance, err <= kGradientTolerance, ""};
}

GradCheckRow check_randinit(std::mt19937_64& rng, int trial) {
  const std::size_t l1 = pick(rng, 2, 4), l2 = pick(rng, 2, 4), d = pick(rng, 2, 4) * 2;
  const std::size_t max_len = std::max(l1, l2) + 1;
  const AttentionConfig cfg{AttentionKind::RandInit, d, 1, max_len, 1.0};
  const std::vector<Tensor<double>> inputs{random_tensor(rng, {l1, d}), random_tensor(rng, {l2, d}),
                                           random_tensor(rng, {max_len, max_len}, 2.0), random_tensor(rng, {d, d})};
  const Tensor<double> w = random_tensor(rng, {l1, d});
  const Tensor<double> mask = causal_mask<double>(l1, l2);

  const Builder build = [&](Tape<double>& tape, std::span<const Var<double>> in) {
    const auto attn = bound_from(cfg, {"r", "w_v"}, in, 2);
    const Tensor<double>* m = trial % 2 == 1 ? &mask : nullptr;
    return project_loss(tape, randinit_forward(attn, {in[0], in[1], {}, {}, m}).output, w);
  };
  const double err = max_gradient_error(build, inputs);
  return {GradOp::RandInit, trial, err, kGradientTolerance, err <= kGradientTolerance, ""};
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(GradOp op, std::uint64_t seed, int trials) {
  if (trials < 1) throw DomainError("gradcheck: trials must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<GradCheckRow> rows;
  for (int t = 0; t < trials; ++t) {
    switch (op) {
      case GradOp::Binarize: rows.push_back(check_binarize(rng, t)); break;
      case GradOp::L1Attention: rows.push_back(check_l1_attention(rng, t)); break;
      case GradOp::VanillaAttention: rows.push_back(check_vanilla(rng, t)); break;
      case GradOp::Dense: rows.push_back(check_dense(rng, t)); break;
      case GradOp::RandInit: rows.push_back(check_randinit(rng, t)); break;
    }
  }
  return rows;
}

}  // namespace eatt
