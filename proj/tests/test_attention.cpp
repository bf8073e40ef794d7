#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "eatt/attention.hpp"
#include "eatt/checkpoint.hpp"
#include "eatt/error.hpp"
#include "eatt/op_counter.hpp"
#include "eatt/ops.hpp"
#include "helpers.hpp"

using namespace eatt;
using test::random_tensor;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
using Mat = std::vector<std::vector<long double>>;

Mat to_mat(const Tensor<double>& t) {
  Mat m(t.rows(), std::vector<long double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<long double>(b[0].size(), 0.0L));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t p = 0; p < b.size(); ++p)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][p] * b[p][j];
  return c;
}

Mat cols(const Mat& a, std::size_t from, std::size_t n) {
  Mat c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i].assign(a[i].begin() + from, a[i].begin() + from + n);
  return c;
}

void softmax_inplace(Mat& s) {
  for (auto& row : s) {
    long double mx = -INFINITY, z = 0;
    for (auto v : row) mx = std::max(mx, v);
    for (auto& v : row) z += (v = std::exp(v - mx));
    for (auto& v : row) v /= z;
  }
}

Mat threshold(const Mat& x, double tau) {
  Mat b = x;
  for (auto& row : b)
    for (auto& v : row) v = v > tau ? 1.0L : 0.0L;
  return b;
}

struct Oracle {
  Mat weights;  // concatenated per head along rows: head h occupies rows [h*l1, (h+1)*l1)
  Mat output;
};

// From-scratch attention for one unbatched instance.
Oracle oracle(const AttentionVariant<double>& v, const Tensor<double>& x, const Tensor<double>& y,
              const Tensor<double>* mask) {
  const auto& c = v.config;
  const Mat X = to_mat(x), Y = to_mat(y);
  const std::size_t l1 = X.size(), l2 = Y.size();
  auto add_mask = [&](Mat& s) {
    if (!mask) return;
    for (std::size_t i = 0; i < l1; ++i)
      for (std::size_t j = 0; j < l2; ++j) s[i][j] += mask->at(i, j);
  };
  const Mat V = mm(Y, to_mat(v.params.at("w_v")));
  Oracle o;
  if (c.kind == AttentionKind::Dense || c.kind == AttentionKind::RandInit) {
    Mat s;
    if (c.kind == AttentionKind::Dense) {
      Mat h = mm(X, to_mat(v.params.at("w1")));
      for (auto& row : h)
        for (auto& e : row) e = std::max(e, 0.0L);
      s = cols(mm(h, to_mat(v.params.at("w2"))), 0, l2);
    } else {
      const Mat r = to_mat(v.params.at("r"));
      s.assign(r.begin(), r.begin() + l1);
      s = cols(s, 0, l2);
    }
    add_mask(s);
    softmax_inplace(s);
    o.weights = s;
    o.output = mm(s, V);
    return o;
  }
  Mat Q, K;
  if (c.kind == AttentionKind::Vanilla) {
    Q = mm(X, to_mat(v.params.at("w_q")));
    K = mm(Y, to_mat(v.params.at("w_k")));
  } else {
    Q = mm(threshold(X, c.tau), to_mat(v.params.at("w_q")));
    K = mm(threshold(Y, c.tau), to_mat(v.params.at("w_k")));
  }
  const std::size_t dh = c.d / c.heads;
  o.output.assign(l1, std::vector<long double>(c.d, 0.0L));
  for (std::size_t h = 0; h < c.heads; ++h) {
    const Mat q = cols(Q, h * dh, dh), k = cols(K, h * dh, dh), vh = cols(V, h * dh, dh);
    Mat s(l1, std::vector<long double>(l2));
    for (std::size_t i = 0; i < l1; ++i)
      for (std::size_t j = 0; j < l2; ++j) {
        long double acc = 0;
        for (std::size_t p = 0; p < dh; ++p)
          acc += c.kind == AttentionKind::Vanilla ? q[i][p] * k[j][p] : -std::abs(q[i][p] - k[j][p]);
        s[i][j] = acc / std::sqrt(static_cast<long double>(dh));
      }
    add_mask(s);
    softmax_inplace(s);
    const Mat out = mm(s, vh);
    for (std::size_t i = 0; i < l1; ++i) {
      o.weights.push_back(s[i]);
      for (std::size_t p = 0; p < dh; ++p) o.output[i][h * dh + p] = out[i][p];
    }
  }
  return o;
}

double diff(const Mat& a, const Tensor<double>& b) {
  double worst = 0;
  std::size_t k = 0;
  for (const auto& row : a)
    for (auto v : row) worst = std::max(worst, static_cast<double>(std::abs(v - b[k++])));
  CHECK(k == b.numel());
  return worst;
}

AttentionVariant<double> make(AttentionKind kind, std::size_t d, std::size_t heads, std::uint64_t seed,
                              std::size_t max_len = 8, double tau = 1.0) {
  std::mt19937_64 rng(seed);
  return AttentionVariant<double>::init({kind, d, heads, max_len, tau}, rng);
}

AttentionOutput<double> run(Tape<double>& t, const AttentionVariant<double>& v, const Tensor<double>& x,
                            const Tensor<double>& y, const Tensor<double>* mask = nullptr, bool trainable = false) {
  const auto b = bind(t, v, trainable);
  return attend(b, {t.constant(x), t.constant(y), {}, {}, mask});
}

const AttentionKind kAllKinds[] = {AttentionKind::Vanilla, AttentionKind::Dense, AttentionKind::RandInit,
                                   AttentionKind::EAtt};

}  // namespace

TEST_CASE("kind names") {
  for (auto k : kAllKinds) CHECK(parse_attention_kind(to_string(k)) == k);
  CHECK(parse_attention_kind("randinit") == AttentionKind::RandInit);
  CHECK_THROWS_AS(parse_attention_kind("sparse"), FormatError);
}

TEST_CASE("initialization and validation") {
  const auto v = make(AttentionKind::Dense, 8, 2, 1, 6);
  CHECK(v.params.at("w1").shape() == Shape{8, 8});
  CHECK(v.params.at("w2").shape() == Shape{8, 6});
  CHECK(v.params.at("w_v").shape() == Shape{8, 8});
  const double bound = 1.0 / std::sqrt(8.0);
  for (const auto& [name, t] : v.params)
    for (double e : t.data()) CHECK(std::abs(e) <= bound);
  CHECK(make(AttentionKind::RandInit, 4, 1, 1, 5).params.at("r").shape() == Shape{5, 5});

  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(AttentionVariant<double>::init({AttentionKind::Vanilla, 6, 4, 0, 1.0}, rng), DimensionError);
  CHECK_THROWS_AS(AttentionVariant<double>::init({AttentionKind::Dense, 4, 1, 0, 1.0}, rng), DimensionError);
  auto broken = make(AttentionKind::Vanilla, 4, 1, 1);
  broken.params["w_q"] = Tensor<double>(Shape{4, 3});
  CHECK_THROWS_AS(broken.validate(), DimensionError);
}

TEST_CASE("vanilla examples") {
  std::mt19937_64 rng(2);
  const auto v = make(AttentionKind::Vanilla, 4, 1, 3);
  Tape<double> t;
  CHECK(run(t, v, random_tensor(rng, {1, 4}), random_tensor(rng, {1, 4})).weights.value()[0] == 1.0);

  // Identical memory rows give identical keys and uniform weights.
  auto y = Tensor<double>(Shape{3, 4});
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < 4; ++c) y.at(j, c) = 0.1 * static_cast<double>(c + 1);
  const auto w = run(t, v, random_tensor(rng, {2, 4}), y).weights.value();
  for (double e : w.data()) CHECK(e == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const Tensor<double> wrong(Shape{3, 3});
  CHECK_THROWS_AS(run(t, v, random_tensor(rng, {2, 4}), y, &wrong), DimensionError);
}

TEST_CASE("eatt examples") {
  const auto v = make(AttentionKind::EAtt, 4, 1, 4);
  Tape<double> t;
  // All inputs below tau: every query and key is the zero selection.
  const auto x = Tensor<double>(Shape{2, 4}, 0.5);
  const auto y = Tensor<double>(Shape{3, 4}, -0.5);
  const auto out = run(t, v, x, y);
  for (double e : out.weights.value().data()) CHECK(e == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  REQUIRE(out.q_binary.has_value());
  REQUIRE(out.k_binary.has_value());
  CHECK(out.q_binary->value() == Tensor<double>(Shape{2, 4}));

  // Keys farther (in L1) from the query get strictly smaller weight.
  auto w = make(AttentionKind::EAtt, 2, 1, 5);
  w.params["w_q"] = Tensor<double>::matrix({{1, 0}, {0, 1}});
  w.params["w_k"] = Tensor<double>::matrix({{1, 0}, {0, 1}});
  const auto q = Tensor<double>::matrix({{2, 2}});
  const auto keys = Tensor<double>::matrix({{2, 2}, {2, 0}, {0, 0}});
  const auto mw = run(t, w, q, keys).weights.value();
  CHECK(mw[0] > mw[1]);
  CHECK(mw[1] > mw[2]);
}

TEST_CASE("dense and rand-init examples") {
  std::mt19937_64 rng(6);
  Tape<double> t;
  auto dense = make(AttentionKind::Dense, 4, 1, 7, 6);
  dense.params["w2"] = Tensor<double>(Shape{4, 6});
  for (double e : run(t, dense, random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4})).weights.value().data())
    CHECK(e == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(run(t, dense, random_tensor(rng, {3, 4}), random_tensor(rng, {7, 4})), CapacityError);

  auto ri = make(AttentionKind::RandInit, 4, 1, 8, 6);
  ri.params["r"] = Tensor<double>(Shape{6, 6});
  for (double e : run(t, ri, random_tensor(rng, {3, 4}), random_tensor(rng, {4, 4})).weights.value().data())
    CHECK(e == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(run(t, ri, random_tensor(rng, {7, 4}), random_tensor(rng, {4, 4})), CapacityError);

  // Content-free alignment: weights do not depend on x or y.
  const auto ri2 = make(AttentionKind::RandInit, 4, 1, 9, 6);
  const auto y = random_tensor(rng, {4, 4});
  const auto a = run(t, ri2, random_tensor(rng, {3, 4}), y).weights.value();
  const auto b = run(t, ri2, random_tensor(rng, {3, 4}), random_tensor(rng, {4, 4})).weights.value();
  CHECK(a == b);
}

TEST_CASE("kind-checked entry points") {
  std::mt19937_64 rng(10);
  Tape<double> t;
  const auto b = bind(t, make(AttentionKind::Vanilla, 4, 1, 1), false);
  const AttentionInputs<double> in{t.constant(random_tensor(rng, {2, 4})), t.constant(random_tensor(rng, {2, 4})),
                                   {}, {}, nullptr};
  CHECK_NOTHROW(vanilla_forward(b, in));
  CHECK_THROWS_AS(eatt_forward(b, in), ContractError);
  CHECK_THROWS_AS(dense_forward(b, in), ContractError);
  CHECK_THROWS_AS(randinit_forward(b, in), ContractError);
}

TEST_CASE("every variant matches a from-scratch oracle") {
  std::mt19937_64 rng(11);
  struct Case {
    AttentionKind kind;
    std::size_t l1, l2, d, heads;
  };
  const Case cases[] = {{AttentionKind::Vanilla, 3, 4, 8, 1}, {AttentionKind::Vanilla, 3, 4, 8, 2},
                        {AttentionKind::Vanilla, 5, 5, 4, 2}, {AttentionKind::EAtt, 4, 5, 16, 1},
                        {AttentionKind::EAtt, 4, 5, 16, 4},   {AttentionKind::Dense, 4, 5, 8, 1},
                        {AttentionKind::Dense, 4, 5, 8, 2},   {AttentionKind::RandInit, 4, 5, 8, 1}};
  for (const auto& c : cases) {
    for (int trial = 0; trial < 5; ++trial) {
      CAPTURE(to_string(c.kind));
      CAPTURE(c.heads);
      const auto v = make(c.kind, c.d, c.heads, 100 + trial, 8);
      // EAtt inputs straddle tau so both selection outcomes occur.
      const auto x = random_tensor(rng, {c.l1, c.d}, -1.0, 3.0);
      const auto y = random_tensor(rng, {c.l2, c.d}, -1.0, 3.0);
      const auto mask = causal_mask<double>(c.l1, c.l2);
      const Tensor<double>* m = trial % 2 == 1 ? &mask : nullptr;
      Tape<double> t;
      const auto out = run(t, v, x, y, m);
      const auto ref = oracle(v, x, y, m);
      CHECK(out.output.shape() == Shape{c.l1, c.d});
      CHECK(diff(ref.output, out.output.value()) <= 1e-6);
      CHECK(diff(ref.weights, out.weights.value()) <= 1e-6);
    }
  }
}

TEST_CASE("multi-head: one head is bit-identical, two heads match a manual split") {
  std::mt19937_64 rng(12);
  const auto x = random_tensor(rng, {3, 4});
  const auto y = random_tensor(rng, {5, 4});
  auto v1 = make(AttentionKind::Vanilla, 4, 1, 13);
  Tape<double> t;
  const auto direct = run(t, v1, x, y).output.value();
  // heads = 1 computed by hand through the core ops.
  const auto q = matmul(t.constant(x), t.constant(v1.params.at("w_q")));
  const auto k = matmul(t.constant(y), t.constant(v1.params.at("w_k")));
  const auto vv = matmul(t.constant(y), t.constant(v1.params.at("w_v")));
  const auto manual = bmm(softmax_rows(bmm_nt(q, k), 1.0 / std::sqrt(4.0)), vv).value();
  CHECK(direct == manual);

  auto v2 = v1;
  v2.config.heads = 2;
  const auto two = run(t, v2, x, y);
  CHECK(two.weights.shape() == Shape{2, 3, 5});
  CHECK(diff(oracle(v2, x, y, nullptr).output, two.output.value()) <= 1e-12);
  for (std::size_t heads : {1u, 2u, 4u}) {
    auto vh = make(AttentionKind::EAtt, 8, heads, 14);
    CHECK(run(t, vh, random_tensor(rng, {3, 8}), random_tensor(rng, {6, 8})).output.shape() == Shape{3, 8});
  }
}

TEST_CASE("batched inputs equal per-example results") {
  std::mt19937_64 rng(15);
  for (auto kind : kAllKinds) {
    const auto v = make(kind, 8, kind == AttentionKind::Vanilla || kind == AttentionKind::EAtt ? 2 : 1, 16, 6);
    const auto xb = random_tensor(rng, {2, 3, 8}, -1, 3);
    const auto yb = random_tensor(rng, {2, 4, 8}, -1, 3);
    Tensor<double> mask(Shape{2, 3, 4});
    mask.at(0, 0) = 0;
    mask[1 * 12 + 3] = -kInf;  // batch 1, row 0, col 3
    Tape<double> t;
    const auto out = run(t, v, xb, yb, &mask).output.value();
    for (std::size_t b = 0; b < 2; ++b) {
      Tensor<double> x(Shape{3, 8}), y(Shape{4, 8}), m(Shape{3, 4});
      std::copy_n(xb.data().begin() + b * 24, 24, x.data().begin());
      std::copy_n(yb.data().begin() + b * 32, 32, y.data().begin());
      std::copy_n(mask.data().begin() + b * 12, 12, m.data().begin());
      const auto ref = oracle(v, x, y, &m);
      Tensor<double> got(Shape{3, 8});
      std::copy_n(out.data().begin() + b * 24, 24, got.data().begin());
      CHECK(diff(ref.output, got) <= 1e-9);
    }
  }
}

TEST_CASE("weights are normalized and causal masks give exact zeros") {
  std::mt19937_64 rng(17);
  for (auto kind : kAllKinds) {
    for (std::size_t heads : {1u, 2u}) {
      const auto v = make(kind, 8, heads, 18, 8);
      const auto mask = causal_mask<double>(5, 5);
      const auto x = random_tensor(rng, {5, 8}, -1, 3);
      Tape<double> t;
      const auto w = run(t, v, x, x, &mask).weights.value();
      const std::size_t rows = w.numel() / 5;
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0;
        for (std::size_t j = 0; j < 5; ++j) {
          const double e = w[r * 5 + j];
          if (j > r % 5) CHECK(e == 0.0);
          s += e;
        }
        CHECK(std::abs(s - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("eatt alignment executes no multiplications") {
  if constexpr (!kOpCountersEnabled) return;
  std::mt19937_64 rng(19);
  for (std::size_t heads : {1u, 4u}) {
    const auto v = make(AttentionKind::EAtt, 16, heads, 20);
    const auto x = random_tensor(rng, {6, 16}, -1, 3);
    const auto y = random_tensor(rng, {7, 16}, -1, 3);
    const OpTally tally = instrument([&] {
      Tape<double> t;
      const auto b = bind(t, v, false);
      align(b, {t.constant(x), t.constant(y), {}, {}, nullptr});
    });
    CHECK(tally.multiplications == 0);
    CHECK(tally.additions > 0);
  }
}

TEST_CASE("eatt: permuting keys permutes weight columns") {
  std::mt19937_64 rng(21);
  const auto v = make(AttentionKind::EAtt, 8, 1, 22);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_tensor(rng, {3, 8}, -1, 3);
    const auto y = random_tensor(rng, {5, 8}, -1, 3);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<double> yp(Shape{5, 8});
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t c = 0; c < 8; ++c) yp.at(j, c) = y.at(perm[j], c);
    Tape<double> t;
    const auto w = run(t, v, x, y).weights.value();
    const auto wp = run(t, v, x, yp).weights.value();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(wp.at(i, j) == doctest::Approx(w.at(i, perm[j])).epsilon(1e-14));
  }
}

TEST_CASE("vanilla: shifting keys orthogonally to every query keeps the row argmax") {
  std::mt19937_64 rng(23);
  auto v = make(AttentionKind::Vanilla, 2, 1, 24);
  v.params["w_q"] = Tensor<double>::matrix({{1, 0}, {0, 0}});  // queries live on the first axis
  v.params["w_k"] = Tensor<double>::matrix({{1, 0}, {0, 1}});
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_tensor(rng, {3, 2});
    auto y = random_tensor(rng, {4, 2});
    Tape<double> t;
    const auto before = argmax(run(t, v, x, y).weights.value(), 1);
    for (std::size_t j = 0; j < 4; ++j) y.at(j, 1) += 5.0;  // orthogonal to (q, 0)
    CHECK(argmax(run(t, v, x, y).weights.value(), 1) == before);
  }
}

TEST_CASE("every trainable parameter receives a gradient") {
  std::mt19937_64 rng(25);
  for (auto kind : kAllKinds) {
    CAPTURE(to_string(kind));
    const std::size_t heads = kind == AttentionKind::Dense || kind == AttentionKind::RandInit ? 1 : 2;
    const auto v = make(kind, 8, heads, 26, 6);
    Tape<double> t;
    const auto b = bind(t, v, true);
    // Inputs near tau so the surrogate bump is wide awake.
    const auto x = t.constant(random_tensor(rng, {4, 8}, 0.0, 2.0));
    const auto y = t.constant(random_tensor(rng, {5, 8}, 0.0, 2.0));
    const auto w = t.constant(random_tensor(rng, {4, 8}));
    t.backward(sum(mul(attend(b, {x, y, {}, {}, nullptr}).output, w)));
    for (const auto& [name, var] : b.params) {
      CAPTURE(name);
      const auto g = t.grad(var);
      CHECK(g.shape() == v.params.at(name).shape());
      if (kind != AttentionKind::Dense || name != "w2") {
        double mag = 0;
        for (double e : g.data()) mag += std::abs(e);
        CHECK(mag > 0.0);
      }
    }
  }
}

TEST_CASE("eatt w_q gradient flows through the surrogate") {
  const auto v = make(AttentionKind::EAtt, 4, 1, 27);
  std::mt19937_64 rng(28);
  const auto xv = random_tensor(rng, {3, 4}, 0.5, 1.5);
  const auto yv = random_tensor(rng, {3, 4}, 0.5, 1.5);
  Tape<double> t;
  const auto b = bind(t, v, true);
  const auto x = t.variable(xv);
  t.backward(sum(mul(attend(b, {x, t.constant(yv), {}, {}, nullptr}).output, t.constant(random_tensor(rng, {3, 4})))));
  double gq = 0, gx = 0;
  for (double e : t.grad(b.at("w_q")).data()) gq += std::abs(e);
  for (double e : t.grad(x).data()) gx += std::abs(e);
  CHECK(gq > 0.0);
  CHECK(gx > 0.0);  // only the surrogate connects x to the scores
}

TEST_CASE("precomputed binarized sides are used as given") {
  std::mt19937_64 rng(29);
  const auto v = make(AttentionKind::EAtt, 4, 1, 30);
  Tape<double> t;
  const auto b = bind(t, v, false);
  const auto x = t.constant(random_tensor(rng, {2, 4}, -1, 3));
  const auto y = t.constant(random_tensor(rng, {3, 4}, -1, 3));
  const auto yb = t.constant(Tensor<double>(Shape{3, 4}, 1.0));
  const auto out = align(b, {x, y, {}, yb, nullptr});
  CHECK(out.k_binary->id() == yb.id());
  CHECK_THROWS_AS(align(b, {x, y, {}, t.constant(Tensor<double>(Shape{2, 4})), nullptr}), DimensionError);

  // Self-attention binarizes once and shares it.
  const auto self = align(b, {x, x, {}, {}, nullptr});
  CHECK(self.q_binary->id() == self.k_binary->id());
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = std::filesystem::temp_directory_path() / "eatt_test_attention_ckpt";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(31);
  Checkpoint ck;
  for (auto kind : kAllKinds) {
    std::mt19937_64 r(32);
    const std::size_t heads = kind == AttentionKind::Dense || kind == AttentionKind::RandInit ? 1 : 2;
    const auto v = AttentionVariant<float>::init({kind, 8, heads, 6, 1.0}, r);
    for (const auto& [name, tensor] : v.params) ck.tensors.emplace_back(std::string(to_string(kind)) + "." + name, tensor);
  }
  Tensor<float> special(Shape{5}, {-0.0f, std::numeric_limits<float>::denorm_min(), std::numeric_limits<float>::max(),
                                   -std::numeric_limits<float>::infinity(), 1e-30f});
  ck.tensors.emplace_back("special", special);
  ck.meta["note"] = "round trip";
  const auto path = dir / "ckpt.json";
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    CHECK(back.tensors[i].second.shape() == ck.tensors[i].second.shape());
    CHECK(std::memcmp(back.tensors[i].second.data().data(), ck.tensors[i].second.data().data(),
                      ck.tensors[i].second.numel() * sizeof(float)) == 0);
  }
  CHECK(back.meta.at("note") == "round trip");
  CHECK(back.contains("special"));
  CHECK_THROWS_AS(back.at("missing"), FormatError);

  // A truncated blob is rejected.
  std::filesystem::resize_file(dir / "ckpt.bin", 8);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "nope.json"), FormatError);
  std::filesystem::remove_all(dir);
}
