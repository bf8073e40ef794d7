#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "eatt/error.hpp"
#include "eatt/gradcheck.hpp"
#include "eatt/ops.hpp"
#include "eatt/tape.hpp"
#include "eatt/tensor.hpp"
#include "helpers.hpp"

using namespace eatt;
using test::random_tensor;

TEST_CASE("tensor shape and storage") {
  Tensor<float> t(Shape{2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(shape_str(t.shape()) == "[2x3]");
  CHECK(t.at(1, 2) == 1.5f);

  const auto m = Tensor<double>::matrix({{1, 2}, {3, 4}});
  CHECK(m.at(1, 0) == 3.0);
  CHECK(m.reshaped(Shape{4}).shape() == Shape{4});

  CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(m.reshaped(Shape{3}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>::matrix({{1, 2}, {3}}), DimensionError);
}

TEST_CASE("tensor finiteness and cast") {
  Tensor<double> t(Shape{3}, 0.25);
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
  const auto f = tensor_cast<float>(Tensor<double>(Shape{2}, 0.5));
  CHECK(f[0] == 0.5f);
}

TEST_CASE("tape: loss = sum(A) gives all-ones gradient") {
  Tape<double> tape;
  const auto a = tape.variable(Tensor<double>(Shape{2, 3, 2}, 0.7));
  tape.backward(sum(a));
  const auto g = tape.grad(a);
  CHECK(g.shape() == Shape{2, 3, 2});
  for (double v : g.data()) CHECK(v == 1.0);
}

TEST_CASE("tape: loss = sum(A * B) gives grad(A) = B") {
  std::mt19937_64 rng(3);
  const auto av = random_tensor(rng, {3, 4});
  const auto bv = random_tensor(rng, {3, 4});
  Tape<double> tape;
  const auto a = tape.variable(av);
  const auto b = tape.variable(bv);
  tape.backward(sum(mul(a, b)));
  CHECK(tape.grad(a) == bv);
  CHECK(tape.grad(b) == av);
}

TEST_CASE("tape: sum(softmax_rows(X)) gradient matches finite differences") {
  std::mt19937_64 rng(5);
  const std::vector<Tensor<double>> x{random_tensor(rng, {3, 5}, -2, 2)};
  // A plain sum of softmax rows is constant; weight the entries so the
  // gradient is not identically zero as well.
  const auto w = random_tensor(rng, {3, 5});
  const auto build = [&](Tape<double>& t, std::span<const Var<double>> in) {
    return sum(mul(softmax_rows(in[0]), t.constant(w)));
  };
  CHECK(max_gradient_error(build, x) <= 1e-4);

  const auto plain = [](Tape<double>&, std::span<const Var<double>> in) { return sum(softmax_rows(in[0])); };
  CHECK(max_gradient_error(plain, x) <= 1e-4);
}

TEST_CASE("tape: gradients accumulate over reused inputs") {
  Tape<double> tape;
  const auto a = tape.variable(Tensor<double>(Shape{2}, 3.0));
  tape.backward(sum(add(a, mul(a, a))));  // d/da (a + a^2) = 1 + 2a
  const auto g = tape.grad(a);
  for (double v : g.data()) CHECK(v == 7.0);
}

TEST_CASE("tape: topological order and reachable gradients") {
  Tape<double> tape;
  const auto a = tape.variable(Tensor<double>(Shape{2, 2}, 1.0));
  const auto b = tape.variable(Tensor<double>(Shape{2, 2}, 2.0));
  const auto c = matmul(a, b);
  const auto loss = sum(c);
  for (std::size_t in : tape.inputs(c)) CHECK(in < c.id());
  tape.backward(loss);
  CHECK(tape.grad(a).shape() == a.shape());
  CHECK(tape.grad(b).shape() == b.shape());
  CHECK(tape.grad(c).shape() == c.shape());
  CHECK(std::string(tape.rule(c)) == "matmul");
}

TEST_CASE("tape: backward preconditions") {
  Tape<double> t1, t2;
  const auto a = t1.variable(Tensor<double>(Shape{1}, 1.0));
  CHECK_THROWS_AS(t2.backward(a), ProvenanceError);
  const auto v = t1.variable(Tensor<double>(Shape{2}, 1.0));
  CHECK_THROWS_AS(t1.backward(v), DimensionError);
  CHECK_THROWS_AS(t1.backward(Var<double>{}), ProvenanceError);
  const auto foreign = t2.variable(Tensor<double>(Shape{1}, 1.0));
  CHECK_THROWS_AS(add(a, foreign), ProvenanceError);
}

TEST_CASE("tape: constants get no rule and zero gradient") {
  Tape<double> tape;
  const auto c = tape.constant(Tensor<double>(Shape{2}, 1.0));
  const auto v = tape.variable(Tensor<double>(Shape{2}, 1.0));
  const auto cc = exp(c);
  CHECK_FALSE(tape.requires_grad(cc));
  tape.backward(sum(mul(v, c)));
  CHECK_FALSE(tape.has_grad(cc));
  CHECK(tape.grad(cc) == Tensor<double>(Shape{2}));
}

TEST_CASE("determinism: identical inputs give bit-identical results") {
  auto run = [] {
    std::mt19937_64 rng(11);
    Tape<float> tape;
    const auto a = tape.variable(random_tensor<float>(rng, {4, 6}));
    const auto b = tape.variable(random_tensor<float>(rng, {6, 3}));
    const auto loss = sum(softmax_rows(matmul(a, b)));
    tape.backward(loss);
    return std::make_pair(tape.grad(a), tape.grad(b));
  };
  CHECK(run() == run());
}
