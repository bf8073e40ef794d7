#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "eatt/error.hpp"
#include "eatt/kernels.hpp"
#include "eatt/op_counter.hpp"
#include "eatt/ops.hpp"
#include "helpers.hpp"

using namespace eatt;
using test::random_tensor;

namespace {

struct ThreadGuard {
  explicit ThreadGuard(int n) : saved(kernels::thread_count()) { kernels::set_thread_count(n); }
  ~ThreadGuard() { kernels::set_thread_count(saved); }
  int saved;
};

template <class T>
std::vector<T> random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  return random_tensor<T>(rng, {n}, lo, hi).vec();
}

template <class T>
std::vector<T> random_bits(std::mt19937_64& rng, std::size_t n) {
  return test::random_mask<T>(rng, {n}).vec();
}

}  // namespace

TEST_CASE_TEMPLATE("parallel kernels are bit-identical to the serial reference", T, float, double) {
  const std::size_t m = 37, k = 29, n = 23;
  std::mt19937_64 rng(1);
  const auto a = random_vec<T>(rng, m * k);
  const auto b = random_vec<T>(rng, k * n);
  const auto bt = random_vec<T>(rng, n * k);
  const auto at = random_vec<T>(rng, k * m);
  const auto seed = random_vec<T>(rng, m * n);

  for (bool accumulate : {false, true}) {
    std::vector<T> c1 = seed, c2 = seed;
    OpTally t1, t2;
    kernels::serial::gemm_nn<T>(a, b, c1, m, k, n, accumulate, t1);
    kernels::parallel::gemm_nn<T>(a, b, c2, m, k, n, accumulate, t2);
    CHECK(c1 == c2);
    CHECK(t1.count() == t2.count());

    c1 = seed, c2 = seed;
    kernels::serial::gemm_nt<T>(a, bt, c1, m, k, n, accumulate, t1);
    kernels::parallel::gemm_nt<T>(a, bt, c2, m, k, n, accumulate, t2);
    CHECK(c1 == c2);

    c1 = seed, c2 = seed;
    kernels::serial::gemm_tn<T>(at, b, c1, m, k, n, accumulate, t1);
    kernels::parallel::gemm_tn<T>(at, b, c2, m, k, n, accumulate, t2);
    CHECK(c1 == c2);
  }

  const std::size_t l1 = 19, l2 = 17, d = 16;
  const auto q = random_vec<T>(rng, l1 * d);
  const auto kk = random_vec<T>(rng, l2 * d);
  std::vector<T> o1(l1 * l2), o2(l1 * l2);
  OpTally t1, t2;
  kernels::serial::l1_pairwise<T>(q, kk, o1, l1, l2, d, t1);
  kernels::parallel::l1_pairwise<T>(q, kk, o2, l1, l2, d, t2);
  CHECK(o1 == o2);
  CHECK(t1.count() == t2.count());

  const auto dout = random_vec<T>(rng, l1 * l2);
  std::vector<T> dq1(l1 * d), dk1(l2 * d), dq2(l1 * d), dk2(l2 * d);
  kernels::serial::l1_pairwise_backward<T>(q, kk, dout, dq1, dk1, l1, l2, d);
  kernels::parallel::l1_pairwise_backward<T>(q, kk, dout, dq2, dk2, l1, l2, d);
  CHECK(dq1 == dq2);
  CHECK(dk1 == dk2);

  const std::size_t l = 21, sd = 13, sn = 11;
  const auto mask = random_bits<T>(rng, l * sd);
  const auto w = random_vec<T>(rng, sd * sn);
  std::vector<T> p1(l * sn), p2(l * sn);
  OpTally s1, s2;
  kernels::serial::selective_project<T>(mask, w, p1, l, sd, sn, s1);
  kernels::parallel::selective_project<T>(mask, w, p2, l, sd, sn, s2);
  CHECK(p1 == p2);
  CHECK(s1.count() == s2.count());
  CHECK(s1.selections == s2.selections);

  const auto pd = random_vec<T>(rng, l * sn);
  std::vector<T> dw1(sd * sn), dw2(sd * sn);
  kernels::serial::selective_project_backward_w<T>(mask, pd, dw1, l, sd, sn);
  kernels::parallel::selective_project_backward_w<T>(mask, pd, dw2, l, sd, sn);
  CHECK(dw1 == dw2);
}

TEST_CASE("dispatch follows the thread count") {
  REQUIRE(kernels::parallel_available());
  std::mt19937_64 rng(2);
  const auto a = random_tensor<float>(rng, {33, 40});
  const auto b = random_tensor<float>(rng, {40, 9});
  Tensor<float> serial_out, parallel_out;
  {
    ThreadGuard g(1);
    CHECK(kernels::thread_count() == 1);
    Tape<float> t;
    serial_out = matmul(t.constant(a), t.constant(b)).value();
  }
  {
    ThreadGuard g(4);
    CHECK(kernels::thread_count() == 4);
    Tape<float> t;
    parallel_out = matmul(t.constant(a), t.constant(b)).value();
  }
  CHECK(serial_out == parallel_out);
  CHECK(kernels::thread_count() == 1);
  CHECK_THROWS_AS(kernels::set_thread_count(0), DomainError);
}

TEST_CASE("a full training-style graph is bit-identical across thread counts") {
  auto run = [](int threads) {
    ThreadGuard g(threads);
    std::mt19937_64 rng(3);
    Tape<double> t;
    const auto q = t.variable(random_tensor(rng, {2, 6, 8}));
    const auto k = t.variable(random_tensor(rng, {2, 5, 8}));
    const auto v = t.variable(random_tensor(rng, {2, 5, 8}));
    const auto out = bmm(softmax_rows(l1_pairwise(q, k), -0.3), v);
    t.backward(sum(mul(out, out)));
    return std::vector<Tensor<double>>{out.value(), t.grad(q), t.grad(k), t.grad(v)};
  };
  CHECK(run(1) == run(3));
}

TEST_CASE("kernel tallies") {
  if constexpr (!kOpCountersEnabled) return;
  std::mt19937_64 rng(4);
  const std::size_t m = 3, k = 5, n = 4;
  const auto a = random_vec<double>(rng, m * k);
  const auto b = random_vec<double>(rng, k * n);
  std::vector<double> c(m * n);
  OpTally t;
  kernels::gemm_nn<double>(a, b, c, m, k, n, false, t);
  CHECK(t.multiplications == m * k * n);
  CHECK(t.additions == m * k * n);

  OpTally l1t;
  std::vector<double> o(m * n);
  kernels::l1_pairwise<double>(random_vec<double>(rng, m * k), random_vec<double>(rng, n * k), o, m, n, k, l1t);
  CHECK(l1t.additions == m * n * k);
  CHECK(l1t.multiplications == 0);

  // mask [[1,0,1],[0,0,0]] over w [3 x 2]
  const std::vector<double> mask{1, 0, 1, 0, 0, 0};
  const std::vector<double> w{1, 2, 3, 4, 5, 6};
  std::vector<double> out(4);
  OpTally st;
  kernels::selective_project<double>(mask, w, out, 2, 3, 2, st);
  CHECK(out == std::vector<double>{6, 8, 0, 0});
  CHECK(st.multiplications == 0);
  CHECK(st.additions == 4);
  CHECK(st.selections == 2);
}

TEST_CASE("selective projection equals the dense product for 0/1 masks") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t l = 7, d = 9, n = 5;
    const auto mask = random_bits<double>(rng, l * d);
    const auto w = random_vec<double>(rng, d * n);
    std::vector<double> sel(l * n), dense(l * n);
    OpTally t;
    kernels::selective_project<double>(mask, w, sel, l, d, n, t);
    kernels::gemm_nn<double>(mask, w, dense, l, d, n, false, t);
    for (std::size_t i = 0; i < sel.size(); ++i) CHECK(sel[i] == doctest::Approx(dense[i]).epsilon(1e-14));
  }
}

TEST_CASE("count scopes") {
  if constexpr (!kOpCountersEnabled) return;
  CHECK_FALSE(counter::active());
  {
    CountScope outer;
    CHECK(counter::active());
    CHECK_THROWS_AS(CountScope{}, NestingError);
    CHECK(counter::active());
  }
  CHECK_FALSE(counter::active());

  std::mt19937_64 rng(6);
  const auto a = random_tensor(rng, {2, 3});
  const auto b = random_tensor(rng, {3, 4});
  const OpTally forward_only = instrument([&] {
    Tape<double> t;
    const auto av = t.variable(a);
    const auto bv = t.variable(b);
    const auto c = matmul(av, bv);
    t.backward(sum(c));
  });
  CHECK(forward_only.multiplications == 2 * 3 * 4);
  // The product's accumulations plus n - 1 for the reduction; backward is free.
  CHECK(forward_only.additions == 2 * 3 * 4 + (2 * 4 - 1));

  const OpTally elementwise = instrument([&] {
    Tape<double> t;
    const auto x = t.constant(a);
    add(x, x);
    mul(x, x);
    scale(x, 2.0);
    relu(x);
  });
  CHECK(elementwise.additions == 6);
  CHECK(elementwise.multiplications == 12);
}
