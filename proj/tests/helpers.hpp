#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "eatt/random.hpp"
#include "eatt/tensor.hpp"

namespace eatt::test {

template <class T = double>
Tensor<T> random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<T>(uniform(rng, lo, hi));
  return t;
}

template <class T = double>
Tensor<T> random_mask(std::mt19937_64& rng, Shape shape, double p_one = 0.5) {
  Tensor<T> t(std::move(shape));
  for (auto& x : t.data()) x = uniform01(rng) < p_one ? T{1} : T{0};
  return t;
}

// Plain triple loop, accumulated in long double.
template <class T>
Tensor<double> naive_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<double> c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a.at(i, p)) * b.at(p, j);
      c.at(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Tensor<double> naive_softmax(const Tensor<double>& s) {
  Tensor<double> out(s.shape());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    long double mx = -INFINITY, z = 0;
    for (double v : s.row(r)) mx = std::max<long double>(mx, v);
    for (double v : s.row(r)) z += std::exp(static_cast<long double>(v) - mx);
    for (std::size_t c = 0; c < s.cols(); ++c)
      out.at(r, c) = static_cast<double>(std::exp(static_cast<long double>(s.at(r, c)) - mx) / z);
  }
  return out;
}

inline Tensor<double> naive_transpose(const Tensor<double>& a) {
  Tensor<double> t(Shape{a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

}  // namespace eatt::test
