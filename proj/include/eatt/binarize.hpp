#pragma once

#include <span>
#include <string>
#include <vector>

#include "eatt/tape.hpp"
#include "eatt/tensor.hpp"

namespace eatt {

struct BinarizeSpec {
  double tau = 1.0;
};

// Fraction of ones in one binarized representation, tagged by where it was
// taken: encoder-self, decoder-self, decoder-cross-query, decoder-cross-key.
struct NonzeroStats {
  std::string module_label;
  int layer_index = 1;
  double rho = 0.0;
};

// 1 where x > tau (strict), else 0.
template <class T>
Tensor<T> binarize(const Tensor<T>& x, const BinarizeSpec& spec);

// Recorded threshold. The backward rule is surrogate_grad evaluated on the
// forward input; the node's rule name is "binarize_surrogate".
template <class T>
Var<T> binarize(const Var<T>& x, const BinarizeSpec& spec);

// upstream * sqrt(2/pi) * exp(-2 (x - tau)^2)
template <class T>
Tensor<T> surrogate_grad(const Tensor<T>& x, const Tensor<T>& upstream, const BinarizeSpec& spec);

// x_bin[..., d] (entries exactly 0 or 1) times w[d, n], computed by summing
// the selected rows of w in ascending index order. No multiplications;
// equal to matmul(x_bin, w) bit for bit.
template <class T>
Var<T> selective_project(const Var<T>& x_bin, const Var<T>& w);

// Count of ones over element count. Throws DegenerateError on empty input
// and ContractError when an entry is neither 0 nor 1.
template <class T>
double nonzero_ratio(std::span<const T> x_bin);

template <class T>
double nonzero_ratio(const Tensor<T>& x_bin) {
  return nonzero_ratio<T>(x_bin.data());
}

// "module_label,layer_index,rho" header plus one row per entry, rho with
// five decimals.
std::string stats_to_csv(std::span<const NonzeroStats> stats);

}  // namespace eatt
