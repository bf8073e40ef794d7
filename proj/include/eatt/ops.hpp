#pragma once

// Differentiable tensor operations recorded on a Tape.
//
// Shapes: "[..., n]" means any number of leading axes, which are treated as
// independent rows. Batched products take matching leading axes on both
// operands. Ops charge the active CountScope for the arithmetic they execute
// in the forward pass; activations, normalisation and data movement are free.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "eatt/tape.hpp"
#include "eatt/tensor.hpp"

namespace eatt {

// Elementwise, identical shapes.
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> neg(const Var<T>& a);
template <class T> Var<T> exp(const Var<T>& a);
template <class T> Var<T> relu(const Var<T>& a);

// a[..., n] + row[n]
template <class T> Var<T> add_row(const Var<T>& a, const Var<T>& row);

// Sum of every element, as a one-element tensor.
template <class T> Var<T> sum(const Var<T>& a);
// Reduces one axis away; summing the only axis of a rank-1 tensor gives [1].
template <class T> Var<T> sum_axis(const Var<T>& a, std::size_t axis);

// Swaps the last two axes.
template <class T> Var<T> transpose(const Var<T>& a);
template <class T> Var<T> reshape(const Var<T>& a, Shape shape);
// Stacks `times` copies of `a` along a new leading axis.
template <class T> Var<T> tile(const Var<T>& a, std::size_t times);
// a[rows x cols] restricted to rows [0, r) and columns [0, c).
template <class T> Var<T> slice2d(const Var<T>& a, std::size_t r, std::size_t c);

// Index of the largest element along `axis` (first one on ties). The result
// has the reduced axis removed.
template <class T> std::vector<std::size_t> argmax(const Tensor<T>& a, std::size_t axis);

// a[..., k] x b[k, n] -> [..., n]
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// a[B..., m, k] x b[B..., k, n] -> [B..., m, n]
template <class T> Var<T> bmm(const Var<T>& a, const Var<T>& b);
// a[B..., m, k] x b[B..., n, k]^T -> [B..., m, n]
template <class T> Var<T> bmm_nt(const Var<T>& a, const Var<T>& b);

// q[B..., l1, d], k[B..., l2, d] -> [B..., l1, l2], out = sum_c |q - k|.
// Gradient uses sign(q - k) with sign(0) = 0.
template <class T> Var<T> l1_pairwise(const Var<T>& q, const Var<T>& k);

// Additive mask of 0 / -inf entries. Scores are [..., l1, l2]; the mask is
// either [l1, l2] (shared) or [B, l1, l2] where B is the first score axis.
template <class T> Var<T> add_mask(const Var<T>& scores, const Tensor<T>& mask);

// Softmax over the last axis of (temperature * scores + mask). A -inf entry
// maps to exactly 0. A row with no finite entry throws DegenerateError.
template <class T>
Var<T> softmax_rows(const Var<T>& scores, T temperature = T{1}, const Tensor<T>* mask = nullptr);

template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5));

// table[V, d] gathered at `ids` -> [ids.size(), d]
template <class T> Var<T> embedding(const Var<T>& table, std::span<const int> ids);

// Mean token cross-entropy of logits[N, V]; targets equal to `ignore` are
// skipped. Throws DegenerateError when every target is ignored.
template <class T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> targets, int ignore);

// Inverted dropout. p == 0 returns `a` itself.
template <class T> Var<T> dropout(const Var<T>& a, double p, std::mt19937_64& rng);

// [B, L, h*dh] <-> [B, h, L, dh]
template <class T> Var<T> split_heads(const Var<T>& x, std::size_t heads);
template <class T> Var<T> merge_heads(const Var<T>& x);

// Builds the 0 / -inf causal mask: entry (i, j) is -inf for j > i.
template <class T> Tensor<T> causal_mask(std::size_t l1, std::size_t l2);

}  // namespace eatt
