#include "eatt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eatt/error.hpp"
#include "eatt/kernels.hpp"
#include "eatt/op_counter.hpp"

namespace eatt {

namespace {

template <class T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
  if (!a.valid() || a.tape() != b.tape()) throw ProvenanceError("operands live on different tapes");
  return *a.tape();
}

template <class T>
void check_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

template <class T>
void debug_check_finite([[maybe_unused]] const Tensor<T>& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  if (!t.all_finite()) throw ContractError(std::string(op) + " produced a non-finite value");
#endif
}

void charge_adds(std::uint64_t n) {
  OpTally t;
  EATT_TALLY(t, additions, n);
  counter::charge(t);
}

void charge_muls(std::uint64_t n) {
  OpTally t;
  EATT_TALLY(t, multiplications, n);
  counter::charge(t);
}

// Leading (batch) axes of a rank >= 2 tensor, as a count.
std::size_t batch_count(const Shape& s) {
  std::size_t b = 1;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) b *= s[i];
  return b;
}

bool same_batch_axes(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) return false;
  return std::equal(a.begin(), a.end() - 2, b.begin());
}

template <class T>
void require_rank_at_least(const char* op, const Var<T>& a, std::size_t r) {
  if (a.shape().size() < r)
    throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(r) + ", got " +
                         shape_str(a.shape()));
}

thread_local OpTally g_discard;  // backward kernels write here; never charged

}  // namespace

// ---------------------------------------------------------------- elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  check_same_shape("add", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  charge_adds(out.numel());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, "add", [ia, ib](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    for (std::size_t in : {ia, ib}) {
      if (!tp.requires_grad(in)) continue;
      auto& gi = tp.grad_ref(in);
      for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  check_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  charge_adds(out.numel());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, "sub", [ia, ib](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    if (tp.requires_grad(ia)) {
      auto& gi = tp.grad_ref(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      auto& gi = tp.grad_ref(ib);
      for (std::size_t i = 0; i < g.numel(); ++i) gi[i] -= g[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  check_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  charge_muls(out.numel());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, "mul", [ia, ib](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    if (tp.requires_grad(ia)) {
      auto& gi = tp.grad_ref(ia);
      const auto& other = tp.value(ib);
      for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * other[i];
    }
    if (tp.requires_grad(ib)) {
      auto& gi = tp.grad_ref(ib);
      const auto& other = tp.value(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * other[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  charge_muls(out.numel());
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "scale", [ia, s](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gi = tp.grad_ref(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * s;
  });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = -v;
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "neg", [ia](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gi = tp.grad_ref(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gi[i] -= g[i];
  });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = std::exp(v);
  debug_check_finite(out, "exp");
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "exp", [ia](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& y = tp.value(self);
    auto& gi = tp.grad_ref(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * y[i];
  });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "relu", [ia](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& x = tp.value(ia);
    auto& gi = tp.grad_ref(ia);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x[i] > T{0}) gi[i] += g[i];
  });
}

template <class T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  Tape<T>& tape = same_tape(a, row);
  const std::size_t n = a.value().cols();
  if (row.value().numel() != n)
    throw DimensionError("add_row: row " + shape_str(row.shape()) + " vs " + shape_str(a.shape()));
  Tensor<T> out = a.value();
  const auto& rv = row.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) += rv[c];
  charge_adds(out.numel());
  const std::size_t ia = a.id(), ir = row.id();
  return tape.record(std::move(out), {a, row}, "add_row", [ia, ir, n](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    if (tp.requires_grad(ia)) {
      auto& gi = tp.grad_ref(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
    }
    if (tp.requires_grad(ir)) {
      auto& gr = tp.grad_ref(ir);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) gr[c] += g.at(r, c);
    }
  });
}

// ---------------------------------------------------------------- reductions

template <class T>
Var<T> sum(const Var<T>& a) {
  T acc{0};
  for (T v : a.value().data()) acc += v;
  charge_adds(a.value().numel() - 1);
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor<T>::scalar(acc), {a}, "sum", [ia](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad_of(self)[0];
    auto& gi = tp.grad_ref(ia);
    for (auto& v : gi.data()) v += g;
  });
}

template <class T>
Var<T> sum_axis(const Var<T>& a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw DimensionError("sum_axis: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<T> out(out_shape, T{0});
  const auto& x = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * n + k) * inner + i];
  charge_adds(outer * inner * (n - 1));
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "sum_axis",
                          [ia, outer, inner, n](Tape<T>& tp, std::size_t self) {
                            const auto& g = tp.grad_of(self);
                            auto& gi = tp.grad_ref(ia);
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t k = 0; k < n; ++k)
                                for (std::size_t i = 0; i < inner; ++i)
                                  gi[(o * n + k) * inner + i] += g[o * inner + i];
                          });
}

template <class T>
std::vector<std::size_t> argmax(const Tensor<T>& a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw DimensionError("argmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  std::vector<std::size_t> out(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < n; ++k)
        if (a[(o * n + k) * inner + i] > a[(o * n + best) * inner + i]) best = k;
      out[o * inner + i] = best;
    }
  return out;
}

// ---------------------------------------------------------------- layout

template <class T>
Var<T> transpose(const Var<T>& a) {
  require_rank_at_least("transpose", a, 2);
  const Shape& s = a.shape();
  const std::size_t r = s[s.size() - 2], c = s.back(), batch = batch_count(s);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape.back());
  Tensor<T> out(out_shape);
  const auto& x = a.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = x[b * r * c + i * c + j];
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "transpose",
                          [ia, r, c, batch](Tape<T>& tp, std::size_t self) {
                            const auto& g = tp.grad_of(self);
                            auto& gi = tp.grad_ref(ia);
                            for (std::size_t b = 0; b < batch; ++b)
                              for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j)
                                  gi[b * r * c + i * c + j] += g[b * r * c + j * r + i];
                          });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "reshape", [ia](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gi = tp.grad_ref(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
  });
}

template <class T>
Var<T> tile(const Var<T>& a, std::size_t times) {
  if (times == 0) throw DimensionError("tile: times must be positive");
  Shape out_shape{times};
  out_shape.insert(out_shape.end(), a.shape().begin(), a.shape().end());
  const auto& x = a.value();
  const std::size_t n = x.numel();
  std::vector<T> data;
  data.reserve(times * n);
  for (std::size_t t = 0; t < times; ++t) data.insert(data.end(), x.data().begin(), x.data().end());
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor<T>(out_shape, std::move(data)), {a}, "tile",
                          [ia, times, n](Tape<T>& tp, std::size_t self) {
                            const auto& g = tp.grad_of(self);
                            auto& gi = tp.grad_ref(ia);
                            for (std::size_t t = 0; t < times; ++t)
                              for (std::size_t i = 0; i < n; ++i) gi[i] += g[t * n + i];
                          });
}

template <class T>
Var<T> slice2d(const Var<T>& a, std::size_t r, std::size_t c) {
  if (a.shape().size() != 2) throw DimensionError("slice2d: expected a matrix, got " + shape_str(a.shape()));
  const std::size_t R = a.shape()[0], C = a.shape()[1];
  if (r == 0 || c == 0 || r > R || c > C)
    throw CapacityError("slice2d: [" + std::to_string(r) + "x" + std::to_string(c) +
                        "] exceeds " + shape_str(a.shape()));
  Tensor<T> out(Shape{r, c});
  const auto& x = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = x.at(i, j);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "slice2d", [ia, r, c](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gi = tp.grad_ref(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gi.at(i, j) += g.at(i, j);
  });
}

// ---------------------------------------------------------------- products

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (bv.rank() != 2 || av.cols() != bv.dim(0))
    throw DimensionError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.dim(1);
  Shape out_shape = av.shape();
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  OpTally tally;
  kernels::gemm_nn<T>(av.data(), bv.data(), out.data(), m, k, n, false, tally);
  counter::charge(tally);
  debug_check_finite(out, "matmul");
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, "matmul", [ia, ib, m, k, n](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    if (tp.requires_grad(ia))
      kernels::gemm_nt<T>(g.data(), tp.value(ib).data(), tp.grad_ref(ia).data(), m, n, k, true, g_discard);
    if (tp.requires_grad(ib))
      kernels::gemm_tn<T>(tp.value(ia).data(), g.data(), tp.grad_ref(ib).data(), k, m, n, true, g_discard);
  });
}

template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_rank_at_least("bmm", a, 2);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (!same_batch_axes(as, bs) || as.back() != bs[bs.size() - 2])
    throw DimensionError("bmm: " + shape_str(as) + " x " + shape_str(bs));
  const std::size_t batch = batch_count(as), m = as[as.size() - 2], k = as.back(), n = bs.back();
  Shape out_shape = as;
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  OpTally tally;
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t p = 0; p < batch; ++p)
    kernels::gemm_nn<T>(av.data().subspan(p * m * k, m * k), bv.data().subspan(p * k * n, k * n),
                        out.data().subspan(p * m * n, m * n), m, k, n, false, tally);
  counter::charge(tally);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, "bmm",
                     [ia, ib, batch, m, k, n](Tape<T>& tp, std::size_t self) {
                       const auto& g = tp.grad_of(self);
                       for (std::size_t p = 0; p < batch; ++p) {
                         auto gp = g.data().subspan(p * m * n, m * n);
                         if (tp.requires_grad(ia))
                           kernels::gemm_nt<T>(gp, tp.value(ib).data().subspan(p * k * n, k * n),
                                               tp.grad_ref(ia).data().subspan(p * m * k, m * k), m, n, k,
                                               true, g_discard);
                         if (tp.requires_grad(ib))
                           kernels::gemm_tn<T>(tp.value(ia).data().subspan(p * m * k, m * k), gp,
                                               tp.grad_ref(ib).data().subspan(p * k * n, k * n), k, m, n,
                                               true, g_discard);
                       }
                     });
}

template <class T>
Var<T> bmm_nt(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_rank_at_least("bmm_nt", a, 2);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (!same_batch_axes(as, bs) || as.back() != bs.back())
    throw DimensionError("bmm_nt: " + shape_str(as) + " x " + shape_str(bs) + "^T");
  const std::size_t batch = batch_count(as), m = as[as.size() - 2], k = as.back(), n = bs[bs.size() - 2];
  Shape out_shape = as;
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  OpTally tally;
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t p = 0; p < batch; ++p)
    kernels::gemm_nt<T>(av.data().subspan(p * m * k, m * k), bv.data().subspan(p * n * k, n * k),
                        out.data().subspan(p * m * n, m * n), m, k, n, false, tally);
  counter::charge(tally);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, "bmm_nt",
                     [ia, ib, batch, m, k, n](Tape<T>& tp, std::size_t self) {
                       const auto& g = tp.grad_of(self);
                       for (std::size_t p = 0; p < batch; ++p) {
                         auto gp = g.data().subspan(p * m * n, m * n);
                         if (tp.requires_grad(ia))
                           kernels::gemm_nn<T>(gp, tp.value(ib).data().subspan(p * n * k, n * k),
                                               tp.grad_ref(ia).data().subspan(p * m * k, m * k), m, n, k,
                                               true, g_discard);
                         if (tp.requires_grad(ib))
                           kernels::gemm_tn<T>(gp, tp.value(ia).data().subspan(p * m * k, m * k),
                                               tp.grad_ref(ib).data().subspan(p * n * k, n * k), n, m, k,
                                               true, g_discard);
                       }
                     });
}

template <class T>
Var<T> l1_pairwise(const Var<T>& q, const Var<T>& k) {
  Tape<T>& tape = same_tape(q, k);
  require_rank_at_least("l1_pairwise", q, 2);
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  if (!same_batch_axes(qs, ks) || qs.back() != ks.back())
    throw DimensionError("l1_pairwise: " + shape_str(qs) + " vs " + shape_str(ks));
  const std::size_t batch = batch_count(qs), l1 = qs[qs.size() - 2], l2 = ks[ks.size() - 2], d = qs.back();
  Shape out_shape = qs;
  out_shape.back() = l2;
  Tensor<T> out(out_shape);
  OpTally tally;
  const auto& qv = q.value();
  const auto& kv = k.value();
  for (std::size_t p = 0; p < batch; ++p)
    kernels::l1_pairwise<T>(qv.data().subspan(p * l1 * d, l1 * d), kv.data().subspan(p * l2 * d, l2 * d),
                            out.data().subspan(p * l1 * l2, l1 * l2), l1, l2, d, tally);
  counter::charge(tally);
  const std::size_t iq = q.id(), ik = k.id();
  return tape.record(std::move(out), {q, k}, "l1_pairwise",
                     [iq, ik, batch, l1, l2, d](Tape<T>& tp, std::size_t self) {
                       const auto& g = tp.grad_of(self);
                       const bool need_q = tp.requires_grad(iq), need_k = tp.requires_grad(ik);
                       for (std::size_t p = 0; p < batch; ++p) {
                         std::span<T> dq, dk;
                         if (need_q) dq = tp.grad_ref(iq).data().subspan(p * l1 * d, l1 * d);
                         if (need_k) dk = tp.grad_ref(ik).data().subspan(p * l2 * d, l2 * d);
                         kernels::l1_pairwise_backward<T>(tp.value(iq).data().subspan(p * l1 * d, l1 * d),
                                                          tp.value(ik).data().subspan(p * l2 * d, l2 * d),
                                                          g.data().subspan(p * l1 * l2, l1 * l2), dq, dk,
                                                          l1, l2, d);
                       }
                     });
}

// ---------------------------------------------------------------- masking and softmax

namespace {

// Offset of the mask entry applied to flat score index e.
template <class T>
struct MaskIndexer {
  const Tensor<T>* mask = nullptr;
  std::size_t plane = 0;          // l1 * l2
  std::size_t planes_per_mask = 1;

  static MaskIndexer make(const Shape& scores, const Tensor<T>* mask, const char* op) {
    MaskIndexer ix;
    ix.mask = mask;
    if (!mask) return ix;
    if (scores.size() < 2) throw DimensionError(std::string(op) + ": scores must be at least 2-D");
    const std::size_t l1 = scores[scores.size() - 2], l2 = scores.back();
    ix.plane = l1 * l2;
    const Shape& ms = mask->shape();
    const std::size_t planes = batch_count(scores);
    if (ms.size() == 2 && ms[0] == l1 && ms[1] == l2) {
      ix.planes_per_mask = planes;  // shared by every plane
      return ix;
    }
    if (ms.size() == 3 && scores.size() >= 3 && ms[0] == scores[0] && ms[1] == l1 && ms[2] == l2) {
      ix.planes_per_mask = planes / ms[0];
      return ix;
    }
    throw DimensionError(std::string(op) + ": mask " + shape_str(ms) + " does not fit scores " +
                         shape_str(scores));
  }

  T at(std::size_t e) const {
    const std::size_t p = e / plane;
    const std::size_t o = e % plane;
    const std::size_t m = mask->rank() == 2 ? 0 : p / planes_per_mask;
    return (*mask)[m * plane + o];
  }
};

}  // namespace

template <class T>
Var<T> add_mask(const Var<T>& scores, const Tensor<T>& mask) {
  auto ix = MaskIndexer<T>::make(scores.shape(), &mask, "add_mask");
  Tensor<T> out = scores.value();
  for (std::size_t e = 0; e < out.numel(); ++e) out[e] += ix.at(e);
  charge_adds(out.numel());
  const std::size_t is = scores.id();
  return scores.tape()->record(std::move(out), {scores}, "add_mask", [is](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gi = tp.grad_ref(is);
    for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
  });
}

template <class T>
Var<T> softmax_rows(const Var<T>& scores, T temperature, const Tensor<T>* mask) {
  auto ix = MaskIndexer<T>::make(scores.shape(), mask, "softmax_rows");
  const auto& s = scores.value();
  Tensor<T> out(s.shape());
  const std::size_t rows = s.rows(), n = s.cols();
  std::vector<T> z(n);
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t e = r * n + c;
      z[c] = temperature * s[e] + (mask ? ix.at(e) : T{0});
      if (z[c] > mx) mx = z[c];
    }
    if (!std::isfinite(mx))
      throw DegenerateError("softmax_rows: row " + std::to_string(r) + " has no finite entry");
    T total{0};
    for (std::size_t c = 0; c < n; ++c) {
      const T v = z[c] == -std::numeric_limits<T>::infinity() ? T{0} : std::exp(z[c] - mx);
      out[r * n + c] = v;
      total += v;
    }
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= total;
  }
  const std::size_t is = scores.id();
  return scores.tape()->record(std::move(out), {scores}, "softmax_rows",
                               [is, rows, n, temperature](Tape<T>& tp, std::size_t self) {
                                 const auto& g = tp.grad_of(self);
                                 const auto& y = tp.value(self);
                                 auto& gi = tp.grad_ref(is);
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   T dot{0};
                                   for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
                                   for (std::size_t c = 0; c < n; ++c)
                                     gi[r * n + c] += temperature * y[r * n + c] * (g[r * n + c] - dot);
                                 }
                               });
}

template <class T>
Tensor<T> causal_mask(std::size_t l1, std::size_t l2) {
  Tensor<T> m(Shape{l1, l2}, T{0});
  for (std::size_t i = 0; i < l1; ++i)
    for (std::size_t j = i + 1; j < l2; ++j) m.at(i, j) = -std::numeric_limits<T>::infinity();
  return m;
}

// ---------------------------------------------------------------- model building blocks

template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  Tape<T>& tape = same_tape(x, gain);
  same_tape(x, bias);
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), n = xv.cols();
  if (gain.value().numel() != n || bias.value().numel() != n)
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(xv.numel()), inv_std(rows);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T mean{0};
    for (std::size_t c = 0; c < n; ++c) mean += xv.at(r, c);
    mean /= static_cast<T>(n);
    T var{0};
    for (std::size_t c = 0; c < n; ++c) {
      const T dlt = xv.at(r, c) - mean;
      var += dlt * dlt;
    }
    var /= static_cast<T>(n);
    inv_std[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (xv.at(r, c) - mean) * inv_std[r];
      out.at(r, c) = xhat[r * n + c] * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape.record(std::move(out), {x, gain, bias}, "layer_norm",
                     [ix, ig, ib, rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                         Tape<T>& tp, std::size_t self) {
                       const auto& g = tp.grad_of(self);
                       const auto& gv = tp.value(ig);
                       if (tp.requires_grad(ig)) {
                         auto& gg = tp.grad_ref(ig);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < n; ++c) gg[c] += g[r * n + c] * xhat[r * n + c];
                       }
                       if (tp.requires_grad(ib)) {
                         auto& gb = tp.grad_ref(ib);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
                       }
                       if (tp.requires_grad(ix)) {
                         auto& gx = tp.grad_ref(ix);
                         const T inv_n = T{1} / static_cast<T>(n);
                         for (std::size_t r = 0; r < rows; ++r) {
                           T sum_dy{0}, sum_dy_xhat{0};
                           for (std::size_t c = 0; c < n; ++c) {
                             const T dy = g[r * n + c] * gv[c];
                             sum_dy += dy;
                             sum_dy_xhat += dy * xhat[r * n + c];
                           }
                           for (std::size_t c = 0; c < n; ++c) {
                             const T dy = g[r * n + c] * gv[c];
                             gx[r * n + c] +=
                                 inv_std[r] * (dy - inv_n * sum_dy - xhat[r * n + c] * inv_n * sum_dy_xhat);
                           }
                         }
                       }
                     });
}

template <class T>
Var<T> embedding(const Var<T>& table, std::span<const int> ids) {
  const auto& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("embedding: table must be a matrix");
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  if (ids.empty()) throw DimensionError("embedding: no ids");
  Tensor<T> out(Shape{ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab)
      throw ContractError("embedding: id " + std::to_string(ids[t]) + " outside vocabulary");
    std::copy_n(tv.row(ids[t]).begin(), d, out.row(t).begin());
  }
  const std::size_t it = table.id();
  std::vector<int> saved(ids.begin(), ids.end());
  return table.tape()->record(std::move(out), {table}, "embedding",
                              [it, d, saved = std::move(saved)](Tape<T>& tp, std::size_t self) {
                                const auto& g = tp.grad_of(self);
                                auto& gt = tp.grad_ref(it);
                                for (std::size_t t = 0; t < saved.size(); ++t)
                                  for (std::size_t c = 0; c < d; ++c) gt.at(saved[t], c) += g.at(t, c);
                              });
}

template <class T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> targets, int ignore) {
  const auto& lv = logits.value();
  if (lv.rank() != 2 || lv.dim(0) != targets.size())
    throw DimensionError("cross_entropy: logits " + shape_str(lv.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  const std::size_t n = lv.dim(0), v = lv.dim(1);
  Tensor<T> probs(lv.shape());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < n; ++r) {
    T mx = lv.at(r, 0);
    for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, lv.at(r, c));
    T z{0};
    for (std::size_t c = 0; c < v; ++c) {
      probs.at(r, c) = std::exp(lv.at(r, c) - mx);
      z += probs.at(r, c);
    }
    for (std::size_t c = 0; c < v; ++c) probs.at(r, c) /= z;
    if (targets[r] == ignore) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v)
      throw ContractError("cross_entropy: target " + std::to_string(targets[r]) + " outside vocabulary");
    total += static_cast<double>(std::log(z) + mx - lv.at(r, targets[r]));
    ++counted;
  }
  if (counted == 0) throw DegenerateError("cross_entropy: every target is ignored");
  const T loss = static_cast<T>(total / static_cast<double>(counted));
  const std::size_t il = logits.id();
  std::vector<int> saved(targets.begin(), targets.end());
  return logits.tape()->record(
      Tensor<T>::scalar(loss), {logits}, "cross_entropy",
      [il, n, v, ignore, counted, probs = std::move(probs), saved = std::move(saved)](Tape<T>& tp,
                                                                                     std::size_t self) {
        const T g = tp.grad_of(self)[0] / static_cast<T>(counted);
        auto& gl = tp.grad_ref(il);
        for (std::size_t r = 0; r < n; ++r) {
          if (saved[r] == ignore) continue;
          for (std::size_t c = 0; c < v; ++c) gl.at(r, c) += g * probs.at(r, c);
          gl.at(r, saved[r]) -= g;
        }
      });
}

template <class T>
Var<T> dropout(const Var<T>& a, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw DomainError("dropout rate must lie in [0, 1)");
  if (p == 0.0) return a;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> keep(a.value().numel());
  for (auto& k : keep) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    k = u < p ? T{0} : keep_scale;
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= keep[i];
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, "dropout", [ia, keep = std::move(keep)](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gi = tp.grad_ref(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * keep[i];
  });
}

template <class T>
Var<T> split_heads(const Var<T>& x, std::size_t heads) {
  const Shape& s = x.shape();
  if (s.size() != 2 && s.size() != 3) throw DimensionError("split_heads: expected [L, D] or [B, L, D]");
  const std::size_t D = s.back(), L = s[s.size() - 2], B = s.size() == 3 ? s[0] : 1;
  if (heads == 0 || D % heads != 0)
    throw DimensionError("split_heads: dimension " + std::to_string(D) + " not divisible by " +
                         std::to_string(heads) + " heads");
  const std::size_t dh = D / heads;
  Shape out_shape = s.size() == 3 ? Shape{B, heads, L, dh} : Shape{heads, L, dh};
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  auto src = [=](std::size_t b, std::size_t h, std::size_t t, std::size_t c) { return (b * L + t) * D + h * dh + c; };
  auto dst = [=](std::size_t b, std::size_t h, std::size_t t, std::size_t c) {
    return ((b * heads + h) * L + t) * dh + c;
  };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < dh; ++c) out[dst(b, h, t, c)] = xv[src(b, h, t, c)];
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {x}, "split_heads",
                          [ix, B, heads, L, dh, src, dst](Tape<T>& tp, std::size_t self) {
                            const auto& g = tp.grad_of(self);
                            auto& gx = tp.grad_ref(ix);
                            for (std::size_t b = 0; b < B; ++b)
                              for (std::size_t h = 0; h < heads; ++h)
                                for (std::size_t t = 0; t < L; ++t)
                                  for (std::size_t c = 0; c < dh; ++c) gx[src(b, h, t, c)] += g[dst(b, h, t, c)];
                          });
}

template <class T>
Var<T> merge_heads(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 3 && s.size() != 4) throw DimensionError("merge_heads: expected [h, L, dh] or [B, h, L, dh]");
  const std::size_t dh = s.back(), L = s[s.size() - 2], heads = s[s.size() - 3], B = s.size() == 4 ? s[0] : 1;
  const std::size_t D = heads * dh;
  Shape out_shape = s.size() == 4 ? Shape{B, L, D} : Shape{L, D};
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  auto merged = [=](std::size_t b, std::size_t h, std::size_t t, std::size_t c) { return (b * L + t) * D + h * dh + c; };
  auto split = [=](std::size_t b, std::size_t h, std::size_t t, std::size_t c) {
    return ((b * heads + h) * L + t) * dh + c;
  };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < dh; ++c) out[merged(b, h, t, c)] = xv[split(b, h, t, c)];
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {x}, "merge_heads",
                          [ix, B, heads, L, dh, merged, split](Tape<T>& tp, std::size_t self) {
                            const auto& g = tp.grad_of(self);
                            auto& gx = tp.grad_ref(ix);
                            for (std::size_t b = 0; b < B; ++b)
                              for (std::size_t h = 0; h < heads; ++h)
                                for (std::size_t t = 0; t < L; ++t)
                                  for (std::size_t c = 0; c < dh; ++c) gx[split(b, h, t, c)] += g[merged(b, h, t, c)];
                          });
}

#define EATT_OPS_INSTANTIATE(T)                                                            \
  template Var<T> add(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale(const Var<T>&, T);                                                 \
  template Var<T> neg(const Var<T>&);                                                      \
  template Var<T> exp(const Var<T>&);                                                      \
  template Var<T> relu(const Var<T>&);                                                     \
  template Var<T> add_row(const Var<T>&, const Var<T>&);                                   \
  template Var<T> sum(const Var<T>&);                                                      \
  template Var<T> sum_axis(const Var<T>&, std::size_t);                                    \
  template std::vector<std::size_t> argmax(const Tensor<T>&, std::size_t);                 \
  template Var<T> transpose(const Var<T>&);                                                \
  template Var<T> reshape(const Var<T>&, Shape);                                           \
  template Var<T> tile(const Var<T>&, std::size_t);                                        \
  template Var<T> slice2d(const Var<T>&, std::size_t, std::size_t);                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                    \
  template Var<T> bmm(const Var<T>&, const Var<T>&);                                       \
  template Var<T> bmm_nt(const Var<T>&, const Var<T>&);                                    \
  template Var<T> l1_pairwise(const Var<T>&, const Var<T>&);                               \
  template Var<T> add_mask(const Var<T>&, const Tensor<T>&);                               \
  template Var<T> softmax_rows(const Var<T>&, T, const Tensor<T>*);                        \
  template Tensor<T> causal_mask<T>(std::size_t, std::size_t);                             \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);              \
  template Var<T> embedding(const Var<T>&, std::span<const int>);                          \
  template Var<T> cross_entropy(const Var<T>&, std::span<const int>, int);                 \
  template Var<T> dropout(const Var<T>&, double, std::mt19937_64&);                        \
  template Var<T> split_heads(const Var<T>&, std::size_t);                                 \
  template Var<T> merge_heads(const Var<T>&);

EATT_OPS_INSTANTIATE(float)
EATT_OPS_INSTANTIATE(double)

}  // namespace eatt
