// OpenMP versions of the reference kernels. Work is split over output rows
// only, and every per-element reduction keeps the reference order, so the
// results match kernels::serial bit for bit at any thread count. Without
// OpenMP the pragmas are ignored and these run serially.

#include <cstdint>

#include "eatt/kernels.hpp"
#include "kernel_instantiate.hpp"

namespace eatt::kernels::parallel {

namespace {
using idx = std::int64_t;
}

template <class T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate, OpTally& tally) {
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(m); ++i) {
    T* crow = c.data() + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = T{0};
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b.data() + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  EATT_TALLY(tally, multiplications, m * k * n);
  EATT_TALLY(tally, additions, m * k * n);
}

template <class T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate, OpTally& tally) {
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(m); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
  EATT_TALLY(tally, multiplications, m * k * n);
  EATT_TALLY(tally, additions, m * k * n);
}

template <class T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate, OpTally& tally) {
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(m); ++i) {
    T* crow = c.data() + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = T{0};
    for (std::size_t p = 0; p < k; ++p) {
      const T api = a[p * m + i];
      const T* brow = b.data() + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
  EATT_TALLY(tally, multiplications, m * k * n);
  EATT_TALLY(tally, additions, m * k * n);
}

template <class T>
void l1_pairwise(std::span<const T> q, std::span<const T> k, std::span<T> out, std::size_t l1,
                 std::size_t l2, std::size_t d, OpTally& tally) {
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(l1); ++i) {
    for (std::size_t j = 0; j < l2; ++j) {
      T acc{0};
      for (std::size_t c = 0; c < d; ++c) {
        const T diff = q[i * d + c] - k[j * d + c];
        acc += diff < T{0} ? -diff : diff;
      }
      out[i * l2 + j] = acc;
    }
  }
  EATT_TALLY(tally, additions, l1 * l2 * d);
}

namespace {
template <class T>
T sign_of(T v) {
  return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
}
}  // namespace

template <class T>
void l1_pairwise_backward(std::span<const T> q, std::span<const T> k, std::span<const T> dout,
                          std::span<T> dq, std::span<T> dk, std::size_t l1, std::size_t l2,
                          std::size_t d) {
  if (!dq.empty()) {
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < static_cast<idx>(l1); ++i)
      for (std::size_t j = 0; j < l2; ++j) {
        const T g = dout[i * l2 + j];
        for (std::size_t c = 0; c < d; ++c) dq[i * d + c] += sign_of(q[i * d + c] - k[j * d + c]) * g;
      }
  }
  if (!dk.empty()) {
#pragma omp parallel for schedule(static)
    for (idx j = 0; j < static_cast<idx>(l2); ++j)
      for (std::size_t i = 0; i < l1; ++i) {
        const T g = dout[i * l2 + j];
        for (std::size_t c = 0; c < d; ++c) dk[j * d + c] -= sign_of(q[i * d + c] - k[j * d + c]) * g;
      }
  }
}

template <class T>
void selective_project(std::span<const T> mask, std::span<const T> w, std::span<T> out,
                       std::size_t l, std::size_t d, std::size_t n, OpTally& tally) {
  std::uint64_t gathered = 0;
#pragma omp parallel for schedule(static) reduction(+ : gathered)
  for (idx t = 0; t < static_cast<idx>(l); ++t) {
    T* dst = out.data() + t * n;
    for (std::size_t c = 0; c < n; ++c) dst[c] = T{0};
    for (std::size_t j = 0; j < d; ++j) {
      if (mask[t * d + j] == T{0}) continue;
      const T* src = w.data() + j * n;
#pragma omp simd
      for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
      ++gathered;
    }
  }
  EATT_TALLY(tally, additions, l * n);
  EATT_TALLY(tally, selections, gathered);
  (void)gathered;
}

template <class T>
void selective_project_backward_w(std::span<const T> mask, std::span<const T> dout, std::span<T> dw,
                                  std::size_t l, std::size_t d, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (idx j = 0; j < static_cast<idx>(d); ++j) {
    T* dst = dw.data() + j * n;
    for (std::size_t t = 0; t < l; ++t) {
      if (mask[t * d + j] == T{0}) continue;
      const T* src = dout.data() + t * n;
#pragma omp simd
      for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
    }
  }
}

EATT_INSTANTIATE(float)
EATT_INSTANTIATE(double)

}  // namespace eatt::kernels::parallel
