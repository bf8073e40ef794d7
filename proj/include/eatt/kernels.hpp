#pragma once

// Raw compute kernels over row-major spans. Two implementations share every
// signature: `serial` is the reference, `parallel` splits the outer loop
// across OpenMP threads. Each output element is produced by exactly one
// thread with the same summation order as the reference, so both give
// bit-identical results. The unqualified functions in `kernels` dispatch on
// thread_count().
//
// Forward kernels report executed arithmetic into an OpTally:
//   gemm            one multiplication and one addition per multiply-accumulate
//   l1_pairwise     one addition per absolute-difference-accumulate term
//   selective_proj  one addition per output element; gathered rows go to
//                   `selections`
// Backward kernels take no tally.

#include <cstddef>
#include <span>

#include "eatt/op_counter.hpp"

namespace eatt::kernels {

#define EATT_KERNEL_DECLS                                                                        \
  /* c[m x n] (+)= a[m x k] * b[k x n] */                                                        \
  template <class T>                                                                             \
  void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,      \
               std::size_t k, std::size_t n, bool accumulate, OpTally& tally);                  \
  /* c[m x n] (+)= a[m x k] * b[n x k]^T */                                                      \
  template <class T>                                                                             \
  void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,      \
               std::size_t k, std::size_t n, bool accumulate, OpTally& tally);                  \
  /* c[m x n] (+)= a[k x m]^T * b[k x n] */                                                      \
  template <class T>                                                                             \
  void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,      \
               std::size_t k, std::size_t n, bool accumulate, OpTally& tally);                  \
  /* out[i][j] = sum_c |q[i][c] - k[j][c]| */                                                    \
  template <class T>                                                                             \
  void l1_pairwise(std::span<const T> q, std::span<const T> k, std::span<T> out,               \
                   std::size_t l1, std::size_t l2, std::size_t d, OpTally& tally);              \
  /* dq += sign(q-k) dout, dk -= sign(q-k) dout, with sign(0) = 0 */                             \
  template <class T>                                                                             \
  void l1_pairwise_backward(std::span<const T> q, std::span<const T> k,                        \
                            std::span<const T> dout, std::span<T> dq, std::span<T> dk,          \
                            std::size_t l1, std::size_t l2, std::size_t d);                     \
  /* out[t] = sum of w rows j where mask[t][j] == 1, ascending j */                              \
  template <class T>                                                                             \
  void selective_project(std::span<const T> mask, std::span<const T> w, std::span<T> out,      \
                         std::size_t l, std::size_t d, std::size_t n, OpTally& tally);          \
  /* dw[j] += sum of dout rows t where mask[t][j] == 1, ascending t */                           \
  template <class T>                                                                             \
  void selective_project_backward_w(std::span<const T> mask, std::span<const T> dout,          \
                                    std::span<T> dw, std::size_t l, std::size_t d,              \
                                    std::size_t n);

namespace serial {
EATT_KERNEL_DECLS
}

namespace parallel {
EATT_KERNEL_DECLS
}

EATT_KERNEL_DECLS

#undef EATT_KERNEL_DECLS

// Threads used by the dispatching kernels. 1 (the default) selects the
// serial path; values above 1 select the OpenMP path when it was built.
int thread_count();
void set_thread_count(int n);
bool parallel_available();

}  // namespace eatt::kernels
