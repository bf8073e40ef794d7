#include <atomic>

#include "eatt/error.hpp"
#include "eatt/kernels.hpp"
#include "kernel_instantiate.hpp"

#if defined(EATT_HAVE_OPENMP)
#include <omp.h>
#endif

namespace eatt::kernels {

namespace {
std::atomic<int> g_threads{1};

bool use_parallel() { return parallel_available() && g_threads.load(std::memory_order_relaxed) > 1; }
}  // namespace

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

void set_thread_count(int n) {
  if (n < 1) throw DomainError("thread count must be >= 1");
  g_threads.store(n, std::memory_order_relaxed);
#if defined(EATT_HAVE_OPENMP)
  omp_set_num_threads(n);
#endif
}

bool parallel_available() {
#if defined(EATT_HAVE_OPENMP)
  return true;
#else
  return false;
#endif
}

template <class T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate, OpTally& tally) {
  use_parallel() ? parallel::gemm_nn(a, b, c, m, k, n, accumulate, tally)
                 : serial::gemm_nn(a, b, c, m, k, n, accumulate, tally);
}

template <class T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate, OpTally& tally) {
  use_parallel() ? parallel::gemm_nt(a, b, c, m, k, n, accumulate, tally)
                 : serial::gemm_nt(a, b, c, m, k, n, accumulate, tally);
}

template <class T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate, OpTally& tally) {
  use_parallel() ? parallel::gemm_tn(a, b, c, m, k, n, accumulate, tally)
                 : serial::gemm_tn(a, b, c, m, k, n, accumulate, tally);
}

template <class T>
void l1_pairwise(std::span<const T> q, std::span<const T> k, std::span<T> out, std::size_t l1,
                 std::size_t l2, std::size_t d, OpTally& tally) {
  use_parallel() ? parallel::l1_pairwise(q, k, out, l1, l2, d, tally)
                 : serial::l1_pairwise(q, k, out, l1, l2, d, tally);
}

template <class T>
void l1_pairwise_backward(std::span<const T> q, std::span<const T> k, std::span<const T> dout,
                          std::span<T> dq, std::span<T> dk, std::size_t l1, std::size_t l2,
                          std::size_t d) {
  use_parallel() ? parallel::l1_pairwise_backward(q, k, dout, dq, dk, l1, l2, d)
                 : serial::l1_pairwise_backward(q, k, dout, dq, dk, l1, l2, d);
}

template <class T>
void selective_project(std::span<const T> mask, std::span<const T> w, std::span<T> out,
                       std::size_t l, std::size_t d, std::size_t n, OpTally& tally) {
  use_parallel() ? parallel::selective_project(mask, w, out, l, d, n, tally)
                 : serial::selective_project(mask, w, out, l, d, n, tally);
}

template <class T>
void selective_project_backward_w(std::span<const T> mask, std::span<const T> dout, std::span<T> dw,
                                  std::size_t l, std::size_t d, std::size_t n) {
  use_parallel() ? parallel::selective_project_backward_w(mask, dout, dw, l, d, n)
                 : serial::selective_project_backward_w(mask, dout, dw, l, d, n);
}

EATT_INSTANTIATE(float)
EATT_INSTANTIATE(double)

}  // namespace eatt::kernels
