#pragma once

// Explicit instantiation list shared by the serial and parallel kernel files.
#define EATT_INSTANTIATE(T)                                                                        \
  template void gemm_nn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,    \
                           std::size_t, std::size_t, bool, OpTally&);                             \
  template void gemm_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,    \
                           std::size_t, std::size_t, bool, OpTally&);                             \
  template void gemm_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,    \
                           std::size_t, std::size_t, bool, OpTally&);                             \
  template void l1_pairwise<T>(std::span<const T>, std::span<const T>, std::span<T>,            \
                               std::size_t, std::size_t, std::size_t, OpTally&);                  \
  template void l1_pairwise_backward<T>(std::span<const T>, std::span<const T>,                 \
                                        std::span<const T>, std::span<T>, std::span<T>,          \
                                        std::size_t, std::size_t, std::size_t);                   \
  template void selective_project<T>(std::span<const T>, std::span<const T>, std::span<T>,      \
                                     std::size_t, std::size_t, std::size_t, OpTally&);            \
  template void selective_project_backward_w<T>(std::span<const T>, std::span<const T>,         \
                                                std::span<T>, std::size_t, std::size_t,          \
                                                std::size_t);
