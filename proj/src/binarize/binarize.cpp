#include "eatt/binarize.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "eatt/error.hpp"
#include "eatt/kernels.hpp"
#include "eatt/op_counter.hpp"

namespace eatt {

namespace {

template <class T>
void require_finite(const Tensor<T>& x) {
  if (!x.all_finite()) throw ContractError("binarize: input contains a non-finite value");
}

template <class T>
void require_binary(std::span<const T> x, const char* op) {
  for (T v : x)
    if (v != T{0} && v != T{1})
      throw ContractError(std::string(op) + ": input is not {0,1}-valued");
}

thread_local OpTally g_discard;

}  // namespace

template <class T>
Tensor<T> binarize(const Tensor<T>& x, const BinarizeSpec& spec) {
  require_finite(x);
  const T tau = static_cast<T>(spec.tau);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > tau ? T{1} : T{0};
  return out;
}

template <class T>
Tensor<T> surrogate_grad(const Tensor<T>& x, const Tensor<T>& upstream, const BinarizeSpec& spec) {
  if (x.shape() != upstream.shape())
    throw DimensionError("surrogate_grad: " + shape_str(x.shape()) + " vs " + shape_str(upstream.shape()));
  const double peak = std::sqrt(2.0 / std::numbers::pi);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double dx = static_cast<double>(x[i]) - spec.tau;
    out[i] = static_cast<T>(static_cast<double>(upstream[i]) * peak * std::exp(-2.0 * dx * dx));
  }
  return out;
}

template <class T>
Var<T> binarize(const Var<T>& x, const BinarizeSpec& spec) {
  const std::size_t ix = x.id();
  return x.tape()->record(binarize(x.value(), spec), {x}, "binarize_surrogate",
                          [ix, spec](Tape<T>& tp, std::size_t self) {
                            const Tensor<T> g = surrogate_grad(tp.value(ix), tp.grad_of(self), spec);
                            auto& gx = tp.grad_ref(ix);
                            for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
                          });
}

template <class T>
Var<T> selective_project(const Var<T>& x_bin, const Var<T>& w) {
  if (x_bin.tape() != w.tape()) throw ProvenanceError("selective_project: operands live on different tapes");
  const auto& xv = x_bin.value();
  const auto& wv = w.value();
  if (wv.rank() != 2 || xv.cols() != wv.dim(0))
    throw DimensionError("selective_project: " + shape_str(xv.shape()) + " x " + shape_str(wv.shape()));
  require_binary<T>(xv.data(), "selective_project");
  const std::size_t l = xv.rows(), d = xv.cols(), n = wv.dim(1);
  Shape out_shape = xv.shape();
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  OpTally tally;
  kernels::selective_project<T>(xv.data(), wv.data(), out.data(), l, d, n, tally);
  counter::charge(tally);
  const std::size_t ixb = x_bin.id(), iw = w.id();
  return x_bin.tape()->record(std::move(out), {x_bin, w}, "selective_project",
                              [ixb, iw, l, d, n](Tape<T>& tp, std::size_t self) {
                                const auto& g = tp.grad_of(self);
                                if (tp.requires_grad(iw))
                                  kernels::selective_project_backward_w<T>(tp.value(ixb).data(), g.data(),
                                                                           tp.grad_ref(iw).data(), l, d, n);
                                // The mask's gradient is a dense product; it only feeds the
                                // surrogate rule upstream and is never charged.
                                if (tp.requires_grad(ixb))
                                  kernels::gemm_nt<T>(g.data(), tp.value(iw).data(), tp.grad_ref(ixb).data(),
                                                      l, n, d, true, g_discard);
                              });
}

template <class T>
double nonzero_ratio(std::span<const T> x_bin) {
  if (x_bin.empty()) throw DegenerateError("nonzero_ratio: empty input");
  require_binary<T>(x_bin, "nonzero_ratio");
  std::size_t ones = 0;
  for (T v : x_bin) ones += v == T{1};
  return static_cast<double>(ones) / static_cast<double>(x_bin.size());
}

std::string stats_to_csv(std::span<const NonzeroStats> stats) {
  std::ostringstream os;
  os << "module_label,layer_index,rho\n";
  char buf[64];
  for (const auto& s : stats) {
    std::snprintf(buf, sizeof buf, "%.5f", s.rho);
    os << s.module_label << ',' << s.layer_index << ',' << buf << '\n';
  }
  return os.str();
}

template Tensor<float> binarize(const Tensor<float>&, const BinarizeSpec&);
template Tensor<double> binarize(const Tensor<double>&, const BinarizeSpec&);
template Var<float> binarize(const Var<float>&, const BinarizeSpec&);
template Var<double> binarize(const Var<double>&, const BinarizeSpec&);
template Tensor<float> surrogate_grad(const Tensor<float>&, const Tensor<float>&, const BinarizeSpec&);
template Tensor<double> surrogate_grad(const Tensor<double>&, const Tensor<double>&, const BinarizeSpec&);
template Var<float> selective_project(const Var<float>&, const Var<float>&);
template Var<double> selective_project(const Var<double>&, const Var<double>&);
template double nonzero_ratio(std::span<const float>);
template double nonzero_ratio(std::span<const double>);

}  // namespace eatt
