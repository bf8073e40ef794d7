#include "eatt/attention.hpp"

#include <cmath>
#include <vector>

#include "eatt/binarize.hpp"
#include "eatt/error.hpp"
#include "eatt/ops.hpp"
#include "eatt/random.hpp"

namespace eatt {

std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::Vanilla: return "vanilla";
    case AttentionKind::Dense: return "dense";
    case AttentionKind::RandInit: return "rand-init";
    case AttentionKind::EAtt: return "e-att";
  }
  return "?";
}

AttentionKind parse_attention_kind(std::string_view name) {
  if (name == "vanilla") return AttentionKind::Vanilla;
  if (name == "dense") return AttentionKind::Dense;
  if (name == "rand-init" || name == "randinit") return AttentionKind::RandInit;
  if (name == "e-att" || name == "eatt") return AttentionKind::EAtt;
  throw FormatError("unknown attention variant '" + std::string(name) + "'");
}

void AttentionConfig::validate() const {
  if (d == 0) throw DimensionError("attention: d must be positive");
  if (heads == 0 || d % heads != 0)
    throw DimensionError("attention: d = " + std::to_string(d) + " is not divisible by " +
                         std::to_string(heads) + " heads");
  if ((kind == AttentionKind::Dense || kind == AttentionKind::RandInit) && max_len == 0)
    throw DimensionError(std::string(to_string(kind)) + " attention needs max_len > 0");
  if (!std::isfinite(tau)) throw ContractError("attention: tau must be finite");
}

namespace {

struct ParamShape {
  const char* name;
  std::size_t rows, cols;
};

std::vector<ParamShape> param_shapes(const AttentionConfig& c) {
  switch (c.kind) {
    case AttentionKind::Vanilla:
    case AttentionKind::EAtt:
      return {{"w_q", c.d, c.d}, {"w_k", c.d, c.d}, {"w_v", c.d, c.d}};
    case AttentionKind::Dense:
      return {{"w1", c.d, c.d}, {"w2", c.d, c.max_len}, {"w_v", c.d, c.d}};
    case AttentionKind::RandInit:
      return {{"r", c.max_len, c.max_len}, {"w_v", c.d, c.d}};
  }
  return {};
}

struct Dims {
  bool batched = false;
  std::size_t batch = 1, l1 = 0, l2 = 0, d = 0;
};

template <class T>
Dims check_inputs(const AttentionConfig& cfg, const AttentionInputs<T>& in) {
  if (!in.query.valid() || !in.memory.valid()) throw ContractError("attention: query and memory are required");
  const Shape& qs = in.query.shape();
  const Shape& ms = in.memory.shape();
  if ((qs.size() != 2 && qs.size() != 3) || qs.size() != ms.size())
    throw DimensionError("attention: inputs must both be [l, d] or [B, l, d], got " + shape_str(qs) + " and " +
                         shape_str(ms));
  Dims dm;
  dm.batched = qs.size() == 3;
  dm.batch = dm.batched ? qs[0] : 1;
  dm.l1 = qs[qs.size() - 2];
  dm.l2 = ms[ms.size() - 2];
  dm.d = qs.back();
  if (dm.batched && ms[0] != qs[0])
    throw DimensionError("attention: batch sizes differ, " + shape_str(qs) + " vs " + shape_str(ms));
  if (dm.d != cfg.d || ms.back() != cfg.d)
    throw DimensionError("attention: model dimension is " + std::to_string(cfg.d) + ", inputs are " +
                         shape_str(qs) + " and " + shape_str(ms));
  if (in.mask) {
    const Shape& mk = in.mask->shape();
    const bool shared = mk == Shape{dm.l1, dm.l2};
    const bool per_batch = dm.batched && mk == Shape{dm.batch, dm.l1, dm.l2};
    if (!shared && !per_batch)
      throw DimensionError("attention: mask " + shape_str(mk) + " does not match " + std::to_string(dm.l1) +
                           "x" + std::to_string(dm.l2) + " scores");
  }
  if (in.query_bin.valid() && in.query_bin.shape() != qs)
    throw DimensionError("attention: binarized query " + shape_str(in.query_bin.shape()) + " vs " + shape_str(qs));
  if (in.memory_bin.valid() && in.memory_bin.shape() != ms)
    throw DimensionError("attention: binarized memory " + shape_str(in.memory_bin.shape()) + " vs " +
                         shape_str(ms));
  return dm;
}

// Multi-head wrapper around a pairwise scoring function. heads == 1 skips
// the split entirely.
template <class T, class Score>
Var<T> headed_weights(const AttentionConfig& cfg, const Var<T>& q, const Var<T>& k, T temperature_sign,
                      const Tensor<T>* mask, Score score) {
  const std::size_t dh = cfg.d / cfg.heads;
  const T temperature = temperature_sign / static_cast<T>(std::sqrt(static_cast<double>(dh)));
  if (cfg.heads == 1) return softmax_rows(score(q, k), temperature, mask);
  return softmax_rows(score(split_heads(q, cfg.heads), split_heads(k, cfg.heads)), temperature, mask);
}

}  // namespace

template <class T>
AttentionVariant<T> AttentionVariant<T>::init(const AttentionConfig& config, std::mt19937_64& rng) {
  config.validate();
  AttentionVariant v;
  v.config = config;
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d));
  for (const auto& p : param_shapes(config)) {
    Tensor<T> t(Shape{p.rows, p.cols});
    for (auto& x : t.data()) x = static_cast<T>(uniform(rng, -bound, bound));
    v.params.emplace(p.name, std::move(t));
  }
  return v;
}

template <class T>
void AttentionVariant<T>::validate() const {
  config.validate();
  const auto shapes = param_shapes(config);
  if (params.size() != shapes.size())
    throw DimensionError(std::string(to_string(config.kind)) + " attention expects " +
                         std::to_string(shapes.size()) + " parameter tensors");
  for (const auto& p : shapes) {
    auto it = params.find(p.name);
    if (it == params.end()) throw DimensionError(std::string("attention: missing parameter ") + p.name);
    if (it->second.shape() != Shape{p.rows, p.cols})
      throw DimensionError(std::string("attention: parameter ") + p.name + " has shape " +
                           shape_str(it->second.shape()));
  }
}

template <class T>
const Var<T>& BoundAttention<T>::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("attention: parameter " + name + " not bound");
  return it->second;
}

template <class T>
BoundAttention<T> bind(Tape<T>& tape, const AttentionVariant<T>& variant, bool trainable) {
  variant.validate();
  BoundAttention<T> b;
  b.config = variant.config;
  for (const auto& [name, t] : variant.params) b.params.emplace(name, trainable ? tape.variable(t) : tape.constant(t));
  return b;
}

template <class T>
Alignment<T> align(const BoundAttention<T>& attn, const AttentionInputs<T>& in) {
  const AttentionConfig& cfg = attn.config;
  cfg.validate();
  const Dims dm = check_inputs(cfg, in);
  auto dot = [](const Var<T>& q, const Var<T>& k) { return bmm_nt(q, k); };
  auto l1 = [](const Var<T>& q, const Var<T>& k) { return l1_pairwise(q, k); };

  switch (cfg.kind) {
    case AttentionKind::Vanilla: {
      const Var<T> q = matmul(in.query, attn.at("w_q"));
      const Var<T> k = matmul(in.memory, attn.at("w_k"));
      return {headed_weights(cfg, q, k, T{1}, in.mask, dot), std::nullopt, std::nullopt};
    }
    case AttentionKind::EAtt: {
      const BinarizeSpec spec{cfg.tau};
      const Var<T> xb = in.query_bin.valid() ? in.query_bin : binarize(in.query, spec);
      Var<T> yb;
      if (in.memory_bin.valid())
        yb = in.memory_bin;
      else if (!in.query_bin.valid() && in.memory.id() == in.query.id())
        yb = xb;
      else
        yb = binarize(in.memory, spec);
      const Var<T> q = selective_project(xb, attn.at("w_q"));
      const Var<T> k = selective_project(yb, attn.at("w_k"));
      return {headed_weights(cfg, q, k, T{-1}, in.mask, l1), xb, yb};
    }
    case AttentionKind::Dense: {
      if (dm.l2 > cfg.max_len)
        throw CapacityError("dense attention: key length " + std::to_string(dm.l2) + " exceeds max_len " +
                            std::to_string(cfg.max_len));
      const Var<T> hidden = relu(matmul(in.query, attn.at("w1")));
      const Var<T> scores = matmul(hidden, slice2d(attn.at("w2"), cfg.d, dm.l2));
      return {softmax_rows(scores, T{1}, in.mask), std::nullopt, std::nullopt};
    }
    case AttentionKind::RandInit: {
      if (dm.l1 > cfg.max_len || dm.l2 > cfg.max_len)
        throw CapacityError("rand-init attention: lengths " + std::to_string(dm.l1) + "x" + std::to_string(dm.l2) +
                            " exceed max_len " + std::to_string(cfg.max_len));
      Var<T> scores = slice2d(attn.at("r"), dm.l1, dm.l2);
      if (dm.batched) scores = tile(scores, dm.batch);
      return {softmax_rows(scores, T{1}, in.mask), std::nullopt, std::nullopt};
    }
  }
  throw ContractError("attention: unknown kind");
}

template <class T>
AttentionOutput<T> attend(const BoundAttention<T>& attn, const AttentionInputs<T>& in) {
  Alignment<T> a = align(attn, in);
  const AttentionConfig& cfg = attn.config;
  const Var<T> v = matmul(in.memory, attn.at("w_v"));
  const bool head_axis = cfg.heads > 1 && (cfg.kind == AttentionKind::Vanilla || cfg.kind == AttentionKind::EAtt);
  Var<T> out = head_axis ? merge_heads(bmm(a.weights, split_heads(v, cfg.heads))) : bmm(a.weights, v);
  return {out, a.weights, a.q_binary, a.k_binary};
}

namespace {
template <class T>
AttentionOutput<T> checked(AttentionKind expected, const BoundAttention<T>& attn, const AttentionInputs<T>& in) {
  if (attn.config.kind != expected)
    throw ContractError(std::string(to_string(expected)) + "_forward called on a " +
                        std::string(to_string(attn.config.kind)) + " variant");
  return attend(attn, in);
}
}  // namespace

template <class T>
AttentionOutput<T> vanilla_forward(const BoundAttention<T>& attn, const AttentionInputs<T>& in) {
  return checked(AttentionKind::Vanilla, attn, in);
}
template <class T>
AttentionOutput<T> eatt_forward(const BoundAttention<T>& attn, const AttentionInputs<T>& in) {
  return checked(AttentionKind::EAtt, attn, in);
}
template <class T>
AttentionOutput<T> dense_forward(const BoundAttention<T>& attn, const AttentionInputs<T>& in) {
  return checked(AttentionKind::Dense, attn, in);
}
template <class T>
AttentionOutput<T> randinit_forward(const BoundAttention<T>& attn, const AttentionInputs<T>& in) {
  return checked(AttentionKind::RandInit, attn, in);
}

#define EATT_ATTENTION_INSTANTIATE(T)                                                              \
  template struct AttentionVariant<T>;                                                             \
  template struct BoundAttention<T>;                                                               \
  template BoundAttention<T> bind(Tape<T>&, const AttentionVariant<T>&, bool);                    \
  template Alignment<T> align(const BoundAttention<T>&, const AttentionInputs<T>&);               \
  template AttentionOutput<T> attend(const BoundAttention<T>&, const AttentionInputs<T>&);        \
  template AttentionOutput<T> vanilla_forward(const BoundAttention<T>&, const AttentionInputs<T>&); \
  template AttentionOutput<T> eatt_forward(const BoundAttention<T>&, const AttentionInputs<T>&);  \
  template AttentionOutput<T> dense_forward(const BoundAttention<T>&, const AttentionInputs<T>&); \
  template AttentionOutput<T> randinit_forward(const BoundAttention<T>&, const AttentionInputs<T>&);

EATT_ATTENTION_INSTANTIATE(float)
EATT_ATTENTION_INSTANTIATE(double)

}  // namespace eatt
