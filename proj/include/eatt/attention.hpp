#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "eatt/tape.hpp"
#include "eatt/tensor.hpp"

namespace eatt {

enum class AttentionKind { Vanilla, Dense, RandInit, EAtt };

// CLI spelling: vanilla, dense, rand-init, e-att.
std::string_view to_string(AttentionKind kind);
AttentionKind parse_attention_kind(std::string_view name);

struct AttentionConfig {
  AttentionKind kind = AttentionKind::Vanilla;
  std::size_t d = 0;
  std::size_t heads = 1;
  std::size_t max_len = 0;  // Dense and RandInit only
  double tau = 1.0;         // EAtt only

  void validate() const;
};

// Trainable tensors of one attention module, keyed by role:
//   Vanilla, EAtt   w_q, w_k, w_v   [d x d]
//   Dense           w1 [d x d], w2 [d x max_len], w_v
//   RandInit        r [max_len x max_len], w_v
template <class T>
struct AttentionVariant {
  AttentionConfig config;
  std::map<std::string, Tensor<T>> params;

  // uniform(-1/sqrt(d), 1/sqrt(d)) for every tensor.
  static AttentionVariant init(const AttentionConfig& config, std::mt19937_64& rng);
  void validate() const;
};

// Parameters placed on a tape for one forward pass.
template <class T>
struct BoundAttention {
  AttentionConfig config;
  std::map<std::string, Var<T>> params;

  const Var<T>& at(const std::string& name) const;
};

// trainable == false records the parameters as constants.
template <class T>
BoundAttention<T> bind(Tape<T>& tape, const AttentionVariant<T>& variant, bool trainable = true);

// Inputs are [l, d] or batched [B, l, d]. `query` is x, `memory` is y. For
// EAtt the binarized sides may be supplied precomputed (the decoder shares
// one binarized encoder output across layers); otherwise they are computed
// here from query/memory, once when query and memory are the same variable.
template <class T>
struct AttentionInputs {
  Var<T> query;
  Var<T> memory;
  Var<T> query_bin;
  Var<T> memory_bin;
  const Tensor<T>* mask = nullptr;  // 0 / -inf, [l1, l2] or [B, l1, l2]
};

// weights: [l1, l2] for one head; [h, l1, l2] with heads; batched inputs
// gain a leading B axis. Dense and RandInit produce one alignment shared by
// all heads, so their weights never carry a head axis.
template <class T>
struct Alignment {
  Var<T> weights;
  std::optional<Var<T>> q_binary;
  std::optional<Var<T>> k_binary;
};

template <class T>
struct AttentionOutput {
  Var<T> output;  // [l1, d] / [B, l1, d]
  Var<T> weights;
  std::optional<Var<T>> q_binary;
  std::optional<Var<T>> k_binary;
};

// Score computation up to and including the softmax.
template <class T>
Alignment<T> align(const BoundAttention<T>& attn, const AttentionInputs<T>& in);

// align() followed by V = y W_V and the weighted sum.
template <class T>
AttentionOutput<T> attend(const BoundAttention<T>& attn, const AttentionInputs<T>& in);

// Kind-checked entry points; each throws ContractError when the bound
// variant is of another kind.
template <class T>
AttentionOutput<T> vanilla_forward(const BoundAttention<T>& attn, const AttentionInputs<T>& in);
template <class T>
AttentionOutput<T> eatt_forward(const BoundAttention<T>& attn, const AttentionInputs<T>& in);
template <class T>
AttentionOutput<T> dense_forward(const BoundAttention<T>& attn, const AttentionInputs<T>& in);
template <class T>
AttentionOutput<T> randinit_forward(const BoundAttention<T>& attn, const AttentionInputs<T>& in);

}  // namespace eatt
