#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

#include "eatt/error.hpp"
#include "eatt/tensor.hpp"

namespace eatt {

template <class T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// tape that produced it is alive and not cleared.
template <class T>
class Var {
 public:
  Var() = default;

  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run reverse-mode record. Every op appends one node holding its
// output value, its input ids and a backward rule; inputs always precede
// their consumers, so a reverse sweep over node ids is a valid
// reverse-topological order. A Tape is not thread-safe.
template <class T>
class Tape {
 public:
  // Called during backward with the node's own id. The rule reads
  // grad(self) and adds into grad_ref(input) for each input that
  // requires_grad.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> variable(Tensor<T> value);

  // Appends an op node. When no input requires a gradient the rule is
  // dropped and the node is a constant.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, const char* rule,
                BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. `loss` must be
  // a one-element tensor recorded on this tape.
  void backward(const Var<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var<T>& v) const { return requires_grad(v.id()); }
  const char* rule(const Var<T>& v) const { return nodes_.at(v.id()).rule; }
  const std::vector<std::size_t>& inputs(const Var<T>& v) const { return nodes_.at(v.id()).inputs; }

  bool has_grad(const Var<T>& v) const { return nodes_.at(v.id()).has_grad; }
  // Gradient accumulated by the last backward(); zeros for nodes the loss
  // does not depend on.
  Tensor<T> grad(const Var<T>& v) const;

  // Used by backward rules.
  const Tensor<T>& grad_of(std::size_t id) const { return nodes_[id].grad; }
  Tensor<T>& grad_ref(std::size_t id);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    const char* rule = "leaf";
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  void check_owned(const Var<T>& v) const;

  // A deque keeps value() references valid while the graph grows.
  std::deque<Node> nodes_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace eatt
