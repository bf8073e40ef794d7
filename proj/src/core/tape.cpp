#include "eatt/tape.hpp"

namespace eatt {

template <class T>
void Tape<T>::check_owned(const Var<T>& v) const {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw ProvenanceError("variable was not recorded on this tape");
}

template <class T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, const char* rule,
                       BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.rule = rule;
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owned(in);
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Tensor<T>& Tape<T>::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape(), T{0});
    n.has_grad = true;
  }
  return n.grad;
}

template <class T>
Tensor<T> Tape<T>::grad(const Var<T>& v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  return n.has_grad ? n.grad : Tensor<T>(n.value.shape(), T{0});
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  check_owned(loss);
  if (loss.value().numel() != 1)
    throw DimensionError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor<T>();
  }
  grad_ref(loss.id())[0] = T{1};
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, id);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace eatt
