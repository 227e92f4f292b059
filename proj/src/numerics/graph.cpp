#include "docentr/numerics/graph.hpp"

#include <string>

namespace docentr::numerics {

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable " + std::to_string(v.id) + " is not in this graph");
  return nodes_[v.id];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  if (v.id >= nodes_.size()) throw ContractError("variable " + std::to_string(v.id) + " is not in this graph");
  return nodes_[v.id];
}

template <typename T>
Var Graph<T>::constant(TensorType value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::constant_ref(const TensorType& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::parameter(BasicParameter<T>& param) {
  Node n;
  n.external = &param.value;
  n.requires_grad = true;
  n.param = &param;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::record(TensorType value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (finite_checks_ && !value.all_finite()) {
    throw NumericFault("non-finite value produced at node " + std::to_string(nodes_.size()) + " of shape " +
                       to_string(value.shape()));
  }
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
typename Graph<T>::TensorType* Graph<T>::grad_target(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (!n.grad_live) {
    n.grad = TensorType(value(v).shape());
    n.grad_live = true;
  }
  return &n.grad;
}

template <typename T>
typename Graph<T>::TensorType Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad_live) return TensorType(value(v).shape());
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  Node& root = node(loss);
  if (value(loss).size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(value(loss).shape()));
  }
  for (Node& n : nodes_) {
    n.grad_live = false;
    n.grad = TensorType();
  }
  if (!root.requires_grad) return;
  root.grad = TensorType(value(loss).shape(), T{1});
  root.grad_live = true;

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad_live) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace docentr::numerics
