#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <vector>

#include "docentr/numerics/tensor.hpp"

namespace docentr::numerics {

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

/// Tape of recorded operations. Nodes are appended in execution order, so the
/// node index is already a topological order; backward walks it in reverse.
///
/// A graph is single-threaded. Parameters bound into it are referenced, not
/// copied, and must outlive the graph and stay unmodified until backward()
/// has run.
template <typename T>
class Graph {
 public:
  using TensorType = BasicTensor<T>;
  /// Receives the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Graph&, const TensorType& upstream)>;

  Var constant(TensorType value);
  /// Constant that refers to `value` without copying; `value` must outlive the graph.
  Var constant_ref(const TensorType& value);
  /// Leaf whose gradient is added into `param.grad` by backward().
  Var parameter(BasicParameter<T>& param);

  /// Appends an operation result. The backward rule is dropped when no input
  /// requires a gradient.
  Var record(TensorType value, std::initializer_list<Var> inputs, BackwardFn backward);

  const TensorType& value(Var v) const {
    const Node& n = node(v);
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient buffer of `v` for use inside backward rules, allocated as zeros
  /// on first touch. Returns nullptr when `v` does not require a gradient.
  TensorType* grad_target(Var v);

  /// Gradient of the last backward pass with respect to `v` (zeros when `v`
  /// was not reached).
  TensorType grad(Var v) const;

  /// Propagates d(loss)/d(node) through the tape and adds the result into
  /// the grad of every bound parameter. Calling it again accumulates again.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// When enabled (the default), every recorded value is scanned for NaN/Inf.
  void set_finite_checks(bool on) noexcept { finite_checks_ = on; }

 private:
  struct Node {
    TensorType value;
    const TensorType* external = nullptr;
    TensorType grad;
    bool grad_live = false;
    bool requires_grad = false;
    BackwardFn backward;
    BasicParameter<T>* param = nullptr;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool finite_checks_ = true;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace docentr::numerics
