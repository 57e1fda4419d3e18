#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dannet/core/tensor.hpp"

namespace dannet::nn {

namespace detail {
struct Node;
}

/// Shared handle to a value in a dynamically recorded computation graph.
///
/// Constness is shallow: a const Var still exposes its node's buffers.
///
/// Operations on Vars that require gradients record a backward closure; calling
/// backward() on a scalar result accumulates d(result)/d(leaf) into every leaf
/// reachable from it. Parameters are long-lived leaves owned by modules.
class Var {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out)>;

  Var() = default;

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const;
  Tensor& mutable_value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

  /// Accumulated gradient; zero-filled tensor of the value's shape if nothing
  /// has been accumulated yet.
  const Tensor& grad() const;
  Tensor& grad_buffer() const;
  bool has_grad() const;
  void zero_grad() const;

  /// Seeds d(this)/d(this) = 1; this must hold a single element.
  void backward() const;

  /// Same value, cut from the graph.
  Var detach() const;

  /// Internal: builds a graph node for an op result.
  static Var make(Tensor value, std::vector<Var> inputs, BackwardFn fn);

  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> inputs;
  Var::BackwardFn backward;
};
}  // namespace detail

/// Adds `g` into the gradient buffer of `v` if it tracks gradients.
void accumulate(const Var& v, const Tensor& g);

}  // namespace dannet::nn
