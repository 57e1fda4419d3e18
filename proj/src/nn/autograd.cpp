#include "dannet/nn/autograd.hpp"

#include <unordered_set>

namespace dannet::nn {

Var Var::constant(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

const Tensor& Var::value() const { return node_->value; }
Tensor& Var::mutable_value() const { return node_->value; }
bool Var::requires_grad() const { return node_ && node_->requires_grad; }

const Tensor& Var::grad() const {
  if (node_->grad.size() != node_->value.size()) {
    node_->grad = Tensor(node_->value.shape());
  }
  return node_->grad;
}

Tensor& Var::grad_buffer() const {
  if (node_->grad.size() != node_->value.size()) {
    node_->grad = Tensor(node_->value.shape());
  }
  return node_->grad;
}

bool Var::has_grad() const {
  return node_->grad.size() == node_->value.size() && node_->grad.size() > 0;
}

void Var::zero_grad() const {
  if (has_grad()) node_->grad.fill(0.0f);
}

Var Var::detach() const { return constant(node_->value); }

Var Var::make(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

void accumulate(const Var& v, const Tensor& g) {
  if (!v.requires_grad()) return;
  Tensor& buf = v.grad_buffer();
  require_same_shape(buf.shape(), g.shape(), "gradient accumulation");
  float* dst = buf.data();
  const float* src = g.data();
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] += src[i];
}

void Var::backward() const {
  if (node_->value.size() != 1) {
    throw ShapeError("backward() requires a scalar, got " + node_->value.shape().str());
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].node_.get();
      if (child && child->requires_grad && child->backward &&
          seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad = Tensor(node_->value.shape(), 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->grad.size() != n->value.size()) continue;
    n->backward(n->grad);
    // Intermediate gradients are no longer needed once propagated.
    if (n != node_.get()) n->grad = Tensor();
  }
}

}  // namespace dannet::nn
