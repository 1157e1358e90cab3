#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "ecgseg/errors.hpp"

namespace ecgseg::nn {

// Reverse-mode autodiff over dense row-major tensors. Each op builds one
// graph node; Tensor is a cheap shared handle. backward() walks the graph
// in reverse topological order and accumulates into .grad of every node
// that requires gradients. Graphs are single-use: build, backward, drop.

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<Tensor<T>> inputs;
    std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into inputs

    size_t size() const { return value.size(); }
    void ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
  };

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(numel(t.node_->shape), T(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape product " + std::to_string(numel(shape)));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  // Fresh node whose requires_grad is inherited from its inputs.
  static Tensor result(std::vector<int> shape, std::vector<Tensor<T>> inputs,
                       std::function<void(Node&)> backward_fn) {
    Tensor t = zeros(std::move(shape));
    bool needs = false;
    if (grad_enabled())
      for (const auto& in : inputs) needs = needs || in.requires_grad();
    t.node_->requires_grad = needs;
    if (needs) {
      t.node_->inputs = std::move(inputs);
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[i]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<T>& grad() const { return node_->grad; }
  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return node_->value[0];
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  Node* node() const { return node_.get(); }

  // Backward from a scalar. Seeds d(out)/d(out) = 1.
  void backward() {
    if (size() != 1) throw ShapeError("backward() requires a scalar output");
    std::vector<Node*> order;
    topo_sort(order);
    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (!n->backward_fn) continue;
      for (auto& in : n->inputs)
        if (in.requires_grad()) in.node_->ensure_grad();
      n->backward_fn(*n);
    }
  }

  static size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeError("negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

 private:
  void topo_sort(std::vector<Node*>& order) const {
    std::unordered_set<Node*> seen;
    // Iterative DFS; second visit of a frame emits the node post-order.
    std::vector<std::pair<Node*, bool>> stack;
    stack.push_back({node_.get(), false});
    while (!stack.empty()) {
      auto [n, expanded] = stack.back();
      stack.pop_back();
      if (expanded) {
        order.push_back(n);
        continue;
      }
      if (seen.count(n)) continue;
      seen.insert(n);
      stack.push_back({n, true});
      for (const auto& in : n->inputs)
        if (in.defined() && !seen.count(in.node_.get())) stack.push_back({in.node_.get(), false});
    }
  }

  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace ecgseg::nn
