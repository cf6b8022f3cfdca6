#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "crossseg/tensor.hpp"

namespace crossseg {

// Define-by-run reverse-mode autodiff. Every operation allocates a Node
// holding its output value; backward closures accumulate into input grads.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;  // may be empty for leaves/constants
  const char* op = "";

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false, const char* op = "leaf") {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->op = op;
  return n;
}

template <typename T>
Var<T> make_constant(Tensor<T> value) {
  return make_var<T>(std::move(value), false, "const");
}

template <typename T>
bool any_requires_grad(const std::vector<Var<T>>& inputs) {
  for (const auto& v : inputs)
    if (v && v->requires_grad) return true;
  return false;
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward,
               const char* op) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  n->requires_grad = any_requires_grad(n->inputs);
  if (n->requires_grad) n->backward_fn = std::move(backward);
  n->op = op;
  return n;
}

// Iterative post-order topological sort; recursion would overflow on deep
// decoder graphs.
template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node<T>* child = node->inputs[idx++].get();
      if (child && child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

// Backpropagate from a scalar (or any-shaped) root. Seeds d(root)/d(root)=1.
template <typename T>
void backward(const Var<T>& root) {
  CROSSSEG_CHECK(root && root->requires_grad, "backward: root does not require grad");
  auto order = topo_order(root.get());
  for (Node<T>* n : order) n->ensure_grad();
  root->grad.fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) {
      for (auto& in : n->inputs)
        if (in && in->requires_grad) in->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

template <typename T>
T scalar_value(const Var<T>& v) {
  CROSSSEG_CHECK(v && v->value.numel() == 1, "scalar_value: tensor is not a scalar");
  return v->value[0];
}

}  // namespace crossseg
