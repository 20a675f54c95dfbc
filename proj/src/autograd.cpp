#include "umafd/autograd.hpp"

#include <unordered_set>

#include "umafd/errors.hpp"

namespace umafd {

void Node::accumulate(std::span<const double> g) {
  if (grad.empty()) {
    grad = Tensor(value.shape(), std::vector<double>(g.begin(), g.end()));
    return;
  }
  double* dst = grad.ptr();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Node::accumulate_at(std::size_t i, double g) {
  if (grad.empty()) grad = Tensor(value.shape());
  grad[i] += g;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.size() != 1) throw ShapeError("backward() root must hold a single element");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate_at(0, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
  }
}

}  // namespace umafd
