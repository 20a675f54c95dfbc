#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "umafd/tensor.hpp"

namespace umafd {

/// One vertex of the dynamic computation graph. `grad` is allocated on first
/// accumulation; leaves that require grad keep accumulating until zeroed.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(std::span<const double> g);
  void accumulate_at(std::size_t i, double g);
  bool has_grad() const { return !grad.empty(); }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }

  /// Gradient after backward(); a zero tensor of the value's shape if none reached this node.
  Tensor grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds a result node. The node requires grad iff any input does; otherwise the
/// backward closure is dropped and the result is a constant.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

/// Reverse-mode sweep from a single-element root; seeds d(root)/d(root) = 1.
void backward(const Var& root);

}  // namespace umafd
