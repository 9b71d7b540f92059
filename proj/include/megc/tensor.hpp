// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major tensors.
//
// Every op that sees at least one input with requires_grad records a node
// holding its parents and a backward closure. backward() orders the graph
// reachable from the loss topologically (deterministic DFS over parent lists),
// clears the gradients of intermediate nodes and propagates from the loss.
// Leaf gradients accumulate across calls until zero_grad().
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace megc::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Mutable access to the values. Only meaningful on leaves (parameters,
  /// inputs); mutating an intermediate invalidates recorded gradients.
  std::span<double> mutable_values();

  bool requires_grad() const;
  bool is_leaf() const;
  /// Gradient buffer; empty until a backward pass reaches this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  double item() const;
  /// Same values, no history, no gradient.
  Tensor detach() const;
  /// Deep copy of the values (and requires_grad flag) as a new leaf.
  Tensor clone_leaf() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into parents' grad buffers.
  std::function<void(Node& self)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

/// Populate gradients of every tensor reachable from `loss` (a one-element
/// tensor produced with gradient tracking). Throws ContractError otherwise.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds the output of an op. When grad mode is on and any parent requires a
/// gradient, the node keeps `parents` and `backward_fn`; otherwise it is a
/// plain leaf.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(Node& self)> backward_fn);

inline bool wants_grad(const Tensor& t) { return t.defined() && t.node()->requires_grad; }

}  // namespace detail

}  // namespace megc::nn
