// SPDX-License-Identifier: Apache-2.0
#include "megc/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "megc/error.hpp"

namespace megc::nn {

namespace {
thread_local bool t_grad_enabled = true;

Node& require(const std::shared_ptr<Node>& node) {
  if (!node) throw ContractError("operation on an undefined tensor");
  return *node;
}
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ContractError("tensor shape " + shape_string(shape) + " does not match " +
                        std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size()) throw ContractError("dimension index out of range");
  return s[i];
}

std::size_t Tensor::numel() const { return require(node_).values.size(); }

std::span<const double> Tensor::values() const { return require(node_).values; }
std::span<double> Tensor::mutable_values() { return require(node_).values; }

bool Tensor::requires_grad() const { return require(node_).requires_grad; }
bool Tensor::is_leaf() const { return require(node_).is_leaf(); }

std::span<const double> Tensor::grad() const { return require(node_).grad; }

std::span<double> Tensor::mutable_grad() {
  auto& n = require(node_);
  n.ensure_grad();
  return n.grad;
}

void Tensor::zero_grad() {
  auto& n = require(node_);
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

double Tensor::item() const {
  const auto& n = require(node_);
  if (n.values.size() != 1) throw ContractError("item() on a tensor with " + std::to_string(n.values.size()) + " elements");
  return n.values[0];
}

Tensor Tensor::detach() const {
  const auto& n = require(node_);
  return from_values(n.shape, n.values, false);
}

Tensor Tensor::clone_leaf() const {
  const auto& n = require(node_);
  return from_values(n.shape, n.values, n.requires_grad);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(Node& self)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  if (node->values.size() != shape_numel(node->shape)) {
    throw ContractError("op produced " + std::to_string(node->values.size()) +
                        " values for shape " + shape_string(node->shape));
  }
  bool any = false;
  for (const auto& p : parents) any = any || wants_grad(p);
  if (t_grad_enabled && any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  Node* root = loss.node().get();
  if (root->values.size() != 1) {
    throw ContractError("backward requires a one-element loss, got shape " + shape_string(root->shape));
  }
  if (!root->requires_grad) {
    throw ContractError("backward on a detached scalar: no recorded computation requires a gradient");
  }

  // Iterative post-order DFS; parents are visited in recorded order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->values.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf()) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward_fn(*n);
  }
}

}  // namespace megc::nn
