#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "hydrocorr/error.hpp"

namespace hydrocorr::ad {

// Reverse-mode tape node. Production code instantiates S = float (float32
// storage); gradient-check tests instantiate the same templates with
// S = double.
template <class S>
struct Node {
  std::vector<int> shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // accumulates into parents' grads

  std::vector<S>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), S(0));
    return grad;
  }
};

template <class S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Tensor leaf(std::vector<int> shape, std::vector<S> value,
                     bool requires_grad) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    if (static_cast<std::int64_t>(value.size()) != n)
      throw InvalidInput("tensor data length does not match shape");
    auto node = std::make_shared<Node<S>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor constant(std::vector<int> shape, std::vector<S> value) {
    return leaf(std::move(shape), std::move(value), false);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::vector<S>& value() { return node_->value; }
  const std::vector<S>& value() const { return node_->value; }
  const std::vector<S>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  std::int64_t size() const {
    return static_cast<std::int64_t>(node_->value.size());
  }
  void zero_grad() { node_->grad.clear(); }

  Node<S>* node() const { return node_.get(); }
  const std::shared_ptr<Node<S>>& handle() const { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <class S>
Tensor<S> make_op(std::vector<int> shape, std::vector<S> value,
                  std::vector<Tensor<S>> parents,
                  std::function<void(Node<S>&)> backprop) {
  auto node = std::make_shared<Node<S>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const auto& p : parents) {
    node->requires_grad = node->requires_grad || p.requires_grad();
    node->parents.push_back(p.handle());
  }
  if (node->requires_grad) node->backprop = std::move(backprop);
  return Tensor<S>(std::move(node));
}

}  // namespace detail

// Populates d(loss)/d(tensor) for every requires_grad tensor reachable from
// `loss`, which must be scalar (size 1).
template <class S>
void backward(const Tensor<S>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw InvalidInput("backward: loss must be a scalar tensor");

  // Iterative post-order topological sort.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

}  // namespace hydrocorr::ad
