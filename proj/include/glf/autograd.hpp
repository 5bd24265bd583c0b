#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "glf/tensor.hpp"

namespace glf {

/// Trainable tensor with an accumulated gradient of identical dims.
template <typename Scalar>
struct Parameter {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  std::string name;

  Parameter() = default;
  Parameter(std::string n, Dims4 dims)
      : value(dims), grad(dims), name(std::move(n)) {}

  void zero_grad() { grad.set_zero(); }
  std::int64_t size() const { return value.size(); }
};

enum class OpKind {
  leaf,
  conv2d,
  batchnorm,
  relu,
  tanh_fn,
  sigmoid_fn,
  maxpool2x2,
  upsample2x,
  concat,
  add,
  mul_broadcast,
  global_pool,
  channel_pool,
  fully_connected,
  mse,
  sum,
};

/// One vertex of the (acyclic) computation graph. Holds the forward value,
/// the gradient accumulator, and a closure that routes the gradient to the
/// producer nodes and any parameters the op touched.
template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  OpKind op = OpKind::leaf;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor<Scalar>& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<Scalar>(value.dims());
    return grad;
  }
};

/// Cheap handle to a graph node.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<Scalar> value) : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
  }
  explicit Var(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  bool valid() const { return node_ != nullptr; }
  const Tensor<Scalar>& value() const { return node_->value; }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  const Dims4& dims() const { return node_->value.dims(); }
  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

template <typename Scalar>
Var<Scalar> make_op_node(OpKind op, Tensor<Scalar> value,
                         std::vector<std::shared_ptr<Node<Scalar>>> inputs,
                         std::function<void(Node<Scalar>&)> backward) {
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  n->op = op;
  n->inputs = std::move(inputs);
  n->backward = std::move(backward);
  return Var<Scalar>(std::move(n));
}

/// Reverse-mode sweep from `root`, seeding its gradient with ones (or the
/// given tensor). Visits every reachable node exactly once, children after
/// all of their consumers.
template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>* seed = nullptr) {
  using NodeT = Node<Scalar>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  // Iterative post-order DFS; graphs can be a few hundred nodes deep.
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (NodeT* n : order) n->ensure_grad();
  NodeT* r = root.node().get();
  if (seed) {
    if (seed->dims() != r->value.dims())
      throw ShapeError("backward: seed dims " + seed->dims().str() +
                       " do not match root dims " + r->value.dims().str());
    r->grad.array() = seed->array();
  } else {
    r->grad.array().setOnes();
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace glf
