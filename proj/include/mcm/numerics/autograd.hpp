#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Ops create result nodes that
// remember their parents and a closure that pushes the node's gradient into
// those parents. Nodes whose inputs need no gradient are created detached,
// so pure inference builds no graph.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcm/numerics/tensor.hpp"

namespace mcm {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool has_grad() const { return !grad.empty(); }
  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;

  // A value that never receives gradient.
  static Var constant(Tensor value);
  // A graph leaf; parameters are leaves with requires_grad = true.
  static Var leaf(Tensor value, bool requires_grad);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_->has_grad(); }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->ensure_grad(); }
  void clear_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Var make_result(Tensor, std::vector<Var>,
                         std::function<void(Node&)>);

  std::shared_ptr<Node> node_;
};

// Builds an op result. `backward` receives the result node (its grad is
// populated) and must accumulate into parents that require grad. If no
// parent requires grad, the result is detached and `backward` is dropped.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward);

// Propagates d(loss)/d(node) to every reachable node. Leaf gradients
// accumulate across calls until cleared.
void backward(const Var& loss);

struct Parameter {
  std::string name;
  Var var;
  bool trainable = true;
};

// Ordered, uniquely named parameter collection.
class ParameterStore {
 public:
  Var add(const std::string& name, Tensor init, bool trainable = true);

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  // Sum of element counts over trainable parameters.
  int64_t trainable_count() const;
  void clear_grads();

 private:
  std::vector<Parameter> items_;
};

}  // namespace mcm
