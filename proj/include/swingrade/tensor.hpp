#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "swingrade/error.hpp"
#include "swingrade/rng.hpp"

namespace swingrade {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

/// One vertex of the dynamically recorded computation graph. Leaves hold
/// inputs and parameters; interior nodes remember their producers and a
/// gradient rule. Gradients are 64-bit and accumulate additively: leaf
/// gradients persist across backward sweeps until explicitly zeroed, while
/// interior gradients are scratch storage rebuilt by each sweep.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

namespace detail {
inline bool& no_grad_flag() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

/// While alive, newly built ops record no graph (outputs are plain leaves).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::no_grad_flag()) { detail::no_grad_flag() = true; }
  ~NoGradGuard() { detail::no_grad_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Value-semantics handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  /// Entries drawn from a truncated normal, the standard transformer init.
  static Tensor randn(Shape shape, Rng& rng, double sigma, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    std::vector<double> d(n);
    for (auto& x : d) x = rng.truncated_normal(sigma);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  /// Accumulated gradient. Allocated lazily (parameters allocate at creation).
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

  /// Scalar extraction; the tensor must hold exactly one value.
  double value() const {
    if (numel() != 1) {
      throw ContractError("value() requires a scalar tensor, got shape " + shape_str(shape()));
    }
    return node_->data[0];
  }

  /// Leaf copy of the current values with no graph history.
  Tensor detached() const {
    return Tensor::from(node_->shape, node_->data, false);
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Named trainable tensor. Names are unique within a model; uniqueness is
/// enforced by the registry that creates them.
struct Parameter {
  Tensor tensor;
  std::string name;
};

/// Ordered record of the operations reachable from one output node, built by
/// depth-first traversal so every operation appears after its producers. A
/// backward sweep walks the record once in reverse.
class Tape {
 public:
  static Tape build(const std::shared_ptr<Node>& root) {
    Tape t;
    t.root_ = root;
    if (!root->requires_grad) return t;
    std::unordered_set<Node*> visited;
    // iterative DFS post-order
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
      Node* n = stack.back().first;
      std::size_t next = stack.back().second;
      if (next < n->parents.size()) {
        stack.back().second = next + 1;
        Node* p = n->parents[next].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        t.order_.push_back(n);
        stack.pop_back();
      }
    }
    return t;
  }

  /// Seeds d(root)/d(root) = 1 and propagates. Interior gradients are reset
  /// first; leaf gradients accumulate across sweeps.
  void backward() {
    if (!root_->requires_grad) return;
    for (Node* n : order_) {
      if (!n->is_leaf) n->grad.assign(n->data.size(), 0.0);
    }
    root_->ensure_grad();
    root_->grad[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
  }

  std::size_t size() const { return order_.size(); }

 private:
  std::vector<Node*> order_;
  std::shared_ptr<Node> root_;
};

/// Reverse-mode sweep from a scalar loss.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Tape::build(loss.node()).backward();
}

}  // namespace swingrade
