#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gemzsl/error.hpp"

namespace gemzsl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline thread_local bool grad_enabled = true;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the first backward pass reaches the node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads `grad` of the node it is attached to and accumulates into inputs.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Records the discrete choices (argmax cells, relu masks, matchings) made
/// during a forward pass on this thread. The finite-difference harness uses
/// it to exclude coordinates whose perturbation flips a selection.
class SelectionLog {
 public:
  SelectionLog() : previous_(active_) { active_ = this; }
  ~SelectionLog() { active_ = previous_; }
  SelectionLog(const SelectionLog&) = delete;
  SelectionLog& operator=(const SelectionLog&) = delete;

  static void record(std::uint64_t choice) {
    if (active_) active_->entries_.push_back(choice);
  }
  static bool recording() { return active_ != nullptr; }

  const std::vector<std::uint64_t>& entries() const { return entries_; }

 private:
  static inline thread_local SelectionLog* active_ = nullptr;
  SelectionLog* previous_;
  std::vector<std::uint64_t> entries_;
};

/// Dense row-major tensor with an optional gradient slot. Copies share the
/// underlying node, so a parameter handle captured by a closure observes
/// in-place value updates.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                           std::to_string(shape_size(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor shape " + shape_string(shape) + " has a zero extent");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }
  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v), requires_grad);
  }
  static Tensor scalar(T v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  const char* op() const { return node_->op; }

  std::span<const T> values() const { return node_->value; }
  /// Mutable access for parameter updates between forward passes.
  std::span<T> mutable_values() { return node_->value; }
  T operator[](std::size_t i) const { return node_->value[i]; }

  T item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw UsageError("requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }
  void clear_grad() { node_->grad.clear(); }

  /// New leaf holding a copy of the values and no history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

template <typename T>
void check_finite(const char* op, const std::vector<T>& values) {
#if defined(GEMZSL_CHECK_FINITE) || !defined(NDEBUG)
  for (const auto& v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
  }
#else
  (void)op;
  (void)values;
#endif
}

/// Builds the output node of an op. History is attached only when recording
/// is enabled and some input requires a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward) {
  check_finite(op, values);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool needs = false;
  if (grad_enabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

}  // namespace detail

/// Topologically ordered record of the graph that produced a scalar loss:
/// every node appears after all of its inputs.
template <typename T>
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor<T>& root) {
    using NodeT = detail::Node<T>;
    if (!root.defined() || !root.node()->requires_grad) return;
    std::unordered_set<const NodeT*> visited;
    // Iterative post-order DFS.
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        NodeT* child = node->inputs[next++].get();
        if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  const std::vector<detail::Node<T>*>& nodes() const { return order_; }

  /// Propagates adjoints from the last node (the root). Interior gradients
  /// are reset; leaf gradients accumulate across calls.
  void run_backward() {
    if (order_.empty()) return;
    for (auto* node : order_) {
      if (!node->is_leaf()) node->grad.assign(node->value.size(), T(0));
    }
    auto* root = order_.back();
    root->ensure_grad()[0] += T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      auto* node = *it;
      if (node->is_leaf()) continue;
      for (const auto& in : node->inputs) {
        if (in->requires_grad) in->ensure_grad();
      }
      node->backward(*node);
    }
  }

 private:
  std::vector<detail::Node<T>*> order_;
};

/// Populates grad slots of every requires_grad tensor reachable from `loss`.
/// Repeated calls without zero_grad() accumulate into leaf gradients.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() on a loss that does not depend on any requires_grad tensor");
  }
  ComputationTape<T> tape(loss);
  tape.run_backward();
}

}  // namespace gemzsl
