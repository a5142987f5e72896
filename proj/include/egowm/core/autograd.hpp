#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "egowm/core/tensor.hpp"

namespace egowm {

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool has_grad() const { return !grad.empty(); }

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }

  void accumulate(const Tensor<T>& g) {
    auto& buf = grad_buffer();
    for (int64_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
  }

  Node& parent(size_t i) { return *parents[i]; }
};

/// Handle to a node in the reverse-mode graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false, std::string name = {})
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->name = std::move(name);
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int axis) const { return node_->value.dim(axis); }
  int rank() const { return node_->value.rank(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }

  /// Accumulated gradient; a zero tensor when backward never reached this node.
  Tensor<T> grad() const { return node_->has_grad() ? node_->grad : Tensor<T>(shape()); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds the output node of a differentiable op. The closure runs only when some parent needs a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward) {
  Var<T> out(std::move(value));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (!needs) return out;
  auto& node = out.node();
  node.requires_grad = true;
  node.parents.reserve(parents.size());
  for (auto& p : parents) node.parents.push_back(p.node_ptr());
  node.backward_fn = std::move(backward);
  return out;
}

/// Learnable tensor: a named graph leaf that always records gradients.
template <typename T>
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor<T> value) : var_(std::move(value), true, std::move(name)) {}

  bool defined() const { return var_.defined(); }
  const Var<T>& var() const { return var_; }
  operator const Var<T>&() const { return var_; }
  const std::string& name() const { return var_.name(); }
  const Tensor<T>& value() const { return var_.value(); }
  Tensor<T>& mutable_value() { return var_.mutable_value(); }
  Tensor<T> grad() const { return var_.grad(); }
  Tensor<T>& grad_buffer() { return var_.node().grad_buffer(); }
  void zero_grad() { var_.zero_grad(); }
  const Shape& shape() const { return var_.shape(); }

 private:
  Var<T> var_;
};

/// Reverse sweep from a scalar. Gradients accumulate into every reachable node that requires one.
template <typename T>
void backward(const Var<T>& loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack{{&loss.node(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node().grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

/// Gradients of a scalar-valued closure with respect to the given parameters.
template <typename T, typename LossFn>
std::vector<Tensor<T>> grad(LossFn&& loss_fn, std::vector<Parameter<T>*> params) {
  for (auto* p : params) p->zero_grad();
  Var<T> loss = loss_fn();
  backward(loss);
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->grad());
  return out;
}

}  // namespace egowm
