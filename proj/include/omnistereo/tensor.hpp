// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace omnistereo {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<float> v;
  std::vector<float> g;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's g and accumulates into the parents' g.
  std::function<void(TensorNode&)> backward_fn;

  std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
  std::vector<float>& grad() {
    if (g.empty()) g.assign(v.size(), 0.0f);
    return g;
  }
};

}  // namespace detail

/// Dense row-major float32 array with an optional gradient slot. Copies are
/// shallow; ops on tensors with requires_grad record a tape for backward().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value);
  static Tensor from_data(std::vector<int> shape, std::vector<float> values,
                          bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const { return n_->shape; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  std::int64_t size() const { return n_->size(); }

  std::vector<float>& values() { return n_->v; }
  const std::vector<float>& values() const { return n_->v; }
  float scalar() const;  // value of a single-element tensor

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  std::vector<float>& grad() { return n_->grad(); }
  bool has_grad() const { return !n_->g.empty(); }
  void zero_grad() {
    if (!n_->g.empty()) std::fill(n_->g.begin(), n_->g.end(), 0.0f);
  }

  /// Reverse pass from a scalar: seeds d(this)=1 and walks the recorded tape
  /// in reverse topological order, visiting each node exactly once.
  void backward() const;

  std::shared_ptr<detail::TensorNode> node() const { return n_; }

 private:
  std::shared_ptr<detail::TensorNode> n_;
};

/// Disables tape recording while alive (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

namespace detail {

/// Builds a node for an op result. Parents and backward_fn are dropped when
/// grad is disabled or no parent wants gradients.
Tensor make_op_node(std::vector<int> shape, std::vector<float> values,
                    std::vector<std::shared_ptr<TensorNode>> parents,
                    std::function<void(TensorNode&)> backward_fn);

}  // namespace detail

}  // namespace omnistereo
