// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace omnistereo {

namespace {

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: nonpositive extent");
    n *= d;
  }
  return n;
}

thread_local int g_no_grad_depth = 0;

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<detail::TensorNode>();
  n->v.assign(static_cast<size_t>(shape_size(shape)), 0.0f);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> values,
                         bool requires_grad) {
  if (shape_size(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("Tensor::from_data: shape/value size mismatch");
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->v = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

float Tensor::scalar() const {
  if (size() != 1) throw std::logic_error("Tensor::scalar on non-scalar");
  return n_->v[0];
}

void Tensor::backward() const {
  if (size() != 1)
    throw std::logic_error("Tensor::backward requires a scalar");
  // Postorder DFS over parents; reversing it visits every consumer before
  // its producers.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> seen;
  std::vector<std::pair<detail::TensorNode*, size_t>> stack;
  stack.emplace_back(n_.get(), 0);
  seen.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorNode* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  n_->grad()[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->backward_fn && !node->g.empty()) node->backward_fn(*node);
  }
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

namespace detail {

Tensor make_op_node(std::vector<int> shape, std::vector<float> values,
                    std::vector<std::shared_ptr<TensorNode>> parents,
                    std::function<void(TensorNode&)> backward_fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(values));
  bool track = grad_enabled();
  if (track) {
    track = false;
    for (const auto& p : parents)
      if (p->requires_grad) track = true;
  }
  if (track) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace detail

}  // namespace omnistereo
