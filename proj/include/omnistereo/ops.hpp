// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "omnistereo/random.hpp"
#include "omnistereo/tensor.hpp"

namespace omnistereo {

// Differentiable ops for the cost-volume network. Layout is channel-last:
// 2D tensors are (H, W, C), 3D volumes are (H, W, D, C) where D is the
// sweep-sphere axis. All inner products accumulate in double and store
// float32 results.

/// Cross-correlation with odd kernel (kh, kw, Cin, Cout), zero "same"
/// padding; output spatial dims are ceil(input / stride).
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1,
              int dilation = 1);

/// 3D cross-correlation, kernel (kh, kw, kd, Cin, Cout), per-axis strides.
/// The W (theta) axis wraps circularly; H and D use zero padding.
Tensor conv3d(const Tensor& input, const Tensor& kernel,
              std::array<int, 3> stride = {1, 1, 1});

/// Transposed convolution, the exact adjoint of the stride-2 conv3d above:
/// <conv3d(x, k, 2), y> == <x, deconv3d(y, k, 2)>. Kernel layout is
/// (kh, kw, kd, Cout, Cin); output dims are exactly double the input's.
Tensor deconv3d(const Tensor& input, const Tensor& kernel, int stride = 2);

Tensor relu(const Tensor& input);
Tensor add(const Tensor& a, const Tensor& b);

/// Same data under a new shape of equal element count; gradient passes
/// through unchanged.
Tensor reshape(const Tensor& input, std::vector<int> shape);

/// Scalar sum of all elements (reduction in double).
Tensor sum(const Tensor& input);

/// Scalar <input, weights>; handy as a probe function in gradient checks.
Tensor inner(const Tensor& input, const std::vector<float>& weights);

/// Concatenation along the last (channel) axis.
Tensor concat_channels(const std::vector<Tensor>& parts);

/// Per-channel affine normalization over all leading axes. Training mode
/// uses batch statistics and updates the running averages; eval mode uses
/// the stored running averages.
struct BatchNorm {
  Tensor gamma;  // (C), learned scale
  Tensor beta;   // (C), learned shift
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;

  explicit BatchNorm(int channels);
  int channels() const { return static_cast<int>(running_mean.size()); }
};

Tensor batchnorm(const Tensor& input, BatchNorm& bn, bool training);

/// Per-pixel expectation of the plane index under softmax(-cost):
/// (H, W, N) -> (H, W), stabilized by the per-pixel minimum cost.
Tensor softargmin(const Tensor& cost);

/// Mean over covered pixels of |pred - round(gt)| / coverage. Pixels with
/// zero coverage are excluded; throws when nothing is covered.
Tensor masked_l1_loss(const Tensor& pred, const Tensor& gt,
                      const std::vector<int>& coverage);

/// SGD with momentum: v <- momentum*v + g; p <- p - lr*v.
struct SgdState {
  std::vector<std::vector<float>> velocity;  // one buffer per parameter
};

void sgd_step(std::vector<Tensor>& params, SgdState& state, float lr,
              float momentum);

/// Uniform init in [-b, b] with b = sqrt(1 / fan_in).
Tensor fanin_uniform(std::vector<int> shape, int fan_in, Rand& rng);

}  // namespace omnistereo
