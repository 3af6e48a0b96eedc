// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace omnistereo {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

int ceil_div(int a, int b) { return (a + b - 1) / b; }

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// TF-style "same": total = max(0, (out-1)*stride + eff_k - in), split low/high.
int pad_before(int in, int out, int stride, int eff_k) {
  const int total = std::max(0, (out - 1) * stride + eff_k - in);
  return total / 2;
}

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
              int dilation) {
  check(input.ndim() == 3, "conv2d: input must be (H, W, C)");
  check(kernel.ndim() == 4, "conv2d: kernel must be (kh, kw, Cin, Cout)");
  const int H = input.dim(0), W = input.dim(1), Ci = input.dim(2);
  const int kh = kernel.dim(0), kw = kernel.dim(1), Co = kernel.dim(3);
  check(kernel.dim(2) == Ci, "conv2d: channel mismatch");
  check(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel must be odd-sized");
  check(stride >= 1 && dilation >= 1, "conv2d: bad stride/dilation");

  const int Ho = ceil_div(H, stride), Wo = ceil_div(W, stride);
  const int eh = (kh - 1) * dilation + 1, ew = (kw - 1) * dilation + 1;
  const int py = pad_before(H, Ho, stride, eh), px = pad_before(W, Wo, stride, ew);

  std::vector<float> out(static_cast<size_t>(Ho) * Wo * Co);
  std::vector<double> acc(static_cast<size_t>(Co));
  const float* in = input.values().data();
  const float* ker = kernel.values().data();

  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride + ky * dilation - py;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride + kx * dilation - px;
          if (ix < 0 || ix >= W) continue;
          const float* ip = in + (static_cast<size_t>(iy) * W + ix) * Ci;
          const float* kp = ker + (static_cast<size_t>(ky) * kw + kx) * Ci * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const double v = ip[ci];
            const float* kr = kp + static_cast<size_t>(ci) * Co;
            for (int co = 0; co < Co; ++co) acc[co] += v * kr[co];
          }
        }
      }
      float* op = out.data() + (static_cast<size_t>(oy) * Wo + ox) * Co;
      for (int co = 0; co < Co; ++co) op[co] = static_cast<float>(acc[co]);
    }
  }

  NodePtr in_n = input.node(), k_n = kernel.node();
  return detail::make_op_node(
      {Ho, Wo, Co}, std::move(out), {in_n, k_n},
      [=](TensorNode& self) {
        const float* g = self.g.data();
        const float* in_v = in_n->v.data();
        const float* k_v = k_n->v.data();
        const bool want_din = in_n->requires_grad;
        const bool want_dk = k_n->requires_grad;
        std::vector<double> din(want_din ? in_n->v.size() : 0, 0.0);
        std::vector<double> dk(want_dk ? k_n->v.size() : 0, 0.0);
        for (int oy = 0; oy < Ho; ++oy) {
          for (int ox = 0; ox < Wo; ++ox) {
            const float* gp = g + (static_cast<size_t>(oy) * Wo + ox) * Co;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride + ky * dilation - py;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride + kx * dilation - px;
                if (ix < 0 || ix >= W) continue;
                const size_t ioff = (static_cast<size_t>(iy) * W + ix) * Ci;
                const size_t koff = (static_cast<size_t>(ky) * kw + kx) * Ci * Co;
                for (int ci = 0; ci < Ci; ++ci) {
                  const float* kr = k_v + koff + static_cast<size_t>(ci) * Co;
                  const double v = in_v[ioff + ci];
                  double a = 0.0;
                  if (want_dk) {
                    double* dkr = dk.data() + koff + static_cast<size_t>(ci) * Co;
                    for (int co = 0; co < Co; ++co) {
                      const double gg = gp[co];
                      a += kr[co] * gg;
                      dkr[co] += v * gg;
                    }
                  } else {
                    for (int co = 0; co < Co; ++co) a += kr[co] * gp[co];
                  }
                  if (want_din) din[ioff + ci] += a;
                }
              }
            }
          }
        }
        if (want_din) {
          auto& dst = in_n->grad();
          for (size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(din[i]);
        }
        if (want_dk) {
          auto& dst = k_n->grad();
          for (size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(dk[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// conv3d (circular along the W/theta axis)

Tensor conv3d(const Tensor& input, const Tensor& kernel,
              std::array<int, 3> stride) {
  check(input.ndim() == 4, "conv3d: input must be (H, W, D, C)");
  check(kernel.ndim() == 5, "conv3d: kernel must be (kh, kw, kd, Cin, Cout)");
  const int H = input.dim(0), W = input.dim(1), D = input.dim(2), Ci = input.dim(3);
  const int kh = kernel.dim(0), kw = kernel.dim(1), kd = kernel.dim(2),
            Co = kernel.dim(4);
  check(kernel.dim(3) == Ci, "conv3d: channel mismatch");
  check(kh % 2 == 1 && kw % 2 == 1 && kd % 2 == 1, "conv3d: kernel must be odd-sized");
  const auto [sh, sw, sd] = stride;
  check(sh >= 1 && sw >= 1 && sd >= 1, "conv3d: bad stride");

  const int Ho = ceil_div(H, sh), Wo = ceil_div(W, sw), Do = ceil_div(D, sd);
  const int pa = pad_before(H, Ho, sh, kh);
  const int pb = pad_before(W, Wo, sw, kw);
  const int pc = pad_before(D, Do, sd, kd);

  std::vector<float> out(static_cast<size_t>(Ho) * Wo * Do * Co);
  std::vector<double> acc(static_cast<size_t>(Co));
  const float* in = input.values().data();
  const float* ker = kernel.values().data();

  for (int oa = 0; oa < Ho; ++oa) {
    for (int ob = 0; ob < Wo; ++ob) {
      for (int oc = 0; oc < Do; ++oc) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int ka = 0; ka < kh; ++ka) {
          const int ia = oa * sh + ka - pa;
          if (ia < 0 || ia >= H) continue;
          for (int kb = 0; kb < kw; ++kb) {
            const int ib = wrap(ob * sw + kb - pb, W);
            for (int kc = 0; kc < kd; ++kc) {
              const int ic = oc * sd + kc - pc;
              if (ic < 0 || ic >= D) continue;
              const float* ip =
                  in + ((static_cast<size_t>(ia) * W + ib) * D + ic) * Ci;
              const float* kp =
                  ker + ((static_cast<size_t>(ka) * kw + kb) * kd + kc) * Ci * Co;
              for (int ci = 0; ci < Ci; ++ci) {
                const double v = ip[ci];
                const float* kr = kp + static_cast<size_t>(ci) * Co;
                for (int co = 0; co < Co; ++co) acc[co] += v * kr[co];
              }
            }
          }
        }
        float* op = out.data() +
                    ((static_cast<size_t>(oa) * Wo + ob) * Do + oc) * Co;
        for (int co = 0; co < Co; ++co) op[co] = static_cast<float>(acc[co]);
      }
    }
  }

  NodePtr in_n = input.node(), k_n = kernel.node();
  return detail::make_op_node(
      {Ho, Wo, Do, Co}, std::move(out), {in_n, k_n},
      [=](TensorNode& self) {
        const float* g = self.g.data();
        const float* in_v = in_n->v.data();
        const float* k_v = k_n->v.data();
        const bool want_din = in_n->requires_grad;
        const bool want_dk = k_n->requires_grad;
        std::vector<double> din(want_din ? in_n->v.size() : 0, 0.0);
        std::vector<double> dk(want_dk ? k_n->v.size() : 0, 0.0);
        for (int oa = 0; oa < Ho; ++oa) {
          for (int ob = 0; ob < Wo; ++ob) {
            for (int oc = 0; oc < Do; ++oc) {
              const float* gp =
                  g + ((static_cast<size_t>(oa) * Wo + ob) * Do + oc) * Co;
              for (int ka = 0; ka < kh; ++ka) {
                const int ia = oa * sh + ka - pa;
                if (ia < 0 || ia >= H) continue;
                for (int kb = 0; kb < kw; ++kb) {
                  const int ib = wrap(ob * sw + kb - pb, W);
                  for (int kc = 0; kc < kd; ++kc) {
                    const int ic = oc * sd + kc - pc;
                    if (ic < 0 || ic >= D) continue;
                    const size_t ioff =
                        ((static_cast<size_t>(ia) * W + ib) * D + ic) * Ci;
                    const size_t koff =
                        ((static_cast<size_t>(ka) * kw + kb) * kd + kc) * Ci * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                      const float* kr = k_v + koff + static_cast<size_t>(ci) * Co;
                      const double v = in_v[ioff + ci];
                      double a = 0.0;
                      if (want_dk) {
                        double* dkr =
                            dk.data() + koff + static_cast<size_t>(ci) * Co;
                        for (int co = 0; co < Co; ++co) {
                          const double gg = gp[co];
                          a += kr[co] * gg;
                          dkr[co] += v * gg;
                        }
                      } else {
                        for (int co = 0; co < Co; ++co) a += kr[co] * gp[co];
                      }
                      if (want_din) din[ioff + ci] += a;
                    }
                  }
                }
              }
            }
          }
        }
        if (want_din) {
          auto& dst = in_n->grad();
          for (size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(din[i]);
        }
        if (want_dk) {
          auto& dst = k_n->grad();
          for (size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(dk[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// deconv3d

Tensor deconv3d(const Tensor& input, const Tensor& kernel, int stride) {
  check(input.ndim() == 4, "deconv3d: input must be (H, W, D, C)");
  check(kernel.ndim() == 5, "deconv3d: kernel must be (kh, kw, kd, Cout, Cin)");
  check(stride == 2, "deconv3d: only stride 2 is supported");
  const int h = input.dim(0), w = input.dim(1), d = input.dim(2), Ci = input.dim(3);
  const int kh = kernel.dim(0), kw = kernel.dim(1), kd = kernel.dim(2),
            Co = kernel.dim(3);
  check(kernel.dim(4) == Ci, "deconv3d: channel mismatch");
  const int H = h * stride, W = w * stride, D = d * stride;
  // Pads of the conv this op transposes (input size H -> output size h).
  const int pa = pad_before(H, h, stride, kh);
  const int pb = pad_before(W, w, stride, kw);
  const int pc = pad_before(D, d, stride, kd);

  std::vector<float> out(static_cast<size_t>(H) * W * D * Co);
  std::vector<double> acc(static_cast<size_t>(Co));
  const float* in = input.values().data();
  const float* ker = kernel.values().data();

  for (int xa = 0; xa < H; ++xa) {
    for (int xb = 0; xb < W; ++xb) {
      for (int xc = 0; xc < D; ++xc) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int ka = 0; ka < kh; ++ka) {
          const int ta = xa + pa - ka;
          if (ta < 0 || ta % stride != 0) continue;
          const int ya = ta / stride;
          if (ya >= h) continue;
          for (int kb = 0; kb < kw; ++kb) {
            const int tb = wrap(xb + pb - kb, W);
            if (tb % stride != 0) continue;
            const int yb = tb / stride;  // in [0, w)
            for (int kc = 0; kc < kd; ++kc) {
              const int tc = xc + pc - kc;
              if (tc < 0 || tc % stride != 0) continue;
              const int yc = tc / stride;
              if (yc >= d) continue;
              const float* ip =
                  in + ((static_cast<size_t>(ya) * w + yb) * d + yc) * Ci;
              const float* kp =
                  ker + ((static_cast<size_t>(ka) * kw + kb) * kd + kc) * Co * Ci;
              for (int co = 0; co < Co; ++co) {
                const float* kr = kp + static_cast<size_t>(co) * Ci;
                double a = 0.0;
                for (int ci = 0; ci < Ci; ++ci) a += ip[ci] * kr[ci];
                acc[co] += a;
              }
            }
          }
        }
        float* op = out.data() +
                    ((static_cast<size_t>(xa) * W + xb) * D + xc) * Co;
        for (int co = 0; co < Co; ++co) op[co] = static_cast<float>(acc[co]);
      }
    }
  }

  NodePtr in_n = input.node(), k_n = kernel.node();
  return detail::make_op_node(
      {H, W, D, Co}, std::move(out), {in_n, k_n},
      [=](TensorNode& self) {
        const float* g = self.g.data();
        const float* in_v = in_n->v.data();
        const float* k_v = k_n->v.data();
        const bool want_din = in_n->requires_grad;
        const bool want_dk = k_n->requires_grad;
        std::vector<double> din(want_din ? in_n->v.size() : 0, 0.0);
        std::vector<double> dk(want_dk ? k_n->v.size() : 0, 0.0);
        for (int xa = 0; xa < H; ++xa) {
          for (int xb = 0; xb < W; ++xb) {
            for (int xc = 0; xc < D; ++xc) {
              const float* gp =
                  g + ((static_cast<size_t>(xa) * W + xb) * D + xc) * Co;
              for (int ka = 0; ka < kh; ++ka) {
                const int ta = xa + pa - ka;
                if (ta < 0 || ta % stride != 0) continue;
                const int ya = ta / stride;
                if (ya >= h) continue;
                for (int kb = 0; kb < kw; ++kb) {
                  const int tb = wrap(xb + pb - kb, W);
                  if (tb % stride != 0) continue;
                  const int yb = tb / stride;
                  for (int kc = 0; kc < kd; ++kc) {
                    const int tc = xc + pc - kc;
                    if (tc < 0 || tc % stride != 0) continue;
                    const int yc = tc / stride;
                    if (yc >= d) continue;
                    const size_t ioff =
                        ((static_cast<size_t>(ya) * w + yb) * d + yc) * Ci;
                    const size_t koff =
                        ((static_cast<size_t>(ka) * kw + kb) * kd + kc) * Co * Ci;
                    for (int co = 0; co < Co; ++co) {
                      const double gg = gp[co];
                      const float* kr = k_v + koff + static_cast<size_t>(co) * Ci;
                      if (want_dk) {
                        double* dkr = dk.data() + koff + static_cast<size_t>(co) * Ci;
                        for (int ci = 0; ci < Ci; ++ci)
                          dkr[ci] += gg * in_v[ioff + ci];
                      }
                      if (want_din) {
                        double* dip = din.data() + ioff;
                        for (int ci = 0; ci < Ci; ++ci) dip[ci] += kr[ci] * gg;
                      }
                    }
                  }
                }
              }
            }
          }
        }
        if (want_din) {
          auto& dst = in_n->grad();
          for (size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(din[i]);
        }
        if (want_dk) {
          auto& dst = k_n->grad();
          for (size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(dk[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// pointwise / reductions

Tensor relu(const Tensor& input) {
  std::vector<float> out(input.values().size());
  const auto& v = input.values();
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0f ? v[i] : 0.0f;
  NodePtr in_n = input.node();
  return detail::make_op_node(
      input.shape(), std::move(out), {in_n}, [=](TensorNode& self) {
        auto& dst = in_n->grad();
        for (size_t i = 0; i < dst.size(); ++i)
          if (in_n->v[i] > 0.0f) dst[i] += self.g[i];
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shape mismatch");
  std::vector<float> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  NodePtr a_n = a.node(), b_n = b.node();
  return detail::make_op_node(
      a.shape(), std::move(out), {a_n, b_n}, [=](TensorNode& self) {
        if (a_n->requires_grad) {
          auto& da = a_n->grad();
          for (size_t i = 0; i < da.size(); ++i) da[i] += self.g[i];
        }
        if (b_n->requires_grad) {
          auto& db = b_n->grad();
          for (size_t i = 0; i < db.size(); ++i) db[i] += self.g[i];
        }
      });
}

Tensor reshape(const Tensor& input, std::vector<int> shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    check(d > 0, "reshape: nonpositive extent");
    n *= d;
  }
  check(n == input.size(), "reshape: element count mismatch");
  NodePtr in_n = input.node();
  return detail::make_op_node(std::move(shape),
                              std::vector<float>(input.values()), {in_n},
                              [=](TensorNode& self) {
                                auto& d = in_n->grad();
                                for (size_t i = 0; i < d.size(); ++i)
                                  d[i] += self.g[i];
                              });
}

Tensor sum(const Tensor& input) {
  double s = 0.0;
  for (float v : input.values()) s += v;
  NodePtr in_n = input.node();
  return detail::make_op_node({1}, {static_cast<float>(s)}, {in_n},
                              [=](TensorNode& self) {
                                auto& d = in_n->grad();
                                for (auto& x : d) x += self.g[0];
                              });
}

Tensor inner(const Tensor& input, const std::vector<float>& weights) {
  check(weights.size() == input.values().size(), "inner: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < weights.size(); ++i)
    s += static_cast<double>(input.values()[i]) * weights[i];
  NodePtr in_n = input.node();
  auto w = weights;
  return detail::make_op_node({1}, {static_cast<float>(s)}, {in_n},
                              [=, w = std::move(w)](TensorNode& self) {
                                auto& d = in_n->grad();
                                for (size_t i = 0; i < d.size(); ++i)
                                  d[i] += self.g[0] * w[i];
                              });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_channels: empty input");
  const auto& s0 = parts[0].shape();
  int total_c = 0;
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) {
    check(p.ndim() == static_cast<int>(s0.size()), "concat_channels: rank mismatch");
    for (size_t i = 0; i + 1 < s0.size(); ++i)
      check(p.shape()[i] == s0[i], "concat_channels: leading shape mismatch");
    total_c += p.shape().back();
    nodes.push_back(p.node());
  }
  std::int64_t rows = 1;
  for (size_t i = 0; i + 1 < s0.size(); ++i) rows *= s0[i];

  std::vector<float> out(static_cast<size_t>(rows) * total_c);
  for (std::int64_t r = 0; r < rows; ++r) {
    float* op = out.data() + static_cast<size_t>(r) * total_c;
    for (const auto& p : parts) {
      const int c = p.shape().back();
      std::memcpy(op, p.values().data() + static_cast<size_t>(r) * c,
                  sizeof(float) * static_cast<size_t>(c));
      op += c;
    }
  }
  std::vector<int> oshape(s0.begin(), s0.end() - 1);
  oshape.push_back(total_c);
  return detail::make_op_node(
      std::move(oshape), std::move(out), nodes, [=](TensorNode& self) {
        for (std::int64_t r = 0; r < rows; ++r) {
          const float* gp = self.g.data() + static_cast<size_t>(r) * total_c;
          for (const auto& n : nodes) {
            const int c = n->shape.back();
            if (n->requires_grad) {
              float* dst = n->grad().data() + static_cast<size_t>(r) * c;
              for (int i = 0; i < c; ++i) dst[i] += gp[i];
            }
            gp += c;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// batchnorm


BatchNorm::BatchNorm(int channels) {
  gamma = Tensor::full({channels}, 1.0f);
  gamma.set_requires_grad(true);
  beta = Tensor::zeros({channels}, true);
  running_mean.assign(static_cast<size_t>(channels), 0.0f);
  running_var.assign(static_cast<size_t>(channels), 1.0f);
}

Tensor batchnorm(const Tensor& input, BatchNorm& bn, bool training) {
  const int C = input.shape().back();
  check(C == bn.channels(), "batchnorm: channel mismatch");
  const std::int64_t M = input.size() / C;
  const float* in = input.values().data();

  std::vector<double> mean(C), var(C), inv_std(C);
  if (training) {
    for (std::int64_t i = 0; i < M; ++i)
      for (int c = 0; c < C; ++c) mean[c] += in[i * C + c];
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(M);
    for (std::int64_t i = 0; i < M; ++i)
      for (int c = 0; c < C; ++c) {
        const double d = in[i * C + c] - mean[c];
        var[c] += d * d;
      }
    for (int c = 0; c < C; ++c) var[c] /= static_cast<double>(M);
    for (int c = 0; c < C; ++c) {
      bn.running_mean[c] = (1.0f - bn.momentum) * bn.running_mean[c] +
                           bn.momentum * static_cast<float>(mean[c]);
      bn.running_var[c] = (1.0f - bn.momentum) * bn.running_var[c] +
                          bn.momentum * static_cast<float>(var[c]);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = bn.running_mean[c];
      var[c] = bn.running_var[c];
    }
  }
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + bn.eps);

  const float* gm = bn.gamma.values().data();
  const float* bt = bn.beta.values().data();
  auto xhat = std::make_shared<std::vector<float>>(input.values().size());
  std::vector<float> out(input.values().size());
  for (std::int64_t i = 0; i < M; ++i)
    for (int c = 0; c < C; ++c) {
      const double xh = (in[i * C + c] - mean[c]) * inv_std[c];
      (*xhat)[i * C + c] = static_cast<float>(xh);
      out[i * C + c] = static_cast<float>(gm[c] * xh + bt[c]);
    }

  NodePtr in_n = input.node(), g_n = bn.gamma.node(), b_n = bn.beta.node();
  auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
  return detail::make_op_node(
      input.shape(), std::move(out), {in_n, g_n, b_n},
      [=](TensorNode& self) {
        const float* g = self.g.data();
        const float* xh = xhat->data();
        std::vector<double> s1(C), s2(C);
        for (std::int64_t i = 0; i < M; ++i)
          for (int c = 0; c < C; ++c) {
            s1[c] += static_cast<double>(g[i * C + c]) * xh[i * C + c];
            s2[c] += g[i * C + c];
          }
        if (g_n->requires_grad) {
          auto& dg = g_n->grad();
          for (int c = 0; c < C; ++c) dg[c] += static_cast<float>(s1[c]);
        }
        if (b_n->requires_grad) {
          auto& db = b_n->grad();
          for (int c = 0; c < C; ++c) db[c] += static_cast<float>(s2[c]);
        }
        if (in_n->requires_grad) {
          auto& dx = in_n->grad();
          const float* gmv = g_n->v.data();
          if (training) {
            const double invm = 1.0 / static_cast<double>(M);
            for (std::int64_t i = 0; i < M; ++i)
              for (int c = 0; c < C; ++c) {
                const double t = g[i * C + c] -
                                 (s1[c] * xh[i * C + c] + s2[c]) * invm;
                dx[i * C + c] += static_cast<float>(gmv[c] * (*istd)[c] * t);
              }
          } else {
            for (std::int64_t i = 0; i < M; ++i)
              for (int c = 0; c < C; ++c)
                dx[i * C + c] +=
                    static_cast<float>(gmv[c] * (*istd)[c] * g[i * C + c]);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// softargmin

Tensor softargmin(const Tensor& cost) {
  check(cost.ndim() == 3, "softargmin: cost must be (H, W, N)");
  const int H = cost.dim(0), W = cost.dim(1), N = cost.dim(2);
  const float* cv = cost.values().data();

  auto probs = std::make_shared<std::vector<float>>(cost.values().size());
  std::vector<float> out(static_cast<size_t>(H) * W);
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(H) * W; ++p) {
    const float* c = cv + p * N;
    float mn = c[0];
    for (int n = 1; n < N; ++n) mn = std::min(mn, c[n]);
    double z = 0.0;
    float* pr = probs->data() + p * N;
    for (int n = 0; n < N; ++n) {
      const double e = std::exp(-static_cast<double>(c[n] - mn));
      pr[n] = static_cast<float>(e);
      z += e;
    }
    double e_idx = 0.0;
    const double iz = 1.0 / z;
    for (int n = 0; n < N; ++n) {
      pr[n] = static_cast<float>(pr[n] * iz);
      e_idx += static_cast<double>(n) * pr[n];
    }
    out[p] = static_cast<float>(e_idx);
  }

  NodePtr c_n = cost.node();
  auto out_copy = std::make_shared<std::vector<float>>(out);
  return detail::make_op_node(
      {H, W}, std::move(out), {c_n}, [=](TensorNode& self) {
        auto& dc = c_n->grad();
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(H) * W; ++p) {
          const double gp = self.g[p];
          if (gp == 0.0) continue;
          const float* pr = probs->data() + p * N;
          const double e_idx = (*out_copy)[p];
          float* d = dc.data() + p * N;
          // d out / d cost_k = p_k * (e_idx - k)
          for (int n = 0; n < N; ++n)
            d[n] += static_cast<float>(gp * pr[n] * (e_idx - n));
        }
      });
}

// ---------------------------------------------------------------------------
// masked L1 loss

Tensor masked_l1_loss(const Tensor& pred, const Tensor& gt,
                      const std::vector<int>& coverage) {
  check(pred.shape() == gt.shape(), "masked_l1_loss: shape mismatch");
  check(coverage.size() == pred.values().size(),
        "masked_l1_loss: coverage size mismatch");
  const float* pv = pred.values().data();
  const float* gv = gt.values().data();
  std::int64_t included = 0;
  double s = 0.0;
  for (size_t i = 0; i < coverage.size(); ++i) {
    if (coverage[i] <= 0) continue;
    ++included;
    s += std::abs(static_cast<double>(pv[i]) - std::round(gv[i])) / coverage[i];
  }
  if (included == 0)
    throw std::invalid_argument("masked_l1_loss: no covered pixels");
  const double loss = s / static_cast<double>(included);

  NodePtr p_n = pred.node();
  auto cov = std::make_shared<std::vector<int>>(coverage);
  auto gt_n = gt.node();
  const double inv_cnt = 1.0 / static_cast<double>(included);
  return detail::make_op_node(
      {1}, {static_cast<float>(loss)}, {p_n}, [=](TensorNode& self) {
        auto& d = p_n->grad();
        const double g0 = self.g[0];
        for (size_t i = 0; i < d.size(); ++i) {
          if ((*cov)[i] <= 0) continue;
          const double diff = static_cast<double>(p_n->v[i]) - std::round(gt_n->v[i]);
          const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
          d[i] += static_cast<float>(g0 * sgn * inv_cnt / (*cov)[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// optimizer / init

void sgd_step(std::vector<Tensor>& params, SgdState& state, float lr,
              float momentum) {
  if (state.velocity.size() != params.size())
    state.velocity.assign(params.size(), {});
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& vel = state.velocity[i];
    if (vel.size() != p.values().size()) vel.assign(p.values().size(), 0.0f);
    if (!p.has_grad()) continue;
    const auto& g = p.node()->g;
    auto& v = p.values();
    for (size_t j = 0; j < v.size(); ++j) {
      vel[j] = momentum * vel[j] + g[j];
      v[j] -= lr * vel[j];
    }
  }
}

Tensor fanin_uniform(std::vector<int> shape, int fan_in, Rand& rng) {
  check(fan_in > 0, "fanin_uniform: fan_in must be positive");
  const double b = std::sqrt(1.0 / fan_in);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-b, b));
  return t;
}

}  // namespace omnistereo
