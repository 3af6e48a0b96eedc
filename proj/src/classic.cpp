// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/classic.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace omnistereo {

namespace {

constexpr double kVarEps = 1e-8;
constexpr float kInvalidCost = 1000.0f;

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

struct PatchStats {
  double mean_a, mean_b, var_a, var_b, cov;
  bool ok;
};

// Patch statistics for two co-indexed rasters with theta wrap; ok=false when
// any cell is invalid in either mask.
template <typename FetchA, typename FetchB, typename ValidAt>
PatchStats patch_stats(int row, int col, int h, int w, int half, FetchA&& a,
                       FetchB&& b, ValidAt&& valid_at) {
  PatchStats s{0, 0, 0, 0, 0, false};
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  int count = 0;
  for (int dr = -half; dr <= half; ++dr) {
    const int r = row + dr;
    if (r < 0 || r >= h) return s;
    for (int dc = -half; dc <= half; ++dc) {
      const int c = wrap(col + dc, w);
      if (!valid_at(r, c)) return s;
      const double va = a(r, c), vb = b(r, c);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
      ++count;
    }
  }
  const double inv = 1.0 / count;
  s.mean_a = sa * inv;
  s.mean_b = sb * inv;
  s.var_a = saa * inv - s.mean_a * s.mean_a;
  s.var_b = sbb * inv - s.mean_b * s.mean_b;
  s.cov = sab * inv - s.mean_a * s.mean_b;
  s.ok = true;
  return s;
}

float zncc_to_cost(double zncc) {
  const double c = (1.0 - zncc) / 2.0;
  return static_cast<float>(std::clamp(c, 0.0, 1.0));
}

// One recurrence step of the scanline aggregation.
void sgm_step(const float* cost, int planes, const std::vector<float>& prev,
              std::vector<float>& cur, float p1, float p2) {
  float min_prev = prev[0];
  for (int n = 1; n < planes; ++n) min_prev = std::min(min_prev, prev[n]);
  for (int n = 0; n < planes; ++n) {
    float best = prev[n];
    if (n > 0) best = std::min(best, prev[n - 1] + p1);
    if (n < planes - 1) best = std::min(best, prev[n + 1] + p1);
    best = std::min(best, min_prev + p2);
    cur[n] = cost[n] + best - min_prev;
  }
}

}  // namespace

CostVolume zncc_cost(const SphericalVolume& a, const SphericalVolume& b,
                     int patch) {
  if (patch < 3 || patch % 2 == 0)
    throw std::invalid_argument("zncc_cost: patch must be odd and >= 3");
  const auto& sa = a.data.shape();
  if (a.data.ndim() != 4 || sa[3] != 1)
    throw std::invalid_argument("zncc_cost: volumes must be (H, W, N, 1)");
  if (sa != b.data.shape())
    throw std::invalid_argument("zncc_cost: volume shape mismatch");
  const int h = sa[0], w = sa[1], planes = sa[2];
  const int half = patch / 2;

  CostVolume out;
  out.height = h;
  out.width = w;
  out.planes = planes;
  out.data.assign(static_cast<std::size_t>(h) * w * planes, 0.0f);
  out.valid.assign(out.data.size(), 0);

  const float* av = a.data.values().data();
  const float* bv = b.data.values().data();
  for (int j = 0; j < planes; ++j) {
    auto fetch_a = [&](int r, int c) {
      return static_cast<double>(av[(static_cast<std::size_t>(r) * w + c) * planes + j]);
    };
    auto fetch_b = [&](int r, int c) {
      return static_cast<double>(bv[(static_cast<std::size_t>(r) * w + c) * planes + j]);
    };
    auto valid_at = [&](int r, int c) {
      const std::size_t i = (static_cast<std::size_t>(r) * w + c) * planes + j;
      return a.mask[i] && b.mask[i];
    };
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        const auto s =
            patch_stats(row, col, h, w, half, fetch_a, fetch_b, valid_at);
        if (!s.ok || s.var_a < kVarEps || s.var_b < kVarEps) continue;
        const std::size_t i = out.at(row, col, j);
        out.data[i] = zncc_to_cost(s.cov / std::sqrt(s.var_a * s.var_b));
        out.valid[i] = 1;
      }
    }
  }
  return out;
}

CostVolume multiview_cost(const std::vector<CostVolume>& pairs) {
  if (pairs.empty())
    throw std::invalid_argument("multiview_cost: no input volumes");
  CostVolume out = pairs[0];
  for (const auto& p : pairs)
    if (p.height != out.height || p.width != out.width ||
        p.planes != out.planes)
      throw std::invalid_argument("multiview_cost: shape mismatch");
  std::fill(out.data.begin(), out.data.end(), 0.0f);
  std::fill(out.valid.begin(), out.valid.end(), 0);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    double s = 0.0;
    int count = 0;
    for (const auto& p : pairs)
      if (p.valid[i]) {
        s += p.data[i];
        ++count;
      }
    if (count > 0) {
      out.data[i] = static_cast<float>(s / count);
      out.valid[i] = 1;
    }
  }
  return out;
}

IndexMap winner_take_all(const CostVolume& cost) {
  IndexMap out;
  out.height = cost.height;
  out.width = cost.width;
  out.index.assign(static_cast<std::size_t>(cost.height) * cost.width, 0.0f);
  out.valid.assign(out.index.size(), 0);
  for (int row = 0; row < cost.height; ++row) {
    for (int col = 0; col < cost.width; ++col) {
      int best = -1;
      float best_cost = 0.0f;
      for (int j = 0; j < cost.planes; ++j) {
        const std::size_t i = cost.at(row, col, j);
        if (!cost.valid[i]) continue;
        if (best < 0 || cost.data[i] < best_cost) {
          best = j;
          best_cost = cost.data[i];
        }
      }
      const std::size_t o = static_cast<std::size_t>(row) * cost.width + col;
      if (best >= 0) {
        out.index[o] = static_cast<float>(best * cost.stride);
        out.valid[o] = 1;
      }
    }
  }
  return out;
}

CostVolume sgm(const CostVolume& cost, const SgmParams& params) {
  if (params.p1 < 0.0f || params.p2 < params.p1)
    throw std::invalid_argument("sgm: need 0 <= p1 <= p2");
  if (params.num_paths != 4 && params.num_paths != 8)
    throw std::invalid_argument("sgm: num_paths must be 4 or 8");
  const int h = cost.height, w = cost.width, planes = cost.planes;

  std::vector<float> c(cost.data);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!cost.valid[i]) c[i] = kInvalidCost;

  std::vector<double> agg(c.size(), 0.0);
  std::vector<float> prev(planes), cur(planes);

  static const int dirs[8][2] = {{0, 1}, {0, -1}, {1, 0},  {-1, 0},
                                 {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  for (int p = 0; p < params.num_paths; ++p) {
    const int dr = dirs[p][0], dc = dirs[p][1];
    if (dr == 0) {
      // Cyclic horizontal scan: two laps, the second lap's values are kept.
      std::vector<float> row_l(static_cast<std::size_t>(w) * planes);
      for (int row = 0; row < h; ++row) {
        bool first = true;
        for (int lap = 0; lap < 2; ++lap) {
          for (int step = 0; step < w; ++step) {
            const int col = dc > 0 ? step : w - 1 - step;
            const float* cp = c.data() + cost.at(row, col, 0);
            float* lp = row_l.data() + static_cast<std::size_t>(col) * planes;
            if (first) {
              std::copy(cp, cp + planes, lp);
              first = false;
            } else {
              sgm_step(cp, planes, prev, cur, params.p1, params.p2);
              std::copy(cur.begin(), cur.end(), lp);
            }
            prev.assign(lp, lp + planes);
          }
        }
        for (int col = 0; col < w; ++col) {
          const float* lp = row_l.data() + static_cast<std::size_t>(col) * planes;
          double* ap = agg.data() + cost.at(row, col, 0);
          for (int n = 0; n < planes; ++n) ap[n] += lp[n];
        }
      }
    } else {
      // Paths start at a row border and wrap in theta; path id = start col.
      std::vector<float> lanes(static_cast<std::size_t>(w) * planes);
      for (int k = 0; k < h; ++k) {
        const int row = dr > 0 ? k : h - 1 - k;
        for (int c0 = 0; c0 < w; ++c0) {
          const int col = wrap(c0 + k * dc, w);
          const float* cp = c.data() + cost.at(row, col, 0);
          float* lp = lanes.data() + static_cast<std::size_t>(c0) * planes;
          if (k == 0) {
            std::copy(cp, cp + planes, lp);
          } else {
            prev.assign(lp, lp + planes);
            sgm_step(cp, planes, prev, cur, params.p1, params.p2);
            std::copy(cur.begin(), cur.end(), lp);
          }
          double* ap = agg.data() + cost.at(row, col, 0);
          for (int n = 0; n < planes; ++n) ap[n] += lp[n];
        }
      }
    }
  }

  CostVolume out = cost;
  for (std::size_t i = 0; i < agg.size(); ++i)
    out.data[i] = static_cast<float>(agg[i]);
  return out;
}

std::vector<SphericalVolume> warp_all_cameras(
    const std::vector<std::vector<float>>& images, const LookupTable& table) {
  if (static_cast<int>(images.size()) != table.num_cameras)
    throw std::invalid_argument("warp_all_cameras: image count mismatch");
  std::vector<SphericalVolume> out;
  for (int i = 0; i < table.num_cameras; ++i)
    out.push_back(warp_image(images[i], table.source_height,
                             table.source_width, table, i));
  return out;
}

CostVolume build_cost_volume(const std::vector<SphericalVolume>& volumes,
                             int patch) {
  if (volumes.size() < 2)
    throw std::invalid_argument("build_cost_volume: need >= 2 volumes");
  std::vector<CostVolume> pairs;
  for (std::size_t i = 0; i < volumes.size(); ++i)
    for (std::size_t j = i + 1; j < volumes.size(); ++j)
      pairs.push_back(zncc_cost(volumes[i], volumes[j], patch));
  return multiview_cost(pairs);
}

// ---------------------------------------------------------------------------
// Rectify and stitch

std::vector<PinholeView> rectify_pairs(
    const Rig& rig, const std::vector<std::vector<float>>& images,
    int image_size, double fov_deg) {
  rig.validate();
  if (static_cast<int>(images.size()) != rig.size())
    throw std::invalid_argument("rectify_pairs: image count mismatch");
  if (image_size < 8) throw std::invalid_argument("rectify_pairs: raster too small");
  const double fov = fov_deg * M_PI / 180.0;
  if (fov <= 0.0 || fov >= M_PI)
    throw std::invalid_argument("rectify_pairs: pinhole fov must be in (0, 180)");

  for (int i = 0; i < rig.size(); ++i) {
    const auto& cam = rig.cameras[i];
    if (images[i].size() !=
        static_cast<std::size_t>(cam.image_height) * cam.image_width)
      throw std::invalid_argument("rectify_pairs: raster size mismatch");
  }

  const int n = rig.size();
  std::vector<PinholeView> out;
  for (int k = 0; k < n; ++k) {
    const int li = k, ri = (k + 1) % n;
    const auto& cl = rig.cameras[li];
    const auto& cr = rig.cameras[ri];
    PinholeView view;
    view.image_size = image_size;
    view.left_camera = li;
    view.right_camera = ri;
    view.left_center = cl.center();
    view.right_center = cr.center();
    const Vec3 bl = view.right_center - view.left_center;
    view.baseline = bl.norm();
    if (view.baseline < 1e-9)
      throw std::invalid_argument("rectify_pairs: coincident centers in pair " +
                                  std::to_string(k));
    const Vec3 x_axis = bl / view.baseline;
    const Vec3 axis_l = cl.rotation.transpose() * Vec3(0, 0, 1);
    const Vec3 axis_r = cr.rotation.transpose() * Vec3(0, 0, 1);
    Vec3 z_axis = axis_l + axis_r;
    z_axis -= z_axis.dot(x_axis) * x_axis;
    if (z_axis.norm() < 1e-6)
      throw std::invalid_argument(
          "rectify_pairs: degenerate view direction in pair " +
          std::to_string(k));
    z_axis.normalize();
    const Vec3 y_axis = z_axis.cross(x_axis);
    view.rotation.row(0) = x_axis;
    view.rotation.row(1) = y_axis;
    view.rotation.row(2) = z_axis;
    view.focal = (image_size / 2.0) / std::tan(fov / 2.0);
    view.principal = Vec2((image_size - 1) / 2.0, (image_size - 1) / 2.0);

    // The central epipolar band must fall inside both fisheye cones.
    for (const auto* cam : {&cl, &cr}) {
      const Vec3 axis = cam->rotation.transpose() * Vec3(0, 0, 1);
      for (int u : {0, image_size - 1}) {
        const Vec3 dir_rect((u - view.principal.x()) / view.focal, 0.0, 1.0);
        const Vec3 dir = (view.rotation.transpose() * dir_rect).normalized();
        if (std::acos(std::clamp(dir.dot(axis), -1.0, 1.0)) > cam->fov / 2.0)
          throw std::invalid_argument(
              "rectify_pairs: fisheye fov does not cover the epipolar band "
              "of pair " +
              std::to_string(k));
      }
    }

    auto resample = [&](const FisheyeCamera& cam, const std::vector<float>& img,
                        std::vector<float>& dst,
                        std::vector<std::uint8_t>& dst_valid) {
      dst.assign(static_cast<std::size_t>(image_size) * image_size, 0.0f);
      dst_valid.assign(dst.size(), 0);
      for (int v = 0; v < image_size; ++v) {
        for (int u = 0; u < image_size; ++u) {
          const Vec3 dir_rect((u - view.principal.x()) / view.focal,
                              (v - view.principal.y()) / view.focal, 1.0);
          const Vec3 dir = view.rotation.transpose() * dir_rect;
          const auto px = cam.project_direction(dir);
          if (!px) continue;
          const double du = px->x(), dv = px->y();
          if (!bilinear_inside(du, dv, cam.image_height, cam.image_width))
            continue;
          const int x0 = static_cast<int>(std::floor(du));
          const int y0 = static_cast<int>(std::floor(dv));
          const double fx = du - x0, fy = dv - y0;
          const std::size_t i00 =
              static_cast<std::size_t>(y0) * cam.image_width + x0;
          const double top = (1.0 - fx) * img[i00] + fx * img[i00 + 1];
          const double bot = (1.0 - fx) * img[i00 + cam.image_width] +
                             fx * img[i00 + cam.image_width + 1];
          const std::size_t o = static_cast<std::size_t>(v) * image_size + u;
          dst[o] = static_cast<float>((1.0 - fy) * top + fy * bot);
          dst_valid[o] = 1;
        }
      }
    };
    resample(cl, images[li], view.left, view.left_valid);
    resample(cr, images[ri], view.right, view.right_valid);
    out.push_back(std::move(view));
  }
  return out;
}

DisparityMap block_match(const PinholeView& view, int patch, int max_disparity,
                         double min_depth) {
  if (patch < 3 || patch % 2 == 0)
    throw std::invalid_argument("block_match: patch must be odd and >= 3");
  const int s = view.image_size;
  const int half = patch / 2;
  int max_d = max_disparity;
  if (max_d <= 0)
    max_d = static_cast<int>(
                std::ceil(view.focal * view.baseline / min_depth)) +
            2;
  max_d = std::min(max_d, s - patch);

  DisparityMap out;
  out.image_size = s;
  out.disparity.assign(static_cast<std::size_t>(s) * s, 0.0f);
  out.valid.assign(out.disparity.size(), 0);

  auto patch_ok = [&](const std::vector<std::uint8_t>& m, int row, int col) {
    for (int dr = -half; dr <= half; ++dr)
      for (int dc = -half; dc <= half; ++dc)
        if (!m[static_cast<std::size_t>(row + dr) * s + col + dc]) return false;
    return true;
  };
  auto cost_at = [&](int row, int ul, int ur) -> double {
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (int dr = -half; dr <= half; ++dr)
      for (int dc = -half; dc <= half; ++dc) {
        const double va =
            view.left[static_cast<std::size_t>(row + dr) * s + ul + dc];
        const double vb =
            view.right[static_cast<std::size_t>(row + dr) * s + ur + dc];
        sa += va;
        sb += vb;
        saa += va * va;
        sbb += vb * vb;
        sab += va * vb;
      }
    const double inv = 1.0 / (patch * patch);
    const double va = saa * inv - sa * inv * sa * inv;
    const double vb = sbb * inv - sb * inv * sb * inv;
    if (va < kVarEps || vb < kVarEps) return 2.0;  // sentinel: unusable
    const double cov = sab * inv - sa * inv * sb * inv;
    return (1.0 - cov / std::sqrt(va * vb)) / 2.0;
  };

  for (int row = half; row < s - half; ++row) {
    for (int u = half; u < s - half; ++u) {
      if (!patch_ok(view.left_valid, row, u)) continue;
      int best_d = -1;
      double best_cost = 2.0;
      std::vector<double> costs(static_cast<std::size_t>(max_d) + 1, 2.0);
      for (int d = 0; d <= max_d; ++d) {
        const int ur = u - d;
        if (ur - half < 0) break;
        if (!patch_ok(view.right_valid, row, ur)) continue;
        const double cst = cost_at(row, u, ur);
        costs[d] = cst;
        if (cst < best_cost) {
          best_cost = cst;
          best_d = d;
        }
      }
      if (best_d < 1 || best_cost > 0.35) continue;
      double disp = best_d;
      if (best_d > 0 && best_d < max_d && costs[best_d - 1] < 1.5 &&
          costs[best_d + 1] < 1.5) {
        const double denom =
            costs[best_d - 1] - 2.0 * costs[best_d] + costs[best_d + 1];
        if (denom > 1e-12) {
          const double delta =
              0.5 * (costs[best_d - 1] - costs[best_d + 1]) / denom;
          disp += std::clamp(delta, -0.5, 0.5);
        }
      }
      const std::size_t o = static_cast<std::size_t>(row) * s + u;
      out.disparity[o] = static_cast<float>(disp);
      out.valid[o] = 1;
    }
  }
  return out;
}

IndexMap stitch_disparities(const std::vector<PinholeView>& views,
                            const std::vector<DisparityMap>& disparities,
                            const SweepGrid& grid) {
  if (views.size() != disparities.size())
    throw std::invalid_argument("stitch_disparities: view/disparity count mismatch");
  grid.validate();
  const int H = grid.height, W = grid.width;

  std::vector<double> best_rho(static_cast<std::size_t>(H) * W,
                               std::numeric_limits<double>::infinity());
  for (std::size_t vi = 0; vi < views.size(); ++vi) {
    const auto& view = views[vi];
    const auto& dmap = disparities[vi];
    if (dmap.image_size != view.image_size)
      throw std::invalid_argument("stitch_disparities: raster size mismatch");
    const int s = view.image_size;
    const Mat3 r_t = view.rotation.transpose();
    for (int row = 0; row < s; ++row) {
      for (int u = 0; u < s; ++u) {
        const std::size_t o = static_cast<std::size_t>(row) * s + u;
        if (!dmap.valid[o]) continue;
        const double disp = dmap.disparity[o];
        if (disp < 0.5) continue;
        const double z = view.focal * view.baseline / disp;
        const Vec3 x_rect((u - view.principal.x()) / view.focal * z,
                          (row - view.principal.y()) / view.focal * z, z);
        const Vec3 x_rig = r_t * x_rect + view.left_center;
        const double rho = x_rig.norm();
        if (rho < 1e-9) continue;
        const auto sph = spherical_of(x_rig);
        const double gr =
            (sph.phi - grid.phi_min) / (grid.phi_max - grid.phi_min) * H - 0.5;
        const double gc = (sph.theta + M_PI) / (2.0 * M_PI) * W - 0.5;
        for (int r = static_cast<int>(std::floor(gr - 1.0));
             r <= static_cast<int>(std::ceil(gr + 1.0)); ++r) {
          if (r < 0 || r >= H) continue;
          for (int c = static_cast<int>(std::floor(gc - 1.0));
               c <= static_cast<int>(std::ceil(gc + 1.0)); ++c) {
            const double dr = gr - r, dc = gc - c;
            if (dr * dr + dc * dc > 1.0) continue;
            const std::size_t cell =
                static_cast<std::size_t>(r) * W + wrap(c, W);
            if (rho < best_rho[cell]) best_rho[cell] = rho;
          }
        }
      }
    }
  }

  IndexMap out;
  out.height = H;
  out.width = W;
  out.index.assign(best_rho.size(), 0.0f);
  out.valid.assign(best_rho.size(), 0);
  const double scale = (grid.num_spheres - 1) / grid.inv_depth_max;
  for (std::size_t i = 0; i < best_rho.size(); ++i) {
    if (!std::isfinite(best_rho[i])) continue;
    const double idx = std::clamp(scale / best_rho[i], 0.0,
                                  static_cast<double>(grid.num_spheres - 1));
    out.index[i] = static_cast<float>(idx);
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace omnistereo
