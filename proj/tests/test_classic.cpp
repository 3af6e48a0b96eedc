// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <vector>

#include "omnistereo/classic.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/random.hpp"
#include "omnistereo/sweeping.hpp"

using namespace omnistereo;

namespace {

int wrap_i(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

SphericalVolume make_volume(int h, int w, int planes,
                            const std::vector<float>& data,
                            const std::vector<std::uint8_t>& mask) {
  SphericalVolume v;
  v.data = Tensor::from_data({h, w, planes, 1}, data);
  v.mask = mask;
  return v;
}

SphericalVolume random_volume(int h, int w, int planes, std::uint64_t seed,
                              double hole_rate) {
  Rand rng(seed);
  std::vector<float> data(static_cast<std::size_t>(h) * w * planes);
  std::vector<std::uint8_t> mask(data.size(), 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    if (rng.coin(hole_rate)) mask[i] = 0;
  }
  return make_volume(h, w, planes, data, mask);
}

// Straightforward double-precision ZNCC over a wrapped patch; shares no
// code with the library path.
void zncc_oracle(const SphericalVolume& a, const SphericalVolume& b, int patch,
                 std::vector<float>& cost, std::vector<std::uint8_t>& valid) {
  const int h = a.data.dim(0), w = a.data.dim(1), planes = a.data.dim(2);
  const int half = patch / 2;
  cost.assign(static_cast<std::size_t>(h) * w * planes, 0.0f);
  valid.assign(cost.size(), 0);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col)
      for (int j = 0; j < planes; ++j) {
        if (row - half < 0 || row + half >= h) continue;
        std::vector<double> pa, pb;
        bool ok = true;
        for (int dr = -half; dr <= half && ok; ++dr)
          for (int dc = -half; dc <= half && ok; ++dc) {
            const int r = row + dr, c = wrap_i(col + dc, w);
            const std::size_t i =
                (static_cast<std::size_t>(r) * w + c) * planes + j;
            if (!a.mask[i] || !b.mask[i]) {
              ok = false;
              break;
            }
            pa.push_back(a.data.values()[i]);
            pb.push_back(b.data.values()[i]);
          }
        if (!ok) continue;
        const double n = static_cast<double>(pa.size());
        double ma = 0, mb = 0;
        for (double v : pa) ma += v;
        for (double v : pb) mb += v;
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cov = 0;
        for (std::size_t i = 0; i < pa.size(); ++i) {
          va += (pa[i] - ma) * (pa[i] - ma);
          vb += (pb[i] - mb) * (pb[i] - mb);
          cov += (pa[i] - ma) * (pb[i] - mb);
        }
        va /= n;
        vb /= n;
        cov /= n;
        if (va < 1e-8 || vb < 1e-8) continue;
        const std::size_t o =
            (static_cast<std::size_t>(row) * w + col) * planes + j;
        cost[o] = static_cast<float>(
            std::clamp((1.0 - cov / std::sqrt(va * vb)) / 2.0, 0.0, 1.0));
        valid[o] = 1;
      }
}

// Scanline oracle: enumerates every path explicitly and runs the documented
// recurrence along it, mirroring float storage per step.
std::vector<double> sgm_oracle(const CostVolume& cost, const SgmParams& p) {
  const int h = cost.height, w = cost.width, planes = cost.planes;
  std::vector<float> c(cost.data);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!cost.valid[i]) c[i] = 1000.0f;

  auto step = [&](const std::vector<float>& prev, int row, int col,
                  std::vector<float>& cur) {
    float mp = prev[0];
    for (int n = 1; n < planes; ++n) mp = std::min(mp, prev[n]);
    const float* cv = c.data() + cost.at(row, col, 0);
    cur.resize(planes);
    for (int n = 0; n < planes; ++n) {
      float best = prev[n];
      if (n > 0) best = std::min(best, prev[n - 1] + p.p1);
      if (n + 1 < planes) best = std::min(best, prev[n + 1] + p.p1);
      best = std::min(best, mp + p.p2);
      cur[n] = cv[n] + best - mp;
    }
  };
  auto fetch = [&](int row, int col) {
    const float* cv = c.data() + cost.at(row, col, 0);
    return std::vector<float>(cv, cv + planes);
  };

  std::vector<double> agg(c.size(), 0.0);
  auto deposit = [&](int row, int col, const std::vector<float>& l) {
    double* ap = agg.data() + cost.at(row, col, 0);
    for (int n = 0; n < planes; ++n) ap[n] += l[n];
  };

  static const int dirs[8][2] = {{0, 1}, {0, -1}, {1, 0},  {-1, 0},
                                 {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  for (int d = 0; d < p.num_paths; ++d) {
    const int dr = dirs[d][0], dc = dirs[d][1];
    if (dr == 0) {
      for (int row = 0; row < h; ++row) {
        // Column sequence around the ring twice; second visit is kept.
        std::vector<int> seq;
        for (int lap = 0; lap < 2; ++lap)
          for (int s = 0; s < w; ++s) seq.push_back(dc > 0 ? s : w - 1 - s);
        std::vector<std::vector<float>> l(seq.size());
        l[0] = fetch(row, seq[0]);
        for (std::size_t k = 1; k < seq.size(); ++k)
          step(l[k - 1], row, seq[k], l[k]);
        for (std::size_t k = w; k < seq.size(); ++k) deposit(row, seq[k], l[k]);
      }
    } else {
      for (int c0 = 0; c0 < w; ++c0) {
        std::vector<float> l;
        for (int k = 0; k < h; ++k) {
          const int row = dr > 0 ? k : h - 1 - k;
          const int col = wrap_i(c0 + k * dc, w);
          if (k == 0) {
            l = fetch(row, col);
          } else {
            std::vector<float> cur;
            step(l, row, col, cur);
            l = cur;
          }
          deposit(row, col, l);
        }
      }
    }
  }
  return agg;
}

double frac(double x) { return x - std::floor(x); }

// Smooth direction texture for analytic scenes.
float dir_tex(const Vec3& d) {
  const double v = 0.5 + 0.18 * std::sin(5.0 * d.x() + 1.0) +
                   0.14 * std::cos(7.0 * d.y() - 2.0) +
                   0.12 * std::sin(6.0 * d.z()) * std::cos(3.0 * d.x());
  return static_cast<float>(std::clamp(v, 0.02, 0.98));
}

// Fisheye render of a textured sphere of radius `radius` about the origin.
std::vector<float> render_sphere(const FisheyeCamera& cam, double radius) {
  const int h = cam.image_height, w = cam.image_width;
  std::vector<float> img(static_cast<std::size_t>(h) * w, 0.0f);
  const Vec3 c = cam.center();
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const Vec3 d = cam.unproject_rig(u, v);
      const double b = c.dot(d);
      const double disc = b * b + radius * radius - c.squaredNorm();
      const double t = -b + std::sqrt(disc);
      const Vec3 p = c + t * d;
      img[static_cast<std::size_t>(v) * w + u] = dir_tex(p / p.norm());
    }
  return img;
}

SweepGrid e2e_grid() {
  SweepGrid g;
  g.height = 16;
  g.width = 64;
  g.phi_min = -M_PI / 4.0;
  g.phi_max = M_PI / 4.0;
  g.num_spheres = 16;
  g.inv_depth_max = 2.0;
  g.stride = 2;
  return g;
}

}  // namespace

TEST_SUITE("classic") {

TEST_CASE("zncc cost hits the exact ends of the correlation range") {
  const int h = 9, w = 16, planes = 2;
  Rand rng(900);
  std::vector<float> base(static_cast<std::size_t>(h) * w * planes);
  for (auto& v : base) v = static_cast<float>(rng.uniform(0.1, 0.9));
  const std::vector<std::uint8_t> all(base.size(), 1);

  const auto a = make_volume(h, w, planes, base, all);

  // Identical signals: ZNCC 1, cost 0.
  const auto self_cost = zncc_cost(a, a, 9);
  // Affine transform of the signal: still cost 0.
  std::vector<float> affine(base.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    affine[i] = 0.05f + 0.5f * base[i];
  const auto affine_cost =
      zncc_cost(a, make_volume(h, w, planes, affine, all), 9);
  // Negated signal: ZNCC -1, cost 1.
  std::vector<float> negated(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) negated[i] = 1.0f - base[i];
  const auto neg_cost =
      zncc_cost(a, make_volume(h, w, planes, negated, all), 9);

  // patch 9 on 9 rows: only the middle row can host a full patch.
  std::size_t checked = 0;
  for (int col = 0; col < w; ++col)
    for (int j = 0; j < planes; ++j) {
      const std::size_t i = self_cost.at(4, col, j);
      REQUIRE(self_cost.valid[i] == 1);
      CHECK(self_cost.data[i] <= 1e-6f);
      CHECK(affine_cost.data[i] <= 1e-6f);
      CHECK(neg_cost.data[i] >= 1.0f - 1e-6f);
      ++checked;
    }
  CHECK(checked == static_cast<std::size_t>(w) * planes);
  for (int col = 0; col < w; ++col)
    for (int j = 0; j < planes; ++j) {
      CHECK(self_cost.valid[self_cost.at(0, col, j)] == 0);
      CHECK(self_cost.valid[self_cost.at(8, col, j)] == 0);
    }

  // A flat signal has no variance to normalize.
  const auto flat = make_volume(h, w, planes,
                                std::vector<float>(base.size(), 0.5f), all);
  const auto flat_cost = zncc_cost(a, flat, 9);
  for (std::size_t i = 0; i < flat_cost.valid.size(); ++i)
    CHECK(flat_cost.valid[i] == 0);
}

TEST_CASE("zncc cost matches the loop oracle with masked holes") {
  const auto a = random_volume(12, 16, 3, 901, 0.05);
  const auto b = random_volume(12, 16, 3, 902, 0.05);
  for (int patch : {3, 9}) {
    const auto cost = zncc_cost(a, b, patch);
    std::vector<float> ref;
    std::vector<std::uint8_t> ref_valid;
    zncc_oracle(a, b, patch, ref, ref_valid);
    REQUIRE(cost.data.size() == ref.size());
    CHECK(cost.valid == ref_valid);
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (ref_valid[i])
        worst = std::max(worst,
                         std::abs(static_cast<double>(cost.data[i]) - ref[i]));
    CHECK(worst <= 1e-6);
  }
  CHECK_THROWS_AS(zncc_cost(a, b, 4), std::invalid_argument);
  CHECK_THROWS_AS(zncc_cost(a, random_volume(12, 16, 2, 903, 0.0), 9),
                  std::invalid_argument);
}

TEST_CASE("a mask hole invalidates every patch that covers it") {
  const int h = 11, w = 16, planes = 1;
  Rand rng(904);
  std::vector<float> data(static_cast<std::size_t>(h) * w);
  for (auto& v : data) v = static_cast<float>(rng.uniform(0.0, 1.0));
  std::vector<std::uint8_t> mask(data.size(), 1);
  mask[static_cast<std::size_t>(5) * w + 2] = 0;  // hole at (5, 2)
  const auto a = make_volume(h, w, planes, data, mask);
  const auto b = random_volume(h, w, planes, 905, 0.0);
  const auto cost = zncc_cost(a, b, 9);
  for (int col = 0; col < w; ++col) {
    // Theta distance wraps; the hole kills patches within 4 columns.
    const int dc = std::min(wrap_i(col - 2, w), wrap_i(2 - col, w));
    const bool covered = dc <= 4;  // row 5 is within 4 of every valid row
    for (int row = 4; row <= 6; ++row)
      CHECK(cost.valid[cost.at(row, col, 0)] == (covered ? 0 : 1));
  }
}

TEST_CASE("multiview cost averages valid pairs per cell") {
  CostVolume a;
  a.height = 1;
  a.width = 1;
  a.planes = 2;
  a.data = {0.2f, 0.4f};
  a.valid = {1, 0};
  CostVolume b = a;
  b.data = {0.6f, 0.8f};
  b.valid = {1, 1};
  const auto merged = multiview_cost({a, b});
  CHECK(merged.data[0] == doctest::Approx(0.4f));
  CHECK(merged.valid[0] == 1);
  CHECK(merged.data[1] == doctest::Approx(0.8f));
  CHECK(merged.valid[1] == 1);

  CostVolume neither = a;
  neither.valid = {0, 0};
  const auto gaps = multiview_cost({neither, neither});
  CHECK(gaps.valid[0] == 0);
  CHECK(gaps.valid[1] == 0);

  CostVolume wide = a;
  wide.width = 2;
  wide.data = {0.1f, 0.1f, 0.1f, 0.1f};
  wide.valid = {1, 1, 1, 1};
  CHECK_THROWS_AS(multiview_cost({a, wide}), std::invalid_argument);
  CHECK_THROWS_AS(multiview_cost({}), std::invalid_argument);
}

TEST_CASE("winner take all maps plane argmins onto the full ladder") {
  CostVolume cost;
  cost.height = 1;
  cost.width = 3;
  cost.planes = 3;
  cost.stride = 2;
  cost.data = {0.5f, 0.2f, 0.2f,   // tie between planes 1 and 2
               0.9f, 0.1f, 0.4f,   // plane 1 wins
               0.0f, 0.0f, 0.0f};  // fully invalid
  cost.valid = {1, 1, 1, 0, 1, 1, 0, 0, 0};
  const auto wta = winner_take_all(cost);
  CHECK(wta.valid[0] == 1);
  CHECK(wta.index[0] == 2.0f);  // tie resolved to the smaller plane
  CHECK(wta.valid[1] == 1);
  CHECK(wta.index[1] == 2.0f);
  CHECK(wta.valid[2] == 0);

  // An invalid best plane must be skipped even if its stored cost is low.
  cost.valid = {0, 1, 1, 1, 1, 1, 1, 1, 1};
  cost.data[0] = 0.0f;
  const auto skip = winner_take_all(cost);
  CHECK(skip.index[0] == 2.0f);
}

TEST_CASE("sgm with zero penalties returns the path count times the cost") {
  CostVolume cost;
  cost.height = 6;
  cost.width = 8;
  cost.planes = 4;
  Rand rng(906);
  cost.data.resize(static_cast<std::size_t>(6) * 8 * 4);
  cost.valid.assign(cost.data.size(), 1);
  for (auto& v : cost.data) v = static_cast<float>(rng.uniform(0.0, 1.0));

  SgmParams p;
  p.p1 = 0.0f;
  p.p2 = 0.0f;
  for (int paths : {4, 8}) {
    p.num_paths = paths;
    const auto agg = sgm(cost, p);
    CHECK(agg.valid == cost.valid);
    for (std::size_t i = 0; i < cost.data.size(); ++i)
      CHECK(agg.data[i] ==
            doctest::Approx(paths * cost.data[i]).epsilon(1e-5));
  }

  // An invalid column carries the large sentinel during the scans; the
  // sentinel cancels out of the recurrence but leaves float rounding at
  // its scale, and the mask must survive untouched.
  for (int j = 0; j < 4; ++j) cost.valid[cost.at(3, 5, j)] = 0;
  p.num_paths = 8;
  const auto masked = sgm(cost, p);
  CHECK(masked.valid == cost.valid);
  for (std::size_t i = 0; i < cost.data.size(); ++i)
    if (cost.valid[i])
      CHECK(std::abs(masked.data[i] - 8.0f * cost.data[i]) <= 2e-3f);
}

TEST_CASE("sgm recurrence matches the hand-computed two-row example") {
  CostVolume cost;
  cost.height = 2;
  cost.width = 1;
  cost.planes = 3;
  cost.data = {0.2f, 0.0f, 0.4f,   // row 0
               0.1f, 0.3f, 0.0f};  // row 1
  cost.valid.assign(6, 1);
  SgmParams p;
  p.p1 = 0.1f;
  p.p2 = 0.25f;
  p.num_paths = 4;
  const auto agg = sgm(cost, p);
  // Down path leaves row 0 at its raw cost; up path adds one recurrence
  // step from row 1; both horizontal ring laps add one step from the cell
  // itself. Worked totals:
  const float expect[2][3] = {{1.1f, 0.1f, 1.8f}, {0.7f, 1.4f, 0.1f}};
  for (int row = 0; row < 2; ++row)
    for (int n = 0; n < 3; ++n)
      CHECK(agg.data[cost.at(row, 0, n)] ==
            doctest::Approx(expect[row][n]).epsilon(1e-5));
}

TEST_CASE("sgm matches the explicit path-enumeration oracle") {
  CostVolume cost;
  cost.height = 5;
  cost.width = 7;
  cost.planes = 4;
  Rand rng(907);
  cost.data.resize(static_cast<std::size_t>(5) * 7 * 4);
  cost.valid.assign(cost.data.size(), 1);
  for (auto& v : cost.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
  for (std::size_t i = 0; i < cost.valid.size(); i += 9) cost.valid[i] = 0;

  SgmParams p;
  p.p1 = 0.15f;
  p.p2 = 0.8f;
  for (int paths : {4, 8}) {
    p.num_paths = paths;
    const auto agg = sgm(cost, p);
    const auto ref = sgm_oracle(cost, p);
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (cost.valid[i])
        worst = std::max(worst, std::abs(agg.data[i] - ref[i]));
    CHECK(worst <= 1e-6);
  }

  SgmParams bad;
  bad.p1 = 2.0f;
  bad.p2 = 1.0f;
  CHECK_THROWS_AS(sgm(cost, bad), std::invalid_argument);
  bad.p1 = 0.1f;
  bad.p2 = 1.0f;
  bad.num_paths = 6;
  CHECK_THROWS_AS(sgm(cost, bad), std::invalid_argument);
}

TEST_CASE("sgm smooths impulse noise that breaks raw winner take all") {
  CostVolume cost;
  cost.height = 12;
  cost.width = 32;
  cost.planes = 8;
  cost.stride = 1;
  cost.data.assign(static_cast<std::size_t>(12) * 32 * 8, 0.0f);
  cost.valid.assign(cost.data.size(), 1);
  Rand rng(908);
  std::vector<int> truth(static_cast<std::size_t>(12) * 32);
  for (int row = 0; row < 12; ++row)
    for (int col = 0; col < 32; ++col) {
      const int t = 3 + (row >= 6 ? 1 : 0);  // smooth step field
      truth[static_cast<std::size_t>(row) * 32 + col] = t;
      for (int j = 0; j < 8; ++j)
        cost.data[cost.at(row, col, j)] =
            0.15f * std::abs(j - t) +
            static_cast<float>(rng.uniform(0.0, 0.08));
      if (rng.coin(0.15)) {  // impulse: a wrong plane edges out the truth
        const int wrong = rng.uniform_int(0, 7);
        cost.data[cost.at(row, col, wrong)] = -0.02f;
      }
    }
  const auto raw = winner_take_all(cost);
  SgmParams p;
  p.p1 = 0.1f;
  p.p2 = 0.5f;
  const auto smoothed = winner_take_all(sgm(cost, p));
  int raw_err = 0, sgm_err = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    raw_err += std::abs(static_cast<int>(raw.index[i]) - truth[i]) > 0;
    sgm_err += std::abs(static_cast<int>(smoothed.index[i]) - truth[i]) > 0;
  }
  CHECK(raw_err > 25);
  CHECK(sgm_err < raw_err / 3);
}

TEST_CASE("rectified pairs share a frame aligned with each baseline") {
  const Rig rig = default_rig();
  std::vector<std::vector<float>> images;
  for (const auto& cam : rig.cameras) images.push_back(render_sphere(cam, 2.0));
  const auto views = rectify_pairs(rig, images);
  REQUIRE(views.size() == 4);
  for (int k = 0; k < 4; ++k) {
    const auto& v = views[k];
    CHECK(v.left_camera == k);
    CHECK(v.right_camera == (k + 1) % 4);
    CHECK(v.baseline == doctest::Approx(0.4).epsilon(1e-9));
    const Mat3 should_be_identity = v.rotation * v.rotation.transpose();
    CHECK((should_be_identity - Mat3::Identity()).norm() <= 1e-12);
    CHECK(v.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    const Vec3 bl = (v.right_center - v.left_center).normalized();
    CHECK((v.rotation.row(0).transpose() - bl).norm() <= 1e-12);
    // The optical axis leans toward both fisheye axes, never the baseline.
    const Vec3 axis_l =
        rig.cameras[v.left_camera].rotation.transpose() * Vec3(0, 0, 1);
    const Vec3 axis_r =
        rig.cameras[v.right_camera].rotation.transpose() * Vec3(0, 0, 1);
    CHECK(v.rotation.row(2).dot(axis_l) > 0.5);
    CHECK(v.rotation.row(2).dot(axis_r) > 0.5);
    CHECK(std::abs(v.rotation.row(2).dot(Vec3(bl))) <= 1e-12);
    CHECK(v.focal == doctest::Approx((128.0 / 2.0) / std::tan(M_PI / 3.0)));
  }
  CHECK_THROWS_AS(rectify_pairs(rig, images, 128, 170.0),
                  std::invalid_argument);
  images.pop_back();
  CHECK_THROWS_AS(rectify_pairs(rig, images), std::invalid_argument);
}

TEST_CASE("rectified rasters resample the scene faithfully at infinity") {
  const Rig rig = default_rig();
  std::vector<std::vector<float>> images;
  for (const auto& cam : rig.cameras) {
    const int h = cam.image_height, w = cam.image_width;
    std::vector<float> img(static_cast<std::size_t>(h) * w);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        img[static_cast<std::size_t>(v) * w + u] =
            dir_tex(cam.unproject_rig(u, v));
    images.push_back(std::move(img));
  }
  const auto views = rectify_pairs(rig, images);
  for (const auto& view : views) {
    const int s = view.image_size;
    std::size_t valid = 0;
    double worst = 0.0, worst_pair = 0.0;
    for (int v = 0; v < s; ++v)
      for (int u = 0; u < s; ++u) {
        const std::size_t o = static_cast<std::size_t>(v) * s + u;
        if (!view.left_valid[o]) continue;
        ++valid;
        const Vec3 dir_rect((u - view.principal.x()) / view.focal,
                            (v - view.principal.y()) / view.focal, 1.0);
        const Vec3 dir =
            (view.rotation.transpose() * dir_rect).normalized();
        worst = std::max(
            worst, std::abs(static_cast<double>(view.left[o]) - dir_tex(dir)));
        // At infinity the two rectified views must agree pixel for pixel.
        if (view.right_valid[o])
          worst_pair = std::max(
              worst_pair,
              std::abs(static_cast<double>(view.left[o]) - view.right[o]));
      }
    CHECK(valid > static_cast<std::size_t>(s) * s / 2);
    CHECK(worst <= 0.01);
    CHECK(worst_pair <= 0.01);
  }
}

TEST_CASE("block matching recovers a known fractional disparity") {
  const int s = 64;
  const double d_true = 7.25;
  auto tex = [](double x, double y) {
    return static_cast<float>(0.5 + 0.2 * std::sin(0.5 * x + 0.3 * y) +
                              0.15 * std::cos(0.27 * x - 0.2 * y) +
                              0.1 * std::sin(0.13 * x) * std::cos(0.11 * y));
  };
  PinholeView view;
  view.image_size = s;
  view.focal = 40.0;
  view.principal = Vec2((s - 1) / 2.0, (s - 1) / 2.0);
  view.rotation = Mat3::Identity();
  view.baseline = 0.4;
  view.left.resize(static_cast<std::size_t>(s) * s);
  view.right.resize(view.left.size());
  view.left_valid.assign(view.left.size(), 1);
  view.right_valid.assign(view.left.size(), 1);
  for (int v = 0; v < s; ++v)
    for (int u = 0; u < s; ++u) {
      view.left[static_cast<std::size_t>(v) * s + u] = tex(u, v);
      view.right[static_cast<std::size_t>(v) * s + u] = tex(u + d_true, v);
    }

  const auto dmap = block_match(view, 9, 16);
  std::size_t valid = 0;
  std::vector<double> errs;
  for (int v = 4; v < s - 4; ++v)
    for (int u = 12; u < s - 4; ++u) {
      const std::size_t o = static_cast<std::size_t>(v) * s + u;
      if (!dmap.valid[o]) continue;
      ++valid;
      errs.push_back(std::abs(dmap.disparity[o] - d_true));
    }
  REQUIRE(valid > 1000);
  std::sort(errs.begin(), errs.end());
  CHECK(errs[errs.size() / 2] <= 0.1);
  CHECK(errs.back() <= 0.5);

  // A flat pair offers no texture to match.
  std::fill(view.left.begin(), view.left.end(), 0.5f);
  std::fill(view.right.begin(), view.right.end(), 0.5f);
  const auto flat = block_match(view, 9, 16);
  for (auto f : flat.valid) CHECK(f == 0);
  CHECK_THROWS_AS(block_match(view, 8, 16), std::invalid_argument);
}

TEST_CASE("stitching triangulates one pixel into the expected cell") {
  PinholeView view;
  const int s = 9;
  view.image_size = s;
  view.focal = 10.0;
  view.principal = Vec2(4.0, 4.0);
  view.rotation = Mat3::Identity();
  view.left_center = Vec3(0, 0, 0);
  view.right_center = Vec3(0.5, 0, 0);
  view.baseline = 0.5;

  DisparityMap dmap;
  dmap.image_size = s;
  dmap.disparity.assign(static_cast<std::size_t>(s) * s, 0.0f);
  dmap.valid.assign(dmap.disparity.size(), 0);
  // Principal pixel at disparity 2.5 -> depth 10 * 0.5 / 2.5 = 2 m along +z.
  dmap.disparity[4 * s + 4] = 2.5f;
  dmap.valid[4 * s + 4] = 1;
  // Sub-threshold disparity must be ignored.
  dmap.disparity[4 * s + 6] = 0.3f;
  dmap.valid[4 * s + 6] = 1;

  SweepGrid grid;
  grid.height = 8;
  grid.width = 32;
  grid.phi_min = -M_PI / 4.0;
  grid.phi_max = M_PI / 4.0;
  grid.num_spheres = 16;
  grid.inv_depth_max = 2.0;
  grid.stride = 2;

  const auto map = stitch_disparities({view}, {dmap}, grid);
  // +z has theta pi/2, phi 0 -> grid position (3.5, 23.5): four cells in range.
  std::size_t valid = 0;
  for (std::size_t i = 0; i < map.valid.size(); ++i)
    if (map.valid[i]) {
      ++valid;
      CHECK(map.index[i] == doctest::Approx(3.75f).epsilon(1e-6));
    }
  CHECK(valid == 4);
  for (int r : {3, 4})
    for (int c : {23, 24})
      CHECK(map.valid[static_cast<std::size_t>(r) * grid.width + c] == 1);

  // A farther observation of the same cells loses to the closer one.
  DisparityMap far = dmap;
  far.disparity[4 * s + 4] = 1.25f;  // depth 4 m
  const auto merged = stitch_disparities({view, view}, {dmap, far}, grid);
  for (int r : {3, 4})
    for (int c : {23, 24}) {
      const std::size_t i = static_cast<std::size_t>(r) * grid.width + c;
      CHECK(merged.valid[i] == 1);
      CHECK(merged.index[i] == doctest::Approx(3.75f).epsilon(1e-6));
    }

  CHECK_THROWS_AS(stitch_disparities({view}, {}, grid),
                  std::invalid_argument);
}

TEST_CASE("classic pipelines agree on a textured sphere scene") {
  const Rig rig = default_rig();
  const SweepGrid grid = e2e_grid();
  std::vector<std::vector<float>> images;
  for (const auto& cam : rig.cameras) images.push_back(render_sphere(cam, 2.0));

  // Ground truth: every cell sees the sphere at 2 m, ladder index 3.75.
  const double gt_index = (grid.num_spheres - 1) / grid.inv_depth_max / 2.0;
  CHECK(gt_index == doctest::Approx(3.75));

  // Sweep + ZNCC + winner take all.
  const LookupTable table = build_lookup(rig, grid, 1);
  const auto volumes = warp_all_cameras(images, table);
  const auto cost = build_cost_volume(volumes);
  const auto wta = winner_take_all(cost);
  std::vector<double> wta_err;
  for (std::size_t i = 0; i < wta.valid.size(); ++i)
    if (wta.valid[i])
      wta_err.push_back(std::abs(wta.index[i] - gt_index));
  REQUIRE(wta_err.size() >= wta.valid.size() / 3);
  std::sort(wta_err.begin(), wta_err.end());
  CHECK(wta_err[wta_err.size() / 2] <= 1.0);

  // Aggregation must not break the solved scene.
  const auto agg_wta = winner_take_all(sgm(cost, SgmParams{}));
  std::vector<double> agg_err;
  for (std::size_t i = 0; i < agg_wta.valid.size(); ++i)
    if (agg_wta.valid[i])
      agg_err.push_back(std::abs(agg_wta.index[i] - gt_index));
  std::sort(agg_err.begin(), agg_err.end());
  CHECK(agg_err[agg_err.size() / 2] <= 1.0);

  // Rectify, match, stitch.
  const auto views = rectify_pairs(rig, images);
  std::vector<DisparityMap> dmaps;
  for (const auto& v : views) dmaps.push_back(block_match(v));
  const auto stitched = stitch_disparities(views, dmaps, grid);
  std::vector<double> st_err;
  for (std::size_t i = 0; i < stitched.valid.size(); ++i)
    if (stitched.valid[i])
      st_err.push_back(std::abs(stitched.index[i] - gt_index));
  REQUIRE(st_err.size() > stitched.valid.size() / 4);
  std::sort(st_err.begin(), st_err.end());
  CHECK(st_err[st_err.size() / 2] <= 0.5);
}

}  // TEST_SUITE
