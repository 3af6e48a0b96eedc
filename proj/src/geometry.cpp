// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/geometry.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace omnistereo {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kHalfPi = 0.5 * M_PI;
}  // namespace

SphericalCoord::SphericalCoord(double theta_in, double phi_in) {
  double p = std::remainder(phi_in, kTwoPi);  // (-pi, pi]
  double t = theta_in;
  if (p > kHalfPi) {
    p = M_PI - p;
    t += M_PI;
  } else if (p < -kHalfPi) {
    p = -M_PI - p;
    t += M_PI;
  }
  theta = std::remainder(t, kTwoPi);
  phi = p;
}

UnitRay::UnitRay(const Vec3& d) {
  const double n = d.norm();
  if (!(n > 0.0) || !d.allFinite())
    throw std::invalid_argument("UnitRay: degenerate direction");
  d_ = d / n;
}

UnitRay unit_ray(const SphericalCoord& c) {
  const double ct = std::cos(c.theta), st = std::sin(c.theta);
  const double cp = std::cos(c.phi), sp = std::sin(c.phi);
  return UnitRay(Vec3(cp * ct, sp, cp * st));
}

SphericalCoord spherical_of(const Vec3& d) {
  const Vec3 u = d.normalized();
  return SphericalCoord(std::atan2(u.z(), u.x()),
                        std::asin(std::clamp(u.y(), -1.0, 1.0)));
}

void FisheyeCamera::validate() const {
  if (!(focal > 0.0)) throw std::invalid_argument("camera " + id + ": focal must be positive");
  if (!(fov > 0.0) || fov > kTwoPi)
    throw std::invalid_argument("camera " + id + ": fov out of (0, 2*pi]");
  if (image_height <= 0 || image_width <= 0)
    throw std::invalid_argument("camera " + id + ": empty image raster");
  const Mat3 rtr = rotation.transpose() * rotation;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("camera " + id + ": rotation not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("camera " + id + ": rotation determinant != +1");
}

namespace {

std::optional<Vec2> project_camera_frame(const FisheyeCamera& cam, const Vec3& v) {
  const double len = v.norm();
  if (len < 1e-12) return std::nullopt;  // point at the camera center
  const double rxy = std::hypot(v.x(), v.y());
  const double alpha = std::atan2(rxy, v.z());
  if (alpha > 0.5 * cam.fov) return std::nullopt;
  double dx = 1.0, dy = 0.0;
  if (rxy > 0.0) {
    dx = v.x() / rxy;
    dy = v.y() / rxy;
  }
  const double r = cam.focal * alpha;
  return Vec2(cam.principal.x() + r * dx, cam.principal.y() + r * dy);
}

}  // namespace

std::optional<Vec2> FisheyeCamera::project(const Vec3& point_rig) const {
  if (!point_rig.allFinite())
    throw std::invalid_argument("FisheyeCamera::project: non-finite input");
  return project_camera_frame(*this, rotation * point_rig + translation);
}

std::optional<Vec2> FisheyeCamera::project_direction(const Vec3& dir_rig) const {
  if (!dir_rig.allFinite())
    throw std::invalid_argument("FisheyeCamera::project_direction: non-finite input");
  return project_camera_frame(*this, rotation * dir_rig);
}

Vec3 FisheyeCamera::unproject(double u, double v) const {
  const double du = u - principal.x();
  const double dv = v - principal.y();
  const double r = std::hypot(du, dv);
  if (r == 0.0) return Vec3(0, 0, 1);
  const double alpha = r / focal;
  const double s = std::sin(alpha) / r;
  return Vec3(s * du, s * dv, std::cos(alpha));
}

Vec3 FisheyeCamera::unproject_rig(double u, double v) const {
  return rotation.transpose() * unproject(u, v);
}

void Rig::validate() const {
  if (cameras.size() < 2)
    throw std::invalid_argument("rig needs at least 2 cameras");
  std::set<std::string> ids;
  for (const auto& cam : cameras) {
    cam.validate();
    if (!ids.insert(cam.id).second)
      throw std::invalid_argument("duplicate camera id " + cam.id);
  }
}

void SweepGrid::validate() const {
  if (height <= 0 || width <= 0) throw std::invalid_argument("grid: empty raster");
  if (num_spheres < 2) throw std::invalid_argument("grid: need at least 2 spheres");
  if (!(inv_depth_max > 0.0)) throw std::invalid_argument("grid: inv_depth_max must be positive");
  if (stride < 1) throw std::invalid_argument("grid: stride must be >= 1");
  if (!(phi_max > phi_min) || phi_min < -kHalfPi - 1e-12 || phi_max > kHalfPi + 1e-12)
    throw std::invalid_argument("grid: bad phi range");
}

SpherePoint sphere_point(const SweepGrid& grid, int row, int col, int n) {
  if (row < 0 || row >= grid.height || col < 0 || col >= grid.width || n < 0 ||
      n >= grid.num_spheres)
    throw std::out_of_range("sphere_point: index out of range");
  const Vec3 dir = unit_ray(grid.coord(row, col)).vec();
  const double d = grid.inv_depth(n);
  if (d == 0.0) return SpherePoint{dir, true};
  return SpherePoint{dir / d, false};
}

std::optional<Vec2> project_sphere_point(const FisheyeCamera& cam,
                                         const SpherePoint& sp) {
  return sp.at_infinity ? cam.project_direction(sp.p) : cam.project(sp.p);
}

std::vector<std::uint8_t> validity_mask(const FisheyeCamera& cam,
                                        const SweepGrid& grid, int n) {
  std::vector<std::uint8_t> mask(static_cast<size_t>(grid.height) * grid.width, 0);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const auto px = project_sphere_point(cam, sphere_point(grid, r, c, n));
      if (px && bilinear_inside(px->x(), px->y(), cam.image_height, cam.image_width))
        mask[static_cast<size_t>(r) * grid.width + c] = 1;
    }
  }
  return mask;
}

Rig default_rig(double square_side, double fov_deg, int image_size, double focal) {
  const double h = 0.5 * square_side;
  // Corner order walks the square so that consecutive cameras are adjacent.
  const Vec3 corners[4] = {Vec3(h, 0, h), Vec3(-h, 0, h), Vec3(-h, 0, -h),
                           Vec3(h, 0, -h)};
  Rig rig;
  for (int i = 0; i < 4; ++i) {
    FisheyeCamera cam;
    cam.id = "cam" + std::to_string(i);
    cam.focal = focal;
    cam.principal = Vec2((image_size - 1) * 0.5, (image_size - 1) * 0.5);
    cam.image_height = image_size;
    cam.image_width = image_size;
    cam.fov = fov_deg * M_PI / 180.0;
    const Vec3 z = corners[i].normalized();
    const Vec3 y(0, -1, 0);  // image y axis points down, rig y points up
    const Vec3 x = y.cross(z);
    cam.rotation.row(0) = x;
    cam.rotation.row(1) = y;
    cam.rotation.row(2) = z;
    cam.translation = -cam.rotation * corners[i];
    rig.cameras.push_back(std::move(cam));
  }
  rig.validate();
  return rig;
}

Mat3 yaw_rotation(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 m;
  m << c, 0, -s, 0, 1, 0, s, 0, c;
  return m;
}

Rig yawed_rig(const Rig& rig, double yaw) {
  Rig out = rig;
  const Mat3 ry = yaw_rotation(yaw);
  for (auto& cam : out.cameras) cam.rotation = cam.rotation * ry;
  return out;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  }
  void f64(double v) { bytes(&v, sizeof v); }
  void i32(std::int32_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    i32(static_cast<std::int32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

}  // namespace

std::uint64_t rig_hash(const Rig& rig, const SweepGrid& grid) {
  Fnv1a f;
  f.i32(rig.size());
  for (const auto& cam : rig.cameras) {
    f.str(cam.id);
    f.f64(cam.focal);
    f.f64(cam.principal.x());
    f.f64(cam.principal.y());
    f.i32(cam.image_height);
    f.i32(cam.image_width);
    f.f64(cam.fov);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f.f64(cam.rotation(r, c));
    for (int i = 0; i < 3; ++i) f.f64(cam.translation(i));
  }
  f.i32(grid.height);
  f.i32(grid.width);
  f.f64(grid.phi_min);
  f.f64(grid.phi_max);
  f.i32(grid.num_spheres);
  f.f64(grid.inv_depth_max);
  f.i32(grid.stride);
  return f.h;
}

}  // namespace omnistereo
