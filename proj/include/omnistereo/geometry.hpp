// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace omnistereo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Azimuth/elevation pair, normalized on construction to
/// theta in [-pi, pi], phi in [-pi/2, pi/2] (folding over the poles).
struct SphericalCoord {
  double theta = 0.0;
  double phi = 0.0;

  SphericalCoord() = default;
  SphericalCoord(double theta_in, double phi_in);
};

/// Direction on the unit sphere. Construction renormalizes.
class UnitRay {
 public:
  UnitRay() : d_(1, 0, 0) {}
  explicit UnitRay(const Vec3& d);

  const Vec3& vec() const { return d_; }
  double x() const { return d_.x(); }
  double y() const { return d_.y(); }
  double z() const { return d_.z(); }

 private:
  Vec3 d_;
};

/// Ray direction for spherical coordinates:
/// (cos(phi)cos(theta), sin(phi), cos(phi)sin(theta)). The y axis points up.
UnitRay unit_ray(const SphericalCoord& c);

/// Angles of a direction, inverse of unit_ray.
SphericalCoord spherical_of(const Vec3& d);

/// Ideal equidistant fisheye: image radius = focal * (angle off optical axis).
/// Extrinsics map rig coordinates to camera coordinates, X_cam = R * X + t,
/// with the optical axis along camera +z and the image y axis pointing down.
struct FisheyeCamera {
  std::string id;
  double focal = 1.0;          // pixels per radian
  Vec2 principal{0, 0};        // (u0, v0)
  int image_height = 0;
  int image_width = 0;
  double fov = 0.0;            // full cone angle, radians
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  // Throws std::invalid_argument when an invariant fails.
  void validate() const;

  Vec3 center() const { return -rotation.transpose() * translation; }

  // Projects a rig-frame point. Empty when the point is outside the fov cone
  // or coincides with the camera center. Non-finite input is rejected.
  std::optional<Vec2> project(const Vec3& point_rig) const;

  // Projects a rig-frame direction as if at infinite distance (translation
  // drops out).
  std::optional<Vec2> project_direction(const Vec3& dir_rig) const;

  // Camera-frame unit direction for a pixel; exact inverse of the
  // equidistant model. No fov check.
  Vec3 unproject(double u, double v) const;

  // unproject followed by the rig-frame change of basis.
  Vec3 unproject_rig(double u, double v) const;
};

struct Rig {
  std::vector<FisheyeCamera> cameras;

  void validate() const;  // >= 2 cameras, distinct ids, each camera valid
  int size() const { return static_cast<int>(cameras.size()); }
};

/// Equirectangular (theta, phi) grid with the uniform inverse-depth ladder
/// d_n = n * inv_depth_max / (num_spheres - 1). Cells sample at centers.
struct SweepGrid {
  int height = 0;              // phi rows
  int width = 0;               // theta columns
  double phi_min = 0.0;
  double phi_max = 0.0;
  int num_spheres = 0;         // N
  double inv_depth_max = 0.0;  // d_max, 1/meters
  int stride = 2;              // sphere subsampling step

  void validate() const;

  double inv_depth(int n) const {
    return static_cast<double>(n) * inv_depth_max / (num_spheres - 1);
  }
  double theta(int col) const {
    return -M_PI + (col + 0.5) * 2.0 * M_PI / width;
  }
  double phi(int row) const {
    return phi_min + (row + 0.5) * (phi_max - phi_min) / height;
  }
  SphericalCoord coord(int row, int col) const {
    return SphericalCoord(theta(col), phi(row));
  }

  // Subsampled sphere set {0, stride, 2*stride, ...}.
  int num_subspheres() const { return (num_spheres + stride - 1) / stride; }
  int sphere_index(int j) const { return j * stride; }
};

/// Point on sweep sphere n along the cell ray. n = 0 has zero inverse depth
/// and is kept as an explicit at-infinity direction.
struct SpherePoint {
  Vec3 p;                   // position in meters, or unit direction if at_infinity
  bool at_infinity = false;
};

SpherePoint sphere_point(const SweepGrid& grid, int row, int col, int n);

/// Projection of a sweep-sphere point, dispatching the at-infinity case to
/// the pure direction.
std::optional<Vec2> project_sphere_point(const FisheyeCamera& cam,
                                         const SpherePoint& sp);

/// True when the bilinear footprint of (u, v) lies fully inside an
/// h-by-w raster, i.e. floor and floor+1 are valid rows/columns.
inline bool bilinear_inside(double u, double v, int h, int w) {
  const double x0 = std::floor(u);
  const double y0 = std::floor(v);
  return x0 >= 0.0 && x0 + 1.0 <= w - 1 && y0 >= 0.0 && y0 + 1.0 <= h - 1;
}

/// Per-cell visibility of sweep sphere n from one camera: projection lands
/// in the fov cone with a full bilinear footprint in the image raster.
/// Row-major height*width bytes, 1 = valid.
std::vector<std::uint8_t> validity_mask(const FisheyeCamera& cam,
                                        const SweepGrid& grid, int n);

/// Four cameras at the corners of a side-by-side square in the y = 0 plane,
/// optical axes pointing outward along the diagonals.
Rig default_rig(double square_side = 0.4, double fov_deg = 220.0,
                int image_size = 128, double focal = 33.0);

/// Rotation by `yaw` about the rig y axis; maps unit_ray(theta, phi) to
/// unit_ray(theta + yaw, phi).
Mat3 yaw_rotation(double yaw);

/// Rig as seen from a rig frame rotated by `yaw` about y.
Rig yawed_rig(const Rig& rig, double yaw);

/// FNV-1a over a canonical serialization of rig + grid parameters. Used to
/// invalidate caches and checkpoints when calibration changes.
std::uint64_t rig_hash(const Rig& rig, const SweepGrid& grid);

}  // namespace omnistereo
