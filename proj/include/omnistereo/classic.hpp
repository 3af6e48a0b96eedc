// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "omnistereo/geometry.hpp"
#include "omnistereo/sweeping.hpp"

namespace omnistereo {

/// Matching costs on the subsampled sweep spheres, lower = better.
/// ZNCC costs are stored as (1 - ZNCC) / 2 in [0, 1].
struct CostVolume {
  int height = 0;
  int width = 0;
  int planes = 0;                   // subsampled sphere count
  int stride = 2;                   // plane j covers sweep index j * stride
  std::vector<float> data;          // (H, W, planes)
  std::vector<std::uint8_t> valid;  // (H, W, planes)

  std::size_t at(int row, int col, int j) const {
    return (static_cast<std::size_t>(row) * width + col) * planes + j;
  }
};

struct SgmParams {
  float p1 = 0.1f;
  float p2 = 12.0f;
  int num_paths = 8;
};

/// Fractional sweep indices on the full ladder with a validity mask.
struct IndexMap {
  int height = 0;
  int width = 0;
  std::vector<float> index;
  std::vector<std::uint8_t> valid;
};

/// Per-plane ZNCC of patch-by-patch correlation between two single-channel
/// spherical volumes. Patches wrap in theta and must fit vertically; cells
/// are invalid where either input mask fails anywhere in the patch or a
/// patch variance falls below 1e-8 (intensities are expected in [0, 1]).
CostVolume zncc_cost(const SphericalVolume& a, const SphericalVolume& b,
                     int patch = 9);

/// Mask-aware mean over pairwise cost volumes; cells with no valid pair
/// stay invalid.
CostVolume multiview_cost(const std::vector<CostVolume>& pairs);

/// Per-cell argmin over planes, ties to the smallest plane, mapped to the
/// full ladder by the volume's stride. Cells with no valid plane are
/// flagged invalid.
IndexMap winner_take_all(const CostVolume& cost);

/// Semi-global aggregation over `num_paths` scan directions (4 axis
/// aligned + 4 diagonal). Horizontal and diagonal paths wrap in theta;
/// horizontal paths warm-start with a second lap around the ring. Invalid
/// cells carry a large constant during the scans and are re-masked after.
CostVolume sgm(const CostVolume& cost, const SgmParams& params);

/// Warps every camera image onto the subsampled sweep spheres through a
/// source_scale=1 lookup table. Images are row-major rasters matching the
/// table's source size.
std::vector<SphericalVolume> warp_all_cameras(
    const std::vector<std::vector<float>>& images, const LookupTable& table);

/// ZNCC volumes of all unordered camera pairs merged by multiview_cost.
CostVolume build_cost_volume(const std::vector<SphericalVolume>& volumes,
                             int patch = 9);

/// A rectified virtual pinhole pair looking along the bisector of two
/// adjacent fisheye optical axes. Rotation is shared by both views and its
/// x axis runs along the baseline, so epipolar lines are horizontal rows.
struct PinholeView {
  int image_size = 0;
  double focal = 0.0;  // pixels
  Vec2 principal{0, 0};
  Mat3 rotation;  // rig -> rectified frame, rows = axes
  int left_camera = 0;
  int right_camera = 0;
  Vec3 left_center, right_center;
  double baseline = 0.0;  // meters
  std::vector<float> left, right;  // rasters in [0, 1]
  std::vector<std::uint8_t> left_valid, right_valid;
};

/// Resamples the fisheye images of each adjacent camera pair into rectified
/// pinhole rasters (pure rotation per camera, shared rectified frame).
/// Pixels outside a fisheye fov cone come out invalid; if the central
/// epipolar band itself is not covered the pair is reported as an error.
std::vector<PinholeView> rectify_pairs(const Rig& rig,
                                       const std::vector<std::vector<float>>& images,
                                       int image_size = 128,
                                       double fov_deg = 120.0);

/// ZNCC block matching along rectified rows. Disparity is returned per left
/// pixel with parabolic sub-pixel refinement; weak or textureless matches
/// are invalid. max_disparity <= 0 derives the search range from the
/// baseline and min_depth.
struct DisparityMap {
  int image_size = 0;
  std::vector<float> disparity;
  std::vector<std::uint8_t> valid;
};
DisparityMap block_match(const PinholeView& view, int patch = 9,
                         int max_disparity = 0, double min_depth = 0.5);

/// Triangulates every valid disparity to a rig-frame 3D point and keeps,
/// per output cell, the closest point landing within one pixel of the cell
/// center (wrapping in theta). Depths convert to ladder indices with the
/// same formula as the ground truth mapping. Cells with no points stay
/// invalid.
IndexMap stitch_disparities(const std::vector<PinholeView>& views,
                            const std::vector<DisparityMap>& disparities,
                            const SweepGrid& grid);

}  // namespace omnistereo
