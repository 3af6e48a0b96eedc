// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "omnistereo/geometry.hpp"
#include "omnistereo/tensor.hpp"

namespace omnistereo {

/// Precomputed source coordinates for warping camera rasters onto the
/// subsampled sweep spheres {0, stride, 2*stride, ...}. Entry (i, j, row, col)
/// holds the float32 value of project(cam_i, sphere_point(n_j)) / source_scale
/// and a validity bit requiring a full bilinear footprint inside the
/// source raster. Validity is evaluated on the stored float32 coordinates,
/// so an independent recomputation reproduces the table bit-exactly.
struct LookupTable {
  int num_cameras = 0;
  int num_subspheres = 0;
  int height = 0;
  int width = 0;
  int source_scale = 1;
  int source_height = 0;
  int source_width = 0;
  std::uint64_t rig_hash = 0;
  std::vector<float> uv;            // (cam, sub, row, col, {u, v})
  std::vector<std::uint8_t> valid;  // (cam, sub, row, col)

  std::size_t cell(int cam, int sub, int row, int col) const {
    return ((static_cast<std::size_t>(cam) * num_subspheres + sub) * height +
            row) *
               width +
           col;
  }
};

/// Warped feature volume on the subsampled sweep spheres with a per-cell
/// validity mask. Masked-out cells hold exactly zero in all channels.
struct SphericalVolume {
  Tensor data;                     // (H, W, Nsub, C)
  std::vector<std::uint8_t> mask;  // (H, W, Nsub), 1 = valid
};

/// Builds the warp table for the given rig and grid. source_scale r maps
/// full-resolution projections onto a raster of ceil(image/r) per side,
/// matching the stride-r feature extractor. All cameras must share one
/// image size.
LookupTable build_lookup(const Rig& rig, const SweepGrid& grid,
                         int source_scale = 1);

/// Bilinear warp of one grayscale raster onto the sweep spheres. The sample
/// at (u, v) lerps along x first, then y, in double precision:
///   top = (1-fx)*p00 + fx*p01; bot = (1-fx)*p10 + fx*p11;
///   value = float((1-fy)*top + fy*bot).
/// Invalid cells are zero. Raster dims must match the table's source raster.
SphericalVolume warp_image(const std::vector<float>& img, int img_height,
                           int img_width, const LookupTable& table, int camera);

/// Channel-wise bilinear warp of a feature tensor (Hs, Ws, C), recorded on
/// the autodiff tape: the backward pass scatters each output cell's gradient
/// to its four source texels with the same bilinear weights. Invalid cells
/// produce zero and propagate zero gradient.
SphericalVolume warp_features(const Tensor& feat, const LookupTable& table,
                              int camera);

/// Channel concatenation of per-camera volumes in the order given by
/// `permutation` (a permutation of volume indices; identity is canonical).
Tensor concat_volumes(const std::vector<SphericalVolume>& volumes,
                      const std::vector<int>& permutation);

/// Samples each camera raster at the per-cell scene depth (meters; +inf means
/// the at-infinity direction) instead of a fixed sweep sphere. Returns the
/// (H*W) sampled raster and validity mask.
std::pair<std::vector<float>, std::vector<std::uint8_t>> warp_at_depth(
    const std::vector<float>& img, int img_height, int img_width,
    const FisheyeCamera& cam, const SweepGrid& grid,
    const std::vector<float>& depth);

/// Binary cache: header (dims, scale, rig hash) + coordinate floats +
/// validity bytes, little-endian. load returns empty on missing file,
/// malformed header, or hash mismatch.
void save_lookup(const std::string& path, const LookupTable& table);
std::optional<LookupTable> load_lookup(const std::string& path,
                                       std::uint64_t expected_hash);

}  // namespace omnistereo
