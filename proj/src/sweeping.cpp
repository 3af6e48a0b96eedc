// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/sweeping.hpp"

#include "omnistereo/ops.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace omnistereo {

namespace {

constexpr std::uint32_t kCacheMagic = 0x544c4d4fu;  // "OMLT"
constexpr std::uint32_t kCacheVersion = 1;

struct BilinearTaps {
  std::size_t i00, i01, i10, i11;
  double fx, fy;
};

BilinearTaps taps_of(float uf, float vf, int w) {
  const double u = uf, v = vf;
  const double x0 = std::floor(u);
  const double y0 = std::floor(v);
  BilinearTaps t;
  t.fx = u - x0;
  t.fy = v - y0;
  const std::size_t x = static_cast<std::size_t>(x0);
  const std::size_t y = static_cast<std::size_t>(y0);
  t.i00 = y * w + x;
  t.i01 = t.i00 + 1;
  t.i10 = t.i00 + w;
  t.i11 = t.i10 + 1;
  return t;
}

}  // namespace

LookupTable build_lookup(const Rig& rig, const SweepGrid& grid,
                         int source_scale) {
  rig.validate();
  grid.validate();
  if (source_scale < 1)
    throw std::invalid_argument("build_lookup: source_scale must be >= 1");
  const int ih = rig.cameras[0].image_height;
  const int iw = rig.cameras[0].image_width;
  for (const auto& cam : rig.cameras)
    if (cam.image_height != ih || cam.image_width != iw)
      throw std::invalid_argument("build_lookup: cameras must share image size");

  LookupTable t;
  t.num_cameras = rig.size();
  t.num_subspheres = grid.num_subspheres();
  t.height = grid.height;
  t.width = grid.width;
  t.source_scale = source_scale;
  t.source_height = (ih + source_scale - 1) / source_scale;
  t.source_width = (iw + source_scale - 1) / source_scale;
  t.rig_hash = rig_hash(rig, grid);
  const std::size_t cells = static_cast<std::size_t>(t.num_cameras) *
                            t.num_subspheres * t.height * t.width;
  t.uv.assign(cells * 2, 0.0f);
  t.valid.assign(cells, 0);

  for (int cam = 0; cam < t.num_cameras; ++cam) {
    for (int sub = 0; sub < t.num_subspheres; ++sub) {
      const int n = grid.sphere_index(sub);
      for (int row = 0; row < grid.height; ++row) {
        for (int col = 0; col < grid.width; ++col) {
          const auto px = project_sphere_point(
              rig.cameras[cam], sphere_point(grid, row, col, n));
          if (!px) continue;
          const std::size_t idx = t.cell(cam, sub, row, col);
          const float u = static_cast<float>(px->x() / source_scale);
          const float v = static_cast<float>(px->y() / source_scale);
          t.uv[idx * 2] = u;
          t.uv[idx * 2 + 1] = v;
          t.valid[idx] =
              bilinear_inside(u, v, t.source_height, t.source_width) ? 1 : 0;
          if (!t.valid[idx]) {
            t.uv[idx * 2] = 0.0f;
            t.uv[idx * 2 + 1] = 0.0f;
          }
        }
      }
    }
  }
  return t;
}

SphericalVolume warp_image(const std::vector<float>& img, int img_height,
                           int img_width, const LookupTable& table,
                           int camera) {
  if (img_height != table.source_height || img_width != table.source_width)
    throw std::invalid_argument("warp_image: raster does not match table");
  if (img.size() != static_cast<std::size_t>(img_height) * img_width)
    throw std::invalid_argument("warp_image: raster size mismatch");
  if (camera < 0 || camera >= table.num_cameras)
    throw std::invalid_argument("warp_image: camera index out of range");

  const int H = table.height, W = table.width, Ns = table.num_subspheres;
  SphericalVolume out;
  out.mask.assign(static_cast<std::size_t>(H) * W * Ns, 0);
  std::vector<float> data(static_cast<std::size_t>(H) * W * Ns, 0.0f);

  for (int row = 0; row < H; ++row) {
    for (int col = 0; col < W; ++col) {
      for (int sub = 0; sub < Ns; ++sub) {
        const std::size_t tidx = table.cell(camera, sub, row, col);
        if (!table.valid[tidx]) continue;
        const auto tp = taps_of(table.uv[tidx * 2], table.uv[tidx * 2 + 1],
                                img_width);
        const double top = (1.0 - tp.fx) * img[tp.i00] + tp.fx * img[tp.i01];
        const double bot = (1.0 - tp.fx) * img[tp.i10] + tp.fx * img[tp.i11];
        const std::size_t oidx =
            (static_cast<std::size_t>(row) * W + col) * Ns + sub;
        data[oidx] = static_cast<float>((1.0 - tp.fy) * top + tp.fy * bot);
        out.mask[oidx] = 1;
      }
    }
  }
  out.data = Tensor::from_data({H, W, Ns, 1}, std::move(data));
  return out;
}

SphericalVolume warp_features(const Tensor& feat, const LookupTable& table,
                              int camera) {
  if (feat.ndim() != 3)
    throw std::invalid_argument("warp_features: feat must be (H, W, C)");
  const int fh = feat.dim(0), fw = feat.dim(1), C = feat.dim(2);
  if (fh != table.source_height || fw != table.source_width)
    throw std::invalid_argument("warp_features: raster does not match table");
  if (camera < 0 || camera >= table.num_cameras)
    throw std::invalid_argument("warp_features: camera index out of range");

  const int H = table.height, W = table.width, Ns = table.num_subspheres;
  SphericalVolume out;
  out.mask.assign(static_cast<std::size_t>(H) * W * Ns, 0);
  std::vector<float> data(static_cast<std::size_t>(H) * W * Ns * C, 0.0f);
  const float* fv = feat.values().data();

  for (int row = 0; row < H; ++row) {
    for (int col = 0; col < W; ++col) {
      for (int sub = 0; sub < Ns; ++sub) {
        const std::size_t tidx = table.cell(camera, sub, row, col);
        if (!table.valid[tidx]) continue;
        const auto tp =
            taps_of(table.uv[tidx * 2], table.uv[tidx * 2 + 1], fw);
        const std::size_t oidx =
            (static_cast<std::size_t>(row) * W + col) * Ns + sub;
        out.mask[oidx] = 1;
        float* op = data.data() + oidx * C;
        for (int c = 0; c < C; ++c) {
          const double top = (1.0 - tp.fx) * fv[tp.i00 * C + c] +
                             tp.fx * fv[tp.i01 * C + c];
          const double bot = (1.0 - tp.fx) * fv[tp.i10 * C + c] +
                             tp.fx * fv[tp.i11 * C + c];
          op[c] = static_cast<float>((1.0 - tp.fy) * top + tp.fy * bot);
        }
      }
    }
  }

  auto feat_n = feat.node();
  auto mask_copy = out.mask;
  out.data = detail::make_op_node(
      {H, W, Ns, C}, std::move(data), {feat_n},
      [=, mask = std::move(mask_copy)](detail::TensorNode& self) {
        std::vector<double> dfeat(feat_n->v.size(), 0.0);
        for (int row = 0; row < H; ++row) {
          for (int col = 0; col < W; ++col) {
            for (int sub = 0; sub < Ns; ++sub) {
              const std::size_t oidx =
                  (static_cast<std::size_t>(row) * W + col) * Ns + sub;
              if (!mask[oidx]) continue;
              const std::size_t tidx = table.cell(camera, sub, row, col);
              const auto tp =
                  taps_of(table.uv[tidx * 2], table.uv[tidx * 2 + 1], fw);
              const float* gp = self.g.data() + oidx * C;
              for (int c = 0; c < C; ++c) {
                const double g = gp[c];
                if (g == 0.0) continue;
                dfeat[tp.i00 * C + c] += (1.0 - tp.fx) * (1.0 - tp.fy) * g;
                dfeat[tp.i01 * C + c] += tp.fx * (1.0 - tp.fy) * g;
                dfeat[tp.i10 * C + c] += (1.0 - tp.fx) * tp.fy * g;
                dfeat[tp.i11 * C + c] += tp.fx * tp.fy * g;
              }
            }
          }
        }
        auto& dst = feat_n->grad();
        for (std::size_t i = 0; i < dst.size(); ++i)
          dst[i] += static_cast<float>(dfeat[i]);
      });
  return out;
}

Tensor concat_volumes(const std::vector<SphericalVolume>& volumes,
                      const std::vector<int>& permutation) {
  if (volumes.empty())
    throw std::invalid_argument("concat_volumes: empty input");
  if (permutation.size() != volumes.size())
    throw std::invalid_argument("concat_volumes: permutation size mismatch");
  std::vector<char> seen(volumes.size(), 0);
  std::vector<Tensor> parts;
  for (int p : permutation) {
    if (p < 0 || p >= static_cast<int>(volumes.size()) || seen[p])
      throw std::invalid_argument("concat_volumes: invalid permutation");
    seen[p] = 1;
    parts.push_back(volumes[p].data);
  }
  return concat_channels(parts);
}

std::pair<std::vector<float>, std::vector<std::uint8_t>> warp_at_depth(
    const std::vector<float>& img, int img_height, int img_width,
    const FisheyeCamera& cam, const SweepGrid& grid,
    const std::vector<float>& depth) {
  if (img.size() != static_cast<std::size_t>(img_height) * img_width)
    throw std::invalid_argument("warp_at_depth: raster size mismatch");
  if (depth.size() != static_cast<std::size_t>(grid.height) * grid.width)
    throw std::invalid_argument("warp_at_depth: depth size mismatch");

  std::vector<float> out(depth.size(), 0.0f);
  std::vector<std::uint8_t> mask(depth.size(), 0);
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const std::size_t idx = static_cast<std::size_t>(row) * grid.width + col;
      const double rho = depth[idx];
      if (!(rho > 0.0)) continue;
      const Vec3 dir = unit_ray(grid.coord(row, col)).vec();
      std::optional<Vec2> px;
      if (std::isinf(rho)) {
        px = cam.project_direction(dir);
      } else {
        px = cam.project(dir * rho);
      }
      if (!px) continue;
      const float u = static_cast<float>(px->x());
      const float v = static_cast<float>(px->y());
      if (!bilinear_inside(u, v, img_height, img_width)) continue;
      const auto tp = taps_of(u, v, img_width);
      const double top = (1.0 - tp.fx) * img[tp.i00] + tp.fx * img[tp.i01];
      const double bot = (1.0 - tp.fx) * img[tp.i10] + tp.fx * img[tp.i11];
      out[idx] = static_cast<float>((1.0 - tp.fy) * top + tp.fy * bot);
      mask[idx] = 1;
    }
  }
  return {std::move(out), std::move(mask)};
}

void save_lookup(const std::string& path, const LookupTable& table) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_lookup: cannot open " + path);
  auto put32 = [&](std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
  };
  put32(kCacheMagic);
  put32(kCacheVersion);
  put32(static_cast<std::uint32_t>(table.num_cameras));
  put32(static_cast<std::uint32_t>(table.num_subspheres));
  put32(static_cast<std::uint32_t>(table.height));
  put32(static_cast<std::uint32_t>(table.width));
  put32(static_cast<std::uint32_t>(table.source_scale));
  put32(static_cast<std::uint32_t>(table.source_height));
  put32(static_cast<std::uint32_t>(table.source_width));
  f.write(reinterpret_cast<const char*>(&table.rig_hash), 8);
  f.write(reinterpret_cast<const char*>(table.uv.data()),
          static_cast<std::streamsize>(table.uv.size() * sizeof(float)));
  f.write(reinterpret_cast<const char*>(table.valid.data()),
          static_cast<std::streamsize>(table.valid.size()));
  if (!f) throw std::runtime_error("save_lookup: write failed for " + path);
}

std::optional<LookupTable> load_lookup(const std::string& path,
                                       std::uint64_t expected_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  auto get32 = [&]() {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (get32() != kCacheMagic || get32() != kCacheVersion) return std::nullopt;
  LookupTable t;
  t.num_cameras = static_cast<int>(get32());
  t.num_subspheres = static_cast<int>(get32());
  t.height = static_cast<int>(get32());
  t.width = static_cast<int>(get32());
  t.source_scale = static_cast<int>(get32());
  t.source_height = static_cast<int>(get32());
  t.source_width = static_cast<int>(get32());
  f.read(reinterpret_cast<char*>(&t.rig_hash), 8);
  if (!f || t.rig_hash != expected_hash) return std::nullopt;
  if (t.num_cameras <= 0 || t.num_subspheres <= 0 || t.height <= 0 ||
      t.width <= 0)
    return std::nullopt;
  const std::size_t cells = static_cast<std::size_t>(t.num_cameras) *
                            t.num_subspheres * t.height * t.width;
  t.uv.resize(cells * 2);
  t.valid.resize(cells);
  f.read(reinterpret_cast<char*>(t.uv.data()),
         static_cast<std::streamsize>(t.uv.size() * sizeof(float)));
  f.read(reinterpret_cast<char*>(t.valid.data()),
         static_cast<std::streamsize>(t.valid.size()));
  if (!f) return std::nullopt;
  return t;
}

}  // namespace omnistereo
