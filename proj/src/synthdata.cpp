// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <Eigen/Geometry>
#include <json.hpp>

#include "omnistereo/network.hpp"
#include "omnistereo/sweeping.hpp"

namespace omnistereo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTMin = 1e-6;

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy,
               std::int64_t iz) {
  std::uint64_t h = split_seed(seed, static_cast<std::uint64_t>(ix));
  h = split_seed(h, static_cast<std::uint64_t>(iy));
  h = split_seed(h, static_cast<std::uint64_t>(iz));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double f) { return f * f * (3.0 - 2.0 * f); }

// Trilinear value noise on an integer lattice, output in [0, 1).
double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()),
               fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const auto iz = static_cast<std::int64_t>(fz);
  const double ux = smooth(p.x() - fx);
  const double uy = smooth(p.y() - fy);
  const double uz = smooth(p.z() - fz);
  double c[2][2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d)
        c[a][b][d] = lattice(seed, ix + a, iy + b, iz + d);
  auto lerp = [](double lo, double hi, double t) { return lo + (hi - lo) * t; };
  const double x00 = lerp(c[0][0][0], c[1][0][0], ux);
  const double x10 = lerp(c[0][1][0], c[1][1][0], ux);
  const double x01 = lerp(c[0][0][1], c[1][0][1], ux);
  const double x11 = lerp(c[0][1][1], c[1][1][1], ux);
  const double y0 = lerp(x00, x10, uy);
  const double y1 = lerp(x01, x11, uy);
  return lerp(y0, y1, uz);
}

double fbm(const Vec3& p, std::uint64_t seed, int octaves) {
  double sum = 0.0, norm = 0.0, amp = 1.0, freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(p * freq, split_seed(seed, 1000 + o));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

// Slab intersection with an axis-aligned box of the given half extents.
// Returns entry/exit parameters and the axis active at each.
struct SlabHit {
  bool ok = false;
  double t_in = -kInf, t_out = kInf;
  int axis_in = 0, axis_out = 0;
};

SlabHit slab_intersect(const Vec3& o, const Vec3& d, const Vec3& half) {
  SlabHit s;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (std::abs(o[a]) > half[a]) return s;
      continue;
    }
    double t1 = (-half[a] - o[a]) / d[a];
    double t2 = (half[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > s.t_in) {
      s.t_in = t1;
      s.axis_in = a;
    }
    if (t2 < s.t_out) {
      s.t_out = t2;
      s.axis_out = a;
    }
  }
  s.ok = s.t_out >= s.t_in;
  return s;
}

}  // namespace

double texture_value(const TextureSpec& tex, const Vec3& local) {
  const Vec3 p = local * tex.scale;
  double v;
  switch (tex.kind) {
    case 0:
      v = fbm(p, tex.seed, 3);
      break;
    case 1: {
      const double f = fbm(p, tex.seed, 2);
      v = std::min(3, static_cast<int>(f * 4.0)) / 3.0;
      break;
    }
    case 2: {
      const double warp = fbm(p, tex.seed, 2);
      v = 0.5 + 0.5 * std::sin(2.0 * M_PI * (p.x() + 0.3 * p.y() + 1.5 * warp));
      break;
    }
    default:
      throw std::invalid_argument("texture_value: unknown kind");
  }
  const double albedo = tex.base + tex.contrast * (v - 0.5);
  return std::clamp(albedo, 0.02, 0.98);
}

RayHit trace_ray(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  RayHit best;
  best.t = kInf;
  best.object = -2;
  best.sky = true;

  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& ob = scene.objects[i];
    if (ob.shape == 0) {
      const double r = ob.half_extents.x();
      const Vec3 oc = origin - ob.position;
      const double b = oc.dot(dir);
      const double cq = oc.squaredNorm() - r * r;
      const double disc = b * b - cq;
      if (disc < 0.0) continue;
      const double sq = std::sqrt(disc);
      double t = -b - sq;
      if (t < kTMin) t = -b + sq;
      if (t < kTMin || t >= best.t) continue;
      best.t = t;
      best.object = static_cast<int>(i);
      best.sky = false;
      best.point = origin + t * dir;
      best.normal = (best.point - ob.position).normalized();
    } else {
      const Mat3 rt = ob.rotation.transpose();
      const Vec3 lo = rt * (origin - ob.position);
      const Vec3 ld = rt * dir;
      const SlabHit s = slab_intersect(lo, ld, ob.half_extents);
      if (!s.ok || s.t_out < kTMin) continue;
      double t;
      int axis;
      if (s.t_in >= kTMin) {
        t = s.t_in;
        axis = s.axis_in;
      } else {
        t = s.t_out;
        axis = s.axis_out;
      }
      if (t >= best.t) continue;
      Vec3 n_local = Vec3::Zero();
      n_local[axis] = ld[axis] > 0.0 ? -1.0 : 1.0;
      if (s.t_in < kTMin) n_local[axis] = -n_local[axis];
      best.t = t;
      best.object = static_cast<int>(i);
      best.sky = false;
      best.point = origin + t * dir;
      best.normal = ob.rotation * n_local;
    }
  }

  if (best.object == -2 && scene.background.is_room) {
    const SlabHit s = slab_intersect(origin, dir, scene.background.room_half);
    if (s.ok && s.t_out >= kTMin) {
      best.t = s.t_out;
      best.object = -1;
      best.sky = false;
      best.point = origin + s.t_out * dir;
      best.normal = Vec3::Zero();
      best.normal[s.axis_out] = dir[s.axis_out] > 0.0 ? -1.0 : 1.0;
    }
  }
  if (best.sky) best.point = dir;
  return best;
}

float shade(const Scene& scene, const RayHit& hit, const Vec3& dir) {
  if (hit.sky) {
    const auto& bg = scene.background;
    const double s = (dir.normalized().y() + 1.0) / 2.0;
    const double v = bg.sky_bottom + (bg.sky_top - bg.sky_bottom) * s;
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  const TextureSpec* tex;
  Vec3 local;
  if (hit.object >= 0) {
    const auto& ob = scene.objects[hit.object];
    local = ob.rotation.transpose() * (hit.point - ob.position);
    tex = &ob.texture;
  } else {
    local = hit.point;
    tex = &scene.background.texture;
  }
  const Vec3 light = Vec3(0.3, 1.0, 0.2).normalized();
  const double albedo = texture_value(*tex, local);
  const double lambert = 0.35 + 0.65 * std::max(0.0, hit.normal.dot(light));
  return static_cast<float>(std::clamp(albedo * lambert, 0.0, 1.0));
}

Vec3 random_direction(Rand& rng) {
  for (;;) {
    const double x1 = rng.uniform(-1.0, 1.0);
    const double x2 = rng.uniform(-1.0, 1.0);
    const double s = x1 * x1 + x2 * x2;
    if (s >= 1.0) continue;
    const double f = 2.0 * std::sqrt(1.0 - s);
    return Vec3(x1 * f, x2 * f, 1.0 - 2.0 * s);
  }
}

Scene generate_scene(std::uint64_t seed, const SceneParams& params) {
  if (params.num_objects < 0)
    throw std::invalid_argument("generate_scene: negative object count");
  if (params.min_distance <= params.clearance)
    throw std::invalid_argument(
        "generate_scene: min_distance must exceed clearance");
  if (params.max_distance < params.min_distance)
    throw std::invalid_argument("generate_scene: empty distance range");
  if (params.min_angular_radius_deg <= 0.0 ||
      params.max_angular_radius_deg < params.min_angular_radius_deg ||
      params.max_angular_radius_deg >= 60.0)
    throw std::invalid_argument("generate_scene: bad angular radius range");

  Scene scene;
  scene.seed = seed;
  Rand rng(seed);

  auto random_texture = [&rng](double scale_lo, double scale_hi) {
    TextureSpec t;
    t.kind = rng.uniform_int(0, 2);
    t.seed = rng.bits();
    t.scale = rng.uniform(scale_lo, scale_hi);
    t.contrast = rng.uniform(0.5, 1.0);
    t.base = rng.uniform(0.35, 0.65);
    return t;
  };

  auto& bg = scene.background;
  bg.is_room = rng.coin(params.room_probability);
  if (bg.is_room) {
    bg.room_half = Vec3(rng.uniform(4.2, 6.0), rng.uniform(4.2, 6.0),
                        rng.uniform(4.2, 6.0));
    bg.texture = random_texture(0.3, 0.8);
  } else {
    bg.sky_top = rng.uniform(0.6, 0.9);
    bg.sky_bottom = rng.uniform(0.1, 0.4);
  }

  for (int i = 0; i < params.num_objects; ++i) {
    SceneObject ob;
    const Vec3 dir = random_direction(rng);
    const double inv = rng.uniform(1.0 / params.max_distance,
                                   1.0 / params.min_distance);
    const double dist = 1.0 / inv;
    ob.position = dist * dir;
    const double ang =
        rng.uniform(params.min_angular_radius_deg,
                    params.max_angular_radius_deg) *
        M_PI / 180.0;
    const double r_bound =
        std::min(dist * std::tan(ang), dist - params.clearance);
    ob.shape = rng.coin(0.5) ? 1 : 0;
    if (ob.shape == 0) {
      ob.half_extents = Vec3::Constant(r_bound * rng.uniform(0.6, 1.0));
    } else {
      const double h = r_bound / std::sqrt(3.0);
      ob.half_extents = Vec3(h * rng.uniform(0.5, 1.0),
                             h * rng.uniform(0.5, 1.0),
                             h * rng.uniform(0.5, 1.0));
    }
    const Vec3 axis = random_direction(rng);
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    ob.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    ob.texture = random_texture(0.5 / r_bound, 1.2 / r_bound);
    scene.objects.push_back(ob);
  }
  return scene;
}

GrayImage render_fisheye(const Scene& scene, const FisheyeCamera& cam) {
  cam.validate();
  GrayImage img;
  img.height = cam.image_height;
  img.width = cam.image_width;
  img.pixels.assign(
      static_cast<std::size_t>(img.height) * img.width, 0);
  const Vec3 center = cam.center();
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const double radius = (Vec2(u, v) - cam.principal).norm();
      if (radius / cam.focal > cam.fov / 2.0) continue;
      const Vec3 dir = cam.unproject_rig(u, v);
      const RayHit hit = trace_ray(scene, center, dir);
      const float val = shade(scene, hit, dir);
      img.pixels[static_cast<std::size_t>(v) * img.width + u] =
          static_cast<std::uint8_t>(
              std::lround(std::clamp(val, 0.0f, 1.0f) * 255.0f));
    }
  }
  return img;
}

FloatImage render_gt_depth(const Scene& scene, const SweepGrid& grid) {
  grid.validate();
  FloatImage out;
  out.height = grid.height;
  out.width = grid.width;
  out.pixels.assign(static_cast<std::size_t>(out.height) * out.width, 0.0f);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const Vec3 dir = unit_ray(grid.coord(r, c)).vec();
      const RayHit hit = trace_ray(scene, Vec3::Zero(), dir);
      out.pixels[static_cast<std::size_t>(r) * grid.width + c] =
          hit.sky ? std::numeric_limits<float>::infinity()
                  : static_cast<float>(hit.t);
    }
  }
  return out;
}

FrameData render_frame(const Scene& scene, const Rig& rig,
                       const SweepGrid& grid) {
  rig.validate();
  FrameData frame;
  for (const auto& cam : rig.cameras)
    frame.images.push_back(render_fisheye(scene, cam));
  frame.gt_depth = render_gt_depth(scene, grid);
  const Tensor idx = gt_index_map(frame.gt_depth, grid);
  frame.gt_index.height = grid.height;
  frame.gt_index.width = grid.width;
  frame.gt_index.pixels = idx.values();
  return frame;
}

void write_frame(const std::string& dir, const FrameData& frame,
                 std::uint64_t scene_seed) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < frame.images.size(); ++i)
    write_pgm(dir + "/cam" + std::to_string(i) + ".pgm", frame.images[i]);
  write_pfm(dir + "/gt_depth.pfm", frame.gt_depth);
  write_pfm(dir + "/gt_index.pfm", frame.gt_index);
  nlohmann::json meta;
  meta["scene_seed"] = scene_seed;
  meta["num_cameras"] = frame.images.size();
  std::ofstream out(dir + "/frame.json", std::ios::binary);
  if (!out) throw std::runtime_error("write_frame: cannot write " + dir);
  out << meta.dump(2) << "\n";
}

FrameData read_frame(const std::string& dir, int num_cameras) {
  FrameData frame;
  for (int i = 0; i < num_cameras; ++i)
    frame.images.push_back(read_pgm(dir + "/cam" + std::to_string(i) + ".pgm"));
  frame.gt_depth = read_pfm(dir + "/gt_depth.pfm");
  frame.gt_index = read_pfm(dir + "/gt_index.pfm");
  return frame;
}

void write_corpus(const std::string& dir, std::uint64_t master_seed,
                  int num_frames, const Rig& rig, const SweepGrid& grid,
                  const SceneParams& params) {
  if (num_frames <= 0)
    throw std::invalid_argument("write_corpus: num_frames must be positive");
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["master_seed"] = master_seed;
  manifest["num_frames"] = num_frames;
  manifest["rig_grid_hash"] = rig_hash(rig, grid);
  manifest["frames"] = nlohmann::json::array();
  for (int f = 0; f < num_frames; ++f) {
    const std::uint64_t seed = split_seed(master_seed, f);
    const Scene scene = generate_scene(seed, params);
    const FrameData frame = render_frame(scene, rig, grid);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d", f);
    write_frame(dir + "/" + name, frame, seed);
    manifest["frames"].push_back({{"dir", name}, {"scene_seed", seed}});
  }
  std::ofstream out(dir + "/manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("write_corpus: cannot write " + dir);
  out << manifest.dump(2) << "\n";
}

WarpAudit audit_gt_warp(const Scene& scene, const Rig& rig,
                        const SweepGrid& grid,
                        const std::vector<std::vector<float>>& images01,
                        const FloatImage& gt_depth, int patch,
                        double texture_sd, double zncc_min) {
  rig.validate();
  grid.validate();
  if (static_cast<int>(images01.size()) != rig.size())
    throw std::invalid_argument("audit_gt_warp: image count mismatch");
  if (patch < 3 || patch % 2 == 0)
    throw std::invalid_argument("audit_gt_warp: patch must be odd and >= 3");
  const int H = grid.height, W = grid.width, half = patch / 2;
  const int n = rig.size();

  std::vector<std::vector<float>> rasters(n);
  std::vector<std::vector<std::uint8_t>> masks(n);
  std::vector<std::vector<std::uint8_t>> visible(
      n, std::vector<std::uint8_t>(static_cast<std::size_t>(H) * W, 0));
  for (int i = 0; i < n; ++i) {
    const auto& cam = rig.cameras[i];
    auto warped = warp_at_depth(images01[i], cam.image_height, cam.image_width,
                                cam, grid, gt_depth.pixels);
    rasters[i] = std::move(warped.first);
    masks[i] = std::move(warped.second);
    const Vec3 center = cam.center();
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        const std::size_t cell = static_cast<std::size_t>(r) * W + c;
        if (!masks[i][cell]) continue;
        const Vec3 dir = unit_ray(grid.coord(r, c)).vec();
        const float d = gt_depth.pixels[cell];
        if (std::isinf(d)) {
          visible[i][cell] = trace_ray(scene, center, dir).sky ? 1 : 0;
        } else {
          const Vec3 point = static_cast<double>(d) * dir;
          const Vec3 to = point - center;
          const double dist = to.norm();
          if (dist < 1e-9) continue;
          const RayHit hit = trace_ray(scene, center, to / dist);
          visible[i][cell] =
              !hit.sky && hit.t >= dist * (1.0 - 1e-3) - 1e-4 ? 1 : 0;
        }
      }
    }
  }

  auto wrap = [&](int c) { return ((c % W) + W) % W; };
  WarpAudit audit;
  audit.cell_eligible.assign(static_cast<std::size_t>(H) * W, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int r = half; r < H - half; ++r) {
        for (int c = 0; c < W; ++c) {
          const std::size_t cell = static_cast<std::size_t>(r) * W + c;
          if (!visible[i][cell] || !visible[j][cell]) continue;
          double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
          bool ok = true;
          for (int dr = -half; dr <= half && ok; ++dr) {
            for (int dc = -half; dc <= half; ++dc) {
              const std::size_t p =
                  static_cast<std::size_t>(r + dr) * W + wrap(c + dc);
              if (!visible[i][p] || !visible[j][p]) {
                ok = false;
                break;
              }
              const double va = rasters[i][p], vb = rasters[j][p];
              sa += va;
              sb += vb;
              saa += va * va;
              sbb += vb * vb;
              sab += va * vb;
            }
          }
          if (!ok) continue;
          const double inv = 1.0 / (patch * patch);
          const double ma = sa * inv, mb = sb * inv;
          const double va = saa * inv - ma * ma;
          const double vb = sbb * inv - mb * mb;
          if (va < texture_sd * texture_sd || vb < texture_sd * texture_sd)
            continue;
          ++audit.eligible;
          audit.cell_eligible[cell] = 1;
          const double zncc = (sab * inv - ma * mb) / std::sqrt(va * vb);
          if (zncc >= zncc_min) ++audit.high;
        }
      }
    }
  }
  return audit;
}

}  // namespace omnistereo
