// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omnistereo/geometry.hpp"
#include "omnistereo/io.hpp"
#include "omnistereo/random.hpp"

namespace omnistereo {

/// Procedural solid texture; evaluated in object-local coordinates so the
/// pattern sticks to the surface regardless of viewpoint.
struct TextureSpec {
  int kind = 0;          // 0 smooth fbm, 1 quantized blocks, 2 warped stripes
  std::uint64_t seed = 0;
  double scale = 1.0;    // spatial frequency, cycles per meter
  double contrast = 0.6; // peak-to-peak albedo swing
  double base = 0.5;     // mid albedo
};

struct SceneObject {
  int shape = 0;      // 0 sphere, 1 box
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();  // local-to-rig
  Vec3 half_extents = Vec3::Ones(); // sphere radius in x
  TextureSpec texture;
};

/// Either a textured cuboid room or an infinitely distant gradient sky.
struct Background {
  bool is_room = true;
  Vec3 room_half = Vec3(5, 5, 5);
  TextureSpec texture;
  double sky_top = 0.8;
  double sky_bottom = 0.2;
};

struct Scene {
  std::vector<SceneObject> objects;
  Background background;
  std::uint64_t seed = 0;
};

struct SceneParams {
  int num_objects = 16;
  double min_distance = 0.6;   // meters from the rig origin
  double max_distance = 4.0;
  double clearance = 0.5;      // no object surface closer than this
  double min_angular_radius_deg = 6.0;
  double max_angular_radius_deg = 18.0;
  double room_probability = 0.5;
};

/// Closest surface along a unit-direction ray; sky hits have t = +inf.
struct RayHit {
  double t = 0.0;
  int object = -1;   // >= 0 scene object, -1 room wall, -2 sky
  bool sky = false;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

/// Texture albedo in [0, 1] at an object-local point.
double texture_value(const TextureSpec& tex, const Vec3& local);

RayHit trace_ray(const Scene& scene, const Vec3& origin, const Vec3& dir);

/// Lambertian shade with a fixed directional light; sky shades by elevation.
float shade(const Scene& scene, const RayHit& hit, const Vec3& dir);

/// Uniform direction on the unit sphere (Marsaglia rejection).
Vec3 random_direction(Rand& rng);

/// Random scene with objects placed uniformly over directions and uniformly
/// in inverse distance; pre: min_distance > clearance.
Scene generate_scene(std::uint64_t seed, const SceneParams& params = {});

GrayImage render_fisheye(const Scene& scene, const FisheyeCamera& cam);

/// Ray-cast distance from the rig origin for every sweep cell; sky = +inf.
FloatImage render_gt_depth(const Scene& scene, const SweepGrid& grid);

struct FrameData {
  std::vector<GrayImage> images;  // one per camera
  FloatImage gt_depth;
  FloatImage gt_index;
};

FrameData render_frame(const Scene& scene, const Rig& rig,
                       const SweepGrid& grid);

/// Writes cam<i>.pgm, gt_depth.pfm, gt_index.pfm, frame.json into `dir`.
void write_frame(const std::string& dir, const FrameData& frame,
                 std::uint64_t scene_seed);

FrameData read_frame(const std::string& dir, int num_cameras);

/// Renders `num_frames` frames (seed split from `master_seed` by index) into
/// frame_NNN/ subdirectories plus a manifest.json.
void write_corpus(const std::string& dir, std::uint64_t master_seed,
                  int num_frames, const Rig& rig, const SweepGrid& grid,
                  const SceneParams& params = {});

/// Consistency audit: warp every camera to the sweep grid at ground-truth
/// depth and correlate patches across camera pairs. A cell is eligible when
/// every cell of its patch is sampled by and unoccluded from both cameras
/// and both patches have standard deviation >= texture_sd.
struct WarpAudit {
  std::int64_t eligible = 0;  // summed over camera pairs
  std::int64_t high = 0;      // eligible pair-cells with ZNCC >= zncc_min
  std::vector<std::uint8_t> cell_eligible;  // H*W, 1 = eligible in >= 1 pair
};

WarpAudit audit_gt_warp(const Scene& scene, const Rig& rig,
                        const SweepGrid& grid,
                        const std::vector<std::vector<float>>& images01,
                        const FloatImage& gt_depth, int patch = 9,
                        double texture_sd = 0.02, double zncc_min = 0.9);

}  // namespace omnistereo
