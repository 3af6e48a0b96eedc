// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "omnistereo/geometry.hpp"
#include "omnistereo/io.hpp"
#include "omnistereo/ops.hpp"
#include "omnistereo/random.hpp"
#include "omnistereo/sweeping.hpp"
#include "omnistereo/tensor.hpp"

namespace omnistereo {

/// Scalable architecture description. Channel meanings with base b:
/// unary extractor and transference are b wide, fusion and the first encoder
/// stage 2b, middle stages 4b, bottleneck 8b. encoder_channels lists the per
/// stage widths explicitly; an empty list derives that default ladder for
/// encoder_depth stages.
struct NetworkConfig {
  int base_channels = 8;
  int num_residual_pairs = 5;
  std::vector<int> dilations = {2, 3, 4};
  int encoder_depth = 4;
  std::vector<int> encoder_channels;  // empty = derive {2b, 4b, ..., 4b, 8b}
  int num_cameras = 4;
  SweepGrid grid;
  float momentum = 0.9f;

  void validate() const;
  std::vector<int> stage_channels() const;
  int fusion_channels() const { return 2 * base_channels; }
  std::uint64_t hash() const;

  /// Pinned desk-scale configuration: 128x128 inputs, grid 32x128, N=16,
  /// base 8, encoder depth 4.
  static NetworkConfig desk();
};

/// Zero-mean unit-variance grayscale normalization over the pixels inside
/// the fisheye fov circle; pixels outside stay zero. Output (H_I, W_I, 1).
Tensor normalize_fisheye(const GrayImage& img, const FisheyeCamera& cam);

/// Cost-volume network: per-image unary extractor at half resolution,
/// spherical warp, per-view transference conv, channel concat, fusion, 3D
/// encoder-decoder with skip adds, final deconv to the full sphere count,
/// and softargmin index regression.
class OmniMVSModel {
 public:
  OmniMVSModel(const NetworkConfig& cfg, std::uint64_t init_seed);

  /// conv1 (5x5, stride 2) + residual pairs + dilated residual pairs.
  /// Output (ceil(H_I/2), ceil(W_I/2), base_channels).
  Tensor extract_unary(const Tensor& img, bool training);

  struct ForwardResult {
    Tensor pred_index;  // (H, W)
    Tensor cost;        // (H, W, N)
  };

  /// Layer-by-layer output shapes recorded during forward; per-camera layers
  /// appear once.
  struct ShapeTrace {
    std::vector<std::pair<std::string, std::vector<int>>> entries;
  };

  /// Full pipeline on one frame. `permutation` orders the per-camera
  /// volumes at the concat stage; identity is canonical inference order.
  /// The lookup table must be built at source_scale 2 for this config's
  /// rig and grid.
  ForwardResult forward(const std::vector<Tensor>& images,
                        const LookupTable& table,
                        const std::vector<int>& permutation, bool training,
                        ShapeTrace* trace = nullptr);

  // Named learnable tensors (kernels, BN gamma/beta), stable order.
  std::vector<std::pair<std::string, Tensor>> parameters();
  // Named non-learnable state (BN running statistics), stable order.
  std::vector<std::pair<std::string, std::vector<float>*>> buffers();
  void zero_grads();

  const NetworkConfig& config() const { return cfg_; }

 private:
  struct ConvBn {
    Tensor kernel;
    BatchNorm bn{1};
  };

  Tensor conv_bn_relu(ConvBn& layer, const Tensor& x, int stride, int dilation,
                      bool training);

  NetworkConfig cfg_;
  ConvBn conv1_;
  std::vector<ConvBn> pairs_;  // two entries per residual pair
  ConvBn transference_;
  ConvBn fusion_;
  struct Stage {
    ConvBn first;  // stride 2 except stage 0
    ConvBn refine1, refine2;
  };
  std::vector<Stage> stages_;
  std::vector<ConvBn> deconvs_;  // encoder_depth-1, each with a skip add
  Tensor final_deconv_;          // to 1 channel, no BN/ReLU
};

/// Continuous ground-truth sweep index for a metric depth raster:
/// n* = (N-1) * d* / d_max with d* = 1/depth; +inf depth maps to 0; depths
/// closer than 1/d_max clamp to N-1 and are counted in clamped_count.
/// Nonpositive or NaN finite depths are rejected.
Tensor gt_index_map(const FloatImage& depth, const SweepGrid& grid,
                    std::int64_t* clamped_count = nullptr);

/// Serialized training session: model + optimizer + augmentation RNG.
struct TrainerState {
  SgdState sgd;
  Rand rng;
  std::uint64_t step = 0;

  explicit TrainerState(std::uint64_t seed) : rng(seed) {}
};

struct TrainOptions {
  float lr = 0.003f;
  bool permute_cameras = true;
  bool yaw_augmentation = true;
};

struct TrainFrame {
  std::vector<GrayImage> images;  // one per camera, rig order
  FloatImage gt_depth;            // meters, +inf allowed, grid resolution
};

/// One SGD step on one frame: sample augmentations, forward, masked L1
/// against round(n*), backward, parameter update. Lookup tables per yaw
/// step are built on demand and cached in `tables`.
float train_step(OmniMVSModel& model, TrainerState& state,
                 const TrainFrame& frame, const Rig& rig,
                 const TrainOptions& opts,
                 std::map<int, LookupTable>& tables);

/// Per-pixel camera-coverage counts at the infinity sphere (the fov mask),
/// taken from the table's n=0 validity bits.
std::vector<int> coverage_counts(const LookupTable& table);

/// Checkpoint: little-endian binary with config hash, rig+grid hash, step
/// counter, RNG state, and named float blobs for parameters, BN buffers,
/// and SGD velocities. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, OmniMVSModel& model,
                     const TrainerState& state, std::uint64_t rig_grid_hash);
/// Throws on missing file, malformed data, hash mismatch against the model
/// config or `expected_rig_grid_hash`, or missing/mismatched blobs.
void load_checkpoint(const std::string& path, OmniMVSModel& model,
                     TrainerState& state, std::uint64_t expected_rig_grid_hash);

}  // namespace omnistereo
