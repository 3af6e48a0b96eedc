// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace omnistereo {

namespace {

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
std::uint64_t fnv_value(std::uint64_t h, T v) {
  return fnv_bytes(h, &v, sizeof(v));
}

template <typename F>
auto at_layer(const char* name, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(name) + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// NetworkConfig

std::vector<int> NetworkConfig::stage_channels() const {
  if (!encoder_channels.empty()) return encoder_channels;
  std::vector<int> ch(static_cast<std::size_t>(encoder_depth),
                      4 * base_channels);
  ch.front() = 2 * base_channels;
  ch.back() = 8 * base_channels;
  return ch;
}

void NetworkConfig::validate() const {
  grid.validate();
  if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
  if (num_residual_pairs < 1)
    throw std::invalid_argument("num_residual_pairs must be >= 1");
  for (int d : dilations)
    if (d < 1) throw std::invalid_argument("dilations must be >= 1");
  if (encoder_depth < 2) throw std::invalid_argument("encoder_depth must be >= 2");
  if (!encoder_channels.empty() &&
      static_cast<int>(encoder_channels.size()) != encoder_depth)
    throw std::invalid_argument("encoder_channels length must equal encoder_depth");
  if (num_cameras < 2) throw std::invalid_argument("num_cameras must be >= 2");
  if (grid.num_spheres % 2 != 0)
    throw std::invalid_argument("num_spheres must be even");
  const int down = 1 << (encoder_depth - 1);
  if (grid.num_subspheres() % down != 0)
    throw std::invalid_argument("sweep dimension not divisible by 2^depth");
  const int spatial_down = 1 << encoder_depth;  // transference + encoder
  if (grid.height % spatial_down != 0 || grid.width % spatial_down != 0)
    throw std::invalid_argument("grid dims not divisible by 2^encoder_depth");
}

std::uint64_t NetworkConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  h = fnv_value(h, base_channels);
  h = fnv_value(h, num_residual_pairs);
  for (int d : dilations) h = fnv_value(h, d);
  h = fnv_value(h, encoder_depth);
  for (int c : stage_channels()) h = fnv_value(h, c);
  h = fnv_value(h, num_cameras);
  h = fnv_value(h, momentum);
  h = fnv_value(h, grid.height);
  h = fnv_value(h, grid.width);
  h = fnv_value(h, grid.phi_min);
  h = fnv_value(h, grid.phi_max);
  h = fnv_value(h, grid.num_spheres);
  h = fnv_value(h, grid.inv_depth_max);
  h = fnv_value(h, grid.stride);
  return h;
}

NetworkConfig NetworkConfig::desk() {
  NetworkConfig cfg;
  cfg.base_channels = 8;
  cfg.num_residual_pairs = 5;
  cfg.dilations = {2, 3, 4};
  cfg.encoder_depth = 4;
  cfg.num_cameras = 4;
  cfg.grid.height = 32;
  cfg.grid.width = 128;
  cfg.grid.phi_min = -M_PI / 4.0;
  cfg.grid.phi_max = M_PI / 4.0;
  cfg.grid.num_spheres = 16;
  cfg.grid.inv_depth_max = 2.0;
  cfg.grid.stride = 2;
  return cfg;
}

// ---------------------------------------------------------------------------
// Input normalization

Tensor normalize_fisheye(const GrayImage& img, const FisheyeCamera& cam) {
  if (img.height != cam.image_height || img.width != cam.image_width)
    throw std::invalid_argument("normalize_fisheye: image size mismatch");
  const double max_r = cam.focal * cam.fov / 2.0;
  std::vector<char> valid(img.pixels.size(), 0);
  double mean = 0.0;
  std::int64_t count = 0;
  for (int row = 0; row < img.height; ++row) {
    for (int col = 0; col < img.width; ++col) {
      const std::size_t i = static_cast<std::size_t>(row) * img.width + col;
      const double du = col - cam.principal.x();
      const double dv = row - cam.principal.y();
      if (std::hypot(du, dv) > max_r) continue;
      valid[i] = 1;
      mean += img.pixels[i];
      ++count;
    }
  }
  std::vector<float> out(img.pixels.size(), 0.0f);
  if (count > 0) {
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i)
      if (valid[i]) {
        const double d = img.pixels[i] - mean;
        var += d * d;
      }
    var /= static_cast<double>(count);
    const double sigma = std::sqrt(var);
    if (sigma > 1e-12) {
      for (std::size_t i = 0; i < valid.size(); ++i)
        if (valid[i])
          out[i] = static_cast<float>((img.pixels[i] - mean) / sigma);
    }
  }
  return Tensor::from_data({img.height, img.width, 1}, std::move(out));
}

// ---------------------------------------------------------------------------
// Model

OmniMVSModel::OmniMVSModel(const NetworkConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rand rng(init_seed);
  const int b = cfg_.base_channels;

  auto conv2 = [&](int kh, int kw, int cin, int cout) {
    ConvBn layer;
    layer.kernel = fanin_uniform({kh, kw, cin, cout}, kh * kw * cin, rng);
    layer.bn = BatchNorm(cout);
    return layer;
  };
  auto conv3 = [&](int k, int cin, int cout) {
    ConvBn layer;
    layer.kernel = fanin_uniform({k, k, k, cin, cout}, k * k * k * cin, rng);
    layer.bn = BatchNorm(cout);
    return layer;
  };

  conv1_ = conv2(5, 5, 1, b);
  const int total_pairs =
      cfg_.num_residual_pairs + static_cast<int>(cfg_.dilations.size());
  for (int i = 0; i < total_pairs; ++i) {
    pairs_.push_back(conv2(3, 3, b, b));
    pairs_.push_back(conv2(3, 3, b, b));
  }

  transference_.kernel = fanin_uniform({3, 3, 1, b, b}, 3 * 3 * b, rng);
  transference_.bn = BatchNorm(b);
  fusion_ = conv3(3, cfg_.num_cameras * b, cfg_.fusion_channels());

  const auto ch = cfg_.stage_channels();
  int prev = cfg_.fusion_channels();
  for (int s = 0; s < cfg_.encoder_depth; ++s) {
    Stage st;
    st.first = conv3(3, prev, ch[s]);
    st.refine1 = conv3(3, ch[s], ch[s]);
    st.refine2 = conv3(3, ch[s], ch[s]);
    stages_.push_back(std::move(st));
    prev = ch[s];
  }

  // Deconv kernels are laid out (kh, kw, kd, Cout, Cin).
  int in_ch = ch.back();
  for (int j = 0; j < cfg_.encoder_depth - 1; ++j) {
    const int out_ch = ch[cfg_.encoder_depth - 2 - j];
    ConvBn layer;
    layer.kernel =
        fanin_uniform({3, 3, 3, out_ch, in_ch}, 3 * 3 * 3 * in_ch, rng);
    layer.bn = BatchNorm(out_ch);
    deconvs_.push_back(std::move(layer));
    in_ch = out_ch;
  }
  final_deconv_ = fanin_uniform({3, 3, 3, 1, in_ch}, 3 * 3 * 3 * in_ch, rng);
}

Tensor OmniMVSModel::conv_bn_relu(ConvBn& layer, const Tensor& x, int stride,
                                  int dilation, bool training) {
  return relu(batchnorm(conv2d(x, layer.kernel, stride, dilation), layer.bn,
                        training));
}

Tensor OmniMVSModel::extract_unary(const Tensor& img, bool training) {
  if (img.ndim() != 3 || img.dim(2) != 1)
    throw std::invalid_argument("extract_unary: input must be (H, W, 1)");
  int max_dil = 1;
  for (int d : cfg_.dilations) max_dil = std::max(max_dil, d);
  const int min_side = 2 * (2 * max_dil + 1);
  if (img.dim(0) < min_side || img.dim(1) < min_side)
    throw std::invalid_argument(
        "extract_unary: image smaller than the receptive-field minimum");

  Tensor x = conv_bn_relu(conv1_, img, 2, 1, training);
  for (std::size_t i = 0; i < pairs_.size(); i += 2) {
    const int pair = static_cast<int>(i / 2);
    const int dil = pair < cfg_.num_residual_pairs
                        ? 1
                        : cfg_.dilations[pair - cfg_.num_residual_pairs];
    Tensor h = conv_bn_relu(pairs_[i], x, 1, dil, training);
    h = batchnorm(conv2d(h, pairs_[i + 1].kernel, 1, dil), pairs_[i + 1].bn,
                  training);
    x = relu(add(h, x));
  }
  return x;
}

OmniMVSModel::ForwardResult OmniMVSModel::forward(
    const std::vector<Tensor>& images, const LookupTable& table,
    const std::vector<int>& permutation, bool training, ShapeTrace* trace) {
  if (static_cast<int>(images.size()) != cfg_.num_cameras)
    throw std::invalid_argument("forward: wrong number of images");
  if (table.num_cameras != cfg_.num_cameras || table.source_scale != 2 ||
      table.height != cfg_.grid.height || table.width != cfg_.grid.width ||
      table.num_subspheres != cfg_.grid.num_subspheres())
    throw std::invalid_argument("forward: lookup table does not match config");

  auto record = [&](const std::string& name, const Tensor& t) {
    if (trace) trace->entries.emplace_back(name, t.shape());
  };

  std::vector<SphericalVolume> transferred;
  for (int i = 0; i < cfg_.num_cameras; ++i) {
    Tensor unary = extract_unary(images[i], training);
    SphericalVolume vol =
        at_layer("warp", [&] { return warp_features(unary, table, i); });
    Tensor t = at_layer("transference", [&] {
      return relu(batchnorm(conv3d(vol.data, transference_.kernel, {2, 2, 1}),
                            transference_.bn, training));
    });
    if (i == 0) {
      record("unary", unary);
      record("warp", vol.data);
      record("transference", t);
    }
    transferred.push_back(SphericalVolume{t, {}});
  }

  Tensor x = at_layer(
      "concat", [&] { return concat_volumes(transferred, permutation); });
  record("concat", x);
  x = at_layer("fusion", [&] {
    return relu(
        batchnorm(conv3d(x, fusion_.kernel, {1, 1, 1}), fusion_.bn, training));
  });
  record("fusion", x);

  std::vector<Tensor> skips;
  Tensor stage_in = x;
  for (int s = 0; s < cfg_.encoder_depth; ++s) {
    auto& st = stages_[s];
    const int stride = s == 0 ? 1 : 2;
    Tensor f = at_layer("encoder first conv", [&] {
      return relu(batchnorm(
          conv3d(stage_in, st.first.kernel, {stride, stride, stride}),
          st.first.bn, training));
    });
    Tensor r = at_layer("encoder refine conv", [&] {
      Tensor a = relu(batchnorm(conv3d(f, st.refine1.kernel, {1, 1, 1}),
                                st.refine1.bn, training));
      return relu(batchnorm(conv3d(a, st.refine2.kernel, {1, 1, 1}),
                            st.refine2.bn, training));
    });
    record("enc" + std::to_string(s + 1) + ".first", f);
    record("enc" + std::to_string(s + 1) + ".refine", r);
    skips.push_back(r);
    stage_in = f;
  }

  Tensor y = skips.back();
  for (int j = 0; j < cfg_.encoder_depth - 1; ++j) {
    const int target = cfg_.encoder_depth - 2 - j;
    y = at_layer("decoder deconv", [&] {
      Tensor up = batchnorm(deconv3d(y, deconvs_[j].kernel, 2), deconvs_[j].bn,
                            training);
      return relu(add(up, skips[target]));
    });
    record("dec" + std::to_string(j + 1), y);
  }
  Tensor cost4 =
      at_layer("final deconv", [&] { return deconv3d(y, final_deconv_, 2); });
  record("final", cost4);

  ForwardResult out;
  out.cost = reshape(
      cost4, {cfg_.grid.height, cfg_.grid.width, cfg_.grid.num_spheres});
  out.pred_index = softargmin(out.cost);
  record("pred", out.pred_index);
  return out;
}

std::vector<std::pair<std::string, Tensor>> OmniMVSModel::parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  auto push = [&](const std::string& name, ConvBn& layer) {
    out.emplace_back(name + ".k", layer.kernel);
    out.emplace_back(name + ".gamma", layer.bn.gamma);
    out.emplace_back(name + ".beta", layer.bn.beta);
  };
  push("unary.conv1", conv1_);
  for (std::size_t i = 0; i < pairs_.size(); i += 2) {
    const std::string base = "unary.pair" + std::to_string(i / 2);
    push(base + ".a", pairs_[i]);
    push(base + ".b", pairs_[i + 1]);
  }
  push("transfer", transference_);
  push("fusion", fusion_);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string base = "enc" + std::to_string(s);
    push(base + ".first", stages_[s].first);
    push(base + ".r1", stages_[s].refine1);
    push(base + ".r2", stages_[s].refine2);
  }
  for (std::size_t j = 0; j < deconvs_.size(); ++j)
    push("dec" + std::to_string(j), deconvs_[j]);
  out.emplace_back("final.k", final_deconv_);
  return out;
}

std::vector<std::pair<std::string, std::vector<float>*>>
OmniMVSModel::buffers() {
  std::vector<std::pair<std::string, std::vector<float>*>> out;
  auto push = [&](const std::string& name, ConvBn& layer) {
    out.emplace_back(name + ".mean", &layer.bn.running_mean);
    out.emplace_back(name + ".var", &layer.bn.running_var);
  };
  push("unary.conv1", conv1_);
  for (std::size_t i = 0; i < pairs_.size(); i += 2) {
    const std::string base = "unary.pair" + std::to_string(i / 2);
    push(base + ".a", pairs_[i]);
    push(base + ".b", pairs_[i + 1]);
  }
  push("transfer", transference_);
  push("fusion", fusion_);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string base = "enc" + std::to_string(s);
    push(base + ".first", stages_[s].first);
    push(base + ".r1", stages_[s].refine1);
    push(base + ".r2", stages_[s].refine2);
  }
  for (std::size_t j = 0; j < deconvs_.size(); ++j)
    push("dec" + std::to_string(j), deconvs_[j]);
  return out;
}

void OmniMVSModel::zero_grads() {
  for (auto& [name, p] : parameters()) {
    (void)name;
    p.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Ground truth and training

Tensor gt_index_map(const FloatImage& depth, const SweepGrid& grid,
                    std::int64_t* clamped_count) {
  if (depth.height != grid.height || depth.width != grid.width)
    throw std::invalid_argument("gt_index_map: raster does not match grid");
  std::vector<float> out(depth.pixels.size());
  std::int64_t clamped = 0;
  const double dmax = grid.inv_depth_max;
  const double scale = (grid.num_spheres - 1) / dmax;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float rho = depth.pixels[i];
    if (std::isnan(rho) || (std::isfinite(rho) && rho <= 0.0f))
      throw std::invalid_argument("gt_index_map: nonpositive depth");
    if (std::isinf(rho)) {
      out[i] = 0.0f;
      continue;
    }
    const double dstar = 1.0 / rho;
    if (dstar > dmax) {
      out[i] = static_cast<float>(grid.num_spheres - 1);
      ++clamped;
    } else {
      out[i] = static_cast<float>(dstar * scale);
    }
  }
  if (clamped_count) *clamped_count = clamped;
  return Tensor::from_data({grid.height, grid.width}, std::move(out));
}

std::vector<int> coverage_counts(const LookupTable& table) {
  std::vector<int> cov(static_cast<std::size_t>(table.height) * table.width, 0);
  for (int cam = 0; cam < table.num_cameras; ++cam)
    for (int row = 0; row < table.height; ++row)
      for (int col = 0; col < table.width; ++col)
        cov[static_cast<std::size_t>(row) * table.width + col] +=
            table.valid[table.cell(cam, 0, row, col)];
  return cov;
}

float train_step(OmniMVSModel& model, TrainerState& state,
                 const TrainFrame& frame, const Rig& rig,
                 const TrainOptions& opts,
                 std::map<int, LookupTable>& tables) {
  const auto& cfg = model.config();
  const int W = cfg.grid.width;
  if (static_cast<int>(frame.images.size()) != cfg.num_cameras)
    throw std::invalid_argument("train_step: wrong image count");

  int yaw_cols = 0;
  if (opts.yaw_augmentation) {
    const int span = std::max(1, W / 16);
    yaw_cols = static_cast<int>(state.rng.uniform_int(-span, span));
  }
  std::vector<int> perm(static_cast<std::size_t>(cfg.num_cameras));
  int shift = 0;
  if (opts.permute_cameras)
    shift = static_cast<int>(state.rng.uniform_int(0, cfg.num_cameras - 1));
  for (int i = 0; i < cfg.num_cameras; ++i)
    perm[i] = (i + shift) % cfg.num_cameras;

  auto it = tables.find(yaw_cols);
  if (it == tables.end()) {
    const double beta = yaw_cols * 2.0 * M_PI / W;
    it = tables.emplace(yaw_cols, build_lookup(yawed_rig(rig, beta), cfg.grid, 2))
             .first;
  }
  const LookupTable& table = it->second;

  std::vector<Tensor> images;
  for (int i = 0; i < cfg.num_cameras; ++i)
    images.push_back(normalize_fisheye(frame.images[i], rig.cameras[i]));

  Tensor gt = gt_index_map(frame.gt_depth, cfg.grid);
  std::vector<float> rolled(gt.values().size());
  for (int row = 0; row < cfg.grid.height; ++row)
    for (int col = 0; col < W; ++col) {
      const int src = ((col + yaw_cols) % W + W) % W;
      rolled[static_cast<std::size_t>(row) * W + col] =
          gt.values()[static_cast<std::size_t>(row) * W + src];
    }
  Tensor gt_rolled =
      Tensor::from_data({cfg.grid.height, W}, std::move(rolled));

  model.zero_grads();
  auto out = model.forward(images, table, perm, /*training=*/true);
  Tensor loss = masked_l1_loss(out.pred_index, gt_rolled,
                               coverage_counts(table));
  loss.backward();

  auto named = model.parameters();
  std::vector<Tensor> params;
  params.reserve(named.size());
  for (auto& [name, p] : named) {
    (void)name;
    params.push_back(p);
  }
  sgd_step(params, state.sgd, opts.lr, cfg.momentum);
  ++state.step;
  return loss.scalar();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint32_t kCkptMagic = 0x504b4d4fu;
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::ostream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u64(std::ostream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}
void put_string(std::ostream& f, const std::string& s) {
  put_u32(f, static_cast<std::uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_blob(std::ostream& f, const std::string& name,
              const std::vector<int>& shape, const std::vector<float>& data) {
  put_string(f, name);
  put_u32(f, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_u32(f, static_cast<std::uint32_t>(d));
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
}

std::uint32_t get_u32(std::istream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t get_u64(std::istream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string get_string(std::istream& f) {
  const std::uint32_t n = get_u32(f);
  if (n > (1u << 20)) throw std::runtime_error("checkpoint: oversized string");
  std::string s(n, '\0');
  f.read(s.data(), n);
  return s;
}

struct Blob {
  std::vector<int> shape;
  std::vector<float> data;
};

}  // namespace

void save_checkpoint(const std::string& path, OmniMVSModel& model,
                     const TrainerState& state, std::uint64_t rig_grid_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  put_u32(f, kCkptMagic);
  put_u32(f, kCkptVersion);
  put_u64(f, model.config().hash());
  put_u64(f, rig_grid_hash);
  put_u64(f, state.step);
  put_string(f, state.rng.save_state());

  auto params = model.parameters();
  auto bufs = model.buffers();
  const std::uint32_t nblobs = static_cast<std::uint32_t>(
      params.size() * 2 + bufs.size());
  put_u32(f, nblobs);
  for (auto& [name, p] : params) put_blob(f, "p:" + name, p.shape(), p.values());
  for (auto& [name, b] : bufs)
    put_blob(f, "b:" + name, {static_cast<int>(b->size())}, *b);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<float> vel(params[i].second.values().size(), 0.0f);
    if (i < state.sgd.velocity.size() &&
        state.sgd.velocity[i].size() == vel.size())
      vel = state.sgd.velocity[i];
    put_blob(f, "v:" + params[i].first,
             {static_cast<int>(vel.size())}, vel);
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, OmniMVSModel& model,
                     TrainerState& state, std::uint64_t expected_rig_grid_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  if (get_u32(f) != kCkptMagic || get_u32(f) != kCkptVersion)
    throw std::runtime_error("load_checkpoint: not a checkpoint file");
  if (get_u64(f) != model.config().hash())
    throw std::runtime_error("load_checkpoint: network config mismatch");
  const std::uint64_t rig_hash_in = get_u64(f);
  if (expected_rig_grid_hash != 0 && rig_hash_in != expected_rig_grid_hash)
    throw std::runtime_error("load_checkpoint: rig/grid mismatch");
  state.step = get_u64(f);
  state.rng.load_state(get_string(f));

  std::map<std::string, Blob> blobs;
  const std::uint32_t nblobs = get_u32(f);
  for (std::uint32_t i = 0; i < nblobs; ++i) {
    const std::string name = get_string(f);
    Blob b;
    const std::uint32_t nd = get_u32(f);
    if (nd > 8) throw std::runtime_error("load_checkpoint: bad blob rank");
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < nd; ++d) {
      b.shape.push_back(static_cast<int>(get_u32(f)));
      total *= static_cast<std::size_t>(b.shape.back());
    }
    b.data.resize(total);
    f.read(reinterpret_cast<char*>(b.data.data()),
           static_cast<std::streamsize>(total * sizeof(float)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated blob " + name);
    blobs.emplace(name, std::move(b));
  }

  auto fetch = [&](const std::string& name, std::size_t want) -> Blob& {
    auto it = blobs.find(name);
    if (it == blobs.end())
      throw std::runtime_error("load_checkpoint: missing blob " + name);
    if (it->second.data.size() != want)
      throw std::runtime_error("load_checkpoint: size mismatch for " + name);
    return it->second;
  };

  auto params = model.parameters();
  for (auto& [name, p] : params)
    p.values() = fetch("p:" + name, p.values().size()).data;
  for (auto& [name, b] : model.buffers())
    *b = fetch("b:" + name, b->size()).data;
  state.sgd.velocity.clear();
  for (auto& [name, p] : params)
    state.sgd.velocity.push_back(
        fetch("v:" + name, p.values().size()).data);
}

}  // namespace omnistereo
