// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "omnistereo/classic.hpp"
#include "omnistereo/config.hpp"
#include "omnistereo/eval.hpp"
#include "omnistereo/io.hpp"
#include "omnistereo/network.hpp"
#include "omnistereo/synthdata.hpp"

namespace {

using namespace omnistereo;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct CommonOpts {
  std::string rig_path;
  std::string grid_spec;
  double dmax = 0.0;
  std::string profile = "desk";
  std::uint64_t seed = 7;
  std::string out;
};

void add_common(CLI::App* sub, CommonOpts& c, bool out_required) {
  sub->add_option("--rig", c.rig_path, "Calibration JSON file")
      ->envname("OMNISTEREO_RIG");
  sub->add_option("--grid", c.grid_spec, "Sweep grid dimensions HxWxN")
      ->envname("OMNISTEREO_GRID");
  sub->add_option("--dmax", c.dmax, "Maximum inverse depth, 1/meters")
      ->envname("OMNISTEREO_DMAX");
  sub->add_option("--profile", c.profile, "Scale profile: desk or paper")
      ->envname("OMNISTEREO_PROFILE");
  sub->add_option("--seed", c.seed, "Random seed")->envname("OMNISTEREO_SEED");
  auto* out = sub->add_option("--out", c.out, "Output path")
                  ->envname("OMNISTEREO_OUT");
  if (out_required) out->required();
}

/// Rig, grid and network dimensions resolved from profile, rig file and
/// dimension flags, in that order of increasing precedence.
struct Setup {
  Rig rig;
  NetworkConfig cfg;
};

Setup resolve(const CommonOpts& c) {
  Setup s;
  if (c.profile == "desk") {
    s.cfg = NetworkConfig::desk();
    s.rig = default_rig();
  } else if (c.profile == "paper") {
    s.cfg = NetworkConfig::desk();
    s.cfg.base_channels = 32;
    s.cfg.encoder_depth = 5;
    s.cfg.grid.height = 160;
    s.cfg.grid.width = 640;
    s.cfg.grid.num_spheres = 192;
    s.rig = default_rig(1.0, 220.0, 768, 190.0);
  } else {
    throw std::invalid_argument("unknown profile: " + c.profile);
  }
  if (!c.rig_path.empty()) {
    RigFile rf = load_rig_file(c.rig_path);
    s.rig = rf.rig;
    if (rf.grid) s.cfg.grid = *rf.grid;
  }
  if (!c.grid_spec.empty()) {
    int h = 0, w = 0, n = 0;
    if (std::sscanf(c.grid_spec.c_str(), "%dx%dx%d", &h, &w, &n) != 3)
      throw std::invalid_argument("bad --grid, expected HxWxN: " + c.grid_spec);
    s.cfg.grid.height = h;
    s.cfg.grid.width = w;
    s.cfg.grid.num_spheres = n;
  }
  if (c.dmax != 0.0) s.cfg.grid.inv_depth_max = c.dmax;
  s.cfg.num_cameras = s.rig.size();
  s.rig.validate();
  s.cfg.grid.validate();
  return s;
}

FloatImage index_to_pfm(const IndexMap& m) {
  FloatImage img;
  img.height = m.height;
  img.width = m.width;
  img.pixels.assign(m.index.size(), -1.0f);
  for (std::size_t i = 0; i < m.index.size(); ++i)
    if (m.valid[i]) img.pixels[i] = m.index[i];
  return img;
}

void write_prediction(const std::string& prefix, const FloatImage& index) {
  if (const auto parent = std::filesystem::path(prefix).parent_path();
      !parent.empty())
    std::filesystem::create_directories(parent);
  write_pfm(prefix + ".pfm", index);
  FloatImage vis = index;
  for (auto& v : vis.pixels)
    if (v < 0.0f) v = 0.0f;
  write_pgm(prefix + ".pgm", to_gray(vis));
}

void write_cost_dump(const std::string& prefix, const std::vector<float>& cost,
                     int height, int width, int planes) {
  FloatImage stacked;
  stacked.height = height * planes;
  stacked.width = width;
  stacked.pixels.assign(cost.size(), 0.0f);
  for (int j = 0; j < planes; ++j)
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        stacked.pixels[(static_cast<std::size_t>(j) * height + r) * width + c] =
            cost[(static_cast<std::size_t>(r) * width + c) * planes + j];
  write_pfm(prefix + "_cost.pfm", stacked);
}

int cmd_generate(const CommonOpts& common, int frames, int objects) {
  const Setup s = resolve(common);
  SceneParams params;
  params.num_objects = objects;
  write_corpus(common.out, common.seed, frames, s.rig, s.cfg.grid, params);
  std::printf("wrote %d frames to %s\n", frames, common.out.c_str());
  return kExitOk;
}

int cmd_estimate(const CommonOpts& common, const std::string& frame_dir,
                 const std::string& method, const std::string& checkpoint,
                 bool dump_cost) {
  const Setup s = resolve(common);
  const SweepGrid& grid = s.cfg.grid;
  FrameData frame = read_frame(frame_dir, s.rig.size());
  for (int i = 0; i < s.rig.size(); ++i)
    if (frame.images[i].height != s.rig.cameras[i].image_height ||
        frame.images[i].width != s.rig.cameras[i].image_width)
      throw std::runtime_error("estimate: image size does not match rig");

  if (method == "omnimvs") {
    OmniMVSModel model(s.cfg, common.seed);
    TrainerState state(common.seed);
    if (!checkpoint.empty())
      load_checkpoint(checkpoint, model, state, rig_hash(s.rig, grid));
    const LookupTable table = build_lookup(s.rig, grid, 2);
    std::vector<Tensor> images;
    for (int i = 0; i < s.rig.size(); ++i)
      images.push_back(normalize_fisheye(frame.images[i], s.rig.cameras[i]));
    std::vector<int> identity(s.rig.size());
    for (int i = 0; i < s.rig.size(); ++i) identity[i] = i;
    NoGradGuard guard;
    const auto result = model.forward(images, table, identity, false);
    FloatImage out;
    out.height = grid.height;
    out.width = grid.width;
    out.pixels = result.pred_index.values();
    write_prediction(common.out, out);
    if (dump_cost)
      write_cost_dump(common.out, result.cost.values(), grid.height,
                      grid.width, grid.num_spheres);
  } else if (method == "zncc-wta" || method == "zncc-sgm") {
    const LookupTable table = build_lookup(s.rig, grid, 1);
    std::vector<std::vector<float>> images01;
    for (const auto& img : frame.images) images01.push_back(to_unit(img));
    const auto volumes = warp_all_cameras(images01, table);
    CostVolume cost = build_cost_volume(volumes, 9);
    cost.stride = grid.stride;
    if (method == "zncc-sgm") cost = sgm(cost, SgmParams{});
    const IndexMap m = winner_take_all(cost);
    write_prediction(common.out, index_to_pfm(m));
    if (dump_cost)
      write_cost_dump(common.out, cost.data, cost.height, cost.width,
                      cost.planes);
  } else if (method == "stitch") {
    std::vector<std::vector<float>> images01;
    for (const auto& img : frame.images) images01.push_back(to_unit(img));
    const auto views = rectify_pairs(s.rig, images01);
    std::vector<DisparityMap> disparities;
    for (const auto& view : views) disparities.push_back(block_match(view));
    const IndexMap m = stitch_disparities(views, disparities, grid);
    write_prediction(common.out, index_to_pfm(m));
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }
  std::printf("wrote %s.pfm\n", common.out.c_str());
  return kExitOk;
}

struct TrainCli {
  std::string data;
  int steps = 0;
  int epochs = 1;
  int overfit = 0;
  double lr = 0.003;
  double lr2 = 0.0003;
  int lr_drop_epoch = 20;
  double momentum = 0.9;
  std::string resume;
  int checkpoint_every = 0;
  bool no_permute = false;
  bool no_yaw = false;
};

int cmd_train(const CommonOpts& common, const TrainCli& t) {
  Setup s = resolve(common);
  s.cfg.momentum = static_cast<float>(t.momentum);
  const SweepGrid& grid = s.cfg.grid;

  std::ifstream mf(t.data + "/manifest.json", std::ios::binary);
  if (!mf) throw std::runtime_error("train: missing manifest in " + t.data);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("train: bad manifest: " + std::string(e.what()));
  }

  std::vector<TrainFrame> frames;
  for (const auto& jf : manifest.at("frames")) {
    const std::string dir = t.data + "/" + jf.at("dir").get<std::string>();
    FrameData fd = read_frame(dir, s.rig.size());
    if (fd.gt_depth.height != grid.height || fd.gt_depth.width != grid.width)
      throw std::runtime_error("train: corpus grid mismatch in " + dir);
    frames.push_back(TrainFrame{std::move(fd.images), std::move(fd.gt_depth)});
    if (t.overfit > 0 && static_cast<int>(frames.size()) >= t.overfit) break;
  }
  if (frames.empty()) throw std::runtime_error("train: corpus has no frames");

  OmniMVSModel model(s.cfg, common.seed);
  TrainerState state(common.seed);
  const std::uint64_t rg_hash = rig_hash(s.rig, grid);
  if (!t.resume.empty()) load_checkpoint(t.resume, model, state, rg_hash);

  std::filesystem::create_directories(common.out);
  std::ofstream loss_log(common.out + "/loss.txt",
                         t.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!loss_log)
    throw std::runtime_error("train: cannot write loss log in " + common.out);

  TrainOptions opts;
  opts.permute_cameras = !t.no_permute;
  opts.yaw_augmentation = !t.no_yaw;
  const bool steps_mode = t.steps > 0;
  const std::uint64_t total =
      steps_mode ? static_cast<std::uint64_t>(t.steps)
                 : static_cast<std::uint64_t>(t.epochs) * frames.size();
  const std::string ckpt_path = common.out + "/model.ckpt";

  std::map<int, LookupTable> tables;
  float loss = 0.0f;
  for (std::uint64_t i = 0; i < total; ++i) {
    const std::uint64_t epoch = state.step / frames.size();
    opts.lr = static_cast<float>(
        steps_mode ? t.lr
                   : (epoch < static_cast<std::uint64_t>(t.lr_drop_epoch)
                          ? t.lr
                          : t.lr2));
    const TrainFrame& frame = frames[state.step % frames.size()];
    loss = train_step(model, state, frame, s.rig, opts, tables);
    loss_log << state.step << " " << loss << " " << opts.lr << "\n";
    loss_log.flush();
    if (t.checkpoint_every > 0 && state.step % t.checkpoint_every == 0)
      save_checkpoint(ckpt_path, model, state, rg_hash);
  }
  save_checkpoint(ckpt_path, model, state, rg_hash);
  std::printf("step %llu loss %.6f\n",
              static_cast<unsigned long long>(state.step),
              static_cast<double>(loss));
  return kExitOk;
}

int cmd_eval(const CommonOpts& common, const std::string& pred_dir,
             const std::string& data_dir) {
  const Setup s = resolve(common);
  const SweepGrid& grid = s.cfg.grid;

  std::ifstream mf(data_dir + "/manifest.json", std::ios::binary);
  if (!mf) throw std::runtime_error("eval: missing manifest in " + data_dir);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("eval: bad manifest: " + std::string(e.what()));
  }

  std::filesystem::create_directories(common.out);
  NamedReports reports;
  std::vector<ErrorRaster> all;
  int missing = 0;
  for (const auto& jf : manifest.at("frames")) {
    const std::string name = jf.at("dir").get<std::string>();
    const std::string pred_path = pred_dir + "/" + name + ".pfm";
    if (!std::filesystem::exists(pred_path)) {
      std::fprintf(stderr, "warning: missing prediction %s\n",
                   pred_path.c_str());
      ++missing;
      continue;
    }
    const FloatImage pred = read_pfm(pred_path);
    const FloatImage gt = read_pfm(data_dir + "/" + name + "/gt_index.pfm");
    if (pred.height != gt.height || pred.width != gt.width)
      throw std::runtime_error("eval: prediction shape mismatch for " + name);
    std::vector<std::uint8_t> valid(pred.pixels.size(), 1);
    std::vector<float> values = pred.pixels;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] < 0.0f) {
        valid[i] = 0;
        values[i] = 0.0f;
      }
    ErrorRaster err = index_error(values, valid, gt.pixels, gt.height,
                                  gt.width, grid.num_spheres);
    write_pfm(common.out + "/" + name + "_error.pfm",
              FloatImage{err.height, err.width, err.abs_diff});
    write_colormap_ppm(common.out + "/" + name + "_error.ppm", err.abs_diff,
                       err.evaluated, err.height, err.width, 0.0f, 5.0f);
    reports.emplace_back(name, summarize(err));
    all.push_back(std::move(err));
  }
  if (all.empty())
    throw std::runtime_error("eval: no predictions matched the corpus");
  if (missing > 0)
    std::fprintf(stderr, "warning: %d frame(s) without predictions\n", missing);
  reports.emplace_back("all", summarize(all));

  const std::string table = report_text(reports);
  std::fputs(table.c_str(), stdout);
  std::ofstream txt(common.out + "/report.txt", std::ios::binary);
  txt << table;
  write_report_json(common.out + "/report.json", reports);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Omnidirectional multi-view stereo pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a config file");

  CommonOpts generate_common;
  int gen_frames = 4;
  int gen_objects = 16;
  auto* gen = app.add_subcommand("generate", "Render a synthetic corpus");
  add_common(gen, generate_common, true);
  gen->add_option("--frames", gen_frames, "Number of frames");
  gen->add_option("--objects", gen_objects, "Objects per scene");

  CommonOpts estimate_common;
  std::string est_frame, est_method = "omnimvs", est_checkpoint;
  bool est_dump_cost = false;
  auto* est = app.add_subcommand("estimate", "Estimate one frame's depth");
  add_common(est, estimate_common, true);
  est->add_option("--frame", est_frame, "Frame directory")->required();
  est->add_option("--method", est_method, "Estimator")
      ->check(CLI::IsMember({"omnimvs", "zncc-wta", "zncc-sgm", "stitch"}))
      ->envname("OMNISTEREO_METHOD");
  est->add_option("--checkpoint", est_checkpoint, "Model checkpoint");
  est->add_flag("--dump-cost", est_dump_cost, "Also write the cost volume");

  CommonOpts train_common;
  TrainCli train_cli;
  auto* trn = app.add_subcommand("train", "Train the cost-volume network");
  add_common(trn, train_common, true);
  trn->add_option("--data", train_cli.data, "Corpus directory")->required();
  trn->add_option("--steps", train_cli.steps, "Step budget (0 = use epochs)");
  trn->add_option("--epochs", train_cli.epochs, "Epoch budget");
  trn->add_option("--overfit", train_cli.overfit,
                  "Restrict to the first K frames");
  trn->add_option("--lr", train_cli.lr, "Learning rate");
  trn->add_option("--lr2", train_cli.lr2, "Learning rate after the drop");
  trn->add_option("--lr-drop-epoch", train_cli.lr_drop_epoch,
                  "Epoch at which the rate drops");
  trn->add_option("--momentum", train_cli.momentum, "SGD momentum");
  trn->add_option("--resume", train_cli.resume, "Checkpoint to resume from");
  trn->add_option("--checkpoint-every", train_cli.checkpoint_every,
                  "Checkpoint interval in steps");
  trn->add_flag("--no-permute", train_cli.no_permute,
                "Disable camera permutation augmentation");
  trn->add_flag("--no-yaw", train_cli.no_yaw, "Disable yaw augmentation");

  CommonOpts eval_common;
  std::string eval_pred, eval_data;
  auto* evl = app.add_subcommand("eval", "Score predictions against GT");
  add_common(evl, eval_common, true);
  evl->add_option("--pred", eval_pred, "Predictions directory")->required();
  evl->add_option("--data", eval_data, "Corpus directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(generate_common, gen_frames, gen_objects);
    if (est->parsed())
      return cmd_estimate(estimate_common, est_frame, est_method,
                          est_checkpoint, est_dump_cost);
    if (trn->parsed()) return cmd_train(train_common, train_cli);
    if (evl->parsed()) return cmd_eval(eval_common, eval_pred, eval_data);
    std::fprintf(stderr, "error: no subcommand\n");
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
}
