// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "socc/checkpoint.hpp"
#include "socc/config.hpp"
#include "socc/dataio.hpp"
#include "socc/eval.hpp"
#include "socc/gradcheck.hpp"
#include "socc/synth.hpp"
#include "socc/train.hpp"

namespace fs = std::filesystem;
using namespace socc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

RunConfig load_config(const std::string& config_path,
                      const std::vector<std::string>& overrides) {
  RunConfig cfg =
      config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
  for (const auto& p : overrides) cfg.set_pair(p);
  return cfg;
}

// Builds the model for inference-style commands: input width is derived from
// the first frame, parameters come from the checkpoint.
nn::Model<float> load_model(const RunConfig& cfg, const Frame& probe_frame,
                            const std::string& checkpoint) {
  nn::ModelConfig mcfg = cfg.model();
  mcfg.input_channels =
      fused_channels(probe_frame, mcfg.use_external_features);
  nn::Model<float> model(mcfg, cfg.grid(), /*seed=*/0);
  nn::load_checkpoint(checkpoint, model.params());
  return model;
}

int cmd_synth(const std::string& out, int frames, std::uint64_t seed,
              int val_from, bool features, const SceneSpec& base) {
  SceneSpec spec = base;
  spec.seed = seed;
  synthesize_dataset(spec, frames, out, val_from, features);
  std::cout << "wrote " << frames << " frames under " << out << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides) {
  const RunConfig cfg = load_config(config_path, overrides);
  // Validate everything before any output is written.
  const auto mcfg = cfg.model();
  const auto grid = cfg.grid();
  const auto tcfg = cfg.train();
  const auto aug = cfg.augment();
  const Dataset ds = open_dataset(cfg.str("data.root"));
  if (ds.frames.empty()) throw DataError("train: dataset is empty");

  fs::create_directories(tcfg.out_dir);
  std::ofstream echo(fs::path(tcfg.out_dir) / "config.txt", std::ios::trunc);
  cfg.echo(echo);
  echo.close();

  const auto result = train(ds, mcfg, grid, tcfg, aug);
  std::cout << "trained " << result.epochs_run << " epochs; best val IoU "
            << result.best_val_iou << ", mIoU " << result.best_val_miou
            << "\ncheckpoint: " << result.checkpoint_path
            << "\nmetrics:    " << result.metrics_path << "\n";
  return kExitOk;
}

int cmd_infer(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& checkpoint, const std::string& data_root,
              const std::string& frame_id, const std::string& out_path) {
  const RunConfig cfg = load_config(config_path, overrides);
  const Dataset ds = open_dataset(data_root);
  const FrameRecord* rec = nullptr;
  for (const auto& r : ds.frames)
    if (r.id == frame_id) rec = &r;
  if (!rec) throw DataError("infer: frame id not found: " + frame_id);
  const Frame frame = load_frame(*rec);

  auto model = load_model(cfg, frame, checkpoint);
  const auto res = run_inference(model, frame,
                                 float(cfg.real("data.intensity_max")),
                                 model.config().use_external_features);
  write_sogt(out_path, res.prediction);
  std::cout << "stage timings (ms): fusion " << res.fusion_ms << ", completion "
            << res.completion_ms << ", segmentation " << res.segmentation_ms
            << ", densify " << res.densify_ms << ", total " << res.total_ms
            << "\ninput voxels " << res.input_voxels << ", output voxels "
            << res.output_voxels << "\nwrote " << out_path << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& json_out, int num_classes) {
  std::vector<fs::path> preds;
  for (const auto& e : fs::directory_iterator(pred_dir))
    if (e.path().extension() == ".sogt") preds.push_back(e.path());
  std::sort(preds.begin(), preds.end());
  if (preds.empty()) throw DataError("eval: no .sogt files under " + pred_dir);

  std::int64_t inter = 0, uni = 0;
  ConfusionAccumulator confusion(num_classes);
  for (const auto& p : preds) {
    const fs::path gt_path = fs::path(gt_dir) / p.filename();
    if (!fs::exists(gt_path))
      throw DataError("eval: missing ground truth " + gt_path.string());
    const auto pred = read_sogt(p);
    const auto gt = read_sogt(gt_path);
    const auto rep = completion_metrics(occupied_voxels(pred, num_classes),
                                        occupied_voxels(gt, num_classes));
    inter += rep.overlap;
    uni += rep.pred_voxels + rep.gt_voxels - rep.overlap;
    confusion.add(pred, gt);
  }
  CompletionReport comp;
  comp.overlap = inter;
  comp.iou = uni > 0 ? double(inter) / double(uni) : 1.0;
  // Aggregate precision/recall need the aggregate set sizes.
  std::int64_t pred_total = 0, gt_total = 0;
  for (const auto& p : preds) {
    pred_total += std::int64_t(occupied_voxels(read_sogt(p), num_classes).size());
    gt_total += std::int64_t(
        occupied_voxels(read_sogt(fs::path(gt_dir) / p.filename()), num_classes)
            .size());
  }
  comp.pred_voxels = pred_total;
  comp.gt_voxels = gt_total;
  comp.precision = pred_total > 0 ? double(inter) / double(pred_total)
                                  : (gt_total == 0 ? 1.0 : 0.0);
  comp.recall =
      gt_total > 0 ? double(inter) / double(gt_total) : (pred_total == 0 ? 1.0 : 0.0);
  comp.f1 = (comp.precision + comp.recall) > 0
                ? 2 * comp.precision * comp.recall /
                      (comp.precision + comp.recall)
                : (pred_total == 0 && gt_total == 0 ? 1.0 : 0.0);
  const auto seg = confusion.report();

  std::cout << "== Scene completion (" << preds.size() << " frames) ==\n"
            << comp.to_text() << "\n== Semantic segmentation ==\n"
            << seg.to_text();
  if (!json_out.empty()) {
    std::ofstream f(json_out, std::ios::trunc);
    f << "{\n\"completion\": " << comp.to_json() << ",\n\"segmentation\": "
      << seg.to_json() << "\n}\n";
    std::cout << "wrote " << json_out << "\n";
  }
  return kExitOk;
}

int cmd_bench(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& checkpoint, const std::string& data_root,
              int warmup, int repeats, const std::string& json_out) {
  const RunConfig cfg = load_config(config_path, overrides);
  const Dataset ds = open_dataset(data_root);
  if (ds.frames.empty()) throw DataError("bench: dataset is empty");
  std::vector<Frame> frames;
  for (const auto& rec : ds.frames) frames.push_back(load_frame(rec));

  auto model = load_model(cfg, frames.front(), checkpoint);
  const auto report =
      bench(model, frames, warmup, repeats,
            float(cfg.real("data.intensity_max")),
            model.config().use_external_features);
  std::cout << report.to_text();
  if (!json_out.empty()) {
    std::ofstream f(json_out, std::ios::trunc);
    f << report.to_json() << "\n";
    std::cout << "wrote " << json_out << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, int instances) {
  std::cout << "running finite-difference gradient suite (seed " << seed
            << ", " << instances << " instances per op)\n";
  const bool ok = nn::run_gradcheck_suite(seed, instances, std::cout);
  if (!ok) {
    std::cerr << "gradcheck FAILED\n";
    return kExitNumeric;
  }
  std::cout << "gradcheck passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"socc: sparse-convolution 3D semantic occupancy pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "dataset";
  int synth_frames = 10, synth_val_from = -1;
  std::uint64_t synth_seed = 1;
  bool synth_features = false;
  SceneSpec scene;
  synth->add_option("--out", synth_out, "output dataset root");
  synth->add_option("--frames", synth_frames, "number of frames");
  synth->add_option("--seed", synth_seed, "base RNG seed");
  synth->add_option("--val-from", synth_val_from,
                    "first frame index tagged as val (-1 = all train)");
  synth->add_flag("--features", synth_features,
                  "also write .sfmp feature-map stacks");
  synth->add_option("--vehicles", scene.n_vehicles, "vehicle count");
  synth->add_option("--barriers", scene.n_barriers, "barrier count");
  synth->add_option("--poles", scene.n_poles, "pole count");
  synth->add_option("--vegetation", scene.n_vegetation, "vegetation count");
  synth->add_option("--ground-forward", scene.ground_forward,
                    "road patch forward extent (m)");
  synth->add_option("--ground-half-width", scene.ground_half_width,
                    "road patch half width (m)");
  synth->add_option("--place-max-x", scene.place_max_x,
                    "object placement forward limit (m)");
  synth->add_option("--beams", scene.beams, "LiDAR beam count");
  synth->add_option("--az-step", scene.azimuth_step_deg,
                    "LiDAR azimuth step (deg)");
  synth->add_option("--az-min", scene.azimuth_min_deg, "azimuth start (deg)");
  synth->add_option("--az-max", scene.azimuth_max_deg, "azimuth end (deg)");

  // train
  auto* tr = app.add_subcommand("train", "train from a synthetic dataset");
  tr->add_option("--config", config_path, "key=value config file");
  tr->add_option("-D,--define", overrides, "config override key=value");

  // infer
  auto* inf = app.add_subcommand("infer", "predict one frame");
  std::string ckpt, data_root = "dataset", frame_id, infer_out = "pred.sogt";
  inf->add_option("--config", config_path, "key=value config file");
  inf->add_option("-D,--define", overrides, "config override key=value");
  inf->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  inf->add_option("--data", data_root, "dataset root");
  inf->add_option("--frame", frame_id, "frame id")->required();
  inf->add_option("--out", infer_out, "output .sogt path");

  // eval
  auto* ev = app.add_subcommand("eval", "score predictions against GT");
  std::string pred_dir, gt_dir, eval_json;
  int eval_classes = kNumClasses;
  ev->add_option("--pred", pred_dir, "directory of predicted .sogt")->required();
  ev->add_option("--gt", gt_dir, "directory of ground-truth .sogt")->required();
  ev->add_option("--json", eval_json, "also write a JSON report");
  ev->add_option("--classes", eval_classes, "number of classes");

  // bench
  auto* bn = app.add_subcommand("bench", "inference latency benchmark");
  int bench_warmup = 1, bench_repeats = 5;
  std::string bench_json;
  bn->add_option("--config", config_path, "key=value config file");
  bn->add_option("-D,--define", overrides, "config override key=value");
  bn->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  bn->add_option("--data", data_root, "dataset root");
  bn->add_option("--warmup", bench_warmup, "untimed passes per frame");
  bn->add_option("--repeats", bench_repeats, "timed passes per frame");
  bn->add_option("--json", bench_json, "also write a JSON report");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t gc_seed = 20260101;
  int gc_instances = 20;
  gc->add_option("--seed", gc_seed, "RNG seed");
  gc->add_option("--instances", gc_instances, "instances per op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_frames, synth_seed, synth_val_from,
                       synth_features, scene);
    if (tr->parsed()) return cmd_train(config_path, overrides);
    if (inf->parsed())
      return cmd_infer(config_path, overrides, ckpt, data_root, frame_id,
                       infer_out);
    if (ev->parsed()) return cmd_eval(pred_dir, gt_dir, eval_json, eval_classes);
    if (bn->parsed())
      return cmd_bench(config_path, overrides, ckpt, data_root, bench_warmup,
                       bench_repeats, bench_json);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_instances);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
