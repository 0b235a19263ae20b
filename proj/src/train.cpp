// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#include "socc/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "socc/checkpoint.hpp"
#include "socc/optim.hpp"

namespace socc {

namespace fs = std::filesystem;
using nn::Traced;

nn::ClassStats class_frequency_stats(
    const std::vector<const OccupancyGrid*>& gts, int num_classes) {
  if (gts.empty()) throw DataError("class_frequency_stats: empty dataset");
  std::vector<std::int64_t> counts(std::size_t(num_classes), 0);
  for (const auto* gt : gts)
    for (const auto l : gt->labels)
      if (l != kIgnoreLabel) {
        if (l >= num_classes)
          throw DataError("class_frequency_stats: label outside class range");
        ++counts[l];
      }
  return nn::ClassStats::from_counts(counts);
}

int fused_channels(const Frame& frame, bool use_external_features) {
  int c = 4;  // RGB + intensity
  if (use_external_features && frame.features)
    for (const auto& fm : *frame.features) c += fm.channels;
  return c;
}

namespace {

struct Batch {
  Traced<float> input;
  std::vector<OccupancyGrid> gts;  // augmented copies, one per batch item
  std::vector<const OccupancyGrid*> gt_ptrs;
};

Batch assemble_batch(const std::vector<Frame>& frames,
                     const std::vector<std::size_t>& order, std::size_t begin,
                     std::size_t end, const nn::ModelConfig& mcfg,
                     const GridSpec& grid, const AugmentConfig& aug,
                     double intensity_max, const Rng& base_rng, int epoch) {
  Batch batch;
  std::vector<Coordinate> coords;
  std::vector<MatX<float>> feat_blocks;
  Eigen::Index total_rows = 0;

  for (std::size_t s = begin; s < end; ++s) {
    const std::size_t fi = order[s];
    const Frame& frame = frames[fi];
    const FeatureMapStack* maps =
        (mcfg.use_external_features && frame.features) ? &*frame.features
                                                       : nullptr;
    auto points = fuse(frame.scan, frame.image, maps, frame.calib,
                       float(intensity_max));
    OccupancyGrid gt = frame.gt;
    Rng frame_rng = base_rng.fork((std::uint64_t(epoch) << 24) ^ fi);
    augment(points, gt, grid, aug, frame_rng, mcfg.num_classes);

    auto t = voxelize(points, grid, std::int32_t(s - begin));
    for (const auto& c : t.coords()) coords.push_back(c);
    feat_blocks.push_back(std::move(t.feats));
    total_rows += feat_blocks.back().rows();
    batch.gts.push_back(std::move(gt));
  }

  MatX<float> feats(total_rows, mcfg.input_channels);
  Eigen::Index at = 0;
  for (const auto& b : feat_blocks) {
    feats.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  batch.input =
      Traced<float>(SparseTensor<float>(CoordSet::make(std::move(coords), 1),
                                        std::move(feats)));
  for (const auto& g : batch.gts) batch.gt_ptrs.push_back(&g);
  return batch;
}

struct EvalScores {
  double iou = 0, miou = 0;
};

EvalScores evaluate(nn::Model<float>& model, const std::vector<Frame>& frames,
                    const std::vector<std::size_t>& indices,
                    double intensity_max) {
  CompletionReport completion_total;
  std::int64_t inter = 0, uni = 0;
  ConfusionAccumulator confusion(model.config().num_classes);
  for (const std::size_t fi : indices) {
    const Frame& frame = frames[fi];
    const auto res = run_inference(model, frame, float(intensity_max),
                                   model.config().use_external_features);
    const auto pred_occ =
        occupied_voxels(res.prediction, model.config().num_classes);
    const auto gt_occ = occupied_voxels(frame.gt, model.config().num_classes);
    const auto rep = completion_metrics(pred_occ, gt_occ);
    inter += rep.overlap;
    uni += rep.pred_voxels + rep.gt_voxels - rep.overlap;
    confusion.add(res.prediction, frame.gt);
  }
  EvalScores s;
  s.iou = uni > 0 ? double(inter) / double(uni) : 1.0;
  s.miou = confusion.report().miou;
  return s;
}

void append_log(std::ofstream& f, const EpochLog& l) {
  nlohmann::json j{{"epoch", l.epoch},
                   {"loss_total", l.loss_total},
                   {"loss_completion", l.loss_completion},
                   {"loss_segmentation", l.loss_segmentation},
                   {"lr", l.lr},
                   {"val_iou", l.val_iou},
                   {"val_miou", l.val_miou}};
  f << j.dump() << "\n";
  f.flush();
}

}  // namespace

TrainResult train(const Dataset& dataset, const nn::ModelConfig& model_cfg,
                  const GridSpec& grid, const TrainConfig& cfg,
                  const AugmentConfig& aug) {
  cfg.validate();
  nn::ModelConfig mcfg = model_cfg;
  mcfg.check_numerics = true;

  // Load everything up front; training never touches the disk again.
  std::vector<Frame> frames;
  std::vector<std::size_t> train_idx, val_idx;
  for (const auto& rec : dataset.frames) {
    frames.push_back(load_frame(rec));
    (rec.split == "val" ? val_idx : train_idx).push_back(frames.size() - 1);
  }
  if (train_idx.empty()) throw DataError("train: dataset has no training frames");
  if (val_idx.empty()) val_idx = train_idx;  // overfit-style monitoring

  mcfg.input_channels =
      fused_channels(frames[train_idx.front()], mcfg.use_external_features);
  mcfg.validate();

  std::vector<const OccupancyGrid*> train_gts;
  for (auto i : train_idx) train_gts.push_back(&frames[i].gt);
  const auto stats = class_frequency_stats(train_gts, mcfg.num_classes);
  const auto weights =
      nn::class_weights<float>(stats, mcfg.beta, mcfg.use_cb_loss);

  nn::Model<float> model(mcfg, grid, cfg.seed);
  nn::Adam<float> adam;
  adam.lr = float(cfg.lr);

  const std::size_t batches_per_epoch =
      (train_idx.size() + std::size_t(cfg.batch_size) - 1) /
      std::size_t(cfg.batch_size);
  const std::int64_t total_steps =
      std::int64_t(cfg.epochs) * std::int64_t(batches_per_epoch);

  fs::create_directories(cfg.out_dir);
  TrainResult result;
  result.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.socc").string();
  result.metrics_path = (fs::path(cfg.out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(result.metrics_path, std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + result.metrics_path);

  Rng rng(cfg.seed);
  std::int64_t step = 0;
  double best_iou = -1.0, best_miou = 0.0;
  int evals_since_best = 0;
  EvalScores last_eval;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    {
      Rng shuffle_rng = rng.fork(0x5u + std::uint64_t(epoch));
      std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    }

    double sum_total = 0, sum_comp = 0, sum_seg = 0, lr_now = 0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + std::size_t(cfg.batch_size));
      Batch batch = assemble_batch(frames, order, b, e, mcfg, grid, aug,
                                   cfg.intensity_max, rng, epoch);
      auto pyramid = nn::build_gt_pyramid(batch.gt_ptrs, model.level_strides(),
                                          mcfg.num_classes);

      nn::Tape<float> tape;
      auto out = model.forward(&tape, batch.input, &pyramid, /*training=*/true);
      auto lc = nn::completion_loss(&tape, out.completion.levels, pyramid);
      auto ls = nn::segmentation_loss(&tape, out.seg_logits, batch.gt_ptrs,
                                      weights, mcfg.num_classes,
                                      mcfg.exclude_free_targets);
      auto lt = nn::total_loss(&tape, lc, ls, mcfg.lambda);
      if (!std::isfinite(double(lt.m(0, 0))))
        throw NumericalError("train: non-finite total loss at epoch " +
                             std::to_string(epoch));

      lr_now = nn::cosine_anneal(cfg.lr, step, total_steps);
      if (lt.id >= 0) {  // an all-empty batch has nothing to learn from
        adam.zero_grad(model.params());
        tape.backward(lt.id);
        adam.lr = float(lr_now);
        adam.step(model.params());
      }
      ++step;

      sum_total += double(lt.m(0, 0));
      sum_comp += double(lc.m(0, 0));
      sum_seg += double(ls.m(0, 0));
    }

    EpochLog log;
    log.epoch = epoch;
    log.loss_total = sum_total / double(batches_per_epoch);
    log.loss_completion = sum_comp / double(batches_per_epoch);
    log.loss_segmentation = sum_seg / double(batches_per_epoch);
    log.lr = lr_now;

    const bool eval_now =
        ((epoch + 1) % cfg.eval_every == 0) || epoch + 1 == cfg.epochs;
    if (eval_now)
      last_eval = evaluate(model, frames, val_idx, cfg.intensity_max);
    log.val_iou = last_eval.iou;
    log.val_miou = last_eval.miou;
    append_log(metrics, log);
    result.logs.push_back(log);
    result.epochs_run = epoch + 1;

    if (eval_now) {
      if (last_eval.iou > best_iou) {
        best_iou = last_eval.iou;
        best_miou = last_eval.miou;
        evals_since_best = 0;
        nn::save_checkpoint(result.checkpoint_path, model.params());
      } else if (++evals_since_best >= cfg.patience) {
        std::cerr << "[socc] early stop at epoch " << epoch
                  << " (no val IoU improvement in " << cfg.patience
                  << " evaluations)\n";
        break;
      }
    }
  }

  result.best_val_iou = best_iou;
  result.best_val_miou = best_miou;
  return result;
}

}  // namespace socc
