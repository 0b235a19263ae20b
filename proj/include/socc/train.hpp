// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "socc/dataio.hpp"
#include "socc/eval.hpp"
#include "socc/fusion.hpp"
#include "socc/network.hpp"

namespace socc {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 10;
  int epochs = 50;
  std::uint64_t seed = 1;
  int patience = 10;    // early-stop patience, counted in evaluations
  int eval_every = 1;   // epochs between held-out evaluations
  double intensity_max = 1.0;
  std::string out_dir = "out";

  void validate() const {
    if (lr <= 0) throw ConfigError("train.lr must be > 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (patience < 1) throw ConfigError("train.patience must be >= 1");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
    if (intensity_max <= 0) throw ConfigError("data.intensity_max must be > 0");
  }
};

struct EpochLog {
  int epoch = 0;
  double loss_total = 0, loss_completion = 0, loss_segmentation = 0;
  double lr = 0;
  double val_iou = 0, val_miou = 0;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  std::string checkpoint_path;
  std::string metrics_path;
  double best_val_iou = 0;
  double best_val_miou = 0;
  int epochs_run = 0;
};

// Deterministic training driver: loads the dataset into memory, computes
// class statistics, and optimizes with Adam under a cosine-annealed learning
// rate. Writes metrics.jsonl (one JSON object per epoch) and the best
// checkpoint under cfg.out_dir.
TrainResult train(const Dataset& dataset, const nn::ModelConfig& model_cfg,
                  const GridSpec& grid, const TrainConfig& cfg,
                  const AugmentConfig& aug);

// Class-frequency statistics over the training split: counts every
// non-ignore voxel per class (the free class included).
nn::ClassStats class_frequency_stats(const std::vector<const OccupancyGrid*>& gts,
                                     int num_classes);

// Fused input width for a frame under the given config (RGB + optional
// feature-map channels + intensity).
int fused_channels(const Frame& frame, bool use_external_features);

}  // namespace socc
