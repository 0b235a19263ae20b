// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "socc/dataio.hpp"
#include "socc/network.hpp"
#include "socc/types.hpp"

namespace socc {

// ---------------------------------------------------------------------------
// Scene-completion metrics over voxel sets
// ---------------------------------------------------------------------------

struct CompletionReport {
  double iou = 0, precision = 0, recall = 0, f1 = 0;
  std::int64_t pred_voxels = 0, gt_voxels = 0, overlap = 0;

  std::string to_text() const;
  std::string to_json() const;
};

// Set-based formulas: IoU = |P n GT| / |P u GT|, precision = |P n GT| / |P|,
// recall = |P n GT| / |GT|, F1 = 2PR/(P+R). Empty/empty counts as a perfect
// vacuous match (all four = 1); an empty side against a nonempty one scores 0.
CompletionReport completion_metrics(const std::vector<Vec3i>& pred_occ,
                                    const std::vector<Vec3i>& gt_occ);

// Occupied voxels of a dense grid (label != free and != ignore).
std::vector<Vec3i> occupied_voxels(const OccupancyGrid& grid,
                                   int num_classes = kNumClasses);

// ---------------------------------------------------------------------------
// Semantic segmentation metrics
// ---------------------------------------------------------------------------

struct SegmentationReport {
  int num_classes = 0;
  std::vector<double> class_iou;
  std::vector<bool> class_valid;  // false when absent from both pred and GT
  double miou = 0;
  std::vector<std::int64_t> confusion;  // row-major [gt][pred]
  std::int64_t evaluated_voxels = 0;

  std::int64_t confusion_at(int gt, int pred) const {
    return confusion[std::size_t(gt) * num_classes + pred];
  }
  std::string to_text() const;
  std::string to_json() const;
};

// Accumulates a confusion matrix over frames; mIoU is computed from the
// aggregate, the standard per-dataset convention.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int num_classes = kNumClasses,
                                std::set<std::uint8_t> exclude = {});

  // Voxels whose GT label is excluded (or 255/ignore) are skipped entirely.
  void add(const OccupancyGrid& pred, const OccupancyGrid& gt);
  SegmentationReport report() const;

 private:
  int num_classes_;
  std::set<std::uint8_t> exclude_;
  std::vector<std::int64_t> confusion_;
};

// Single-pair convenience wrapper; exclude defaults to {free}.
SegmentationReport semantic_miou(const OccupancyGrid& pred,
                                 const OccupancyGrid& gt,
                                 std::set<std::uint8_t> exclude = {},
                                 int num_classes = kNumClasses);

// ---------------------------------------------------------------------------
// Inference benchmark (Table IV style): single-stream latencies with a
// per-stage breakdown, excluding data loading.
// ---------------------------------------------------------------------------

struct StageStats {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
};

struct BenchReport {
  int frames = 0, repeats = 0;
  StageStats total, fusion, completion, segmentation, densify;
  double fps = 0;  // 1000 / total.mean_ms
  std::int64_t peak_rss_kb = 0;
  double mean_input_voxels = 0, mean_output_voxels = 0;

  std::string to_text() const;
  std::string to_json() const;
};

// Runs `repeats` timed inference passes per frame after `warmup` untimed
// ones. repeats = 0 yields an empty report without error.
BenchReport bench(nn::Model<float>& model, const std::vector<Frame>& frames,
                  int warmup, int repeats, float intensity_max = 1.0f,
                  bool use_external_features = false);

// One stage-timed inference pass (also used by `socc infer`).
struct InferenceResult {
  OccupancyGrid prediction;
  double fusion_ms = 0, completion_ms = 0, segmentation_ms = 0,
         densify_ms = 0, total_ms = 0;
  std::int64_t input_voxels = 0, output_voxels = 0;
};

InferenceResult run_inference(nn::Model<float>& model, const Frame& frame,
                              float intensity_max = 1.0f,
                              bool use_external_features = false);

std::int64_t peak_rss_kb();

}  // namespace socc
