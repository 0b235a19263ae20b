// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#include "socc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "socc/sparse_tensor.hpp"

namespace socc {

namespace {

// Exact for nonnegative grid indices below 2^21 per axis.
std::uint64_t pack_voxel(const Vec3i& v) {
  const std::uint64_t mask = (1ull << 21) - 1;
  return ((std::uint64_t(std::uint32_t(v.x())) & mask) << 42) |
         ((std::uint64_t(std::uint32_t(v.y())) & mask) << 21) |
         (std::uint64_t(std::uint32_t(v.z())) & mask);
}

}  // namespace

// ---------------------------------------------------------------------------
// Completion metrics
// ---------------------------------------------------------------------------

CompletionReport completion_metrics(const std::vector<Vec3i>& pred_occ,
                                    const std::vector<Vec3i>& gt_occ) {
  std::unordered_set<std::uint64_t> pred, gt;
  pred.reserve(pred_occ.size() * 2);
  gt.reserve(gt_occ.size() * 2);
  for (const auto& v : pred_occ) pred.insert(pack_voxel(v));
  for (const auto& v : gt_occ) gt.insert(pack_voxel(v));

  std::int64_t overlap = 0;
  for (const auto& k : pred) overlap += gt.count(k);

  CompletionReport r;
  r.pred_voxels = std::int64_t(pred.size());
  r.gt_voxels = std::int64_t(gt.size());
  r.overlap = overlap;
  if (r.pred_voxels == 0 && r.gt_voxels == 0) {
    r.iou = r.precision = r.recall = r.f1 = 1.0;  // vacuous perfect match
    return r;
  }
  const double uni = double(r.pred_voxels + r.gt_voxels - overlap);
  r.iou = uni > 0 ? double(overlap) / uni : 0.0;
  r.precision = r.pred_voxels > 0 ? double(overlap) / double(r.pred_voxels) : 0.0;
  r.recall = r.gt_voxels > 0 ? double(overlap) / double(r.gt_voxels) : 0.0;
  r.f1 = (r.precision + r.recall) > 0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

std::vector<Vec3i> occupied_voxels(const OccupancyGrid& grid, int num_classes) {
  std::vector<Vec3i> out;
  const auto fl = free_label(num_classes);
  for (int i = 0; i < grid.dims.x(); ++i)
    for (int j = 0; j < grid.dims.y(); ++j)
      for (int k = 0; k < grid.dims.z(); ++k) {
        const auto l = grid.at(i, j, k);
        if (l != fl && l != kIgnoreLabel) out.emplace_back(i, j, k);
      }
  return out;
}

std::string CompletionReport::to_text() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "Metric     Value\n"
     << "IoU        " << iou << "\n"
     << "Precision  " << precision << "\n"
     << "Recall     " << recall << "\n"
     << "F1 Score   " << f1 << "\n";
  return os.str();
}

std::string CompletionReport::to_json() const {
  nlohmann::json j{{"iou", iou},
                   {"precision", precision},
                   {"recall", recall},
                   {"f1", f1},
                   {"pred_voxels", pred_voxels},
                   {"gt_voxels", gt_voxels},
                   {"overlap", overlap}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Segmentation metrics
// ---------------------------------------------------------------------------

ConfusionAccumulator::ConfusionAccumulator(int num_classes,
                                           std::set<std::uint8_t> exclude)
    : num_classes_(num_classes), exclude_(std::move(exclude)) {
  if (exclude_.empty()) exclude_.insert(free_label(num_classes_));
  confusion_.assign(std::size_t(num_classes_) * num_classes_, 0);
}

void ConfusionAccumulator::add(const OccupancyGrid& pred,
                               const OccupancyGrid& gt) {
  if (pred.dims != gt.dims)
    throw ShapeError("semantic_miou: prediction and GT dims differ");
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const auto g = gt.labels[i];
    if (g == kIgnoreLabel || exclude_.count(g)) continue;
    const auto p = pred.labels[i];
    if (g >= num_classes_ || p >= num_classes_)
      throw DataError("semantic_miou: label outside class range");
    ++confusion_[std::size_t(g) * num_classes_ + p];
  }
}

SegmentationReport ConfusionAccumulator::report() const {
  SegmentationReport r;
  r.num_classes = num_classes_;
  r.confusion = confusion_;
  r.class_iou.assign(std::size_t(num_classes_), 0.0);
  r.class_valid.assign(std::size_t(num_classes_), false);
  for (const auto& c : confusion_) r.evaluated_voxels += c;

  double sum = 0;
  int valid = 0;
  for (int c = 0; c < num_classes_; ++c) {
    if (exclude_.count(std::uint8_t(c))) continue;
    std::int64_t tp = confusion_[std::size_t(c) * num_classes_ + c];
    std::int64_t fp = 0, fn = 0;
    for (int o = 0; o < num_classes_; ++o) {
      if (o == c) continue;
      fp += confusion_[std::size_t(o) * num_classes_ + c];
      fn += confusion_[std::size_t(c) * num_classes_ + o];
    }
    const std::int64_t denom = tp + fp + fn;
    if (denom == 0) continue;  // absent from both pred and GT: not averaged
    r.class_valid[std::size_t(c)] = true;
    r.class_iou[std::size_t(c)] = double(tp) / double(denom);
    sum += r.class_iou[std::size_t(c)];
    ++valid;
  }
  r.miou = valid > 0 ? sum / valid : 1.0;
  return r;
}

SegmentationReport semantic_miou(const OccupancyGrid& pred,
                                 const OccupancyGrid& gt,
                                 std::set<std::uint8_t> exclude,
                                 int num_classes) {
  ConfusionAccumulator acc(num_classes, std::move(exclude));
  acc.add(pred, gt);
  return acc.report();
}

std::string SegmentationReport::to_text() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "Class                 IoU\n";
  for (int c = 0; c < num_classes; ++c) {
    if (!class_valid[std::size_t(c)]) continue;
    std::string name = c < kNumClasses ? class_names()[std::size_t(c)]
                                       : ("class_" + std::to_string(c));
    name.resize(20, ' ');
    os << name << "  " << class_iou[std::size_t(c)] << "\n";
  }
  os << "mIoU                  " << miou << "\n";
  return os.str();
}

std::string SegmentationReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::object();
  for (int c = 0; c < num_classes; ++c) {
    if (!class_valid[std::size_t(c)]) continue;
    const std::string name = c < kNumClasses
                                 ? class_names()[std::size_t(c)]
                                 : ("class_" + std::to_string(c));
    per_class[name] = class_iou[std::size_t(c)];
  }
  nlohmann::json j{{"miou", miou},
                   {"class_iou", per_class},
                   {"evaluated_voxels", evaluated_voxels}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

std::int64_t peak_rss_kb() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ss(line.substr(6));
      std::int64_t kb = 0;
      ss >> kb;
      return kb;
    }
  }
  return 0;
}

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

StageStats stats_of(std::vector<double> samples) {
  StageStats s;
  if (samples.empty()) return s;
  double sum = 0;
  for (double v : samples) sum += v;
  s.mean_ms = sum / double(samples.size());
  std::sort(samples.begin(), samples.end());
  auto quantile = [&](double q) {
    const double idx = q * double(samples.size() - 1);
    const std::size_t lo = std::size_t(idx);
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    const double w = idx - double(lo);
    return samples[lo] * (1 - w) + samples[hi] * w;
  };
  s.p50_ms = quantile(0.5);
  s.p95_ms = quantile(0.95);
  return s;
}

}  // namespace

InferenceResult run_inference(nn::Model<float>& model, const Frame& frame,
                              float intensity_max,
                              bool use_external_features) {
  InferenceResult res;
  const double t0 = now_ms();

  const FeatureMapStack* maps =
      (use_external_features && frame.features) ? &*frame.features : nullptr;
  auto points = fuse(frame.scan, frame.image, maps, frame.calib, intensity_max);
  auto input = voxelize(points, model.grid(), /*batch=*/0);
  res.input_voxels = input.n();
  const double t1 = now_ms();

  nn::Traced<float> in(std::move(input));
  auto completion = model.completion_net().forward(nullptr, in, nullptr,
                                                   /*training=*/false,
                                                   model.grid());
  const double t2 = now_ms();

  auto seg = model.seg_net().forward(nullptr, completion.final_tensor,
                                     /*training=*/false);
  res.output_voxels = seg.t.n();
  const double t3 = now_ms();

  res.prediction = to_dense(seg.t, model.grid(), /*argmax_channel=*/true,
                            model.config().num_classes);
  const double t4 = now_ms();

  res.fusion_ms = t1 - t0;
  res.completion_ms = t2 - t1;
  res.segmentation_ms = t3 - t2;
  res.densify_ms = t4 - t3;
  res.total_ms = t4 - t0;
  return res;
}

BenchReport bench(nn::Model<float>& model, const std::vector<Frame>& frames,
                  int warmup, int repeats, float intensity_max,
                  bool use_external_features) {
  BenchReport r;
  r.frames = int(frames.size());
  r.repeats = repeats;
  if (repeats <= 0 || frames.empty()) return r;

  std::vector<double> total, fus, comp, seg, dens;
  double in_vox = 0, out_vox = 0;
  for (const auto& frame : frames)
    for (int i = 0; i < warmup; ++i)
      (void)run_inference(model, frame, intensity_max, use_external_features);
  for (const auto& frame : frames) {
    for (int i = 0; i < repeats; ++i) {
      const auto res =
          run_inference(model, frame, intensity_max, use_external_features);
      total.push_back(res.total_ms);
      fus.push_back(res.fusion_ms);
      comp.push_back(res.completion_ms);
      seg.push_back(res.segmentation_ms);
      dens.push_back(res.densify_ms);
      in_vox += double(res.input_voxels);
      out_vox += double(res.output_voxels);
    }
  }
  r.total = stats_of(total);
  r.fusion = stats_of(fus);
  r.completion = stats_of(comp);
  r.segmentation = stats_of(seg);
  r.densify = stats_of(dens);
  r.fps = r.total.mean_ms > 0 ? 1000.0 / r.total.mean_ms : 0.0;
  r.peak_rss_kb = peak_rss_kb();
  r.mean_input_voxels = in_vox / double(total.size());
  r.mean_output_voxels = out_vox / double(total.size());
  return r;
}

std::string BenchReport::to_text() const {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed;
  os << "Stage          Mean(ms)    p50(ms)    p95(ms)\n";
  auto row = [&](const char* name, const StageStats& s) {
    std::string n = name;
    n.resize(12, ' ');
    os << n << "  " << std::setw(9) << s.mean_ms << "  " << std::setw(9)
       << s.p50_ms << "  " << std::setw(9) << s.p95_ms << "\n";
  };
  row("fusion", fusion);
  row("completion", completion);
  row("segmentation", segmentation);
  row("densify", densify);
  row("total", total);
  os << "Achieved FPS: " << fps << "  (real-time targets: 20 FPS, goal 30 FPS)\n";
  os << "Peak RSS: " << peak_rss_kb / 1024.0 << " MB (estimate)\n";
  os << "Mean occupied voxels: input " << mean_input_voxels << ", output "
     << mean_output_voxels << "\n";
  return os.str();
}

std::string BenchReport::to_json() const {
  auto stage = [](const StageStats& s) {
    return nlohmann::json{
        {"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms}};
  };
  nlohmann::json j{{"frames", frames},
                   {"repeats", repeats},
                   {"total", stage(total)},
                   {"fusion", stage(fusion)},
                   {"completion", stage(completion)},
                   {"segmentation", stage(segmentation)},
                   {"densify", stage(densify)},
                   {"fps", fps},
                   {"fps_target", 20.0},
                   {"fps_goal", 30.0},
                   {"peak_rss_kb", peak_rss_kb},
                   {"mean_input_voxels", mean_input_voxels},
                   {"mean_output_voxels", mean_output_voxels}};
  return j.dump(2);
}

}  // namespace socc
