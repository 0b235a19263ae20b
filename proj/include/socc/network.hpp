// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "socc/ops.hpp"
#include "socc/optim.hpp"

namespace socc::nn {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
  int input_channels = 4;                       // RGB + intensity
  std::vector<int> enc_widths{32, 64, 128, 256};  // one per scale
  std::vector<int> seg_widths{64, 128};           // seg encoder scales
  int seg_bottleneck = 256;
  int num_classes = 18;
  int se_reduction = 4;
  int kernel_size = 3;
  double lambda = 0.5;  // completion/segmentation balance
  double beta = 0.9;    // class-balanced loss effective number
  bool use_se = true;
  bool use_cb_loss = true;
  bool use_external_features = false;
  bool learnable_prune_bias = false;
  bool exclude_free_targets = false;
  bool check_numerics = false;

  int depth() const { return int(enc_widths.size()); }

  void validate() const {
    if (depth() < 2) throw ConfigError("ModelConfig: depth must be >= 2");
    for (int w : enc_widths)
      if (w <= 0) throw ConfigError("ModelConfig: encoder widths must be > 0");
    for (int w : seg_widths)
      if (w <= 0) throw ConfigError("ModelConfig: seg widths must be > 0");
    if (seg_bottleneck <= 0)
      throw ConfigError("ModelConfig: seg bottleneck must be > 0");
    if (seg_widths.empty())
      throw ConfigError("ModelConfig: seg_widths must not be empty");
    if (num_classes < 2) throw ConfigError("ModelConfig: num_classes < 2");
    if (!(lambda > 0.0 && lambda < 1.0))
      throw ConfigError("ModelConfig: lambda must be in (0,1)");
    if (!(beta > 0.0 && beta < 1.0))
      throw ConfigError("ModelConfig: beta must be in (0,1)");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw ConfigError("ModelConfig: kernel_size must be odd");
    if (input_channels <= 0)
      throw ConfigError("ModelConfig: input_channels must be > 0");
    if (se_reduction < 1) throw ConfigError("ModelConfig: se_reduction < 1");
  }
};

// ---------------------------------------------------------------------------
// Class-frequency statistics for the class-balanced loss
// ---------------------------------------------------------------------------

inline constexpr double kClassFrequencyFloor = 1e-6;

struct ClassStats {
  // Normalized voxel frequency per class over the training set; absent
  // classes hold the floor so weights stay finite.
  std::vector<double> freq;

  static ClassStats from_counts(const std::vector<std::int64_t>& counts) {
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw DataError("ClassStats: no labeled voxels in dataset");
    ClassStats s;
    s.freq.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
      s.freq[i] = counts[i] > 0 ? double(counts[i]) / double(total)
                                : kClassFrequencyFloor;
    return s;
  }
};

// Per-class weight (1 - beta) / (1 - beta^{n_y}) of the class-balanced loss.
inline double class_balanced_weight(double n_y, double beta) {
  return (1.0 - beta) / (1.0 - std::pow(beta, n_y));
}

template <class S>
VecX<S> class_weights(const ClassStats& stats, double beta, bool balanced) {
  VecX<S> w(Eigen::Index(stats.freq.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w[i] = balanced ? S(class_balanced_weight(stats.freq[std::size_t(i)], beta))
                    : S(1);
  return w;
}

// Eq. 2: total = completion + lambda * segmentation.
template <class S>
TracedMat<S> total_loss(Tape<S>* tape, const TracedMat<S>& completion,
                        const TracedMat<S>& segmentation, double lambda) {
  return add_scaled(tape, completion, segmentation, S(lambda));
}

// ---------------------------------------------------------------------------
// Binary occupancy pyramid of a ground-truth grid (max-pool downsampling)
// ---------------------------------------------------------------------------

struct BinaryGrid {
  Vec3i dims{0, 0, 0};
  int stride = 1;
  std::vector<std::uint8_t> occ;

  std::size_t index(int i, int j, int k) const {
    return (std::size_t(i) * dims.y() + j) * dims.z() + k;
  }
  // Queries with stride-1 voxel coordinates.
  bool occupied(int i, int j, int k) const {
    const int ci = i / stride, cj = j / stride, ck = k / stride;
    if (ci < 0 || ci >= dims.x() || cj < 0 || cj >= dims.y() || ck < 0 ||
        ck >= dims.z())
      return false;
    return occ[index(ci, cj, ck)] != 0;
  }
};

inline bool is_occupied_label(std::uint8_t l, int num_classes) {
  return l != free_label(num_classes) && l != kIgnoreLabel;
}

// Parent voxel occupied iff any child occupied.
inline BinaryGrid downsample_gt(const OccupancyGrid& gt, int factor,
                                int num_classes = kNumClasses) {
  if (factor < 1) throw ConfigError("downsample_gt: factor must be >= 1");
  BinaryGrid g;
  g.stride = factor;
  g.dims = Vec3i((gt.dims.x() + factor - 1) / factor,
                 (gt.dims.y() + factor - 1) / factor,
                 (gt.dims.z() + factor - 1) / factor);
  g.occ.assign(std::size_t(g.dims.x()) * g.dims.y() * g.dims.z(), 0);
  for (int i = 0; i < gt.dims.x(); ++i)
    for (int j = 0; j < gt.dims.y(); ++j)
      for (int k = 0; k < gt.dims.z(); ++k)
        if (is_occupied_label(gt.at(i, j, k), num_classes))
          g.occ[g.index(i / factor, j / factor, k / factor)] = 1;
  return g;
}

// Occupancy pyramids for one batch of ground-truth grids, one per level
// stride. pyramid[b][l] answers queries for batch item b at level l.
using GtPyramid = std::vector<std::vector<BinaryGrid>>;

inline GtPyramid build_gt_pyramid(const std::vector<const OccupancyGrid*>& gts,
                                  const std::vector<int>& strides,
                                  int num_classes) {
  GtPyramid pyr(gts.size());
  for (std::size_t b = 0; b < gts.size(); ++b)
    for (int s : strides)
      pyr[b].push_back(downsample_gt(*gts[b], s, num_classes));
  return pyr;
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

// Encoder unit of the paper's architecture: (conv -> BN -> ReLU) x2 followed
// by an optional squeeze-and-excite gate.
template <class S>
struct DoubleConvBlock {
  Conv<S> conv1, conv2;
  BatchNorm<S> bn1, bn2;
  std::optional<SqueezeExcite<S>> se;

  DoubleConvBlock() = default;
  DoubleConvBlock(const std::string& name, const Vec3i& k, Eigen::Index in,
                  Eigen::Index out, bool with_se, int se_r, Rng& rng)
      : conv1(name + ".conv1", k, in, out, rng),
        conv2(name + ".conv2", k, out, out, rng),
        bn1(name + ".bn1", out),
        bn2(name + ".bn2", out) {
    if (with_se) se.emplace(name + ".se", out, se_r, rng);
  }

  Traced<S> forward(Tape<S>* tape, const Traced<S>& x, bool training) {
    // Both convs run on the same coordinate set; build the map once.
    auto km = build_kernel_map(*x.t.cs, *x.t.cs, conv1.ksize);
    auto h = relu(tape, batch_norm(tape, sparse_conv(tape, x, conv1, x.t.cs, km),
                                   bn1, training));
    h = relu(tape, batch_norm(tape, sparse_conv(tape, h, conv2, h.t.cs, km),
                              bn2, training));
    if (se) h = squeeze_excite(tape, h, *se);
    return h;
  }

  void collect(ParamRefs<S>& out) {
    conv1.collect(out);
    conv2.collect(out);
    bn1.collect(out);
    bn2.collect(out);
    if (se) se->collect(out);
  }
};

// ---------------------------------------------------------------------------
// Scene-completion U-Net with generative decoder and pruning
// ---------------------------------------------------------------------------

template <class S>
struct LevelOutput {
  Traced<S> logits;  // n x 1 occupancy logits on the level's coordinates
  CoordSet::Ptr cs;
  int stride = 1;
};

template <class S>
struct CompletionOutput {
  Traced<S> final_tensor;               // stride-1, pruned
  std::vector<LevelOutput<S>> levels;   // coarse -> fine, strides halving to 1
};

template <class S>
class CompletionNet {
 public:
  CompletionNet() = default;
  CompletionNet(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const Vec3i k = Vec3i::Constant(cfg.kernel_size);
    const int d = cfg.depth();
    Eigen::Index in = cfg.input_channels;
    for (int i = 0; i < d; ++i) {
      enc_.emplace_back("completion.enc" + std::to_string(i), k, in,
                        cfg.enc_widths[std::size_t(i)], cfg.use_se,
                        cfg.se_reduction, rng);
      in = cfg.enc_widths[std::size_t(i)];
      if (i + 1 < d)
        down_.emplace_back("completion.down" + std::to_string(i), k, in,
                           cfg.enc_widths[std::size_t(i) + 1], rng);
      if (i + 1 < d) in = cfg.enc_widths[std::size_t(i) + 1];
    }
    // Decoder from stride 2^(d-1) back to 1. Input width of the first level
    // is the bottleneck width; afterwards it is the concat width of the
    // previous level.
    Eigen::Index dec_in = cfg.enc_widths[std::size_t(d) - 1];
    for (int i = d - 2; i >= 0; --i) {
      const Eigen::Index w = cfg.enc_widths[std::size_t(i)];
      const std::string name = "completion.dec" + std::to_string(i);
      up_.emplace_back(name + ".tconv", Vec3i::Constant(3), dec_in, w, rng);
      up_bn_.emplace_back(name + ".bn", w);
      if (cfg.use_se)
        up_se_.emplace_back(name + ".se", w, cfg.se_reduction, rng);
      occ_.emplace_back(name + ".occ", Vec3i::Ones(), w * 2, 1, rng);
      // Rows whose features die under ReLU would otherwise sit exactly on
      // the sigmoid(0) = 0.5 keep threshold; start mildly keep-biased.
      occ_.back().b.value.setConstant(S(0.1));
      if (cfg.learnable_prune_bias) {
        Param<S> pb;
        pb.init(name + ".prune_bias", {1}, 1, 1);
        prune_bias_.push_back(std::move(pb));
      }
      dec_in = w * 2;
    }
  }

  Eigen::Index out_channels() const {
    return cfg_.enc_widths.empty() ? 0 : cfg_.enc_widths[0] * 2;
  }

  // gt_pyramid is required in training mode (teacher forcing); levels are
  // indexed coarse to fine as produced here.
  CompletionOutput<S> forward(Tape<S>* tape, const Traced<S>& input,
                              const GtPyramid* gt_pyramid, bool training,
                              const GridSpec& grid) {
    if (training && gt_pyramid == nullptr)
      throw ConfigError("completion_forward: ground truth required in training mode");

    CompletionOutput<S> out;
    const int d = cfg_.depth();
    std::vector<Traced<S>> skips;
    Traced<S> h = input;
    for (int i = 0; i < d; ++i) {
      h = enc_[std::size_t(i)].forward(tape, h, training);
      chk(h, "completion.enc");
      skips.push_back(h);
      if (i + 1 < d) {
        h = sparse_conv_down(tape, h, down_[std::size_t(i)], 2);
        chk(h, "completion.down");
      }
    }

    for (int li = 0; li < d - 1; ++li) {
      const int enc_level = d - 2 - li;
      const int out_stride = 1 << enc_level;
      // Generate candidate coordinates at the finer stride, clipped to the
      // grid so densification cannot escape the scene volume.
      auto expanded =
          generative_expand(*h.t.cs, up_[std::size_t(li)].ksize, 2);
      auto clipped = clip_to_grid(*expanded, grid);
      h = transposed_conv_to(tape, h, up_[std::size_t(li)], clipped);
      chk(h, "completion.tconv");
      h = relu(tape, batch_norm(tape, h, up_bn_[std::size_t(li)], training));
      if (cfg_.use_se)
        h = squeeze_excite(tape, h, up_se_[std::size_t(li)]);
      h = concat_features(tape, h, skips[std::size_t(enc_level)]);
      chk(h, "completion.skip_concat");

      auto logits = sparse_conv(tape, h, occ_[std::size_t(li)]);
      if (cfg_.learnable_prune_bias) {
        logits = add_prune_bias(tape, logits, prune_bias_[std::size_t(li)]);
      }
      chk(logits, "completion.occ_logits");

      LevelOutput<S> lvl;
      lvl.logits = logits;
      lvl.cs = h.t.cs;
      lvl.stride = out_stride;
      out.levels.push_back(lvl);

      // Keep rule: sigmoid(logit) >= 0.5; training unions in GT-occupied
      // voxels at this stride (teacher forcing).
      std::vector<bool> keep(std::size_t(h.t.n()), false);
      for (std::int32_t r = 0; r < h.t.n(); ++r) {
        const bool predicted = logits.t.feats(r, 0) >= S(0);
        bool forced = false;
        if (training) {
          const auto& c = h.t.cs->at(r);
          forced = (*gt_pyramid)[std::size_t(c.b)][std::size_t(li)].occupied(
              c.i, c.j, c.k);
        }
        keep[std::size_t(r)] = predicted || forced;
      }
      h = prune_rows(tape, h, keep);
      chk(h, "completion.prune");
    }
    out.final_tensor = h;
    return out;
  }

  void collect(ParamRefs<S>& out) {
    for (auto& e : enc_) e.collect(out);
    for (auto& c : down_) c.collect(out);
    for (auto& c : up_) c.collect(out);
    for (auto& b : up_bn_) b.collect(out);
    for (auto& s : up_se_) s.collect(out);
    for (auto& c : occ_) c.collect(out);
    for (auto& p : prune_bias_) out.push_back(&p);
  }

  // Strides of the decoder levels, coarse to fine.
  std::vector<int> level_strides() const {
    std::vector<int> s;
    for (int li = 0; li < cfg_.depth() - 1; ++li)
      s.push_back(1 << (cfg_.depth() - 2 - li));
    return s;
  }

 private:
  static CoordSet::Ptr clip_to_grid(const CoordSet& cs, const GridSpec& grid) {
    std::vector<Coordinate> kept;
    kept.reserve(cs.coords().size());
    for (const auto& c : cs.coords())
      if (c.i >= 0 && c.i < grid.dims.x() && c.j >= 0 &&
          c.j < grid.dims.y() && c.k >= 0 && c.k < grid.dims.z())
        kept.push_back(c);
    return CoordSet::make(std::move(kept), cs.stride());
  }

  Traced<S> add_prune_bias(Tape<S>* tape, const Traced<S>& logits,
                           Param<S>& bias) {
    MatX<S> y = logits.t.feats.array() + bias.value(0, 0);
    Traced<S> out(SparseTensor<S>(logits.t.cs, std::move(y)));
    if (tape) {
      out.id = tape->alloc(out.t.n(), 1);
      Param<S>* bp = &bias;
      const int x_id = logits.id, out_id = out.id;
      tape->record("prune_bias", [bp, x_id, out_id](Tape<S>& tp) {
        const MatX<S>& g = tp.grad(out_id);
        bp->grad(0, 0) += g.sum();
        if (x_id >= 0) tp.grad(x_id) += g;
      });
    }
    return out;
  }

  void chk(const Traced<S>& t, const char* name) const {
    if (cfg_.check_numerics && !t.t.feats.allFinite())
      throw NumericalError(std::string("non-finite values produced by ") + name);
  }

  ModelConfig cfg_;
  std::vector<DoubleConvBlock<S>> enc_;
  std::vector<Conv<S>> down_;
  std::vector<Conv<S>> up_;
  std::vector<BatchNorm<S>> up_bn_;
  std::vector<SqueezeExcite<S>> up_se_;
  std::vector<Conv<S>> occ_;
  std::vector<Param<S>> prune_bias_;
};

// ---------------------------------------------------------------------------
// Semantic-segmentation U-Net head: plain double convs, strided downsampling,
// coordinate-targeted transposed upsampling. Never generates or prunes, so
// output coordinates equal input coordinates.
// ---------------------------------------------------------------------------

template <class S>
class SegNet {
 public:
  SegNet() = default;
  SegNet(const ModelConfig& cfg, Eigen::Index in_channels, Rng& rng)
      : cfg_(cfg) {
    const Vec3i k = Vec3i::Constant(cfg.kernel_size);
    Eigen::Index in = in_channels;
    const int d = int(cfg.seg_widths.size());
    for (int i = 0; i < d; ++i) {
      enc_.emplace_back("seg.enc" + std::to_string(i), k, in,
                        cfg.seg_widths[std::size_t(i)], /*se=*/false, 1, rng);
      in = cfg.seg_widths[std::size_t(i)];
      const Eigen::Index next = (i + 1 < d)
                                    ? cfg.seg_widths[std::size_t(i) + 1]
                                    : cfg.seg_bottleneck;
      down_.emplace_back("seg.down" + std::to_string(i), k, in, next, rng);
      in = next;
    }
    bottleneck_ = DoubleConvBlock<S>("seg.bottleneck", k, cfg.seg_bottleneck,
                                     cfg.seg_bottleneck, false, 1, rng);
    Eigen::Index up_in = cfg.seg_bottleneck;
    for (int i = d - 1; i >= 0; --i) {
      const Eigen::Index w = cfg.seg_widths[std::size_t(i)];
      const std::string name = "seg.dec" + std::to_string(i);
      up_.emplace_back(name + ".tconv", k, up_in, w, rng);
      up_bn_.emplace_back(name + ".bn", w);
      fuse_.emplace_back(name + ".fuse", k, w * 2, w, rng);
      fuse_bn_.emplace_back(name + ".fuse_bn", w);
      up_in = w;
    }
    head_ = Conv<S>("seg.head", Vec3i::Ones(), up_in, cfg.num_classes, rng);
  }

  // Returns per-voxel class logits on exactly the input coordinates.
  Traced<S> forward(Tape<S>* tape, const Traced<S>& input, bool training) {
    const int d = int(cfg_.seg_widths.size());
    std::vector<Traced<S>> skips;
    Traced<S> h = input;
    for (int i = 0; i < d; ++i) {
      h = enc_[std::size_t(i)].forward(tape, h, training);
      skips.push_back(h);
      h = sparse_conv_down(tape, h, down_[std::size_t(i)], 2);
    }
    h = bottleneck_.forward(tape, h, training);
    for (int i = 0; i < d; ++i) {
      const auto& skip = skips[std::size_t(d - 1 - i)];
      h = transposed_conv_to(tape, h, up_[std::size_t(i)], skip.t.cs);
      h = relu(tape, batch_norm(tape, h, up_bn_[std::size_t(i)], training));
      h = concat_features(tape, h, skip);
      h = relu(tape, batch_norm(tape,
                                sparse_conv(tape, h, fuse_[std::size_t(i)]),
                                fuse_bn_[std::size_t(i)], training));
      chk(h, "seg.dec");
    }
    auto logits = sparse_conv(tape, h, head_);
    chk(logits, "seg.head");
    return logits;
  }

  void collect(ParamRefs<S>& out) {
    for (auto& e : enc_) e.collect(out);
    for (auto& c : down_) c.collect(out);
    bottleneck_.collect(out);
    for (auto& c : up_) c.collect(out);
    for (auto& b : up_bn_) b.collect(out);
    for (auto& c : fuse_) c.collect(out);
    for (auto& b : fuse_bn_) b.collect(out);
    head_.collect(out);
  }

 private:
  void chk(const Traced<S>& t, const char* name) const {
    if (cfg_.check_numerics && !t.t.feats.allFinite())
      throw NumericalError(std::string("non-finite values produced by ") + name);
  }

  ModelConfig cfg_;
  std::vector<DoubleConvBlock<S>> enc_;
  std::vector<Conv<S>> down_;
  DoubleConvBlock<S> bottleneck_;
  std::vector<Conv<S>> up_;
  std::vector<BatchNorm<S>> up_bn_;
  std::vector<Conv<S>> fuse_;
  std::vector<BatchNorm<S>> fuse_bn_;
  Conv<S> head_;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Sum over decoder levels of mean BCE-with-logits against binary occupancy
// targets on each level's coordinates. Empty levels contribute zero.
template <class S>
TracedMat<S> completion_loss(Tape<S>* tape,
                             const std::vector<LevelOutput<S>>& levels,
                             const GtPyramid& gt_pyramid) {
  TracedMat<S> total = scalar_constant<S>(0);
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const auto& lvl = levels[li];
    if (lvl.cs->size() == 0) continue;
    std::vector<std::uint8_t> target(std::size_t(lvl.cs->size()));
    for (std::int32_t r = 0; r < lvl.cs->size(); ++r) {
      const auto& c = lvl.cs->at(r);
      target[std::size_t(r)] =
          gt_pyramid[std::size_t(c.b)][li].occupied(c.i, c.j, c.k) ? 1 : 0;
    }
    auto lvl_loss =
        bce_with_logits_mean(tape, as_mat(lvl.logits), target);
    total = add_scaled(tape, total, lvl_loss);
  }
  return total;
}

// Class-balanced cross entropy (Eq. 3) over the final coordinates. Labels
// come from the ground-truth grid; ignore-labeled voxels are skipped, and
// free-labeled voxels are skipped when exclude_free is set.
template <class S>
TracedMat<S> segmentation_loss(Tape<S>* tape, const Traced<S>& logits,
                               const std::vector<const OccupancyGrid*>& gts,
                               const VecX<S>& class_weight, int num_classes,
                               bool exclude_free) {
  const std::int32_t n = logits.t.n();
  if (n == 0) return scalar_constant<S>(0);
  std::vector<std::uint8_t> labels(std::size_t(n), 0);
  std::vector<bool> include(std::size_t(n), true);
  for (std::int32_t r = 0; r < n; ++r) {
    const auto& c = logits.t.cs->at(r);
    const std::uint8_t l = gts[std::size_t(c.b)]->at(c.i, c.j, c.k);
    if (l == kIgnoreLabel) {
      include[std::size_t(r)] = false;
      continue;
    }
    if (exclude_free && l == free_label(num_classes)) {
      include[std::size_t(r)] = false;
      continue;
    }
    labels[std::size_t(r)] = l;
  }
  return weighted_cross_entropy(tape, as_mat(logits), labels, class_weight,
                                &include);
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <class S>
struct ModelOutput {
  CompletionOutput<S> completion;
  Traced<S> seg_logits;
};

template <class S>
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, const GridSpec& grid, std::uint64_t seed)
      : cfg_(cfg), grid_(grid) {
    cfg_.validate();
    Rng rng(seed);
    completion_ = CompletionNet<S>(cfg_, rng);
    seg_ = SegNet<S>(cfg_, completion_.out_channels(), rng);
    completion_.collect(params_);
    seg_.collect(params_);
  }

  const ModelConfig& config() const { return cfg_; }
  const GridSpec& grid() const { return grid_; }
  const ParamRefs<S>& params() { return params_; }

  ModelOutput<S> forward(Tape<S>* tape, const Traced<S>& input,
                         const GtPyramid* gt_pyramid, bool training) {
    ModelOutput<S> out;
    out.completion =
        completion_.forward(tape, input, gt_pyramid, training, grid_);
    out.seg_logits = seg_.forward(tape, out.completion.final_tensor, training);
    return out;
  }

  std::vector<int> level_strides() const { return completion_.level_strides(); }

  CompletionNet<S>& completion_net() { return completion_; }
  SegNet<S>& seg_net() { return seg_; }

 private:
  ModelConfig cfg_;
  GridSpec grid_;
  CompletionNet<S> completion_;
  SegNet<S> seg_;
  ParamRefs<S> params_;
};

}  // namespace socc::nn
