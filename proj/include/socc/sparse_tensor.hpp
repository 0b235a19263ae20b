// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "socc/types.hpp"

namespace socc {

// ---------------------------------------------------------------------------
// CoordSet: an immutable, insertion-ordered coordinate lattice plus its hash
// index. Tensors produced by coordinate-preserving ops share one CoordSet.
// ---------------------------------------------------------------------------

class CoordSet {
 public:
  using Ptr = std::shared_ptr<const CoordSet>;

  static Ptr make(std::vector<Coordinate> coords, int stride) {
    if (stride < 1) throw ContractViolation("CoordSet: stride must be >= 1");
    auto cs = std::make_shared<CoordSet>();
    cs->stride_ = stride;
    cs->coords_ = std::move(coords);
    cs->index_.reserve(cs->coords_.size() * 2);
    for (std::size_t r = 0; r < cs->coords_.size(); ++r) {
      const auto& c = cs->coords_[r];
      if ((c.i % stride) | (c.j % stride) | (c.k % stride))
        throw ContractViolation("CoordSet: coordinate not divisible by stride");
      if (!cs->index_.emplace(c, std::int32_t(r)).second)
        throw ContractViolation("CoordSet: duplicate coordinate");
    }
    return cs;
  }

  static Ptr empty(int stride = 1) { return make({}, stride); }

  int stride() const { return stride_; }
  std::int32_t size() const { return std::int32_t(coords_.size()); }
  const std::vector<Coordinate>& coords() const { return coords_; }
  const Coordinate& at(std::int32_t row) const { return coords_[row]; }

  // Row of a coordinate, or -1.
  std::int32_t find(const Coordinate& c) const {
    auto it = index_.find(c);
    return it == index_.end() ? -1 : it->second;
  }

  std::int32_t max_batch() const {
    std::int32_t b = -1;
    for (const auto& c : coords_) b = std::max(b, c.b);
    return b;
  }

 private:
  int stride_ = 1;
  std::vector<Coordinate> coords_;
  std::unordered_map<Coordinate, std::int32_t, CoordHash> index_;
};

// ---------------------------------------------------------------------------
// SparseTensor: COO coordinates + n x m feature matrix at a common stride.
// Immutable after construction; n = 0 is a legal tensor.
// ---------------------------------------------------------------------------

template <class S>
struct SparseTensor {
  CoordSet::Ptr cs;
  MatX<S> feats;

  SparseTensor() : cs(CoordSet::empty()), feats(0, 0) {}
  SparseTensor(CoordSet::Ptr c, MatX<S> f) : cs(std::move(c)), feats(std::move(f)) {
    if (feats.rows() != cs->size())
      throw ShapeError("SparseTensor: coords/features row mismatch");
  }

  std::int32_t n() const { return cs->size(); }
  Eigen::Index m() const { return feats.cols(); }
  int stride() const { return cs->stride(); }
  const std::vector<Coordinate>& coords() const { return cs->coords(); }
  bool empty() const { return n() == 0; }

  static SparseTensor empty_like_width(Eigen::Index m, int stride = 1) {
    return SparseTensor(CoordSet::empty(stride), MatX<S>(0, m));
  }
};

// ---------------------------------------------------------------------------
// Voxelization
// ---------------------------------------------------------------------------

// One fused point: metric position plus its feature vector.
template <class S>
struct FeaturePoint {
  Vec3d p;
  VecX<S> f;
};

// Discretizes points onto the grid at stride 1. Points sharing a voxel have
// their features averaged; out-of-bounds points are dropped.
template <class S>
SparseTensor<S> voxelize(const std::vector<FeaturePoint<S>>& points,
                         const GridSpec& spec, std::int32_t batch = 0) {
  spec.validate();
  Eigen::Index m = points.empty() ? 0 : points.front().f.size();
  for (const auto& pt : points)
    if (pt.f.size() != m)
      throw DataError("voxelize: inconsistent feature lengths");

  std::vector<Coordinate> coords;
  std::unordered_map<Coordinate, std::int32_t, CoordHash> rows;
  std::vector<VecX<S>> sums;
  std::vector<std::int32_t> counts;

  for (const auto& pt : points) {
    const Vec3i v = spec.voxel_of(pt.p);
    if (!spec.in_bounds(v)) continue;
    Coordinate c{batch, v.x(), v.y(), v.z()};
    auto [it, inserted] = rows.emplace(c, std::int32_t(coords.size()));
    if (inserted) {
      coords.push_back(c);
      sums.push_back(pt.f);
      counts.push_back(1);
    } else {
      sums[it->second] += pt.f;
      ++counts[it->second];
    }
  }

  MatX<S> feats(Eigen::Index(coords.size()), m);
  for (std::size_t r = 0; r < coords.size(); ++r)
    feats.row(Eigen::Index(r)) = sums[r].transpose() / S(counts[r]);
  return SparseTensor<S>(CoordSet::make(std::move(coords), 1), std::move(feats));
}

// ---------------------------------------------------------------------------
// Coordinate-set algebra
// ---------------------------------------------------------------------------

// Unique floor-to-coarser-lattice set; output stride = input stride * factor.
inline CoordSet::Ptr downsample_coords(const CoordSet& in, int factor) {
  if (factor < 2) throw ConfigError("downsample_coords: factor must be >= 2");
  const int t = in.stride() * factor;
  std::vector<Coordinate> out;
  std::unordered_map<Coordinate, std::int32_t, CoordHash> seen;
  out.reserve(in.coords().size());
  for (const auto& c : in.coords()) {
    Coordinate d{c.b, floor_div(c.i, t) * t, floor_div(c.j, t) * t,
                 floor_div(c.k, t) * t};
    if (seen.emplace(d, 0).second) out.push_back(d);
  }
  return CoordSet::make(std::move(out), t);
}

// Kernel support offsets, anisotropic odd sizes, fixed enumeration order
// (di outer, dk inner).
inline std::vector<Offset> kernel_offsets(const Vec3i& ksize) {
  for (int a = 0; a < 3; ++a)
    if (ksize[a] < 1 || ksize[a] % 2 == 0)
      throw ConfigError("kernel size must be odd and >= 1");
  std::vector<Offset> offs;
  offs.reserve(std::size_t(ksize.x()) * ksize.y() * ksize.z());
  const Vec3i r = (ksize - Vec3i::Ones()) / 2;
  for (int di = -r.x(); di <= r.x(); ++di)
    for (int dj = -r.y(); dj <= r.y(); ++dj)
      for (int dk = -r.z(); dk <= r.z(); ++dk)
        offs.push_back(Offset{di, dj, dk});
  return offs;
}

// Union of all kernel-offset translates of the input at the finer stride
// (input stride / up_factor), deduplicated, insertion-ordered.
inline CoordSet::Ptr generative_expand(const CoordSet& in, const Vec3i& ksize,
                                       int up_factor) {
  if (up_factor < 1) throw ConfigError("generative_expand: up_factor must be >= 1");
  if (in.stride() % up_factor != 0)
    throw ContractViolation("generative_expand: stride not divisible by up_factor");
  const int s_out = in.stride() / up_factor;
  const auto offs = kernel_offsets(ksize);

  std::vector<Coordinate> out;
  std::unordered_map<Coordinate, std::int32_t, CoordHash> seen;
  out.reserve(in.coords().size() * offs.size());
  for (const auto& c : in.coords()) {
    for (const auto& o : offs) {
      Coordinate t{c.b, c.i + o[0] * s_out, c.j + o[1] * s_out,
                   c.k + o[2] * s_out};
      if (seen.emplace(t, 0).second) out.push_back(t);
    }
  }
  return CoordSet::make(std::move(out), s_out);
}

// ---------------------------------------------------------------------------
// Row pruning and densification
// ---------------------------------------------------------------------------

template <class S>
SparseTensor<S> prune(const SparseTensor<S>& t, const std::vector<bool>& keep) {
  if (std::int64_t(keep.size()) != t.n())
    throw DataError("prune: mask length != row count");
  std::vector<Coordinate> coords;
  std::vector<std::int32_t> rows;
  for (std::int32_t r = 0; r < t.n(); ++r)
    if (keep[std::size_t(r)]) {
      coords.push_back(t.cs->at(r));
      rows.push_back(r);
    }
  MatX<S> feats(Eigen::Index(rows.size()), t.m());
  for (std::size_t r = 0; r < rows.size(); ++r)
    feats.row(Eigen::Index(r)) = t.feats.row(rows[r]);
  return SparseTensor<S>(CoordSet::make(std::move(coords), t.stride()),
                         std::move(feats));
}

// Dense label grid from a stride-1 tensor. Occupied voxels take the argmax
// class channel (ties -> lowest index); with argmax_channel = false every
// present voxel is labeled class 0. Empty voxels get the free label.
template <class S>
OccupancyGrid to_dense(const SparseTensor<S>& t, const GridSpec& spec,
                       bool argmax_channel = true,
                       int num_classes = kNumClasses) {
  if (t.stride() != 1)
    throw ContractViolation("to_dense: tensor stride must be 1");
  OccupancyGrid grid = OccupancyGrid::all_free(spec.dims, num_classes);
  for (std::int32_t r = 0; r < t.n(); ++r) {
    const auto& c = t.cs->at(r);
    if (!grid.in_bounds(c.i, c.j, c.k))
      throw ContractViolation("to_dense: coordinate out of grid bounds");
    std::uint8_t label = 0;
    if (argmax_channel && t.m() > 0) {
      Eigen::Index best = 0;
      t.feats.row(r).maxCoeff(&best);
      // maxCoeff returns the first maximum, which is the lowest class index.
      label = std::uint8_t(best);
    }
    grid.at(c.i, c.j, c.k) = label;
  }
  return grid;
}

}  // namespace socc
