// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference implementations used as independent oracles. These
// deliberately avoid the kernel-map/gather-scatter machinery they verify.

#pragma once

#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "socc/kernel_map.hpp"
#include "socc/sparse_tensor.hpp"

namespace socc::oracle {

// Dense 3D convolution restricted to the requested output coordinates:
// out[u] = sum_d W_d^T in[u + d*s], evaluated against a dense lookup table.
template <class S>
MatX<S> dense_conv(const SparseTensor<S>& in,
                   const std::vector<Coordinate>& out_coords,
                   const std::vector<Offset>& offsets,
                   const std::vector<MatX<S>>& w, const RowVecX<S>* bias,
                   int offset_scale) {
  std::map<std::tuple<int, int, int, int>, std::int32_t> dense;
  for (std::int32_t r = 0; r < in.n(); ++r) {
    const auto& c = in.cs->at(r);
    dense[{c.b, c.i, c.j, c.k}] = r;
  }
  const Eigen::Index m_out = w.front().cols();
  MatX<S> out = MatX<S>::Zero(Eigen::Index(out_coords.size()), m_out);
  if (bias) out.rowwise() = *bias;
  for (std::size_t o = 0; o < out_coords.size(); ++o) {
    const auto& u = out_coords[o];
    for (std::size_t d = 0; d < offsets.size(); ++d) {
      const auto it = dense.find({u.b, u.i + offsets[d][0] * offset_scale,
                                  u.j + offsets[d][1] * offset_scale,
                                  u.k + offsets[d][2] * offset_scale});
      if (it == dense.end()) continue;
      out.row(Eigen::Index(o)) += in.feats.row(it->second) * w[d];
    }
  }
  return out;
}

// O(n^2) neighbor scan over every (offset, in row, out row) triple.
using PairSet = std::set<std::tuple<int, int, int>>;

inline PairSet brute_force_pairs(const CoordSet& in, const CoordSet& out,
                                 const Vec3i& ksize, bool transposed) {
  const auto offsets = kernel_offsets(ksize);
  const int s = transposed ? out.stride() : in.stride();
  PairSet pairs;
  for (std::size_t d = 0; d < offsets.size(); ++d) {
    for (std::int32_t i = 0; i < in.size(); ++i) {
      for (std::int32_t o = 0; o < out.size(); ++o) {
        const auto& ci = in.at(i);
        const auto& co = out.at(o);
        if (ci.b != co.b) continue;
        const bool match =
            transposed
                ? (co.i == ci.i + offsets[d][0] * s &&
                   co.j == ci.j + offsets[d][1] * s &&
                   co.k == ci.k + offsets[d][2] * s)
                : (ci.i == co.i + offsets[d][0] * s &&
                   ci.j == co.j + offsets[d][1] * s &&
                   ci.k == co.k + offsets[d][2] * s);
        if (match) pairs.insert({int(d), i, o});
      }
    }
  }
  return pairs;
}

inline PairSet kernel_map_pairs(const KernelMap& km) {
  PairSet pairs;
  for (std::size_t d = 0; d < km.offsets.size(); ++d)
    for (std::size_t p = 0; p < km.in_rows[d].size(); ++p)
      pairs.insert({int(d), km.in_rows[d][p], km.out_rows[d][p]});
  return pairs;
}

// Voxel-by-voxel metric counting on dense grids.
struct BruteMetrics {
  std::int64_t inter = 0, pred = 0, gt = 0;
  double iou() const {
    const std::int64_t u = pred + gt - inter;
    if (pred == 0 && gt == 0) return 1.0;
    return u > 0 ? double(inter) / double(u) : 0.0;
  }
};

inline BruteMetrics brute_completion(const OccupancyGrid& pred,
                                     const OccupancyGrid& gt,
                                     int num_classes) {
  BruteMetrics m;
  const auto fl = free_label(num_classes);
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = pred.labels[i] != fl && pred.labels[i] != kIgnoreLabel;
    const bool g = gt.labels[i] != fl && gt.labels[i] != kIgnoreLabel;
    m.pred += p;
    m.gt += g;
    m.inter += (p && g);
  }
  return m;
}

}  // namespace socc::oracle
