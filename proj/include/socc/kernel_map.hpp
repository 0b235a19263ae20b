// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "socc/parallel.hpp"
#include "socc/sparse_tensor.hpp"

namespace socc {

// Per-kernel-offset (input row, output row) pair lists.
//
// Forward convolution gathers: a pair under offset d means
//     in_coord = out_coord + d * in_stride                 (Eq. 1 neighborhood)
// Transposed (generative) convolution scatters with the mirrored sign:
//     out_coord = in_coord + d * out_stride
// Pairs within an offset are ordered by ascending iteration row, offsets by
// the fixed kernel_offsets() enumeration, so construction is deterministic
// regardless of thread schedule.
struct KernelMap {
  using Ptr = std::shared_ptr<const KernelMap>;

  std::vector<Offset> offsets;
  std::vector<std::vector<std::int32_t>> in_rows;
  std::vector<std::vector<std::int32_t>> out_rows;

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& v : in_rows) n += v.size();
    return n;
  }
};

inline KernelMap::Ptr build_kernel_map(const CoordSet& in, const CoordSet& out,
                                       const Vec3i& ksize,
                                       bool transposed = false) {
  auto km = std::make_shared<KernelMap>();
  km->offsets = kernel_offsets(ksize);
  const std::size_t nk = km->offsets.size();
  km->in_rows.resize(nk);
  km->out_rows.resize(nk);

  // delta scale: input stride for forward, output stride for transposed.
  const std::int32_t s = transposed ? out.stride() : in.stride();

  // Probe from the smaller side; each (offset, row) yields at most one pair.
  const bool probe_out = out.size() <= in.size();
  parallel_for(0, std::int64_t(nk), [&](std::int64_t kk) {
    const auto& o = km->offsets[std::size_t(kk)];
    const std::int32_t di = o[0] * s, dj = o[1] * s, dk = o[2] * s;
    auto& ir = km->in_rows[std::size_t(kk)];
    auto& orr = km->out_rows[std::size_t(kk)];
    if (probe_out) {
      for (std::int32_t r = 0; r < out.size(); ++r) {
        const auto& c = out.at(r);
        const Coordinate probe{c.b,
                               transposed ? c.i - di : c.i + di,
                               transposed ? c.j - dj : c.j + dj,
                               transposed ? c.k - dk : c.k + dk};
        const std::int32_t ri = in.find(probe);
        if (ri >= 0) {
          ir.push_back(ri);
          orr.push_back(r);
        }
      }
    } else {
      for (std::int32_t r = 0; r < in.size(); ++r) {
        const auto& c = in.at(r);
        const Coordinate probe{c.b,
                               transposed ? c.i + di : c.i - di,
                               transposed ? c.j + dj : c.j - dj,
                               transposed ? c.k + dk : c.k - dk};
        const std::int32_t ro = out.find(probe);
        if (ro >= 0) {
          ir.push_back(r);
          orr.push_back(ro);
        }
      }
    }
  });
  return km;
}

}  // namespace socc
