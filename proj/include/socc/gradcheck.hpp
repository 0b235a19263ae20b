// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "socc/ops.hpp"
#include "socc/rng.hpp"

namespace socc::nn {

// Differentiable leaf backed by a Param, so finite differences can perturb
// inputs through the same path as weights.
template <class S>
Traced<S> leaf_from_param(Tape<S>* tape, CoordSet::Ptr cs, Param<S>& p) {
  Traced<S> v(SparseTensor<S>(std::move(cs), p.value));
  if (tape) {
    v.id = tape->alloc(v.t.n(), v.t.m());
    Param<S>* pp = &p;
    const int id = v.id;
    tape->record("leaf", [pp, id](Tape<S>& tp) { pp->grad += tp.grad(id); });
  }
  return v;
}

struct FdResult {
  int checked = 0;
  int failed = 0;
  double max_rel = 0.0;
  std::string worst;

  void merge(const FdResult& o) {
    checked += o.checked;
    failed += o.failed;
    if (o.max_rel > max_rel) {
      max_rel = o.max_rel;
      worst = o.worst;
    }
  }
  bool ok() const { return failed == 0 && checked > 0; }
};

// Central finite-difference comparison of analytic parameter gradients.
//
// forward(tape) must rebuild the graph from current parameter values and
// return the scalar loss. Checks every entry when a parameter has at most
// max_entries entries; otherwise a deterministic sample.
inline FdResult fd_check(
    const std::vector<Param<double>*>& params,
    const std::function<TracedMat<double>(Tape<double>*)>& forward,
    Rng& rng, double step = 1e-5, double rel_tol = 1e-4,
    int max_entries = 24) {
  for (auto* p : params) p->zero_grad();
  Tape<double> tape;
  auto loss = forward(&tape);
  tape.backward(loss.id);

  FdResult res;
  for (auto* p : params) {
    const Eigen::Index total = p->value.size();
    std::vector<Eigen::Index> entries;
    if (total <= max_entries) {
      for (Eigen::Index i = 0; i < total; ++i) entries.push_back(i);
    } else {
      for (int i = 0; i < max_entries; ++i)
        entries.push_back(Eigen::Index(rng.uniform_int(0, total - 1)));
    }
    for (Eigen::Index e : entries) {
      double* v = p->value.data() + e;
      const double saved = *v;
      const double ad = p->grad.data()[e];
      // A ReLU kink or pruning threshold inside the difference window blends
      // one-sided derivatives; shrinking the window removes the artifact,
      // while a genuine gradient bug mismatches at every step.
      double best_rel = 1e30, best_fd = 0;
      bool pass = false;
      for (const double h : {step, step * 0.1, step * 0.01}) {
        *v = saved + h;
        const double lp = forward(nullptr).m(0, 0);
        *v = saved - h;
        const double lm = forward(nullptr).m(0, 0);
        *v = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double err = std::abs(ad - fd);
        const double rel = err / std::max({std::abs(ad), std::abs(fd), 1e-8});
        if (rel < best_rel) {
          best_rel = rel;
          best_fd = fd;
        }
        if (rel <= rel_tol || err <= 1e-9) {
          pass = true;
          break;
        }
      }
      ++res.checked;
      if (best_rel > res.max_rel) {
        res.max_rel = best_rel;
        res.worst = p->name + "[" + std::to_string(e) + "] ad=" +
                    std::to_string(ad) + " fd=" + std::to_string(best_fd);
      }
      if (!pass) ++res.failed;
    }
  }
  return res;
}

// Random small sparse coordinate set within a cube, unique, insertion-ordered.
inline CoordSet::Ptr random_coords(Rng& rng, int n, int extent, int stride = 1,
                                   int batches = 1) {
  std::vector<Coordinate> cs;
  std::unordered_map<Coordinate, int, CoordHash> seen;
  int guard = 0;
  while (int(cs.size()) < n && guard++ < n * 50) {
    Coordinate c{std::int32_t(rng.uniform_int(0, batches - 1)),
                 std::int32_t(rng.uniform_int(0, extent - 1)) * stride,
                 std::int32_t(rng.uniform_int(0, extent - 1)) * stride,
                 std::int32_t(rng.uniform_int(0, extent - 1)) * stride};
    if (seen.emplace(c, 0).second) cs.push_back(c);
  }
  return CoordSet::make(std::move(cs), stride);
}

template <class S>
MatX<S> random_feats(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                     double scale = 1.0) {
  MatX<S> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = S(rng.normal(0.0, scale));
  return m;
}

// The full finite-difference suite behind `socc gradcheck` and the
// acceptance gate: every differentiable op plus a conv->BN->ReLU->SE
// composite, `instances` random instances each.
bool run_gradcheck_suite(std::uint64_t seed, int instances, std::ostream& out);

}  // namespace socc::nn
