// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "socc/layers.hpp"

namespace socc::nn {

// Cosine annealing from lr0 at step 0 down to 0 at step == total.
inline double cosine_anneal(double lr0, std::int64_t step, std::int64_t total) {
  if (total <= 0) return lr0;
  if (step >= total) return 0.0;
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * double(step) / double(total)));
}

// Adam with bias correction; skips non-learnable params (BN running stats).
template <class S>
class Adam {
 public:
  S lr = S(1e-4);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);

  void step(const ParamRefs<S>& params) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        slots_[i].m = MatX<S>::Zero(params[i]->value.rows(),
                                    params[i]->value.cols());
        slots_[i].v = slots_[i].m;
      }
    }
    ++t_;
    const S bc1 = S(1) - S(std::pow(double(beta1), double(t_)));
    const S bc2 = S(1) - S(std::pow(double(beta2), double(t_)));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<S>& p = *params[i];
      if (!p.learnable) continue;
      auto& s = slots_[i];
      s.m = beta1 * s.m + (S(1) - beta1) * p.grad;
      s.v = (beta2 * s.v.array() +
             (S(1) - beta2) * p.grad.array().square())
                .matrix();
      p.value.array() -=
          lr * (s.m.array() / bc1) /
          ((s.v.array() / bc2).sqrt() + eps);
    }
  }

  void zero_grad(const ParamRefs<S>& params) {
    for (auto* p : params) p->zero_grad();
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  struct Slot {
    MatX<S> m, v;
  };
  std::vector<Slot> slots_;
  std::int64_t t_ = 0;
};

}  // namespace socc::nn
