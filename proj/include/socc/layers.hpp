// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "socc/rng.hpp"
#include "socc/sparse_tensor.hpp"
#include "socc/types.hpp"

namespace socc::nn {

// A named tensor: value + accumulated gradient. dims records the logical
// checkpoint shape; value is the row-major 2D storage of that tensor.
template <class S>
struct Param {
  std::string name;
  std::vector<std::uint32_t> dims;
  MatX<S> value;
  MatX<S> grad;
  bool learnable = true;  // running BN stats are saved but not optimized

  void init(std::string n, std::vector<std::uint32_t> d, Eigen::Index rows,
            Eigen::Index cols, bool learn = true) {
    name = std::move(n);
    dims = std::move(d);
    value = MatX<S>::Zero(rows, cols);
    grad = MatX<S>::Zero(rows, cols);
    learnable = learn;
  }
  void zero_grad() { grad.setZero(); }
};

template <class S>
using ParamRefs = std::vector<Param<S>*>;

template <class S>
void fill_kaiming(MatX<S>& w, Eigen::Index fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / double(fan_in));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      w(r, c) = S(rng.normal(0.0, stddev));
}

// ---------------------------------------------------------------------------
// Sparse convolution weights: per-offset m_in x m_out blocks stacked along
// rows, K = kernel volume. Optional bias of length m_out.
// ---------------------------------------------------------------------------

template <class S>
struct Conv {
  Vec3i ksize{3, 3, 3};
  Eigen::Index m_in = 0, m_out = 0;
  bool has_bias = true;
  Param<S> w;
  Param<S> b;

  Conv() = default;
  Conv(const std::string& name, const Vec3i& k, Eigen::Index in,
       Eigen::Index out, Rng& rng, bool bias = true)
      : ksize(k), m_in(in), m_out(out), has_bias(bias) {
    const auto kvol = std::uint32_t(k.x()) * std::uint32_t(k.y()) *
                      std::uint32_t(k.z());
    w.init(name + ".w", {kvol, std::uint32_t(in), std::uint32_t(out)},
           Eigen::Index(kvol) * in, out);
    fill_kaiming(w.value, Eigen::Index(kvol) * in, rng);
    if (has_bias)
      b.init(name + ".b", {std::uint32_t(out)}, 1, out);
  }

  int kernel_volume() const { return ksize.x() * ksize.y() * ksize.z(); }

  auto weight_block(int k) { return w.value.block(k * m_in, 0, m_in, m_out); }
  auto weight_block(int k) const {
    return w.value.block(k * m_in, 0, m_in, m_out);
  }
  auto grad_block(int k) { return w.grad.block(k * m_in, 0, m_in, m_out); }

  void collect(ParamRefs<S>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }
};

// ---------------------------------------------------------------------------
// Batch normalization state
// ---------------------------------------------------------------------------

template <class S>
struct BatchNorm {
  Param<S> gamma, beta;
  Param<S> running_mean, running_var;  // non-learnable, checkpointed
  S momentum = S(0.1);
  S eps = S(1e-5);

  BatchNorm() = default;
  BatchNorm(const std::string& name, Eigen::Index channels) {
    gamma.init(name + ".gamma", {std::uint32_t(channels)}, 1, channels);
    gamma.value.setOnes();
    beta.init(name + ".beta", {std::uint32_t(channels)}, 1, channels);
    running_mean.init(name + ".running_mean", {std::uint32_t(channels)}, 1,
                      channels, false);
    running_var.init(name + ".running_var", {std::uint32_t(channels)}, 1,
                     channels, false);
    running_var.value.setOnes();
  }

  Eigen::Index channels() const { return gamma.value.cols(); }

  void collect(ParamRefs<S>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
    out.push_back(&running_mean);
    out.push_back(&running_var);
  }
};

// ---------------------------------------------------------------------------
// Dense linear map (used by the squeeze-and-excite bottleneck)
// ---------------------------------------------------------------------------

template <class S>
struct Linear {
  Param<S> w;  // m_in x m_out
  bool has_bias = false;
  Param<S> b;

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         bool bias = false)
      : has_bias(bias) {
    w.init(name + ".w", {std::uint32_t(in), std::uint32_t(out)}, in, out);
    fill_kaiming(w.value, in, rng);
    if (bias) b.init(name + ".b", {std::uint32_t(out)}, 1, out);
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }
};

// Channel gate: sigmoid(fc2 . relu(fc1 . GAP(x))), broadcast per batch item.
template <class S>
struct SqueezeExcite {
  Linear<S> fc1, fc2;
  int reduction = 4;

  SqueezeExcite() = default;
  SqueezeExcite(const std::string& name, Eigen::Index channels, int r, Rng& rng)
      : reduction(r) {
    if (r < 1 || channels % r != 0)
      throw ConfigError("squeeze_excite: channels must be divisible by reduction");
    fc1 = Linear<S>(name + ".fc1", channels, channels / r, rng);
    fc2 = Linear<S>(name + ".fc2", channels / r, channels, rng);
  }

  void collect(ParamRefs<S>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

}  // namespace socc::nn
