// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <iostream>
#include <memory>
#include <utility>
#include <vector>

#include "socc/kernel_map.hpp"
#include "socc/layers.hpp"
#include "socc/sparse_tensor.hpp"
#include "socc/tape.hpp"

namespace socc::nn {

template <class S>
using MatPtr = std::shared_ptr<const MatX<S>>;

template <class S>
MatPtr<S> save(const MatX<S>& m) {
  return std::make_shared<const MatX<S>>(m);
}

// ---------------------------------------------------------------------------
// Generalized sparse convolution (gather -> GEMM -> scatter per offset).
// Output rows with no kernel-map pairs receive bias only.
// ---------------------------------------------------------------------------

template <class S>
Traced<S> sparse_conv(Tape<S>* tape, const Traced<S>& x, Conv<S>& conv,
                      CoordSet::Ptr out_cs, KernelMap::Ptr km) {
  if (x.t.m() != conv.m_in)
    throw ShapeError("sparse_conv: input channels != kernel m_in");
  const Eigen::Index n_out = out_cs->size();
  MatX<S> y(n_out, conv.m_out);
  if (conv.has_bias)
    y.rowwise() = conv.b.value.row(0);
  else
    y.setZero();

  const std::size_t nk = km->offsets.size();
  for (std::size_t k = 0; k < nk; ++k) {
    const auto& ir = km->in_rows[k];
    const auto& orr = km->out_rows[k];
    if (ir.empty()) continue;
    MatX<S> xg(Eigen::Index(ir.size()), conv.m_in);
    for (std::size_t p = 0; p < ir.size(); ++p)
      xg.row(Eigen::Index(p)) = x.t.feats.row(ir[p]);
    const MatX<S> yg = xg * conv.weight_block(int(k));
    for (std::size_t p = 0; p < orr.size(); ++p)
      y.row(orr[p]) += yg.row(Eigen::Index(p));
  }

  Traced<S> out(SparseTensor<S>(std::move(out_cs), std::move(y)));
  if (tape) {
    out.id = tape->alloc(n_out, conv.m_out);
    auto xsave = save<S>(x.t.feats);
    Conv<S>* cv = &conv;
    const int x_id = x.id, out_id = out.id;
    tape->record("sparse_conv", [xsave, km, cv, x_id, out_id](Tape<S>& tp) {
      const MatX<S>& g = tp.grad(out_id);
      if (cv->has_bias) cv->b.grad.row(0) += g.colwise().sum();
      MatX<S>* gx = x_id >= 0 ? &tp.grad(x_id) : nullptr;
      for (std::size_t k = 0; k < km->offsets.size(); ++k) {
        const auto& ir = km->in_rows[k];
        const auto& orr = km->out_rows[k];
        if (ir.empty()) continue;
        MatX<S> xg(Eigen::Index(ir.size()), cv->m_in);
        MatX<S> gg(Eigen::Index(orr.size()), cv->m_out);
        for (std::size_t p = 0; p < ir.size(); ++p) {
          xg.row(Eigen::Index(p)) = xsave->row(ir[p]);
          gg.row(Eigen::Index(p)) = g.row(orr[p]);
        }
        cv->grad_block(int(k)) += xg.transpose() * gg;
        if (gx) {
          const MatX<S> dxg = gg * cv->weight_block(int(k)).transpose();
          for (std::size_t p = 0; p < ir.size(); ++p)
            (*gx).row(ir[p]) += dxg.row(Eigen::Index(p));
        }
      }
    });
  }
  return out;
}

// Stride-preserving convolution on the input's own coordinates.
template <class S>
Traced<S> sparse_conv(Tape<S>* tape, const Traced<S>& x, Conv<S>& conv) {
  auto km = build_kernel_map(*x.t.cs, *x.t.cs, conv.ksize);
  return sparse_conv(tape, x, conv, x.t.cs, std::move(km));
}

// Strided downsampling convolution; output stride = input stride * factor.
template <class S>
Traced<S> sparse_conv_down(Tape<S>* tape, const Traced<S>& x, Conv<S>& conv,
                           int factor) {
  auto out_cs = downsample_coords(*x.t.cs, factor);
  auto km = build_kernel_map(*x.t.cs, *out_cs, conv.ksize);
  return sparse_conv(tape, x, conv, std::move(out_cs), std::move(km));
}

// Transposed convolution onto an explicit output coordinate set (scatter
// convention: out_coord = in_coord + offset * out_stride).
template <class S>
Traced<S> transposed_conv_to(Tape<S>* tape, const Traced<S>& x, Conv<S>& conv,
                             CoordSet::Ptr out_cs) {
  auto km = build_kernel_map(*x.t.cs, *out_cs, conv.ksize, /*transposed=*/true);
  return sparse_conv(tape, x, conv, std::move(out_cs), std::move(km));
}

// Generative transposed convolution: output coordinates are all kernel-offset
// translates of the input at the finer stride (input stride / up_factor).
template <class S>
Traced<S> generative_transposed_conv(Tape<S>* tape, const Traced<S>& x,
                                     Conv<S>& conv, int up_factor) {
  auto out_cs = generative_expand(*x.t.cs, conv.ksize, up_factor);
  return transposed_conv_to(tape, x, conv, std::move(out_cs));
}

// ---------------------------------------------------------------------------
// Batch normalization. Train mode normalizes per channel over all rows and
// updates running stats; eval mode applies the running stats.
// ---------------------------------------------------------------------------

template <class S>
Traced<S> batch_norm(Tape<S>* tape, const Traced<S>& x, BatchNorm<S>& bn,
                     bool training) {
  if (x.t.m() != bn.channels())
    throw ShapeError("batch_norm: channel mismatch");
  const Eigen::Index n = x.t.n(), c = x.t.m();

  if (training && n == 0) {
    std::cerr << "[socc] batch_norm: empty tensor in train mode, skipping\n";
    Traced<S> out(x.t, -1);
    if (tape && x.id >= 0) {
      out.id = tape->alloc(0, c);
      // Identity pass-through; nothing flows on an empty tensor.
      tape->record("batch_norm_empty", [](Tape<S>&) {});
    }
    return out;
  }

  RowVecX<S> mean(c), inv_std(c);
  if (training) {
    mean = x.t.feats.colwise().mean();
    const RowVecX<S> var = (x.t.feats.rowwise() - mean)
                               .array()
                               .square()
                               .matrix()
                               .colwise()
                               .mean();
    inv_std = (var.array() + bn.eps).rsqrt().matrix();
    bn.running_mean.value.row(0) =
        (S(1) - bn.momentum) * bn.running_mean.value.row(0) +
        bn.momentum * mean;
    bn.running_var.value.row(0) =
        (S(1) - bn.momentum) * bn.running_var.value.row(0) + bn.momentum * var;
  } else {
    mean = bn.running_mean.value.row(0);
    inv_std =
        (bn.running_var.value.row(0).array() + bn.eps).rsqrt().matrix();
  }

  MatX<S> xhat = (x.t.feats.rowwise() - mean) * inv_std.asDiagonal();
  MatX<S> y = xhat * bn.gamma.value.row(0).asDiagonal();
  y.rowwise() += bn.beta.value.row(0);

  Traced<S> out(SparseTensor<S>(x.t.cs, std::move(y)));
  if (tape) {
    out.id = tape->alloc(n, c);
    auto xh = save<S>(xhat);
    auto istd = std::make_shared<const RowVecX<S>>(inv_std);
    BatchNorm<S>* layer = &bn;
    const int x_id = x.id, out_id = out.id;
    tape->record("batch_norm", [xh, istd, layer, training, x_id, out_id,
                                n](Tape<S>& tp) {
      const MatX<S>& g = tp.grad(out_id);
      layer->gamma.grad.row(0) += (g.array() * xh->array()).colwise().sum().matrix();
      layer->beta.grad.row(0) += g.colwise().sum();
      if (x_id < 0) return;
      MatX<S>& gx = tp.grad(x_id);
      const RowVecX<S> scale =
          (layer->gamma.value.row(0).array() * istd->array()).matrix();
      if (training) {
        const RowVecX<S> sum_g = g.colwise().sum();
        const RowVecX<S> sum_gx =
            (g.array() * xh->array()).colwise().sum().matrix();
        // dL/dx = gamma * inv_std / n * (n*g - sum(g) - xhat * sum(g*xhat))
        MatX<S> t = S(n) * g;
        t.rowwise() -= sum_g;
        t -= *xh * sum_gx.asDiagonal();
        gx += t * (scale / S(n)).asDiagonal();
      } else {
        gx += g * scale.asDiagonal();
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <class S>
Traced<S> relu(Tape<S>* tape, const Traced<S>& x) {
  MatX<S> y = x.t.feats.cwiseMax(S(0));
  Traced<S> out(SparseTensor<S>(x.t.cs, std::move(y)));
  if (tape) {
    out.id = tape->alloc(x.t.n(), x.t.m());
    auto ysave = save<S>(out.t.feats);
    const int x_id = x.id, out_id = out.id;
    tape->record("relu", [ysave, x_id, out_id](Tape<S>& tp) {
      if (x_id < 0) return;
      const MatX<S>& g = tp.grad(out_id);
      tp.grad(x_id).array() +=
          g.array() * (ysave->array() > S(0)).template cast<S>();
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Global average pooling: per-batch-item channel means. Batch items with no
// voxels yield a zero row.
// ---------------------------------------------------------------------------

template <class S>
TracedMat<S> global_avg_pool(Tape<S>* tape, const Traced<S>& x,
                             int num_batches = -1) {
  const Eigen::Index c = x.t.m();
  const int nb = num_batches >= 0
                     ? num_batches
                     : (x.t.empty() ? 0 : x.t.cs->max_batch() + 1);
  MatX<S> pooled = MatX<S>::Zero(nb, c);
  std::vector<S> counts(std::size_t(nb), S(0));
  for (std::int32_t r = 0; r < x.t.n(); ++r) {
    const int b = x.t.cs->at(r).b;
    pooled.row(b) += x.t.feats.row(r);
    counts[std::size_t(b)] += S(1);
  }
  for (int b = 0; b < nb; ++b)
    if (counts[std::size_t(b)] > S(0)) pooled.row(b) /= counts[std::size_t(b)];

  TracedMat<S> out{std::move(pooled), -1};
  if (tape) {
    out.id = tape->alloc(nb, c);
    const int x_id = x.id, out_id = out.id;
    auto cs = x.t.cs;
    auto cnt = std::make_shared<const std::vector<S>>(std::move(counts));
    tape->record("global_avg_pool", [cs, cnt, x_id, out_id](Tape<S>& tp) {
      if (x_id < 0) return;
      const MatX<S>& g = tp.grad(out_id);
      MatX<S>& gx = tp.grad(x_id);
      for (std::int32_t r = 0; r < cs->size(); ++r) {
        const int b = cs->at(r).b;
        gx.row(r) += g.row(b) / (*cnt)[std::size_t(b)];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense-matrix ops for the SE bottleneck and scalar loss algebra
// ---------------------------------------------------------------------------

template <class S>
TracedMat<S> linear(Tape<S>* tape, const TracedMat<S>& x, Linear<S>& fc) {
  if (x.m.cols() != fc.w.value.rows())
    throw ShapeError("linear: input width != weight rows");
  MatX<S> y = x.m * fc.w.value;
  if (fc.has_bias) y.rowwise() += fc.b.value.row(0);
  TracedMat<S> out{std::move(y), -1};
  if (tape) {
    out.id = tape->alloc(out.m.rows(), out.m.cols());
    auto xsave = save<S>(x.m);
    Linear<S>* fp = &fc;
    const int x_id = x.id, out_id = out.id;
    tape->record("linear", [xsave, fp, x_id, out_id](Tape<S>& tp) {
      const MatX<S>& g = tp.grad(out_id);
      fp->w.grad += xsave->transpose() * g;
      if (fp->has_bias) fp->b.grad.row(0) += g.colwise().sum();
      if (x_id >= 0) tp.grad(x_id) += g * fp->w.value.transpose();
    });
  }
  return out;
}

template <class S>
TracedMat<S> relu_mat(Tape<S>* tape, const TracedMat<S>& x) {
  TracedMat<S> out{x.m.cwiseMax(S(0)), -1};
  if (tape) {
    out.id = tape->alloc(out.m.rows(), out.m.cols());
    auto ysave = save<S>(out.m);
    const int x_id = x.id, out_id = out.id;
    tape->record("relu_mat", [ysave, x_id, out_id](Tape<S>& tp) {
      if (x_id < 0) return;
      tp.grad(x_id).array() += tp.grad(out_id).array() *
                               (ysave->array() > S(0)).template cast<S>();
    });
  }
  return out;
}

template <class S>
TracedMat<S> sigmoid_mat(Tape<S>* tape, const TracedMat<S>& x) {
  MatX<S> y = (S(1) / (S(1) + (-x.m.array()).exp())).matrix();
  TracedMat<S> out{std::move(y), -1};
  if (tape) {
    out.id = tape->alloc(out.m.rows(), out.m.cols());
    auto ysave = save<S>(out.m);
    const int x_id = x.id, out_id = out.id;
    tape->record("sigmoid", [ysave, x_id, out_id](Tape<S>& tp) {
      if (x_id < 0) return;
      tp.grad(x_id).array() += tp.grad(out_id).array() * ysave->array() *
                               (S(1) - ysave->array());
    });
  }
  return out;
}

// Scales each feature row by its batch item's gate row.
template <class S>
Traced<S> row_scale_by_batch(Tape<S>* tape, const Traced<S>& x,
                             const TracedMat<S>& gate) {
  if (gate.m.cols() != x.t.m())
    throw ShapeError("row_scale_by_batch: gate width != channels");
  MatX<S> y(x.t.n(), x.t.m());
  for (std::int32_t r = 0; r < x.t.n(); ++r)
    y.row(r) = x.t.feats.row(r).cwiseProduct(gate.m.row(x.t.cs->at(r).b));
  Traced<S> out(SparseTensor<S>(x.t.cs, std::move(y)));
  if (tape) {
    out.id = tape->alloc(x.t.n(), x.t.m());
    auto xsave = save<S>(x.t.feats);
    auto gsave = save<S>(gate.m);
    auto cs = x.t.cs;
    const int x_id = x.id, g_id = gate.id, out_id = out.id;
    tape->record("row_scale", [xsave, gsave, cs, x_id, g_id,
                               out_id](Tape<S>& tp) {
      const MatX<S>& g = tp.grad(out_id);
      for (std::int32_t r = 0; r < cs->size(); ++r) {
        const int b = cs->at(r).b;
        if (x_id >= 0)
          tp.grad(x_id).row(r) += g.row(r).cwiseProduct(gsave->row(b));
        if (g_id >= 0)
          tp.grad(g_id).row(b) += g.row(r).cwiseProduct(xsave->row(r));
      }
    });
  }
  return out;
}

// Squeeze-and-excite channel recalibration, one gate per batch item.
template <class S>
Traced<S> squeeze_excite(Tape<S>* tape, const Traced<S>& x,
                         SqueezeExcite<S>& se) {
  if (x.t.m() % se.reduction != 0)
    throw ConfigError("squeeze_excite: channels not divisible by reduction");
  if (x.t.empty()) {
    Traced<S> out(x.t, -1);
    if (tape && x.id >= 0) {
      out.id = tape->alloc(0, x.t.m());
      tape->record("squeeze_excite_empty", [](Tape<S>&) {});
    }
    return out;
  }
  auto pooled = global_avg_pool(tape, x);
  auto h = relu_mat(tape, linear(tape, pooled, se.fc1));
  auto gate = sigmoid_mat(tape, linear(tape, h, se.fc2));
  return row_scale_by_batch(tape, x, gate);
}

// ---------------------------------------------------------------------------
// Skip concatenation: output coordinates are A's; B's features are appended
// where B has the coordinate and zero-filled where it does not.
// ---------------------------------------------------------------------------

template <class S>
Traced<S> concat_features(Tape<S>* tape, const Traced<S>& a,
                          const Traced<S>& b) {
  if (a.t.stride() != b.t.stride())
    throw ShapeError("concat_features: stride mismatch");
  const Eigen::Index ma = a.t.m(), mb = b.t.m();
  MatX<S> y = MatX<S>::Zero(a.t.n(), ma + mb);
  y.leftCols(ma) = a.t.feats;
  auto match = std::make_shared<std::vector<std::int32_t>>(std::size_t(a.t.n()));
  for (std::int32_t r = 0; r < a.t.n(); ++r) {
    const std::int32_t rb = b.t.cs->find(a.t.cs->at(r));
    (*match)[std::size_t(r)] = rb;
    if (rb >= 0) y.block(r, ma, 1, mb) = b.t.feats.row(rb);
  }
  Traced<S> out(SparseTensor<S>(a.t.cs, std::move(y)));
  if (tape) {
    out.id = tape->alloc(a.t.n(), ma + mb);
    const int a_id = a.id, b_id = b.id, out_id = out.id;
    tape->record("concat", [match, ma, mb, a_id, b_id, out_id](Tape<S>& tp) {
      const MatX<S>& g = tp.grad(out_id);
      if (a_id >= 0) tp.grad(a_id) += g.leftCols(ma);
      if (b_id >= 0) {
        MatX<S>& gb = tp.grad(b_id);
        for (std::size_t r = 0; r < match->size(); ++r)
          if ((*match)[r] >= 0)
            gb.row((*match)[r]) += g.block(Eigen::Index(r), ma, 1, mb);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row pruning as a taped op (gradients flow only through kept rows).
// ---------------------------------------------------------------------------

template <class S>
Traced<S> prune_rows(Tape<S>* tape, const Traced<S>& x,
                     const std::vector<bool>& keep) {
  Traced<S> out(prune(x.t, keep));
  if (tape) {
    out.id = tape->alloc(out.t.n(), out.t.m());
    auto kept = std::make_shared<std::vector<std::int32_t>>();
    kept->reserve(std::size_t(out.t.n()));
    for (std::int32_t r = 0; r < x.t.n(); ++r)
      if (keep[std::size_t(r)]) kept->push_back(r);
    const int x_id = x.id, out_id = out.id;
    tape->record("prune", [kept, x_id, out_id](Tape<S>& tp) {
      if (x_id < 0) return;
      const MatX<S>& g = tp.grad(out_id);
      MatX<S>& gx = tp.grad(x_id);
      for (std::size_t r = 0; r < kept->size(); ++r)
        gx.row((*kept)[r]) += g.row(Eigen::Index(r));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses (scalar outputs are 1x1 TracedMats)
// ---------------------------------------------------------------------------

template <class S>
TracedMat<S> scalar_constant(S v) {
  TracedMat<S> out;
  out.m = MatX<S>::Constant(1, 1, v);
  return out;
}

// out = a + scale * b. Untracked operands contribute value but no gradient.
template <class S>
TracedMat<S> add_scaled(Tape<S>* tape, const TracedMat<S>& a,
                        const TracedMat<S>& b, S scale = S(1)) {
  TracedMat<S> out{a.m + scale * b.m, -1};
  if (tape && (a.id >= 0 || b.id >= 0)) {
    out.id = tape->alloc(1, 1);
    const int a_id = a.id, b_id = b.id, out_id = out.id;
    tape->record("add_scaled", [a_id, b_id, scale, out_id](Tape<S>& tp) {
      const MatX<S>& g = tp.grad(out_id);
      if (a_id >= 0) tp.grad(a_id) += g;
      if (b_id >= 0) tp.grad(b_id) += scale * g;
    });
  }
  return out;
}

// Mean binary cross-entropy with logits over all rows; empty input -> 0.
template <class S>
TracedMat<S> bce_with_logits_mean(Tape<S>* tape, const TracedMat<S>& logits,
                                  const std::vector<std::uint8_t>& target) {
  const Eigen::Index n = logits.m.rows();
  if (std::int64_t(target.size()) != n)
    throw ShapeError("bce_with_logits: target length mismatch");
  if (n == 0) return scalar_constant<S>(0);

  S acc = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const S z = logits.m(r, 0);
    const S y = S(target[std::size_t(r)]);
    // max(z,0) - z*y + log(1 + exp(-|z|))
    acc += std::max(z, S(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  TracedMat<S> out = scalar_constant<S>(acc / S(n));
  if (tape && logits.id >= 0) {
    out.id = tape->alloc(1, 1);
    auto zsave = save<S>(logits.m);
    auto tsave = std::make_shared<const std::vector<std::uint8_t>>(target);
    const int z_id = logits.id, out_id = out.id;
    tape->record("bce_with_logits", [zsave, tsave, z_id, out_id, n](Tape<S>& tp) {
      const S g = tp.grad(out_id)(0, 0);
      MatX<S>& gz = tp.grad(z_id);
      for (Eigen::Index r = 0; r < n; ++r) {
        const S z = (*zsave)(r, 0);
        const S p = S(1) / (S(1) + std::exp(-z));
        gz(r, 0) += g * (p - S((*tsave)[std::size_t(r)])) / S(n);
      }
    });
  }
  return out;
}

// Per-voxel weighted negative log-softmax, averaged over included rows.
// weights[y] carries the class-balanced factor (all ones = plain CE);
// include[r] = false drops the row (e.g. free-class exclusion mode).
template <class S>
TracedMat<S> weighted_cross_entropy(Tape<S>* tape, const TracedMat<S>& logits,
                                    const std::vector<std::uint8_t>& labels,
                                    const VecX<S>& class_weight,
                                    const std::vector<bool>* include = nullptr) {
  const Eigen::Index n = logits.m.rows(), c = logits.m.cols();
  if (std::int64_t(labels.size()) != n)
    throw ShapeError("weighted_cross_entropy: label length mismatch");
  Eigen::Index n_eval = 0;
  S acc = 0;
  MatX<S> softmax(n, c);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (include && !(*include)[std::size_t(r)]) continue;
    const auto y = labels[std::size_t(r)];
    if (y >= c) throw ShapeError("weighted_cross_entropy: label out of range");
    const S zmax = logits.m.row(r).maxCoeff();
    const RowVecX<S> e = (logits.m.row(r).array() - zmax).exp();
    const S denom = e.sum();
    softmax.row(r) = e / denom;
    acc += class_weight[y] * (std::log(denom) - (logits.m(r, y) - zmax));
    ++n_eval;
  }
  if (n_eval == 0) return scalar_constant<S>(0);
  TracedMat<S> out = scalar_constant<S>(acc / S(n_eval));
  if (tape && logits.id >= 0) {
    out.id = tape->alloc(1, 1);
    auto psave = save<S>(softmax);
    auto lsave = std::make_shared<const std::vector<std::uint8_t>>(labels);
    auto wsave = std::make_shared<const VecX<S>>(class_weight);
    auto inc = include ? std::make_shared<const std::vector<bool>>(*include)
                       : nullptr;
    const int z_id = logits.id, out_id = out.id;
    tape->record("weighted_ce", [psave, lsave, wsave, inc, z_id, out_id, n,
                                 n_eval](Tape<S>& tp) {
      const S g = tp.grad(out_id)(0, 0) / S(n_eval);
      MatX<S>& gz = tp.grad(z_id);
      for (Eigen::Index r = 0; r < n; ++r) {
        if (inc && !(*inc)[std::size_t(r)]) continue;
        const auto y = (*lsave)[std::size_t(r)];
        const S w = (*wsave)[y];
        gz.row(r) += g * w * psave->row(r);
        gz(r, y) -= g * w;
      }
    });
  }
  return out;
}

// Adapter: treat a sparse tensor's features as a dense tape value.
template <class S>
TracedMat<S> as_mat(const Traced<S>& x) {
  return TracedMat<S>{x.t.feats, x.id};
}

// Quadratic test loss: sum of squared entries.
template <class S>
TracedMat<S> sum_squares(Tape<S>* tape, const TracedMat<S>& x) {
  TracedMat<S> out = scalar_constant<S>(x.m.array().square().sum());
  if (tape && x.id >= 0) {
    out.id = tape->alloc(1, 1);
    auto xsave = save<S>(x.m);
    const int x_id = x.id, out_id = out.id;
    tape->record("sum_squares", [xsave, x_id, out_id](Tape<S>& tp) {
      tp.grad(x_id) += S(2) * tp.grad(out_id)(0, 0) * (*xsave);
    });
  }
  return out;
}

template <class S>
TracedMat<S> sum_squares(Tape<S>* tape, const Traced<S>& x) {
  return sum_squares(tape, as_mat(x));
}

}  // namespace socc::nn
