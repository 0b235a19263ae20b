// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#include "socc/gradcheck.hpp"

#include <functional>
#include <iomanip>

#include "socc/network.hpp"

namespace socc::nn {
namespace {

using D = double;
using Fwd = std::function<TracedMat<D>(Tape<D>*)>;

struct OpCheck {
  const char* name;
  // Builds one random instance: fills params and returns the forward closure.
  std::function<Fwd(Rng&, std::vector<Param<D>*>&)> make;
  int max_entries = 24;
};

Param<D>* make_input(std::vector<std::unique_ptr<Param<D>>>& owned,
                     std::vector<Param<D>*>& refs, Rng& rng, Eigen::Index rows,
                     Eigen::Index cols, double scale = 1.0) {
  auto p = std::make_unique<Param<D>>();
  p->init("input", {std::uint32_t(rows), std::uint32_t(cols)}, rows, cols);
  p->value = random_feats<D>(rng, rows, cols, scale);
  refs.push_back(p.get());
  owned.push_back(std::move(p));
  return owned.back().get();
}

// Each OpCheck::make shares this storage for inputs and layers so the
// closures stay valid across fd_check calls.
struct Instance {
  std::vector<std::unique_ptr<Param<D>>> inputs;
  std::vector<std::unique_ptr<Conv<D>>> convs;
  std::vector<std::unique_ptr<BatchNorm<D>>> bns;
  std::vector<std::unique_ptr<SqueezeExcite<D>>> ses;
  std::vector<std::unique_ptr<Model<D>>> models;
  CoordSet::Ptr cs, cs2;
  std::vector<std::uint8_t> labels;
  std::vector<bool> mask;
  VecX<D> weights;
  std::vector<OccupancyGrid> grids;
  GtPyramid pyramid;
  std::vector<const OccupancyGrid*> grid_ptrs;
  GridSpec grid;
};

std::vector<OpCheck> op_checks(std::shared_ptr<Instance>& store) {
  std::vector<OpCheck> checks;

  auto add = [&](const char* name,
                 std::function<Fwd(Rng&, std::vector<Param<D>*>&)> make,
                 int entries = 24) {
    checks.push_back(OpCheck{name, std::move(make), entries});
  };

  add("sparse_conv", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const int n = int(rng.uniform_int(4, 24));
    const Eigen::Index cin = rng.uniform_int(1, 4), cout = rng.uniform_int(1, 4);
    st.cs = random_coords(rng, n, 5);
    auto* x = make_input(st.inputs, ps, rng, st.cs->size(), cin);
    st.convs.push_back(std::make_unique<Conv<D>>(
        "conv", Vec3i(3, 3, 1), cin, cout, rng));
    auto* cv = st.convs.back().get();
    cv->collect(ps);
    auto cs = st.cs;
    return [x, cv, cs](Tape<D>* tp) {
      auto in = leaf_from_param(tp, cs, *x);
      return sum_squares(tp, sparse_conv(tp, in, *cv));
    };
  });

  add("sparse_conv_down", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const int n = int(rng.uniform_int(6, 24));
    const Eigen::Index cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 3);
    st.cs = random_coords(rng, n, 6);
    auto* x = make_input(st.inputs, ps, rng, st.cs->size(), cin);
    st.convs.push_back(
        std::make_unique<Conv<D>>("down", Vec3i(3, 3, 3), cin, cout, rng));
    auto* cv = st.convs.back().get();
    cv->collect(ps);
    auto cs = st.cs;
    return [x, cv, cs](Tape<D>* tp) {
      auto in = leaf_from_param(tp, cs, *x);
      return sum_squares(tp, sparse_conv_down(tp, in, *cv, 2));
    };
  });

  add("generative_transposed_conv",
      [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
        auto& st = *store;
        const int n = int(rng.uniform_int(3, 12));
        const Eigen::Index cin = rng.uniform_int(1, 3),
                           cout = rng.uniform_int(1, 3);
        st.cs = random_coords(rng, n, 4, /*stride=*/2);
        auto* x = make_input(st.inputs, ps, rng, st.cs->size(), cin);
        st.convs.push_back(std::make_unique<Conv<D>>(
            "tconv", Vec3i(3, 3, 3), cin, cout, rng));
        auto* cv = st.convs.back().get();
        cv->collect(ps);
        auto cs = st.cs;
        return [x, cv, cs](Tape<D>* tp) {
          auto in = leaf_from_param(tp, cs, *x);
          return sum_squares(tp, generative_transposed_conv(tp, in, *cv, 2));
        };
      });

  add("batch_norm", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const int n = int(rng.uniform_int(3, 20));
    const Eigen::Index c = rng.uniform_int(1, 5);
    st.cs = random_coords(rng, n, 5);
    auto* x = make_input(st.inputs, ps, rng, st.cs->size(), c);
    st.bns.push_back(std::make_unique<BatchNorm<D>>("bn", c));
    auto* bn = st.bns.back().get();
    ps.push_back(&bn->gamma);
    ps.push_back(&bn->beta);
    auto cs = st.cs;
    return [x, bn, cs](Tape<D>* tp) {
      auto in = leaf_from_param(tp, cs, *x);
      return sum_squares(tp, batch_norm(tp, in, *bn, /*training=*/true));
    };
  });

  add("relu", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const int n = int(rng.uniform_int(2, 20));
    const Eigen::Index c = rng.uniform_int(1, 4);
    st.cs = random_coords(rng, n, 5);
    auto* x = make_input(st.inputs, ps, rng, st.cs->size(), c);
    // Keep activations away from the kink.
    x->value = x->value.unaryExpr(
        [](D v) { return v >= 0 ? v + 0.05 : v - 0.05; });
    auto cs = st.cs;
    return [x, cs](Tape<D>* tp) {
      auto in = leaf_from_param(tp, cs, *x);
      return sum_squares(tp, relu(tp, in));
    };
  });

  add("global_avg_pool", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const int n = int(rng.uniform_int(4, 20));
    const Eigen::Index c = rng.uniform_int(1, 4);
    st.cs = random_coords(rng, n, 5, 1, /*batches=*/2);
    auto* x = make_input(st.inputs, ps, rng, st.cs->size(), c);
    auto cs = st.cs;
    return [x, cs](Tape<D>* tp) {
      auto in = leaf_from_param(tp, cs, *x);
      return sum_squares(tp, global_avg_pool(tp, in));
    };
  });

  add("squeeze_excite", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const int n = int(rng.uniform_int(3, 16));
    const Eigen::Index c = 2 * rng.uniform_int(1, 3);
    st.cs = random_coords(rng, n, 5, 1, 2);
    auto* x = make_input(st.inputs, ps, rng, st.cs->size(), c);
    st.ses.push_back(std::make_unique<SqueezeExcite<D>>("se", c, 2, rng));
    auto* se = st.ses.back().get();
    se->collect(ps);
    auto cs = st.cs;
    return [x, se, cs](Tape<D>* tp) {
      auto in = leaf_from_param(tp, cs, *x);
      return sum_squares(tp, squeeze_excite(tp, in, *se));
    };
  });

  add("concat_features", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const Eigen::Index ca = rng.uniform_int(1, 3), cb = rng.uniform_int(1, 3);
    st.cs = random_coords(rng, int(rng.uniform_int(4, 12)), 4);
    st.cs2 = random_coords(rng, int(rng.uniform_int(4, 12)), 4);
    auto* a = make_input(st.inputs, ps, rng, st.cs->size(), ca);
    auto* b = make_input(st.inputs, ps, rng, st.cs2->size(), cb);
    auto csa = st.cs, csb = st.cs2;
    return [a, b, csa, csb](Tape<D>* tp) {
      auto ta = leaf_from_param(tp, csa, *a);
      auto tb = leaf_from_param(tp, csb, *b);
      return sum_squares(tp, concat_features(tp, ta, tb));
    };
  });

  add("prune", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const int n = int(rng.uniform_int(4, 20));
    const Eigen::Index c = rng.uniform_int(1, 4);
    st.cs = random_coords(rng, n, 5);
    auto* x = make_input(st.inputs, ps, rng, st.cs->size(), c);
    st.mask.assign(std::size_t(st.cs->size()), false);
    for (auto&& m : st.mask) m = rng.uniform(0, 1) < 0.6;
    auto cs = st.cs;
    auto* mask = &st.mask;
    return [x, cs, mask](Tape<D>* tp) {
      auto in = leaf_from_param(tp, cs, *x);
      return sum_squares(tp, prune_rows(tp, in, *mask));
    };
  });

  add("bce_with_logits", [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
    auto& st = *store;
    const int n = int(rng.uniform_int(2, 24));
    st.cs = random_coords(rng, n, 6);
    auto* z = make_input(st.inputs, ps, rng, st.cs->size(), 1, 2.0);
    st.labels.assign(std::size_t(st.cs->size()), 0);
    for (auto& l : st.labels) l = rng.uniform(0, 1) < 0.5 ? 1 : 0;
    auto cs = st.cs;
    auto* labels = &st.labels;
    return [z, cs, labels](Tape<D>* tp) {
      auto in = leaf_from_param(tp, cs, *z);
      return bce_with_logits_mean(tp, as_mat(in), *labels);
    };
  });

  add("class_balanced_ce",
      [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
        auto& st = *store;
        const int n = int(rng.uniform_int(3, 24));
        const Eigen::Index c = rng.uniform_int(2, 6);
        st.cs = random_coords(rng, n, 6);
        auto* z = make_input(st.inputs, ps, rng, st.cs->size(), c, 1.5);
        st.labels.assign(std::size_t(st.cs->size()), 0);
        st.mask.assign(std::size_t(st.cs->size()), true);
        for (std::size_t r = 0; r < st.labels.size(); ++r) {
          st.labels[r] = std::uint8_t(rng.uniform_int(0, c - 1));
          st.mask[r] = rng.uniform(0, 1) < 0.85;
        }
        st.weights = VecX<D>(c);
        for (Eigen::Index i = 0; i < c; ++i)
          st.weights[i] = class_balanced_weight(rng.uniform(0.05, 1.0), 0.9);
        auto cs = st.cs;
        auto* labels = &st.labels;
        auto* mask = &st.mask;
        auto* w = &st.weights;
        return [z, cs, labels, mask, w](Tape<D>* tp) {
          auto in = leaf_from_param(tp, cs, *z);
          return weighted_cross_entropy(tp, as_mat(in), *labels, *w, mask);
        };
      });

  add("conv_bn_relu_se_chain",
      [&store](Rng& rng, std::vector<Param<D>*>& ps) -> Fwd {
        auto& st = *store;
        const int n = int(rng.uniform_int(6, 20));
        const Eigen::Index cin = rng.uniform_int(1, 3);
        const Eigen::Index mid = 2 * rng.uniform_int(1, 2);
        st.cs = random_coords(rng, n, 5, 1, 2);
        auto* x = make_input(st.inputs, ps, rng, st.cs->size(), cin);
        st.convs.push_back(std::make_unique<Conv<D>>(
            "chain.conv", Vec3i(3, 3, 3), cin, mid, rng));
        auto* cv = st.convs.back().get();
        cv->collect(ps);
        st.bns.push_back(std::make_unique<BatchNorm<D>>("chain.bn", mid));
        auto* bn = st.bns.back().get();
        ps.push_back(&bn->gamma);
        ps.push_back(&bn->beta);
        st.ses.push_back(
            std::make_unique<SqueezeExcite<D>>("chain.se", mid, 2, rng));
        auto* se = st.ses.back().get();
        se->collect(ps);
        auto cs = st.cs;
        return [x, cv, bn, se, cs](Tape<D>* tp) {
          auto in = leaf_from_param(tp, cs, *x);
          auto h = sparse_conv(tp, in, *cv);
          h = relu(tp, batch_norm(tp, h, *bn, true));
          h = squeeze_excite(tp, h, *se);
          return sum_squares(tp, h);
        };
      },
      /*entries=*/12);

  return checks;
}

// Tiny 3-scale end-to-end network: completion + segmentation with the real
// training-mode forward (teacher forcing, pruning, both losses).
Fwd make_network_instance(Rng& rng, std::shared_ptr<Instance>& store,
                          std::vector<Param<D>*>& ps) {
  auto& st = *store;
  ModelConfig cfg;
  cfg.input_channels = 3;
  cfg.enc_widths = {4, 6, 8};
  cfg.seg_widths = {4};
  cfg.seg_bottleneck = 6;
  cfg.num_classes = 4;
  cfg.se_reduction = 2;
  cfg.lambda = 0.5;
  st.grid = GridSpec::from_bounds(Vec3d(0, 0, 0), Vec3d(3.2, 3.2, 3.2), 0.4);

  st.models.push_back(
      std::make_unique<Model<D>>(cfg, st.grid, rng.next()));
  auto* model = st.models.back().get();

  st.cs = random_coords(rng, int(rng.uniform_int(6, 14)), 8, 1, 2);
  auto* x = make_input(st.inputs, ps, rng, st.cs->size(), 3);

  st.grids.assign(2, OccupancyGrid::all_free(st.grid.dims, cfg.num_classes));
  for (auto& g : st.grids)
    for (auto& l : g.labels)
      if (rng.uniform(0, 1) < 0.25)
        l = std::uint8_t(rng.uniform_int(0, cfg.num_classes - 2));
  st.grid_ptrs = {&st.grids[0], &st.grids[1]};
  st.pyramid = build_gt_pyramid(st.grid_ptrs, model->level_strides(),
                                cfg.num_classes);
  st.weights = class_weights<D>(
      ClassStats::from_counts({40, 20, 10, 60}), cfg.beta, true);

  for (auto* p : model->params())
    if (p->learnable) ps.push_back(p);

  auto cs = st.cs;
  auto* stp = store.get();
  return [x, model, cs, stp](Tape<D>* tp) {
    auto in = leaf_from_param(tp, cs, *x);
    auto out = model->forward(tp, in, &stp->pyramid, /*training=*/true);
    auto lc = completion_loss(tp, out.completion.levels, stp->pyramid);
    auto ls = segmentation_loss(tp, out.seg_logits, stp->grid_ptrs,
                                stp->weights, 4, false);
    return total_loss(tp, lc, ls, 0.5);
  };
}

// Smallest |logit| across pruning decisions; finite differences need the
// keep masks to be stable under +-h parameter nudges.
double prune_margin(Model<D>& model, std::shared_ptr<Instance>& store) {
  double margin = 1e9;
  auto in = Traced<D>(SparseTensor<D>(store->cs, store->inputs.back()->value));
  auto out = model.forward(nullptr, in, &store->pyramid, true);
  for (const auto& lvl : out.completion.levels)
    for (Eigen::Index r = 0; r < lvl.logits.t.feats.rows(); ++r)
      margin = std::min(margin, std::abs(double(lvl.logits.t.feats(r, 0))));
  return margin;
}

bool run_check(const char* name, int instances,
               const std::function<Fwd(Rng&, std::vector<Param<D>*>&)>& make,
               int max_entries, Rng& rng, std::ostream& out,
               std::shared_ptr<Instance>& store) {
  FdResult agg;
  for (int i = 0; i < instances; ++i) {
    store = std::make_shared<Instance>();
    std::vector<Param<D>*> ps;
    auto fwd = make(rng, ps);
    auto res = fd_check(ps, fwd, rng, 1e-5, 1e-4, max_entries);
    agg.merge(res);
  }
  out << "  gradcheck " << std::left << std::setw(28) << name << " instances="
      << instances << " entries=" << agg.checked << " max_rel=" << std::scientific
      << std::setprecision(2) << agg.max_rel << (agg.ok() ? "  PASS" : "  FAIL")
      << std::defaultfloat << "\n";
  if (!agg.ok()) out << "    worst: " << agg.worst << "\n";
  return agg.ok();
}

}  // namespace

bool run_gradcheck_suite(std::uint64_t seed, int instances, std::ostream& out) {
  Rng rng(seed);
  bool all_ok = true;
  std::shared_ptr<Instance> store;

  std::uint64_t op_index = 0;
  for (auto& chk : op_checks(store)) {
    Rng op_rng = rng.fork(++op_index);
    all_ok &= run_check(chk.name, instances, chk.make, chk.max_entries, op_rng,
                        out, store);
  }

  // Composite network: reseed instances whose pruning decisions sit too close
  // to the threshold for stable finite differences.
  {
    FdResult agg;
    Rng net_rng = rng.fork(0x3e71);
    for (int i = 0; i < instances; ++i) {
      Fwd fwd;
      std::vector<Param<D>*> ps;
      for (int attempt = 0; attempt < 32; ++attempt) {
        store = std::make_shared<Instance>();
        ps.clear();
        fwd = make_network_instance(net_rng, store, ps);
        if (prune_margin(*store->models.back(), store) > 1e-3) break;
      }
      auto res = fd_check(ps, fwd, net_rng, 1e-5, 1e-4, /*max_entries=*/6);
      agg.merge(res);
    }
    out << "  gradcheck " << std::left << std::setw(28)
        << "three_level_network" << " instances=" << instances
        << " entries=" << agg.checked << " max_rel=" << std::scientific
        << std::setprecision(2) << agg.max_rel
        << (agg.ok() ? "  PASS" : "  FAIL") << std::defaultfloat << "\n";
    if (!agg.ok()) out << "    worst: " << agg.worst << "\n";
    all_ok &= agg.ok();
  }
  return all_ok;
}

}  // namespace socc::nn
