// Copyright Contributors to the socc Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle.hpp"
#include "socc/gradcheck.hpp"
#include "socc/sparse_tensor.hpp"

using namespace socc;

namespace {

SparseTensor<float> tensor_of(std::vector<Coordinate> coords,
                              std::vector<std::vector<float>> feats,
                              int stride = 1) {
  MatX<float> f(Eigen::Index(feats.size()),
                feats.empty() ? 0 : Eigen::Index(feats[0].size()));
  for (std::size_t r = 0; r < feats.size(); ++r)
    for (std::size_t c = 0; c < feats[r].size(); ++c)
      f(Eigen::Index(r), Eigen::Index(c)) = feats[r][c];
  return SparseTensor<float>(CoordSet::make(std::move(coords), stride),
                             std::move(f));
}

}  // namespace

TEST_CASE("voxelize maps points to the expected voxels") {
  const GridSpec spec = GridSpec::defaults();
  std::vector<FeaturePoint<float>> pts;
  pts.push_back({Vec3d(0, 0, 0), VecX<float>::Ones(1)});
  auto t = voxelize(pts, spec);
  REQUIRE(t.n() == 1);
  CHECK(t.cs->at(0) == Coordinate{0, 100, 100, 2});

  pts.clear();
  pts.push_back({Vec3d(-40, -40, -1), VecX<float>::Ones(1)});
  t = voxelize(pts, spec);
  REQUIRE(t.n() == 1);
  CHECK(t.cs->at(0) == Coordinate{0, 0, 0, 0});
  CHECK(t.stride() == 1);
}

TEST_CASE("voxelize averages features of points sharing a voxel") {
  const GridSpec spec = GridSpec::defaults();
  std::vector<FeaturePoint<float>> pts;
  pts.push_back({Vec3d(0.0, 0.0, 0.0), VecX<float>::Constant(1, 2.f)});
  pts.push_back({Vec3d(0.1, 0.1, 0.1), VecX<float>::Constant(1, 4.f)});
  auto t = voxelize(pts, spec);
  REQUIRE(t.n() == 1);
  CHECK(t.feats(0, 0) == doctest::Approx(3.f));
}

TEST_CASE("voxelize drops out-of-bounds points and checks feature widths") {
  const GridSpec spec = GridSpec::defaults();
  std::vector<FeaturePoint<float>> pts;
  pts.push_back({Vec3d(1000, 0, 0), VecX<float>::Ones(2)});
  pts.push_back({Vec3d(0, 0, 100), VecX<float>::Ones(2)});
  CHECK(voxelize(pts, spec).n() == 0);

  pts.push_back({Vec3d(0, 0, 0), VecX<float>::Ones(3)});
  CHECK_THROWS_AS(voxelize(pts, spec), DataError);
}

TEST_CASE("voxelize round-trip: centers stay within half a voxel") {
  const GridSpec spec = GridSpec::defaults();
  Rng rng(7);
  std::vector<FeaturePoint<float>> pts;
  for (int i = 0; i < 500; ++i)
    pts.push_back({Vec3d(rng.uniform(-40, 40), rng.uniform(-40, 40),
                         rng.uniform(-1, 5.4)),
                   VecX<float>::Ones(1)});
  auto t = voxelize(pts, spec);
  // Every input voxelizes somewhere, voxel centers are within res/2 (inf
  // norm) of some input, and no duplicates exist by construction.
  for (std::int32_t r = 0; r < t.n(); ++r) {
    const auto& c = t.cs->at(r);
    const Vec3d center = spec.center_of(Vec3i(c.i, c.j, c.k));
    double best = 1e9;
    for (const auto& p : pts)
      best = std::min(best, (p.p - center).cwiseAbs().maxCoeff());
    CHECK(best <= spec.resolution / 2 + 1e-9);
  }
}

TEST_CASE("kernel map: single voxel self-pair") {
  auto cs = CoordSet::make({{0, 0, 0, 0}}, 1);
  auto km = build_kernel_map(*cs, *cs, Vec3i(3, 3, 3));
  CHECK(km->pair_count() == 1);
  // The only pair sits at the zero offset.
  for (std::size_t d = 0; d < km->offsets.size(); ++d)
    if (!km->in_rows[d].empty())
      CHECK(km->offsets[d] == Offset{0, 0, 0});
}

TEST_CASE("kernel map: two voxels along x, kernel 3 -> 4 pairs") {
  auto cs = CoordSet::make({{0, 0, 0, 0}, {0, 1, 0, 0}}, 1);
  auto km = build_kernel_map(*cs, *cs, Vec3i(3, 1, 1));
  CHECK(km->pair_count() == 4);
  CHECK(oracle::kernel_map_pairs(*km) ==
        oracle::brute_force_pairs(*cs, *cs, Vec3i(3, 1, 1), false));
}

TEST_CASE("kernel map: empty input -> empty map") {
  auto cs = CoordSet::empty();
  auto km = build_kernel_map(*cs, *cs, Vec3i(3, 3, 3));
  CHECK(km->pair_count() == 0);
}

TEST_CASE("kernel map matches the O(n^2) oracle on random sets") {
  Rng rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = int(rng.uniform_int(1, 500));
    auto in = nn::random_coords(rng, n, 12, 1, 2);
    // forward, same coords
    auto km = build_kernel_map(*in, *in, Vec3i(3, 3, 3));
    CHECK(oracle::kernel_map_pairs(*km) ==
          oracle::brute_force_pairs(*in, *in, Vec3i(3, 3, 3), false));
    // forward, strided output
    auto down = downsample_coords(*in, 2);
    auto km2 = build_kernel_map(*in, *down, Vec3i(3, 3, 3));
    CHECK(oracle::kernel_map_pairs(*km2) ==
          oracle::brute_force_pairs(*in, *down, Vec3i(3, 3, 3), false));
    // transposed, generative output
    auto up = generative_expand(*down, Vec3i(3, 3, 3), 2);
    auto km3 = build_kernel_map(*down, *up, Vec3i(3, 3, 3), true);
    CHECK(oracle::kernel_map_pairs(*km3) ==
          oracle::brute_force_pairs(*down, *up, Vec3i(3, 3, 3), true));
  }
}

TEST_CASE("downsample_coords") {
  auto a = downsample_coords(*CoordSet::make({{0, 0, 0, 0}, {0, 1, 1, 1}}, 1), 2);
  CHECK(a->size() == 1);
  CHECK(a->at(0) == Coordinate{0, 0, 0, 0});
  CHECK(a->stride() == 2);

  auto b = downsample_coords(*CoordSet::make({{0, 0, 0, 0}}, 1), 2);
  CHECK(b->size() == 1);

  auto c = downsample_coords(
      *CoordSet::make({{0, 2, 0, 0}, {0, 3, 0, 0}, {0, 4, 0, 0}}, 1), 2);
  REQUIRE(c->size() == 2);
  CHECK(c->find({0, 2, 0, 0}) >= 0);
  CHECK(c->find({0, 4, 0, 0}) >= 0);
}

TEST_CASE("generative_expand examples and bounds") {
  auto one = CoordSet::make({{0, 0, 0, 0}}, 1);
  auto g = generative_expand(*one, Vec3i(3, 3, 3), 1);
  CHECK(g->size() == 27);
  CHECK(g->stride() == 1);

  CHECK(generative_expand(*CoordSet::empty(), Vec3i(3, 3, 3), 1)->size() == 0);

  auto two = CoordSet::make({{0, 0, 0, 0}, {0, 1, 0, 0}}, 1);
  CHECK(generative_expand(*two, Vec3i(3, 3, 3), 1)->size() == 36);

  // Superset and growth-bound properties on random sets.
  Rng rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    auto cs = nn::random_coords(rng, int(rng.uniform_int(1, 60)), 10, 2);
    auto ex = generative_expand(*cs, Vec3i(3, 3, 3), 2);
    CHECK(ex->size() <= cs->size() * 27);
    for (const auto& c : cs->coords()) CHECK(ex->find(c) >= 0);
  }
}

TEST_CASE("prune keeps the selected rows in order") {
  auto t = tensor_of({{0, 0, 0, 0}, {0, 1, 0, 0}, {0, 2, 0, 0}},
                     {{1.f}, {2.f}, {3.f}});
  auto all = prune(t, {true, true, true});
  CHECK(all.n() == 3);
  CHECK(all.feats == t.feats);

  auto none = prune(t, {false, false, false});
  CHECK(none.n() == 0);

  auto some = prune(t, {true, false, true});
  REQUIRE(some.n() == 2);
  CHECK(some.feats(0, 0) == 1.f);
  CHECK(some.feats(1, 0) == 3.f);
  CHECK(some.cs->at(1) == Coordinate{0, 2, 0, 0});

  CHECK_THROWS_AS(prune(t, {true}), DataError);
}

TEST_CASE("prune popcount property and idempotence") {
  Rng rng(5);
  auto cs = nn::random_coords(rng, 40, 8);
  SparseTensor<float> t(cs, nn::random_feats<float>(rng, 40, 3));
  std::vector<bool> keep(40);
  int expected = 0;
  for (auto&& k : keep) {
    k = rng.uniform(0, 1) < 0.5;
    expected += k;
  }
  auto p = prune(t, keep);
  CHECK(p.n() == expected);
  auto again = prune(p, std::vector<bool>(std::size_t(p.n()), true));
  CHECK(again.n() == p.n());
  CHECK(again.feats == p.feats);
}

TEST_CASE("to_dense: empty, one-hot, tie-break") {
  const GridSpec spec =
      GridSpec::from_bounds(Vec3d(0, 0, 0), Vec3d(1.6, 1.6, 1.6), 0.4);

  auto empty = SparseTensor<float>::empty_like_width(18);
  auto grid = to_dense(empty, spec);
  CHECK(grid.count_label(free_label()) == std::size_t(spec.cell_count()));

  MatX<float> onehot = MatX<float>::Zero(1, 18);
  onehot(0, 4) = 1.f;
  auto t = SparseTensor<float>(CoordSet::make({{0, 1, 1, 1}}, 1), onehot);
  grid = to_dense(t, spec);
  CHECK(grid.at(1, 1, 1) == 4);
  CHECK(grid.count_label(free_label()) == std::size_t(spec.cell_count() - 1));

  // Tie between classes 0 and 1 resolves to the lowest index.
  MatX<float> tie = MatX<float>::Constant(1, 2, 0.2f);
  auto t2 = SparseTensor<float>(CoordSet::make({{0, 0, 0, 0}}, 1), tie);
  grid = to_dense(t2, spec, true, 2);
  CHECK(grid.at(0, 0, 0) == 0);

  // Out-of-bounds coordinates violate the contract.
  auto bad = SparseTensor<float>(CoordSet::make({{0, 7, 0, 0}}, 1),
                                 MatX<float>::Ones(1, 2));
  CHECK_THROWS_AS(to_dense(bad, spec), ContractViolation);
}

TEST_CASE("coordinate invariants: duplicates and stride divisibility") {
  CHECK_THROWS_AS(CoordSet::make({{0, 0, 0, 0}, {0, 0, 0, 0}}, 1),
                  ContractViolation);
  CHECK_THROWS_AS(CoordSet::make({{0, 1, 0, 0}}, 2), ContractViolation);
  CHECK_NOTHROW(CoordSet::make({{3, 2, -2, 4}}, 2));  // batch exempt
}

TEST_CASE("voxelize never emits duplicate coordinates") {
  Rng rng(23);
  const GridSpec spec = GridSpec::defaults();
  std::vector<FeaturePoint<float>> pts;
  for (int i = 0; i < 2000; ++i)
    pts.push_back({Vec3d(rng.uniform(-45, 45), rng.uniform(-45, 45),
                         rng.uniform(-2, 6)),
                   VecX<float>::Ones(2)});
  // CoordSet::make throws on duplicates, so construction is the check.
  CHECK_NOTHROW(voxelize(pts, spec));
}
