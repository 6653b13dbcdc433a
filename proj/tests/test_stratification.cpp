#include "stratlab/catalog.hpp"
#include "stratlab/stratification.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

using namespace stratlab;

namespace {

HomogeneityOptions cheap() {
  HomogeneityOptions o;
  o.net_size = 64;
  o.coarse_order = 3;
  o.fine_order = 8;
  return o;
}

std::vector<Vec> random_points(int n, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i) {
    Vec p(n);
    for (int j = 0; j < n; ++j) p(j) = u(rng);
    out.push_back(p);
  }
  return out;
}

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

}  // namespace

TEST(Grid, UniformLatticeInsideBall) {
  const auto g = uniform_grid(2, 0.5);
  // (0,0), 4 at distance 0.5, 4 at distance 1, 4 diagonals at 0.707.
  EXPECT_EQ(g.size(), 13u);
  for (const auto& p : g) EXPECT_LE(p.norm(), 1.0 + 1e-12);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_TRUE(lex_less(g[i - 1], g[i]));
}

TEST(Grid, CanonicalDropsDuplicates) {
  Vec a(2), b(2);
  a << 0.5, 0.25;
  b << 0.25, 0.5;
  const auto c = canonical_points({a, b, a, Vec(a + Vec::Constant(2, 1e-13))});
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], b);
}

TEST(Grid, GradedRefinesAroundSingularity) {
  const auto f = radial_map(3);
  GradedGridOptions o;
  o.levels = 4;
  const auto g = graded_grid(f, o);
  int near = 0;
  bool has_origin = false;
  for (const auto& p : g) {
    near += p.norm() <= std::sqrt(3.0) / 16 + 1e-12;
    has_origin |= p.norm() == 0.0;
  }
  EXPECT_TRUE(has_origin);
  // The level 4 stencil {-1,0,1}^3 / 16 lies inside B_{sqrt(3)/16}.
  EXPECT_GE(near, 1 + 26);
  const auto smooth = graded_grid(*parse_model("geodesic(1,0,0)").map, o);
  EXPECT_EQ(smooth.size(), uniform_grid(3, 0.25).size());
}

TEST(PointIndex, MatchesBruteForce) {
  for (int n : {2, 3, 5}) {
    const auto pts = random_points(n, 400, n);
    PointIndex idx(pts, 0.1);
    for (const Vec& q : random_points(n, 50, 100 + n)) {
      for (double r : {0.05, 0.2, 0.7}) {
        std::set<std::size_t> got, want;
        idx.for_each_within(q, r, [&](std::size_t i) { got.insert(i); });
        for (std::size_t i = 0; i < pts.size(); ++i)
          if ((pts[i] - q).norm() <= r) want.insert(i);
        EXPECT_EQ(got, want);
      }
    }
  }
}

TEST(Cover, GreedyCoversAndSeparates) {
  const auto pts = random_points(3, 500, 7);
  for (double r : {0.1, 0.3}) {
    const auto c = greedy_cover(pts, r);
    for (const auto& p : pts) {
      double best = 1e9;
      for (const auto& q : c) best = std::min(best, (p - q).norm());
      EXPECT_LE(best, r);
    }
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) EXPECT_GT((c[i] - c[j]).norm(), r);
  }
  EXPECT_TRUE(greedy_cover({}, 0.1).empty());
}

TEST(Bounds, PigeonholeAndTupleClasses) {
  EXPECT_EQ(bad_scale_bound(1.0, 0.5, 3), 8);
  EXPECT_EQ(bad_scale_bound(0.0, 0.5, 3), 1);
  EXPECT_EQ(bad_scale_bound(std::numeric_limits<double>::infinity(), 1.0, 3),
            std::numeric_limits<long long>::max());
  EXPECT_THROW(bad_scale_bound(1.0, 0.0, 3), OutOfDomain);
  for (int j = 0; j <= 12; ++j) {
    for (long long K : {0LL, 1LL, 3LL, 20LL}) {
      double want = 0.0;
      for (int i = 0; i <= std::min<long long>(K, j); ++i) want += binomial(j, i);
      EXPECT_DOUBLE_EQ(tuple_class_bound(j, K), want);
    }
  }
}

TEST(Bounds, BadScaleCountsRespectPigeonhole) {
  for (const char* id : {"radial(3)", "geodesic(2,0,0)", "perturbed(radial(3),0.1,2)"}) {
    const auto f = *parse_model(id).map;
    for (const Vec& x : {Vec(zeros(3)), Vec(0.2 * unit(3, 0)), Vec(0.5 * unit(3, 2))}) {
      const auto scan = bad_scales(f, x, 0.5, 8);
      ASSERT_FALSE(scan.scales.empty());
      for (double delta : {0.1, 0.5, 1.0}) {
        EXPECT_LE(scan.count(delta), bad_scale_bound(f.energy_bound(), delta, 3)) << id;
      }
      for (double w : scan.drops) EXPECT_GE(w, -1e-8);
    }
  }
}

TEST(Strata, NestedAndVertexDeep) {
  const auto f = radial_map(3);
  StratumOptions so;
  so.j_max = 4;
  so.homogeneity = cheap();
  std::vector<Vec> grid = {zeros(3), 0.5 * unit(3, 0), 0.25 * unit(3, 1), 0.1 * unit(3, 2)};
  const auto sg = effective_stratum(f, grid, {0, 1, 2}, so);
  // The vertex is exactly 0-homogeneous and far from 1-homogeneous.
  EXPECT_EQ(sg.depth[sg.k_index(0)][0], 4);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    EXPECT_LE(sg.depth[sg.k_index(0)][p], sg.depth[sg.k_index(1)][p]);
    EXPECT_LE(sg.depth[sg.k_index(1)][p], sg.depth[sg.k_index(2)][p]);
  }
  // Off the vertex the map is smooth, so small balls are nearly 3-homogeneous.
  EXPECT_LT(sg.depth[sg.k_index(0)][1], 4);
  EXPECT_THROW(effective_stratum(f, grid, {3}, so), OutOfDomain);
  EXPECT_THROW(sg.k_index(5), OutOfDomain);
}

TEST(Strata, TupleClassesBounded) {
  const auto f = radial_map(3);
  StratumOptions so;
  so.j_max = 8;
  so.homogeneity = cheap();
  GradedGridOptions g;
  g.background = 0.5;
  g.levels = 3;
  auto sg = effective_stratum(f, graded_grid(f, g), {1}, so);
  assign_tuples(f, sg, 0.05, 0.0, so.homogeneity);
  const long long K = bad_scale_bound(f.energy_bound(), 0.05, 3);
  for (int j = 1; j <= 8; ++j) {
    std::set<std::string> classes;
    for (std::size_t p : sg.members(1, j)) classes.insert(sg.tuple(p, j));
    EXPECT_LE(static_cast<double>(classes.size()), tuple_class_bound(j, K));
    EXPECT_LE(classes.size(), std::size_t(1) << j);
  }
}

TEST(Tubes, PointAndSegmentSlopes) {
  std::vector<TubeEstimate> pt, seg;
  std::vector<Vec> segment;
  for (int i = 0; i <= 2048; ++i) segment.push_back(Vec(unit(3, 0) * (-0.5 + i / 2048.0)));
  for (int e = -7; e <= -2; ++e) {
    const double r = std::ldexp(1.0, e);
    pt.push_back(tube_volume({zeros(3)}, 3, r, 20000, 1));
    seg.push_back(tube_volume(segment, 3, r, 20000, 1));
  }
  EXPECT_NEAR(minkowski_fit(pt).slope, 3.0, 0.15);
  EXPECT_NEAR(minkowski_fit(seg).slope, 2.0, 0.15);
  // A single point tube is exactly a ball: the union estimator has no variance.
  EXPECT_NEAR(pt[0].volume, ball_volume(3) * std::pow(2.0, -21), 1e-12);
}

TEST(Tubes, DenseSegmentMatchesCylinderWithCaps) {
  // Many overlapping balls around a thin tube must not push Auto onto the
  // uniform estimator, which sees almost no hits at these radii.
  std::vector<Vec> segment;
  for (int i = 0; i <= 4096; ++i) segment.push_back(Vec(unit(3, 0) * (-0.5 + i / 4096.0)));
  for (double r : {0.05, std::ldexp(1.0, -5), std::ldexp(1.0, -4)}) {
    const auto t = tube_volume(segment, 3, r, 20000, 1);
    const double want = std::numbers::pi * r * r + 4 * std::numbers::pi / 3 * r * r * r;
    EXPECT_TRUE(t.union_sampling) << r;
    EXPECT_NEAR(t.volume, want, 3 * t.error + 1e-3 * want) << r;
  }
}

TEST(Tubes, UniformAndUnionAgree) {
  const auto S = random_points(3, 30, 4);
  std::vector<Vec> in;
  for (const auto& p : S) in.push_back(0.6 * p / std::max(1.0, p.norm()));
  const auto a = tube_volume(in, 3, 0.1, 200000, 2, TubeMethod::Uniform);
  const auto b = tube_volume(in, 3, 0.1, 200000, 3, TubeMethod::Union);
  EXPECT_FALSE(a.union_sampling);
  EXPECT_TRUE(b.union_sampling);
  EXPECT_NEAR(a.volume, b.volume, 4.0 * (a.error + b.error));
}

TEST(Tubes, MinkowskiFitOnSyntheticData) {
  std::vector<TubeEstimate> t;
  for (int e = 1; e <= 6; ++e) {
    TubeEstimate x;
    x.r = std::ldexp(1.0, -e);
    x.volume = 3.0 * std::pow(x.r, 1.7);
    t.push_back(x);
  }
  const auto fit = minkowski_fit(t);
  EXPECT_NEAR(fit.slope, 1.7, 1e-12);
  EXPECT_NEAR(std::exp(fit.intercept), 3.0, 1e-12);
  EXPECT_NEAR(fit.residual, 0.0, 1e-12);
  t.resize(3);
  EXPECT_THROW(minkowski_fit(t), InsufficientData);
}

TEST(Decompose, CoversEveryStratumPoint) {
  const auto f = radial_map(3);
  StratumOptions so;
  so.j_max = 5;
  so.homogeneity = cheap();
  GradedGridOptions g;
  g.background = 0.25;
  g.levels = 5;
  auto sg = effective_stratum(f, graded_grid(f, g), {0}, so);
  assign_tuples(f, sg, 0.05, 0.0, so.homogeneity);
  const auto cr = decompose(sg, 0);
  ASSERT_EQ(cr.levels.size(), 6u);
  for (const auto& lvl : cr.levels) {
    if (lvl.j == 0) continue;
    for (std::size_t p : sg.members(0, lvl.j)) {
      const auto it = lvl.balls.find(sg.tuple(p, lvl.j));
      ASSERT_NE(it, lvl.balls.end());
      double best = 1e9;
      for (const auto& c : it->second) best = std::min(best, (sg.points[p] - c).norm());
      EXPECT_LE(best, lvl.radius * (1 + 1e-12));
    }
    // The 0-stratum of x/|x| concentrates at the vertex, so the count stays
    // bounded as the radius shrinks.
    EXPECT_LE(lvl.total(), 16u);
  }
  EXPECT_THROW(decompose(sg, 0, 9), OutOfDomain);
}

TEST(Decompose, GrowthExponentSynthetic) {
  CoverResult cr;
  for (int j = 0; j <= 6; ++j) {
    CoverLevel l;
    l.j = j;
    l.radius = std::ldexp(1.0, -j);
    l.balls[""] = std::vector<Vec>(std::size_t(1) << j, zeros(2));
    cr.levels.push_back(l);
  }
  EXPECT_NEAR(count_growth_exponent(cr, 0.5, 2, 6), 1.0, 1e-12);
}
