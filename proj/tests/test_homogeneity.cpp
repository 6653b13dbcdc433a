#include "stratlab/catalog.hpp"
#include "stratlab/homogeneity.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace stratlab;

namespace {

const double pi = std::numbers::pi;

HomogeneityOptions cheap() {
  HomogeneityOptions o;
  o.net_size = 64;
  o.coarse_order = 3;
  o.fine_order = 8;
  return o;
}

}  // namespace

// For x/|x| on B^3 the fiber integrals are explicit. Over a half disc
// {u e + s theta}: |G| = pi/6, m = 2/3, so D_1 = 3 (2/3 - pi/6). Over a half
// ball: |G| = pi/3, m = 2 pi/3, so D_2 = 1. The mean of x/|x| is 0, so no
// constant is nearest; against the unprojected mean the distance is 1.
TEST(Defect, RadialMapClosedForms) {
  const auto f = radial_map(3);
  const double want[] = {0.0, 2.0 - pi / 2, 1.0, 1.0};
  for (int k = 0; k <= 3; ++k) {
    const auto d = homogeneity_defect(f, zeros(3), 1.0, k);
    EXPECT_NEAR(d.defect, want[k], 2e-3) << "k=" << k;
    EXPECT_EQ(d.k, k);
    EXPECT_EQ(d.frame.cols(), k);
    EXPECT_EQ(d.projection_failed, k == 3);
  }
}

TEST(Defect, ScaleInvarianceAtVertex) {
  const auto f = radial_map(3);
  const double a = homogeneity_defect(f, zeros(3), 1.0, 1, cheap()).defect;
  const double b = homogeneity_defect(f, zeros(3), 1.0 / 64, 1, cheap()).defect;
  EXPECT_NEAR(a, b, 1e-10);
}

TEST(Defect, ExactModelsHaveZeroDefect) {
  const auto c = *parse_model("constant(0,1,0)").map;
  for (int k = 0; k <= 3; ++k) EXPECT_NEAR(homogeneity_defect(c, unit(3, 0) * 0.3, 0.5, k, cheap()).defect, 0.0, 1e-12);
  const auto cyl = *parse_model("homogeneous(1,[[0,0,1]],identity)").map;
  const auto d1 = homogeneity_defect(cyl, 0.4 * unit(3, 2), 0.5, 1);
  EXPECT_LT(d1.defect, 1e-8);
  EXPECT_NEAR(std::abs(d1.frame.col(0).dot(unit(3, 2))), 1.0, 1e-6);
  EXPECT_LT(homogeneity_defect(cyl, zeros(3), 1.0, 0, cheap()).defect, 1e-10);
}

TEST(Defect, NondecreasingInOrder) {
  // Every (k+1)-homogeneous map is k-homogeneous, so D_k <= D_{k+1}.
  for (const char* id : {"radial(3)", "geodesic(2,0,0)", "perturbed(radial(3),0.2,3)"}) {
    const auto f = *parse_model(id).map;
    for (const Vec& y : {Vec(zeros(3)), Vec(0.3 * unit(3, 1)), Vec(-0.2 * unit(3, 0) + 0.1 * unit(3, 2))}) {
      double prev = -1.0;
      for (int k = 0; k <= 3; ++k) {
        const double d = homogeneity_defect(f, y, 0.5, k, cheap()).defect;
        EXPECT_GE(d, prev - 1e-3) << id << " k=" << k;
        EXPECT_GE(d, -1e-12);
        EXPECT_LE(d, 4.0 + 1e-12);
        prev = std::max(prev, d);
      }
    }
  }
}

TEST(Defect, GeodesicGrowsWithScale) {
  Vec a(3);
  a << 1, 0, 0;
  const auto f = geodesic_map(a);
  double prev = 0.0;
  for (double r : {0.125, 0.25, 0.5, 1.0}) {
    const double d = homogeneity_defect(f, zeros(3), r, 2, cheap()).defect;
    EXPECT_GT(d, prev);
    prev = d;
  }
  // The best 2-homogeneous map is a step across the level plane, and the
  // map is nearly linear on small balls, so D_2 scales like r^2.
  const double d2 = homogeneity_defect(f, zeros(3), 0.02, 2).defect;
  const double d1 = homogeneity_defect(f, zeros(3), 0.01, 2).defect;
  EXPECT_NEAR(d2 / d1, 4.0, 0.05);
}

TEST(Defect, FittedLinkIsTheRadialAverage) {
  // For x/|x| about the vertex the link at each node is the node itself.
  const auto d = homogeneity_defect(radial_map(3), zeros(3), 1.0, 0);
  ASSERT_EQ(d.link.kind, LinkMap::Kind::Sampled);
  ASSERT_EQ(d.link.nodes.size(), d.link.node_values.size());
  for (std::size_t i = 0; i < d.link.nodes.size(); ++i)
    EXPECT_LT((d.link.node_values[i] - d.link.nodes[i]).norm(), 1e-12);
  const auto h = d.model();
  EXPECT_LT((h.value(d.link.nodes[3] * 0.5) - d.link.nodes[3]).norm(), 1e-12);
}

TEST(Defect, Errors) {
  const auto f = radial_map(3);
  EXPECT_THROW(homogeneity_defect(f, zeros(3), 1.0, 4), OutOfDomain);
  EXPECT_THROW(homogeneity_defect(f, unit(3, 0), 1.5, 1), OutOfDomain);
  HomogeneityOptions o = cheap();
  o.initial_planes.push_back(Mat::Identity(3, 2));
  EXPECT_THROW(homogeneity_defect(f, zeros(3), 1.0, 1, o), DegenerateFrame);
}

TEST(Grassmannian, NetIsOrthonormal) {
  for (auto [n, k] : {std::pair{3, 1}, std::pair{4, 2}, std::pair{5, 3}}) {
    const auto net = detail::grassmannian_net(n, k, 32, 0);
    ASSERT_EQ(net.size(), 32u);
    for (const Mat& V : net) EXPECT_LT((V.transpose() * V - Mat::Identity(k, k)).norm(), 1e-12);
  }
}

TEST(HL, ClassificationAndDomain) {
  const auto f = *parse_model("geodesic(2,0,0)").map;
  const std::vector<Vec> grid = {zeros(3), 0.5 * unit(3, 0), 1.9 * unit(3, 1)};
  const auto hl = classify_hl(f, grid, 2.0, 0.5, 1e-3, cheap());
  EXPECT_EQ(hl[0], HL::H);
  EXPECT_EQ(hl[1], HL::H);
  EXPECT_EQ(hl[2], HL::OutOfDomain);
  const auto r = radial_map(3);
  EXPECT_EQ(classify_hl(r, {zeros(3)}, 2.0, 0.25, 1e-3, cheap())[0], HL::L);
  EXPECT_EQ(hl_char(HL::H), 'H');
}

TEST(ConeSplit, ExactInputSplits) {
  const auto f = *parse_model("homogeneous(1,[[1,0,0]],identity)").map;
  Mat V(3, 1);
  V.col(0) = unit(3, 0);
  // z off the axis: the map is not 2-homogeneous, so D_2 stays large.
  const auto rep = cone_splitting_check(f, zeros(3), 0.5 * unit(3, 1), V, 0.5);
  EXPECT_LT(rep.dk_y, 1e-8);
  EXPECT_GT(rep.dk1.defect, 0.1);
  EXPECT_FALSE(rep.below_margin);
  // The 0-homogeneous radial map has D_0 = 0 at the vertex but not at z.
  const auto r = radial_map(3);
  const auto rep0 = cone_splitting_check(r, zeros(3), 0.5 * unit(3, 2), Mat(3, 0), 0.5);
  EXPECT_LT(rep0.dk_y, 1e-8);
  EXPECT_GT(rep0.d0_z, 0.01);
  EXPECT_THROW(cone_splitting_check(f, zeros(3), 0.5 * unit(3, 0), V, 0.5), PlaneDegenerate);
}

TEST(ConeSplit, TwoCentresGiveTranslationInvariance) {
  // A map 0-homogeneous about both y and z is invariant along z - y.
  const auto f = *parse_model("homogeneous(1,[[0,0,1]],identity)").map;
  const auto rep = cone_splitting_check(f, zeros(3), 0.5 * unit(3, 2), Mat(3, 0), 0.5);
  EXPECT_LT(rep.dk_y, 1e-8);
  EXPECT_LT(rep.d0_z, 1e-8);
  EXPECT_LT(rep.dk1.defect, 1e-8);
}
