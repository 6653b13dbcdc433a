#include "stratlab/catalog.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace stratlab;

namespace {

const double pi = std::numbers::pi;

std::vector<Vec> halton_points(int n, int count, double rad, std::uint64_t seed) {
  HaltonSequence s(n + 1, seed);
  std::vector<double> u(n + 1);
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i) {
    s.point(i, u.data());
    out.push_back(rad * ball_point_from_uniforms(u.data(), n));
  }
  return out;
}

ManifoldMap map_of(const std::string& id) { return *parse_model(id).map; }

}  // namespace

TEST(Radial, ValuesAndJacobian) {
  const auto f = radial_map(3);
  for (const Vec& x : halton_points(3, 50, 1.9, 1)) {
    EXPECT_NEAR((f.value(x) - x / x.norm()).norm(), 0.0, 1e-15);
    const Vec h = x / x.norm();
    const Mat j = (Mat::Identity(3, 3) - h * h.transpose()) / x.norm();
    EXPECT_LT((f.jacobian(x) - j).norm(), 1e-12 * j.norm());
    EXPECT_NEAR(f.gradient_norm_sq(x), 2.0 / x.squaredNorm(), 1e-12 / x.squaredNorm());
  }
}

TEST(Radial, DomainAndSingularity) {
  const auto f = radial_map(4);
  EXPECT_THROW(f.evaluate(zeros(4)), SingularPoint);
  EXPECT_THROW(f.evaluate(3.0 * unit(4, 0)), OutOfDomain);
  EXPECT_THROW(f.evaluate(zeros(3)), OutOfDomain);
  EXPECT_NEAR(f.singular_distance(0.5 * unit(4, 2)), 0.5, 1e-15);
  EXPECT_THROW(radial_map(1), UnsupportedModel);
}

TEST(Radial, EnergyBoundClosedForm) {
  // Integral of (n-1)/|x|^2 over B_2 in R^n.
  EXPECT_NEAR(radial_map(3).energy_bound(), 16 * pi, 1e-12);
  EXPECT_NEAR(radial_map(4).energy_bound(), 3 * 2 * pi * pi * 4 / 2, 1e-10);
  EXPECT_TRUE(std::isinf(radial_map(2).energy_bound()));
}

TEST(Validate, CatalogMapsPass) {
  for (const char* id : {"radial(3)", "radial(4,3)", "geodesic(2,0,0)", "geodesic(1,1,0,0)",
                         "constant(0,0,1)", "perturbed(radial(3),0.1,4)"}) {
    const auto rep = validate(map_of(id), 128);
    EXPECT_TRUE(rep.unit_ok()) << id;
    EXPECT_TRUE(rep.gradient_ok) << id;
    EXPECT_TRUE(rep.energy_ok) << id << " energy " << rep.energy;
  }
}

TEST(Geodesic, DerivativesAndEnergy) {
  Vec a(3);
  a << 2.0, -1.0, 0.5;
  const auto f = geodesic_map(a);
  for (const Vec& x : halton_points(3, 30, 1.9, 2)) {
    EXPECT_LT((f.jacobian(x) - f.fd_jacobian(x)).norm(), 1e-7);
    EXPECT_NEAR(f.gradient_norm_sq(x), a.squaredNorm(), 1e-12);
    EXPECT_NEAR(f.hessian_norm(x), a.squaredNorm(), 1e-12);
  }
  EXPECT_NEAR(f.energy_bound(), a.squaredNorm() * 4 * pi / 3 * 8, 1e-10);
  EXPECT_FALSE(f.nearest_singular_point(zeros(3)).has_value());
}

TEST(Homogeneous, InvarianceProperty) {
  Mat frame(4, 2);
  frame << 1, 0, 1, 1, 0, 2, 0, 0;
  Vec base(4);
  base << 0.1, -0.2, 0.0, 0.3;
  const auto h = make_homogeneous(base, frame, LinkMap::identity());
  const auto f = as_map(h);
  const Mat V = h.frame();
  EXPECT_LT((V.transpose() * V - Mat::Identity(2, 2)).norm(), 1e-13);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 1.5), c(-0.3, 0.3);
  for (const Vec& z : halton_points(4, 60, 1.0, 5)) {
    if (h.complement().transpose() * (z - base) == Vec::Zero(2)) continue;
    Vec t(2);
    t << c(rng), c(rng);
    const Vec moved = base + u(rng) * (z - base) + V * t;
    EXPECT_LT((f.value(moved) - f.value(z)).norm(), 1e-12);
  }
}

TEST(Homogeneous, RejectsDegenerateFrames) {
  Mat frame(3, 2);
  frame << 1, 2, 0, 0, 0, 0;
  EXPECT_THROW(make_homogeneous(zeros(3), frame, LinkMap::identity()), DegenerateFrame);
  EXPECT_THROW(make_homogeneous(zeros(2), Mat::Identity(2, 2), LinkMap::identity()), UnsupportedModel);
}

TEST(Rescale, MatchesComposition) {
  const auto f = map_of("perturbed(geodesic(1,2,0),0.2,9)");
  Vec y(3);
  y << 0.3, -0.1, 0.2;
  const auto g = rescale(f, y, 0.25);
  EXPECT_NEAR(g.radius(), (2.0 - y.norm()) / 0.25, 1e-12);
  Vec y2(3);
  y2 << 0.5, 0.0, -1.0;
  const auto gg = rescale(g, y2, 0.5);
  for (const Vec& z : halton_points(3, 20, 0.9, 7)) {
    EXPECT_LT((g.value(z) - f.value(y + 0.25 * z)).norm(), 1e-14);
    EXPECT_LT((gg.value(z) - f.value(y + 0.25 * (y2 + 0.5 * z))).norm(), 1e-13);
  }
  EXPECT_THROW(rescale(f, y, 5.0), OutOfDomain);
}

TEST(Perturbed, ZeroAmplitudeIsBase) {
  const auto base = radial_map(3);
  const auto f = perturbed_map(base, 0.0, 4);
  for (const Vec& x : halton_points(3, 20, 1.5, 9))
    EXPECT_LT((f.value(x) - base.value(x)).norm(), 1e-14);
  const auto g = perturbed_map(base, 0.3, 4);
  double diff = 0.0;
  for (const Vec& x : halton_points(3, 20, 1.5, 9)) {
    EXPECT_NEAR(g.value(x).norm(), 1.0, 1e-13);
    diff = std::max(diff, (g.value(x) - base.value(x)).norm());
  }
  EXPECT_GT(diff, 1e-3);
}

TEST(Catalog, ParsesEveryFamily) {
  struct Case {
    const char* id;
    bool map;
    int dim;
    bool stationary;
  };
  for (const Case& c : {Case{"radial(3)", true, 3, true}, Case{"radial(4,3)", true, 4, true},
                        Case{"constant(0,1)", true, 2, true}, Case{"constant([0,0,1],5)", true, 5, true},
                        Case{"geodesic(2,0,0)", true, 3, true},
                        Case{"homogeneous(1,[[0,0,1]],identity)", true, 3, true},
                        Case{"homogeneous(0,[],constant(1,0),4)", true, 4, true},
                        Case{"perturbed(radial(3),0.05,1)", true, 3, false},
                        Case{"perturbed(radial(3),0,1)", true, 3, true}, Case{"hyperplane(4)", false, 4, true},
                        Case{"simons-cone", false, 8, true}, Case{"sphere(3,0.5)", false, 3, false},
                        Case{"cylinder(3,2)", false, 3, false}}) {
    const auto m = parse_model(c.id);
    EXPECT_EQ(m.is_map(), c.map) << c.id;
    EXPECT_EQ(m.is_surface(), !c.map) << c.id;
    EXPECT_EQ(m.dim(), c.dim) << c.id;
    EXPECT_EQ(m.stationary, c.stationary) << c.id;
  }
}

TEST(Catalog, MalformedIdsAreConfigErrors) {
  for (const char* id : {"nope(3)", "radial(3,3)", "radial(", "radial(3))", "radial(x)", "constant(0,0)",
                         "homogeneous(2,[[1,0,0],[2,0,0]],identity)", "homogeneous(1,[[1,0]],spin)",
                         "perturbed(simons-cone,0.1,1)", "perturbed(radial(3),0.1,-1)", "sphere(3)",
                         "hyperplane(4,1)", ""}) {
    EXPECT_THROW(parse_model(id), ConfigError) << id;
  }
}

TEST(Catalog, HomogeneousEnergyClosedForm) {
  // P y / |P y| along a line in R^4: the integral of 2/|Py|^2 over B_R is 4 pi^2 R^2.
  const auto m = parse_model("homogeneous(1,[[0,0,0,1]],identity)");
  EXPECT_NEAR(m.map->energy_bound(), 16 * pi * pi, 1e-9);
  EXPECT_TRUE(std::isinf(parse_model("homogeneous(1,[[0,0,1]],identity)").map->energy_bound()));
  EXPECT_EQ(parse_model("homogeneous(0,[],constant(1,0),4)").map->energy_bound(), 0.0);
}

TEST(Catalog, ModelIdsRenderBack) {
  EXPECT_EQ(map_of("radial(3)").id(), "radial(3,2)");
  EXPECT_EQ(map_of("constant([0,0,1],5)").id(), "constant([0,0,1],5)");
  EXPECT_EQ(map_of("geodesic(2,0,0)").id(), "geodesic(2,0,0)");
  EXPECT_EQ(parse_model(" radial( 3 , 2 ) ").id, "radial(3,2)");
}

TEST(Catalog, DescriptionsCoverKinds) {
  const auto d = catalog_descriptions();
  EXPECT_GE(d.size(), 9u);
  for (const auto& e : d) EXPECT_TRUE(e.kind == "map" || e.kind == "surface");
}
