#include "stratlab/catalog.hpp"
#include "stratlab/regularity.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace stratlab;

namespace {

const double pi = std::numbers::pi;

// Frobenius norm of the second derivative of x/|x| at e_0 in R^n, by central
// differences of the closed-form Jacobian.
double radial_hessian_at_unit(int n) {
  auto jac = [n](const Vec& x) {
    const double r = x.norm();
    const Vec h = x / r;
    return Mat((Mat::Identity(n, n) - h * h.transpose()) / r);
  };
  const double h = 1e-5;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec e = unit(n, i);
    acc += ((jac(unit(n, 0) + h * e) - jac(unit(n, 0) - h * e)) / (2 * h)).squaredNorm();
  }
  return std::sqrt(acc);
}

// For x/|x| the supremum over B_{l d}(x), |x| = d, sits at the point nearest
// the vertex: l sqrt(n-1)/(1-l) + c l^2/(1-l)^2 = 1.
double radial_ratio(int n) {
  const double c = radial_hessian_at_unit(n), a = std::sqrt(n - 1.0);
  const double u = (-a + std::sqrt(a * a + 4 * c)) / (2 * c);
  return u / (1 + u);
}

std::vector<Vec> points(int n, int count, double lo, double hi, std::uint64_t seed) {
  HaltonSequence s(n + 1, seed);
  std::vector<double> u(n + 1);
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i) {
    s.point(i, u.data());
    out.push_back((lo + (hi - lo) * u[n]) * sphere_point_from_uniforms(u.data(), n - 1));
  }
  return out;
}

}  // namespace

TEST(RegularityScale, GeodesicClosedForm) {
  // 2 r + 4 r^2 = 1.
  Vec a(3);
  a << 0, 2, 0;
  const auto f = geodesic_map(a);
  for (const Vec& x : points(3, 10, 0.0, 1.5, 2))
    EXPECT_NEAR(regularity_scale(f, x), (std::sqrt(5.0) - 1) / 4, 1e-3);
}

TEST(RegularityScale, RadialRatioIsConstant) {
  for (int n : {3, 4}) {
    const auto f = radial_map(n);
    const double want = radial_ratio(n);
    for (const Vec& x : points(n, 25, 0.01, 1.0, 3)) {
      const double r = regularity_scale(f, x);
      EXPECT_NEAR(r / x.norm(), want, 0.01 * want) << "n=" << n << " |x|=" << x.norm();
    }
  }
}

TEST(RegularityScale, DegenerateCases) {
  const auto c = constant_map(3, unit(3, 0));
  const Vec x = 0.5 * unit(3, 1);
  EXPECT_DOUBLE_EQ(regularity_scale(c, x), 1.5);
  EXPECT_EQ(regularity_scale(radial_map(3), zeros(3)), 0.0);
  EXPECT_THROW(regularity_scale(c, 3.0 * unit(3, 0)), OutOfDomain);
}

TEST(RegularityScale, BadSetGrowsWithRadius) {
  const auto f = radial_map(3);
  const auto grid = uniform_grid(3, 0.25);
  const auto rf = regularity_field(f, grid);
  std::size_t prev = 0;
  for (double r : {0.01, 0.05, 0.1, 0.2, 0.5}) {
    const auto b = bad_set(rf, r);
    EXPECT_GE(b.size(), prev);
    prev = b.size();
    for (const auto& p : b) EXPECT_LE(p.norm(), r / radial_ratio(3) * 1.01);
  }
}

TEST(Sweep, ClassifierOnSyntheticIncrements) {
  SweepOptions o;
  SweepResult geo;
  geo.values = {1.0};
  detail::classify_sweep(geo, {0.5, 0.25, 0.125, 0.0625}, o);
  EXPECT_EQ(geo.verdict, Verdict::Convergent);
  EXPECT_NEAR(geo.decay, 1.0, 1e-12);
  EXPECT_NEAR(geo.extrapolated, 1.0625, 1e-12);

  SweepResult flat;
  flat.values = {4.0};
  detail::classify_sweep(flat, {2.0, 2.0, 2.0, 2.0}, o);
  EXPECT_EQ(flat.verdict, Verdict::DivergentLog);
  EXPECT_NEAR(flat.rate, 2.0 / std::log(2.0), 1e-12);

  SweepResult grow;
  grow.values = {4.0};
  detail::classify_sweep(grow, {1.0, 2.0, 4.0, 8.0}, o);
  EXPECT_EQ(grow.verdict, Verdict::DivergentPower);
  EXPECT_NEAR(grow.rate, 1.0, 1e-12);
  EXPECT_TRUE(std::isinf(grow.extrapolated));
}

TEST(LpSweep, RadialThreeDimensional) {
  // Integral over B_1 of (sqrt 2/|x|)^p is 2^{p/2} 4 pi / (3 - p); at p = 3
  // each dyadic shell adds 2^{3/2} 4 pi ln 2.
  const auto f = radial_map(3);
  for (double p : {2.0, 2.5, 2.9}) {
    const auto s = lp_integral(f, p);
    EXPECT_EQ(s.verdict, Verdict::Convergent) << p;
    const double want = std::pow(2.0, p / 2) * 4 * pi / (3 - p);
    EXPECT_NEAR(s.extrapolated, want, 0.01 * want) << p;
  }
  const auto d = lp_integral(f, 3.0);
  EXPECT_EQ(d.verdict, Verdict::DivergentLog);
  EXPECT_NEAR(d.rate, std::pow(2.0, 1.5) * 4 * pi, 0.1 * std::pow(2.0, 1.5) * 4 * pi);
  EXPECT_EQ(lp_integral(f, 3.1).verdict, Verdict::DivergentPower);
  EXPECT_EQ(d.value_at(0.125), d.values.front());
  EXPECT_THROW(d.value_at(0.3), OutOfDomain);
}

TEST(LpSweep, RadialFourDimensional) {
  const auto f = radial_map(4);
  const auto rs = lp_sharpness_sweep(f, 2);
  ASSERT_EQ(rs.size(), 4u);
  const double want[] = {std::pow(3.0, 1.75) * 2 * pi * pi / 0.5, std::pow(3.0, 1.95) * 2 * pi * pi / 0.1};
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(rs[i].verdict, Verdict::Convergent);
    EXPECT_NEAR(rs[i].extrapolated, want[i], 0.01 * want[i]);
  }
  EXPECT_EQ(rs[2].verdict, Verdict::DivergentLog);
  const double rate = 9.0 * 2 * pi * pi;
  EXPECT_NEAR(rs[2].rate, rate, 0.1 * rate);
  EXPECT_NE(rs[3].verdict, Verdict::Convergent);
}

TEST(LpSweep, SmoothMapsAreExact) {
  Vec a(3);
  a << 1, 1, 0;
  const auto s = lp_integral(geodesic_map(a), 4.0);
  EXPECT_EQ(s.verdict, Verdict::Convergent);
  EXPECT_NEAR(s.extrapolated, 4.0 * 4 * pi / 3, 1e-10);
}

TEST(LpSweep, InverseRegularityDominatesGradient) {
  // r_f |grad f| <= 1 pointwise, so r_f^{-p} >= |grad f|^p.
  const auto f = radial_map(3);
  LpOptions o;
  o.sweep.m_hi = 5;
  for (double p : {1.0, 2.0}) {
    const auto g = lp_integral(f, p, LpIntegrand::Gradient, o);
    const auto r = lp_integral(f, p, LpIntegrand::InverseRegularity, o);
    for (std::size_t i = 0; i < g.values.size(); ++i) EXPECT_GE(r.values[i], g.values[i]) << p;
  }
}

TEST(LpSweep, RejectsNonIsolatedSingularSets) {
  const auto cyl = *parse_model("homogeneous(1,[[0,0,1]],identity)").map;
  EXPECT_THROW(lp_integral(cyl, 1.0), UnsupportedModel);
  EXPECT_THROW(lp_integral(radial_map(3), -1.0), OutOfDomain);
}
