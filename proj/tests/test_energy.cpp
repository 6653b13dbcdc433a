#include "stratlab/catalog.hpp"
#include "stratlab/energy.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

using namespace stratlab;

namespace {

const double pi = std::numbers::pi;

// r^{-1} times the integral of 2/|y|^2 over B_r(x) in R^3, |x| = d, by
// integrating over spheres about the origin.
double radial3_theta(double d, double r) {
  if (d == 0.0) return 8 * pi;
  auto cap = [&](double rho) {
    if (rho <= r - d) return 4.0 * pi;
    if (rho >= r + d || rho <= d - r) return 0.0;
    const double c = (rho * rho + d * d - r * r) / (2.0 * rho * d);
    return 2.0 * pi * (1.0 - std::clamp(c, -1.0, 1.0));
  };
  using boost::math::quadrature::gauss_kronrod;
  const double lo = std::max(0.0, d - r), hi = d + r;
  double v = gauss_kronrod<double, 61>::integrate([&](double rho) { return 2.0 * cap(rho); }, lo, hi, 15, 1e-13);
  return v / r;
}

std::vector<Vec> centers(int n, int count, double rad, std::uint64_t seed) {
  HaltonSequence s(n + 1, seed);
  std::vector<double> u(n + 1);
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i) {
    s.point(i, u.data());
    out.push_back(rad * ball_point_from_uniforms(u.data(), n));
  }
  return out;
}

}  // namespace

TEST(Theta, RadialCentredIsConstant) {
  const auto f = radial_map(3);
  for (double r : {1.0, 0.5, 0.1, 1e-3}) EXPECT_NEAR(theta(f, zeros(3), r).value, 8 * pi, 1e-9);
  const auto g = radial_map(4);
  // (n-1) |S^{n-1}| / (n-2) = 3 * 2 pi^2 / 2.
  for (double r : {1.0, 0.25}) EXPECT_NEAR(theta(g, zeros(4), r).value, 3 * pi * pi, 1e-9);
}

TEST(Theta, RadialOffCentreMatchesShellOracle) {
  const auto f = radial_map(3);
  for (double d : {0.1, 0.3, 0.7}) {
    for (double r : {0.05, 0.3, 1.0}) {
      Vec x = zeros(3);
      x(0) = d * 0.6;
      x(2) = d * 0.8;
      const auto q = theta(f, x, r);
      const double want = radial3_theta(d, r);
      EXPECT_NEAR(q.value, want, 1e-5 * want) << "d=" << d << " r=" << r;
    }
  }
}

TEST(Theta, GeodesicClosedForm) {
  Vec a(3);
  a << 2, 0, 0;
  const auto f = geodesic_map(a);
  for (const Vec& x : centers(3, 10, 0.8, 3)) {
    for (double r : {1.0, 0.125}) {
      EXPECT_NEAR(theta(f, x, r).value, 4.0 * 4 * pi / 3 * r * r, 1e-10);
    }
  }
  EXPECT_EQ(theta(constant_map(3, unit(3, 2)), zeros(3), 1.0).value, 0.0);
}

TEST(Theta, ScalingProperty) {
  const auto f = *parse_model("perturbed(radial(3),0.2,5)").map;
  for (const Vec& x : centers(3, 6, 0.5, 8)) {
    const double s = 0.4;
    const auto g = rescale(f, x, s);
    for (double r : {0.4, 0.1}) {
      const auto a = theta(f, x, r);
      const auto b = theta(g, zeros(3), r / s);
      EXPECT_NEAR(a.value, b.value, 3.0 * (a.error + b.error) + 1e-7 * a.value);
    }
  }
}

TEST(Theta, DomainErrors) {
  const auto f = radial_map(3);
  EXPECT_THROW(dirichlet_density(f, zeros(3)), SingularPoint);
  EXPECT_THROW(theta(f, unit(3, 0), 1.5), OutOfDomain);
  EXPECT_THROW(theta(f, unit(3, 0), 0.0), OutOfDomain);
  EXPECT_THROW(monotonicity_drop(f, unit(3, 0), 0.5, 0.2), OutOfDomain);
  EnergyOptions strict;
  strict.tolerance = 1e-300;
  strict.orders = {6, 4, 4};
  EXPECT_THROW(theta(*parse_model("perturbed(radial(3),0.3,2)").map, 0.3 * unit(3, 1), 0.5, strict),
               QuadratureFailure);
}

TEST(Monotonicity, ProfilesDecreaseOnStationaryMaps) {
  for (const char* id : {"radial(3)", "radial(4)", "geodesic(2,0,0)", "geodesic(1,1,0,0)"}) {
    const auto f = *parse_model(id).map;
    for (const Vec& x : centers(f.dim(), 8, 0.9, 21)) {
      const auto p = energy_profile(f, x, 0.5, 6);
      EXPECT_TRUE(p.monotone()) << id << " at " << x.transpose();
      ASSERT_EQ(p.radii.size(), 7u);
      EXPECT_DOUBLE_EQ(p.radii.back(), 1.0 / 64);
    }
  }
}

TEST(Monotonicity, DropEqualsRadialDefect) {
  for (const char* id : {"radial(3)", "radial(4)", "geodesic(2,0,0)"}) {
    const auto f = *parse_model(id).map;
    for (const Vec& x : centers(f.dim(), 8, 0.9, 4)) {
      for (auto [s, t] : {std::pair{0.5, 1.0}, std::pair{0.125, 0.25}}) {
        const auto w = monotonicity_drop(f, x, s, t);
        const auto d = radial_defect(f, x, s, t);
        EXPECT_GE(d.value, -1e-12);
        EXPECT_LE(std::abs(w.value - d.value), 3.0 * (w.error + d.error) + 1e-9 * std::abs(w.value))
            << id << " x=" << x.transpose() << " s=" << s;
      }
    }
  }
}

TEST(Monotonicity, ConstantAndCentredRadialHaveNoDefect) {
  const auto f = radial_map(3);
  EXPECT_NEAR(radial_defect(f, zeros(3), 0.1, 1.0).value, 0.0, 1e-12);
  EXPECT_NEAR(monotonicity_drop(f, zeros(3), 0.1, 1.0).value, 0.0, 1e-9);
  EXPECT_EQ(radial_defect(constant_map(4, unit(4, 0)), unit(4, 1), 0.2, 0.9).value, 0.0);
}

TEST(L2Distance, ZeroOnSelfAndClosedFormAgainstConstant) {
  const auto f = radial_map(3);
  EXPECT_NEAR(l2_map_distance(f, f, unit(3, 0) * 0.3, 0.5).value, 0.0, 1e-15);
  // Mean of |x/|x| - e|^2 = 2 - 2 mean(x_3/|x|) = 2 over a centred ball.
  EXPECT_NEAR(l2_map_distance(f, constant_map(3, unit(3, 2)), zeros(3), 0.7).value, 2.0, 1e-12);
  EXPECT_THROW(l2_map_distance(f, radial_map(4), zeros(3), 0.5), UnsupportedModel);
}
