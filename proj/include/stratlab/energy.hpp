#pragma once

// Dirichlet energy quadrature: the normalized energy theta_r(x), its drops
// across scales, the radial-derivative defect and L2 map distances.

#include "stratlab/map_models.hpp"
#include "stratlab/quadrature.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace stratlab {

struct EnergyOptions {
  QuadOrders orders{};
  /// Relative tolerance on the quadrature error estimate; exceeding it raises
  /// QuadratureFailure. Infinite by default.
  double tolerance = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void check_ball(const ManifoldMap& f, const Vec& x, double r) {
  f.check_domain(x);
  const double cap = f.radius() - x.norm();
  if (!(r > 0.0) || r > cap * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "radius " << r << " outside (0, " << cap << "] at |x| = " << x.norm();
    throw OutOfDomain(os.str());
  }
}

inline void check_tolerance(const QuadResult& q, double tol) {
  if (q.error > tol * std::max(1.0, std::abs(q.value))) {
    std::ostringstream os;
    os << "error estimate " << q.error << " for value " << q.value;
    throw QuadratureFailure(os.str());
  }
}

}  // namespace detail

/// |grad f|^2(x), the squared Frobenius norm of Df(x).
inline double dirichlet_density(const ManifoldMap& f, const Vec& x) {
  f.check_domain(x);
  if (f.is_singular(x)) throw SingularPoint("energy density is infinite at a singularity");
  return f.gradient_norm_sq(x);
}

/// theta_r(x) = r^{2-n} int_{B_r(x)} |grad f|^2.
inline QuadResult theta(const ManifoldMap& f, const Vec& x, double r,
                        const EnergyOptions& opt = {}) {
  detail::check_ball(f, x, r);
  const int n = f.dim();
  const Vec pole = detail::quadrature_pole(f, x, r);
  QuadResult q = integrate_ball(x, r, pole, [&](const Vec& y) { return f.gradient_norm_sq(y); },
                                opt.orders);
  const double scale = std::pow(r, 2 - n);
  q.value *= scale;
  q.error *= scale;
  detail::check_tolerance(q, opt.tolerance);
  return q;
}

/// theta at the geometric ladder r_j = r0 gamma^j, j = 0..j_max.
struct EnergyProfile {
  Vec center;
  std::vector<double> radii;
  std::vector<double> values;
  std::vector<double> errors;

  /// Nondecreasing in r up to `factor` times the combined error.
  bool monotone(double factor = 3.0) const {
    for (std::size_t j = 0; j + 1 < radii.size(); ++j) {
      // radii decrease with j
      if (values[j + 1] > values[j] + factor * (errors[j] + errors[j + 1])) return false;
    }
    return true;
  }
};

inline EnergyProfile energy_profile(const ManifoldMap& f, const Vec& x, double gamma, int j_max,
                                    double r0 = 1.0, const EnergyOptions& opt = {}) {
  EnergyProfile p;
  p.center = x;
  double r = r0;
  for (int j = 0; j <= j_max; ++j, r *= gamma) {
    const QuadResult q = theta(f, x, r, opt);
    p.radii.push_back(r);
    p.values.push_back(q.value);
    p.errors.push_back(q.error);
  }
  return p;
}

/// W_{s,t}(x) = theta_t(x) - theta_s(x).
inline QuadResult monotonicity_drop(const ManifoldMap& f, const Vec& x, double s, double t,
                                    const EnergyOptions& opt = {}) {
  if (!(s > 0.0 && s < t)) throw OutOfDomain("need 0 < s < t");
  const QuadResult qt = theta(f, x, t, opt);
  const QuadResult qs = theta(f, x, s, opt);
  return {qt.value - qs.value, qt.error + qs.error};
}

/// 2 int_s^t int_{dB_tau(x)} tau^{2-n} |df/dtau|^2, written as the volume
/// integral of 2 |y-x|^{-n} |Df(y)(y-x)|^2 over the annulus. With theta
/// normalised as r^{2-n} int |grad f|^2, this equals theta_t - theta_s for
/// stationary maps. The weight is
/// singular at x and |Df|^2 at the map's singular point, so when both matter
/// the integrand is split by a smooth partition of unity and each part is
/// integrated in polar coordinates around its own singular point.
inline QuadResult radial_defect(const ManifoldMap& f, const Vec& x, double s, double t,
                                const EnergyOptions& opt = {}) {
  if (!(s > 0.0 && s < t)) throw OutOfDomain("need 0 < s < t");
  detail::check_ball(f, x, t);
  const int n = f.dim();
  auto integrand = [&](const Vec& y) {
    const Vec d = y - x;
    const double r2 = d.squaredNorm();
    if (r2 == 0.0) return 0.0;
    return 2.0 * (f.jacobian(y) * d).squaredNorm() / std::pow(r2, 0.5 * n);
  };

  std::optional<Vec> sing;
  if (f.model().isolated_singularities()) sing = f.nearest_singular_point(x);
  const double dist = sing ? (*sing - x).norm() : std::numeric_limits<double>::infinity();

  QuadResult out;
  if (!sing || dist < 1e-12 || dist < 0.5 * s || dist > 1.5 * t) {
    out = integrate_ball(x, t, x, integrand, opt.orders, s, t);
  } else {
    const Vec p = *sing;
    const double h = 0.75 * dist;
    // A transition spread over the whole support resolves best at fixed order.
    auto chi = [&](const Vec& y) {
      const double u = std::min(1.0, (y - p).norm() / h);
      return 1.0 - u * u * u * u * (35.0 - u * (84.0 - u * (70.0 - 20.0 * u)));
    };
    auto near = [&](const Vec& y) { return integrand(y) * chi(y); };
    auto far = [&](const Vec& y) { return integrand(y) * (1.0 - chi(y)); };
    const QuadResult outer = integrate_ball(x, t, p, near, opt.orders);
    const QuadResult inner = integrate_ball(x, s, p, near, opt.orders);
    const QuadResult rest = integrate_ball(x, t, x, far, opt.orders, s, t);
    out.value = outer.value - inner.value + rest.value;
    out.error = outer.error + inner.error + rest.error;
  }
  detail::check_tolerance(out, opt.tolerance);
  return out;
}

/// Mean over B_1 of |T_{c,r} f - T_{c,r} g|^2 (chordal distance in the
/// embedding space), i.e. the average of |f - g|^2 over B_r(center).
inline QuadResult l2_map_distance(const ManifoldMap& f, const ManifoldMap& g, const Vec& center,
                                  double r, const EnergyOptions& opt = {}) {
  if (f.dim() != g.dim() || f.target_dim() != g.target_dim()) {
    throw UnsupportedModel("maps have different domain or target dimensions");
  }
  detail::check_ball(f, center, r);
  detail::check_ball(g, center, r);
  const int n = f.dim();
  Vec pole = detail::quadrature_pole(f, center, r);
  if ((pole - center).norm() == 0.0) pole = detail::quadrature_pole(g, center, r);
  QuadResult q = integrate_ball(
      center, r, pole, [&](const Vec& y) { return (f.value(y) - g.value(y)).squaredNorm(); },
      opt.orders);
  const double vol = ball_volume(n) * std::pow(r, n);
  q.value /= vol;
  q.error /= vol;
  detail::check_tolerance(q, opt.tolerance);
  return q;
}

}  // namespace stratlab
