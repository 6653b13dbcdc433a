#pragma once

#include "stratlab/core.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <vector>

namespace stratlab {

// ---------------------------------------------------------------------------
// Gauss-Legendre

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

namespace detail {

inline void legendre_pair(int q, double x, double& pq, double& dpq) {
  double p0 = 1.0, p1 = x;
  for (int j = 2; j <= q; ++j) {
    const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
    p0 = p1;
    p1 = p2;
  }
  pq = p1;
  dpq = q * (x * p1 - p0) / (x * x - 1.0);
}

// Newton iteration from the Tricomi initial guess; q >= 2.
inline GaussRule make_gauss_legendre(int q) {
  GaussRule rule;
  rule.nodes.resize(q);
  rule.weights.resize(q);
  for (int i = 0; i < (q + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5));
    double pq = 0.0, dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      legendre_pair(q, x, pq, dp);
      const double dx = pq / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre_pair(q, x, pq, dp);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[q - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[q - 1 - i] = w;
  }
  if (q % 2 == 1) rule.nodes[q / 2] = 0.0;
  return rule;
}

}  // namespace detail

/// Cached q-point Gauss-Legendre rule on [-1, 1].
inline const GaussRule& gauss_legendre(int q) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[q];
  if (!slot) {
    if (q == 1) {
      slot = std::make_unique<GaussRule>(GaussRule{{0.0}, {2.0}});
    } else {
      slot = std::make_unique<GaussRule>(detail::make_gauss_legendre(q));
    }
  }
  return *slot;
}

/// Apply `fn(x, w)` at the q Gauss nodes of [a, b].
template <class Fn>
void for_gauss_nodes(int q, double a, double b, Fn&& fn) {
  const auto& g = gauss_legendre(q);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (int i = 0; i < q; ++i) fn(mid + half * g.nodes[i], half * g.weights[i]);
}

// ---------------------------------------------------------------------------
// Product rules on spheres

/// Quadrature on the unit sphere S^d in R^{d+1}. Built recursively from
/// Gauss-Gegenbauer rules in the cosine of the polar angle and a trapezoid
/// rule on circles, so it integrates polynomials of degree below 2q exactly.
struct SphereRule {
  int dim = 0;  // d
  std::vector<Vec> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
};

namespace detail {

/// Gauss rule for the weight (1 - t^2)^{lambda - 1/2} on [-1, 1], by
/// Golub-Welsch on the monic Gegenbauer recurrence.
inline GaussRule make_gegenbauer(int q, double lambda) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(q, q);
  for (int k = 1; k < q; ++k) {
    const double b = k * (k + 2.0 * lambda - 1.0) / (4.0 * (k + lambda) * (k + lambda - 1.0));
    J(k, k - 1) = J(k - 1, k) = std::sqrt(b);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  const double mu0 = std::sqrt(std::numbers::pi) * std::tgamma(lambda + 0.5) / std::tgamma(lambda + 1.0);
  GaussRule rule;
  for (int i = 0; i < q; ++i) {
    const double v = es.eigenvectors()(0, i);
    rule.nodes.push_back(es.eigenvalues()(i));
    rule.weights.push_back(mu0 * v * v);
  }
  return rule;
}

inline const GaussRule& gegenbauer_rule(int q, double lambda) {
  static std::mutex mu;
  static std::map<std::pair<int, double>, std::unique_ptr<GaussRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{q, lambda}];
  if (!slot) slot = std::make_unique<GaussRule>(make_gegenbauer(q, lambda));
  return *slot;
}

inline SphereRule make_sphere_rule(int d, int q) {
  SphereRule rule;
  rule.dim = d;
  if (d == 0) {
    Vec p(1);
    p(0) = 1.0;
    rule.points = {p, -p};
    rule.weights = {1.0, 1.0};
    return rule;
  }
  if (d == 1) {
    const int m = 2 * q;
    for (int i = 0; i < m; ++i) {
      const double phi = 2.0 * std::numbers::pi * (i + 0.5) / m;
      Vec p(2);
      p << std::cos(phi), std::sin(phi);
      rule.points.push_back(p);
      rule.weights.push_back(2.0 * std::numbers::pi / m);
    }
    return rule;
  }
  const SphereRule sub = make_sphere_rule(d - 1, q);
  const GaussRule& g = gegenbauer_rule(q, 0.5 * (d - 1));
  for (int j = 0; j < q; ++j) {
    const double c = g.nodes[j], s = std::sqrt(std::max(0.0, 1.0 - c * c));
    for (std::size_t i = 0; i < sub.size(); ++i) {
      Vec p(d + 1);
      p.head(d) = s * sub.points[i];
      p(d) = c;
      rule.points.push_back(p);
      rule.weights.push_back(g.weights[j] * sub.weights[i]);
    }
  }
  return rule;
}

}  // namespace detail

/// Cached sphere rule of order q on S^d.
inline const SphereRule& sphere_rule(int d, int q) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<SphereRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{d, q}];
  if (!slot) slot = std::make_unique<SphereRule>(detail::make_sphere_rule(d, q));
  return *slot;
}

// ---------------------------------------------------------------------------
// Low-discrepancy points

inline double radical_inverse(std::uint64_t i, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

inline int nth_prime(int i) {
  static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43,
                               47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107};
  return primes[i % 28];
}

/// Halton sequence with a Cranley-Patterson shift derived from `seed`, so
/// independent streams are decorrelated while staying reproducible.
class HaltonSequence {
 public:
  HaltonSequence(int dim, std::uint64_t seed = 0) : dim_(dim), shift_(dim, 0.0) {
    if (seed != 0) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (auto& s : shift_) s = unif(rng);
    }
  }

  int dim() const { return dim_; }

  void point(std::uint64_t index, double* out) const {
    for (int d = 0; d < dim_; ++d) {
      const double v = radical_inverse(index + 1, nth_prime(d)) + shift_[d];
      out[d] = v - std::floor(v);
    }
  }

 private:
  int dim_;
  std::vector<double> shift_;
};

/// Inverse standard normal CDF.
inline double normal_quantile(double u) {
  u = std::clamp(u, 1e-15, 1.0 - 1e-15);
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

/// Uniform point on S^{d} from d+1 uniforms (Gaussian normalisation).
inline Vec sphere_point_from_uniforms(const double* u, int d) {
  Vec g(d + 1);
  for (int i = 0; i <= d; ++i) g(i) = normal_quantile(u[i]);
  const double nrm = g.norm();
  if (nrm < 1e-300) return unit(d + 1, 0);
  return g / nrm;
}

/// Uniform point in the unit ball of R^n from n+1 uniforms.
inline Vec ball_point_from_uniforms(const double* u, int n) {
  return std::pow(u[n], 1.0 / n) * sphere_point_from_uniforms(u, n - 1);
}

// ---------------------------------------------------------------------------
// Polar integration over balls

struct QuadOrders {
  int radial = 32;  // Gauss points along each ray segment
  int polar = 24;   // Gauss points per polar-angle piece
  int sphere = 16;  // order of the rule on the transverse sphere S^{n-2}

  QuadOrders reduced() const {
    auto cut = [](int q) { return std::max(2, (3 * q) / 4); };
    return {cut(radial), cut(polar), cut(sphere)};
  }

  /// Order used on S^d. Product rules grow like q^d, so spheres above S^2
  /// get fewer points per axis.
  int sphere_for(int d) const {
    return d <= 2 ? sphere : std::max(std::min(sphere, 4), 2 * sphere / d);
  }
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
};

namespace detail {

/// One pass of the polar rule: the ball B_r(center), restricted to the
/// spherical shell lo <= |y - pole| <= hi, in polar coordinates around `pole`.
/// Rays are parametrised by the angle psi from the pole->center axis; both the
/// inside-pole and outside-pole geometries reduce to smooth one-dimensional
/// segment lengths in psi.
template <class Fn>
double polar_pass(const Vec& center, double r, const Vec& pole, double lo, double hi,
                  Fn& g, const QuadOrders& ord) {
  const int n = static_cast<int>(center.size());
  const Vec ev = center - pole;
  const double e = ev.norm();
  const Vec axis = e > 1e-14 * std::max(1.0, r) ? Vec(ev / e) : unit(n, 0);
  const Mat q = complement_basis(axis);
  const SphereRule& xi = sphere_rule(n - 2, ord.sphere_for(n - 2));

  double total = 0.0;
  auto ray = [&](double cpsi, double spsi, double rho_lo, double rho_hi, double wpsi) {
    rho_lo = std::max(rho_lo, lo);
    rho_hi = std::min(rho_hi, hi);
    if (!(rho_hi > rho_lo)) return;
    for (std::size_t k = 0; k < xi.size(); ++k) {
      const Vec omega = cpsi * axis + spsi * (q * xi.points[k]);
      double acc = 0.0;
      for_gauss_nodes(ord.radial, rho_lo, rho_hi, [&](double rho, double w) {
        acc += w * std::pow(rho, n - 1) * g(Vec(pole + rho * omega));
      });
      total += wpsi * xi.weights[k] * acc;
    }
  };

  if (e < r) {
    // Pole inside: every ray exits once. Split at psi = pi/2 where the exit
    // distance is least smooth when the pole approaches the boundary.
    const double half_pi = 0.5 * std::numbers::pi;
    for (auto [a, b] : {std::pair{0.0, half_pi}, std::pair{half_pi, std::numbers::pi}}) {
      for_gauss_nodes(ord.polar, a, b, [&](double psi, double w) {
        const double c = std::cos(psi), s = std::sin(psi);
        const double disc = std::sqrt(std::max(0.0, r * r - e * e * s * s));
        ray(c, s, 0.0, e * c + disc, w * std::pow(s, n - 2));
      });
    }
  } else {
    // Pole outside: rays in the cap sin(psi) <= r/e hit a chord. With
    // sin(psi) = (r/e) sin(t) the half-chord is r cos(t), smooth in t.
    const double ratio = r / e;
    for_gauss_nodes(ord.polar, 0.0, 0.5 * std::numbers::pi, [&](double t, double w) {
      const double s = ratio * std::sin(t);
      const double c = std::sqrt(std::max(0.0, 1.0 - s * s));
      if (c <= 0.0) return;
      const double dpsi = ratio * std::cos(t) / c;
      const double half_chord = r * std::cos(t);
      ray(c, s, e * c - half_chord, e * c + half_chord, w * dpsi * std::pow(s, n - 2));
    });
  }
  return total;
}

}  // namespace detail

/// Integral of g over B_r(center) intersected with the shell
/// lo <= |y - pole| <= hi, using polar coordinates around `pole`. Placing the
/// pole on an integrable point singularity cancels it against the Jacobian.
/// The error estimate is the difference against a reduced-order pass.
template <class Fn>
QuadResult integrate_ball(const Vec& center, double r, const Vec& pole, Fn&& g,
                          const QuadOrders& ord = {}, double lo = 0.0,
                          double hi = std::numeric_limits<double>::infinity()) {
  if (center.size() < 2) throw UnsupportedModel("polar quadrature needs n >= 2");
  const double fine = detail::polar_pass(center, r, pole, lo, hi, g, ord);
  const double coarse = detail::polar_pass(center, r, pole, lo, hi, g, ord.reduced());
  return {fine, std::abs(fine - coarse)};
}

/// Smooth step: 1 for t <= start, 0 for t >= 1, C-infinity in between.
inline double smooth_cutoff(double t, double start = 0.5) {
  if (t <= start) return 1.0;
  if (t >= 1.0) return 0.0;
  const double s = (t - start) / (1.0 - start);
  const double a = std::exp(-1.0 / (1.0 - s));
  const double b = std::exp(-1.0 / s);
  return a / (a + b);
}

}  // namespace stratlab
