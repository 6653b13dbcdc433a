#pragma once

// Parametrized minimal and model hypersurfaces in R^n: mass and density in
// balls, second fundamental form, regularity scale, a binned surrogate for
// the distance to conical varifolds, curvature L^p sweeps and tube masses.
//
// Each model supplies a reduced chart: coordinates in which a ball B_r(x)
// (or an annulus) cuts the surface along intervals with closed-form ends,
// with one representative point per node. Integrands must be invariant
// under the model's symmetries fixing x (|A|, distances to x, constants).

#include "stratlab/core.hpp"
#include "stratlab/homogeneity.hpp"
#include "stratlab/quadrature.hpp"
#include "stratlab/regularity.hpp"
#include "stratlab/stratification.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace stratlab {

using ChartFn = std::function<void(const Vec& point, double weight)>;

/// A hypersurface M = {F = 0} in R^n.
class HypersurfaceModel {
 public:
  virtual ~HypersurfaceModel() = default;

  virtual int ambient_dim() const = 0;
  int dim() const { return ambient_dim() - 1; }
  virtual std::string id() const = 0;

  virtual double implicit(const Vec& y) const = 0;
  virtual Vec implicit_gradient(const Vec& y) const = 0;

  /// Closed-form |A| where known.
  virtual std::optional<double> shape_norm_exact(const Vec&) const { return std::nullopt; }

  /// Declared isolated singular points.
  virtual std::vector<Vec> singular_points() const { return {}; }

  /// Radius of the working region B_R(0).
  virtual double radius() const { return 2.0; }

  /// Reduced chart rule for M intersected with r_in < |y - x| <= r_out.
  virtual void chart(const Vec& x, double r_in, double r_out, int q, const ChartFn& fn) const = 0;

  /// Area-weighted quasi-random samples of M within B_r(x), driven by the
  /// Halton stream `seq` from index `offset`. Each call to fn is one accepted
  /// sample; rejected draws are not reported.
  virtual void sample(const Vec& x, double r, std::size_t count, const HaltonSequence& seq,
                      std::uint64_t offset, const ChartFn& fn) const = 0;

  /// Number of Halton dimensions sample() consumes.
  virtual int sample_dims() const = 0;

  /// As sample(), with the number of draws raised (up to 64 x target) so that
  /// about `target` samples fall in the ball.
  void sample_accepted(const Vec& x, double r, std::size_t target, const HaltonSequence& seq,
                       std::uint64_t offset, const ChartFn& fn) const {
    std::size_t hit = 0;
    sample(x, r, target, seq, offset, [&](const Vec&, double) { ++hit; });
    std::size_t draws = target;
    if (hit > 0 && hit < target)
      draws = std::min<std::size_t>(64 * target, (target * target + hit - 1) / hit);
    else if (hit == 0)
      draws = 64 * target;
    sample(x, r, draws, seq, offset, fn);
  }

  Vec normal(const Vec& y) const {
    const Vec g = implicit_gradient(y);
    const double gn = g.norm();
    if (!(gn > 0.0)) throw SingularPoint("implicit gradient vanishes");
    return g / gn;
  }

  double singular_distance(const Vec& y) const {
    double d = std::numeric_limits<double>::infinity();
    for (const Vec& p : singular_points()) d = std::min(d, (y - p).norm());
    return d;
  }

  bool on_surface(const Vec& y, double tol = 1e-9) const {
    return std::abs(implicit(y)) <= tol * std::max(1.0, implicit_gradient(y).norm() * std::max(1.0, y.norm()));
  }

 protected:
  /// Annulus as the difference of two balls, for charts that only cut balls.
  void annulus_by_difference(const Vec& x, double r_in, double r_out, int q, const ChartFn& fn,
                             const std::function<void(double, const ChartFn&)>& ball) const {
    ball(r_out, fn);
    if (r_in > 0.0) ball(r_in, [&](const Vec& p, double w) { fn(p, -w); });
    (void)x;
    (void)q;
  }
};

namespace detail {

/// Gauss nodes on [0, amax]; with `substitute`, a = amax (1 - w^2) clusters
/// nodes at amax where the integrand has a square-root edge.
template <class Fn>
void edge_nodes(int q, double amax, bool substitute, Fn&& fn) {
  if (!(amax > 0.0)) return;
  if (!substitute) {
    for_gauss_nodes(q, 0.0, amax, fn);
    return;
  }
  for_gauss_nodes(q, 0.0, 1.0, [&](double w, double gw) {
    fn(amax * (1.0 - w * w), gw * 2.0 * amax * w);
  });
}

/// Draws alpha in [0, amax] with density close to sin^m(alpha), piecewise
/// constant over 256 cells; draw() returns alpha and its importance weight
/// sin^m(alpha) / p(alpha), so the weights average to the integral of sin^m.
class SineSampler {
 public:
  SineSampler(int m, double amax) : m_(m), amax_(amax), cdf_(kCells + 1, 0.0) {
    const double h = amax / kCells;
    for (int c = 0; c < kCells; ++c) {
      double cell = 0.0;
      for_gauss_nodes(4, c * h, (c + 1) * h, [&](double a, double w) { cell += w * std::pow(std::sin(a), m); });
      cdf_[c + 1] = cdf_[c] + std::max(cell, 1e-300);
    }
  }
  std::pair<double, double> draw(double u) const {
    const double total = cdf_.back(), h = amax_ / kCells;
    const double target = u * total;
    const int c = std::clamp(static_cast<int>(std::upper_bound(cdf_.begin(), cdf_.end(), target) - cdf_.begin()) - 1, 0, kCells - 1);
    const double cell = cdf_[c + 1] - cdf_[c];
    const double a = (c + std::clamp((target - cdf_[c]) / cell, 0.0, 1.0)) * h;
    const double p = cell / (h * total);
    return {a, std::pow(std::sin(a), m_) / p};
  }

 private:
  static constexpr int kCells = 256;
  int m_;
  double amax_;
  std::vector<double> cdf_;
};

/// rho in [lo, hi] with density proportional to rho^m (exact inversion);
/// returns rho and the integral of rho^m over [lo, hi].
inline std::pair<double, double> power_draw(int m, double lo, double hi, double u) {
  const double a = std::pow(lo, m + 1), b = std::pow(hi, m + 1);
  return {std::pow(a + u * (b - a), 1.0 / (m + 1)), (b - a) / (m + 1)};
}

/// Unit vector orthogonal to `a` (a unit), completing a fixed frame.
inline Vec orthogonal_unit(const Vec& a) { return Vec(complement_basis(a).col(0)); }

inline Vec unit_or(const Vec& v, int n) {
  const double nv = v.norm();
  return nv > 1e-300 ? Vec(v / nv) : unit(n, 0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Models

/// {y_n = 0} in R^n.
class Hyperplane final : public HypersurfaceModel {
 public:
  explicit Hyperplane(int n) : n_(n) {
    if (n < 2) throw UnsupportedModel("hyperplane needs n >= 2");
  }
  int ambient_dim() const override { return n_; }
  std::string id() const override { return "hyperplane(" + std::to_string(n_) + ")"; }
  double implicit(const Vec& y) const override { return y(n_ - 1); }
  Vec implicit_gradient(const Vec&) const override { return unit(n_, n_ - 1); }
  std::optional<double> shape_norm_exact(const Vec&) const override { return 0.0; }

  void chart(const Vec& x, double r_in, double r_out, int q, const ChartFn& fn) const override {
    const double d = std::abs(x(n_ - 1));
    Vec foot = x;
    foot(n_ - 1) = 0.0;
    const double lo2 = r_in * r_in - d * d, hi2 = r_out * r_out - d * d;
    if (hi2 <= 0.0) return;
    const double lo = lo2 > 0.0 ? std::sqrt(lo2) : 0.0, hi = std::sqrt(hi2);
    const double area = sphere_area(n_ - 2);
    for_gauss_nodes(q, lo, hi, [&](double s, double w) {
      fn(Vec(foot + s * unit(n_, 0)), w * area * std::pow(s, n_ - 2));
    });
  }

  int sample_dims() const override { return n_; }
  void sample(const Vec& x, double r, std::size_t count, const HaltonSequence& seq,
              std::uint64_t offset, const ChartFn& fn) const override {
    const double d = std::abs(x(n_ - 1));
    if (d >= r || count == 0) return;
    Vec foot = x;
    foot(n_ - 1) = 0.0;
    const double smax = std::sqrt(r * r - d * d);
    const double w = ball_volume(n_ - 1) * std::pow(smax, n_ - 1) / count;
    std::vector<double> u(n_);
    for (std::size_t i = 0; i < count; ++i) {
      seq.point(offset + i, u.data());
      const Vec b = ball_point_from_uniforms(u.data(), n_ - 1);
      Vec p = foot;
      p.head(n_ - 1) += smax * b;
      fn(p, w);
    }
  }

 private:
  int n_;
};

/// Round sphere {|y| = R} in R^n.
class Sphere final : public HypersurfaceModel {
 public:
  Sphere(int n, double R) : n_(n), R_(R) {
    if (n < 2 || !(R > 0.0)) throw UnsupportedModel("sphere needs n >= 2 and R > 0");
  }
  int ambient_dim() const override { return n_; }
  double sphere_radius() const { return R_; }
  std::string id() const override {
    std::ostringstream os;
    os << "sphere(" << n_ << "," << R_ << ")";
    return os.str();
  }
  double radius() const override { return std::max(2.0, 2.0 * R_); }
  double implicit(const Vec& y) const override { return y.squaredNorm() - R_ * R_; }
  Vec implicit_gradient(const Vec& y) const override { return 2.0 * y; }
  std::optional<double> shape_norm_exact(const Vec&) const override {
    return std::sqrt(n_ - 1.0) / R_;
  }

  void chart(const Vec& x, double r_in, double r_out, int q, const ChartFn& fn) const override {
    const double X = x.norm();
    const Vec xhat = detail::unit_or(x, n_);
    const Vec ehat = detail::orthogonal_unit(xhat);
    const double area = sphere_area(n_ - 2) * std::pow(R_, n_ - 1);
    if (X < 1e-14 * R_) {
      if (R_ > r_in && R_ <= r_out) {
        for_gauss_nodes(q, 0.0, std::numbers::pi, [&](double a, double w) {
          fn(Vec(R_ * (std::cos(a) * xhat + std::sin(a) * ehat)),
             w * area * std::pow(std::sin(a), n_ - 2));
        });
      }
      return;
    }
    // |p - x|^2 = R^2 + X^2 - 2 R X cos(a).
    auto cos_at = [&](double r) { return (R_ * R_ + X * X - r * r) / (2.0 * R_ * X); };
    const double a_lo = std::acos(std::clamp(cos_at(r_in), -1.0, 1.0));
    const double a_hi = std::acos(std::clamp(cos_at(r_out), -1.0, 1.0));
    if (!(a_hi > a_lo)) return;
    for_gauss_nodes(q, a_lo, a_hi, [&](double a, double w) {
      fn(Vec(R_ * (std::cos(a) * xhat + std::sin(a) * ehat)),
         w * area * std::pow(std::sin(a), n_ - 2));
    });
  }

  int sample_dims() const override { return n_; }
  void sample(const Vec& x, double r, std::size_t count, const HaltonSequence& seq,
              std::uint64_t offset, const ChartFn& fn) const override {
    const double X = x.norm();
    const Vec xhat = detail::unit_or(x, n_);
    const Mat comp = complement_basis(xhat);
    double a_hi = std::numbers::pi;
    if (X > 1e-14 * R_) {
      a_hi = std::acos(std::clamp((R_ * R_ + X * X - r * r) / (2.0 * R_ * X), -1.0, 1.0));
    } else if (R_ > r) {
      return;
    }
    if (!(a_hi > 0.0) || count == 0) return;
    const double area = sphere_area(n_ - 2) * std::pow(R_, n_ - 1);
    const detail::SineSampler sa(n_ - 2, a_hi);
    std::vector<double> u(n_);
    for (std::size_t i = 0; i < count; ++i) {
      seq.point(offset + i, u.data());
      const auto [a, wa] = sa.draw(u[0]);
      const Vec dir = comp * sphere_point_from_uniforms(u.data() + 1, n_ - 2);
      const Vec p = R_ * (std::cos(a) * xhat + std::sin(a) * dir);
      if ((p - x).norm() > r) continue;
      fn(p, wa * area / count);
    }
  }

 private:
  int n_;
  double R_;
};

/// Round cylinder S^{n-2}(a) x R with axis e_axis.
class Cylinder final : public HypersurfaceModel {
 public:
  Cylinder(int n, int axis, double a = 0.5) : n_(n), axis_(axis), a_(a) {
    if (n < 3 || axis < 0 || axis >= n || !(a > 0.0))
      throw UnsupportedModel("cylinder needs n >= 3, a valid axis and radius > 0");
  }
  int ambient_dim() const override { return n_; }
  std::string id() const override {
    std::ostringstream os;
    os << "cylinder(" << n_ << "," << axis_ << "," << a_ << ")";
    return os.str();
  }
  Vec transverse(const Vec& y) const {
    Vec t = y;
    t(axis_) = 0.0;
    return t;
  }
  double implicit(const Vec& y) const override { return transverse(y).squaredNorm() - a_ * a_; }
  Vec implicit_gradient(const Vec& y) const override { return 2.0 * transverse(y); }
  std::optional<double> shape_norm_exact(const Vec&) const override {
    return std::sqrt(n_ - 2.0) / a_;
  }

  void chart(const Vec& x, double r_in, double r_out, int q, const ChartFn& fn) const override {
    annulus_by_difference(x, r_in, r_out, q, fn,
                          [&](double r, const ChartFn& g) { ball(x, r, q, g); });
  }

  int sample_dims() const override { return n_; }
  void sample(const Vec& x, double r, std::size_t count, const HaltonSequence& seq,
              std::uint64_t offset, const ChartFn& fn) const override {
    Frame fr = frame(x);
    const double amax = alpha_max(fr.xi, r);
    if (!(amax > 0.0) || count == 0) return;
    const double area = sphere_area(n_ - 3) * std::pow(a_, n_ - 2);
    const detail::SineSampler sa(n_ - 3, amax);
    std::vector<double> u(n_);
    for (std::size_t i = 0; i < count; ++i) {
      seq.point(offset + i, u.data());
      const double t = r * (2.0 * u[0] - 1.0);
      const auto [al, wa] = sa.draw(u[1]);
      const Vec dir = fr.rest * sphere_point_from_uniforms(u.data() + 2, n_ - 3);
      const Vec p = fr.axial + t * unit(n_, axis_) +
                    a_ * (std::cos(al) * fr.what + std::sin(al) * dir);
      if ((p - x).norm() > r) continue;
      fn(p, 2.0 * r * wa * area / count);
    }
  }

 private:
  struct Frame {
    Vec axial;  // x projected to the axis
    Vec what;   // unit transverse direction of x
    Mat rest;   // basis of the transverse directions orthogonal to what
    double xi;  // |transverse(x)|
  };

  Frame frame(const Vec& x) const {
    Frame fr;
    const Vec tx = transverse(x);
    fr.xi = tx.norm();
    fr.axial = x - tx;
    Vec w = fr.xi > 1e-14 ? Vec(tx / fr.xi) : unit(n_, axis_ == 0 ? 1 : 0);
    fr.what = w;
    Mat span(n_, 2);
    span.col(0) = unit(n_, axis_);
    span.col(1) = w;
    fr.rest = orthogonal_complement(span, n_);
    return fr;
  }

  // Largest angle a with a^2 + xi^2 - 2 a xi cos(alpha) <= r^2.
  double alpha_max(double xi, double r) const {
    if (xi < 1e-14) return a_ <= r ? std::numbers::pi : 0.0;
    const double c = (a_ * a_ + xi * xi - r * r) / (2.0 * a_ * xi);
    if (c >= 1.0) return 0.0;
    return std::acos(std::max(-1.0, c));
  }

  void ball(const Vec& x, double r, int q, const ChartFn& fn) const {
    const Frame fr = frame(x);
    const double amax = alpha_max(fr.xi, r);
    if (!(amax > 0.0)) return;
    const bool edge = amax < std::numbers::pi;
    const double area = sphere_area(n_ - 3) * std::pow(a_, n_ - 2);
    const Vec dir = fr.rest.cols() > 0 ? Vec(fr.rest.col(0)) : zeros(n_);
    detail::edge_nodes(q, amax, edge, [&](double al, double wa) {
      const double qa = a_ * a_ + fr.xi * fr.xi - 2.0 * a_ * fr.xi * std::cos(al);
      const double th = std::sqrt(std::max(0.0, r * r - qa));
      const Vec ring = a_ * (std::cos(al) * fr.what + std::sin(al) * dir);
      for_gauss_nodes(q, -th, th, [&](double t, double wt) {
        fn(Vec(fr.axial + t * unit(n_, axis_) + ring),
           wa * wt * area * std::pow(std::sin(al), n_ - 3));
      });
    });
  }

  int n_, axis_;
  double a_;
};

/// The Simons cone {|u| = |v|}, u, v in R^4, in R^8.
class SimonsCone final : public HypersurfaceModel {
 public:
  int ambient_dim() const override { return 8; }
  std::string id() const override { return "simons-cone"; }
  double implicit(const Vec& y) const override {
    return y.head(4).squaredNorm() - y.tail(4).squaredNorm();
  }
  Vec implicit_gradient(const Vec& y) const override {
    Vec g(8);
    g.head(4) = 2.0 * y.head(4);
    g.tail(4) = -2.0 * y.tail(4);
    return g;
  }
  /// The link S^3(1/sqrt2) x S^3(1/sqrt2) has |A|^2 = 6, so |A| = sqrt6/|y|.
  std::optional<double> shape_norm_exact(const Vec& y) const override {
    const double rho = y.norm();
    if (rho == 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(6.0) / rho;
  }
  std::vector<Vec> singular_points() const override { return {zeros(8)}; }

  // Coordinates: y = (rho / sqrt2)(w1, w2), w_i in S^3, with w_i at angle
  // alpha_i from the u- and v-parts of x. Area element
  // (rho^6 / 8) (4 pi sin^2 alpha_1) (4 pi sin^2 alpha_2) d rho d alpha_1 d alpha_2,
  // and |y - x|^2 = rho^2 + |x|^2 - 2 rho B with
  // B = (|u0| cos alpha_1 + |v0| cos alpha_2) / sqrt2.
  void chart(const Vec& x, double r_in, double r_out, int q, const ChartFn& fn) const override {
    if (x.norm() == 0.0) {
      const Frame fr = frame(x);
      const double lo = std::max(0.0, r_in);
      if (!(r_out > lo)) return;
      for_gauss_nodes(q, 0.0, std::numbers::pi, [&](double a1, double w1) {
        for_gauss_nodes(q, 0.0, std::numbers::pi, [&](double a2, double w2) {
          for_gauss_nodes(q, lo, r_out, [&](double rho, double wr) {
            fn(point(fr, rho, a1, a2), w1 * w2 * wr * density(rho, a1, a2));
          });
        });
      });
      return;
    }
    annulus_by_difference(x, r_in, r_out, q, fn,
                          [&](double r, const ChartFn& g) { ball(x, r, q, g); });
  }

  int sample_dims() const override { return 9; }
  void sample(const Vec& x, double r, std::size_t count, const HaltonSequence& seq,
              std::uint64_t offset, const ChartFn& fn) const override {
    const Frame fr = frame(x);
    const double X = x.norm();
    const double rho_lo = std::max(0.0, X - r), rho_hi = X + r;
    const Bounds bd = bounds(fr, X, r);
    if (bd.empty || count == 0) return;
    const Mat c1 = complement_basis(fr.u), c2 = complement_basis(fr.v);
    const detail::SineSampler s1(2, bd.a1max), s2(2, bd.a2max_any);
    const double c = 16.0 * std::numbers::pi * std::numbers::pi / 8.0;
    std::vector<double> u(9);
    for (std::size_t i = 0; i < count; ++i) {
      seq.point(offset + i, u.data());
      const auto [rho, wr] = detail::power_draw(6, rho_lo, rho_hi, u[0]);
      const auto [a1, w1] = s1.draw(u[1]);
      const auto [a2, w2] = s2.draw(u[2]);
      const Vec e1 = c1 * sphere_point_from_uniforms(u.data() + 3, 2);
      const Vec e2 = c2 * sphere_point_from_uniforms(u.data() + 6, 2);
      Vec p(8);
      p.head(4) = (rho / std::numbers::sqrt2) * (std::cos(a1) * fr.u + std::sin(a1) * e1);
      p.tail(4) = (rho / std::numbers::sqrt2) * (std::cos(a2) * fr.v + std::sin(a2) * e2);
      if ((p - x).norm() > r) continue;
      fn(p, c * wr * w1 * w2 / count);
    }
  }

 private:
  struct Frame {
    Vec u, v;          // unit directions of the u- and v-parts of x (R^4)
    Vec eu, ev;        // fixed unit vectors orthogonal to them
    double a = 0, b = 0;  // |u0|, |v0|
  };
  struct Bounds {
    bool empty = false;
    bool limited = false;  // angles constrained by the ball
    double kappa = 0;      // sqrt(|x|^2 - r^2) when limited
    double a1max = std::numbers::pi;
    double a2max_any = std::numbers::pi;  // over all alpha_1
  };

  static Frame frame(const Vec& x) {
    Frame fr;
    const Vec u0 = x.head(4), v0 = x.tail(4);
    fr.a = u0.norm();
    fr.b = v0.norm();
    fr.u = detail::unit_or(u0, 4);
    fr.v = detail::unit_or(v0, 4);
    fr.eu = detail::orthogonal_unit(fr.u);
    fr.ev = detail::orthogonal_unit(fr.v);
    return fr;
  }

  static double density(double rho, double a1, double a2) {
    const double s1 = std::sin(a1), s2 = std::sin(a2);
    return std::pow(rho, 6) / 8.0 * (4.0 * std::numbers::pi * s1 * s1) *
           (4.0 * std::numbers::pi * s2 * s2);
  }

  static Vec point(const Frame& fr, double rho, double a1, double a2) {
    Vec p(8);
    p.head(4) = (rho / std::numbers::sqrt2) * (std::cos(a1) * fr.u + std::sin(a1) * fr.eu);
    p.tail(4) = (rho / std::numbers::sqrt2) * (std::cos(a2) * fr.v + std::sin(a2) * fr.ev);
    return p;
  }

  // Largest angle with coef cos(alpha) >= need (alpha in [0, pi]); -1 if none.
  static double angle_limit(double coef, double need) {
    if (coef <= 0.0) return need <= 0.0 ? std::numbers::pi : -1.0;
    const double c = need / coef;
    if (c > 1.0) return -1.0;
    if (c <= -1.0) return std::numbers::pi;
    return std::acos(c);
  }

  static Bounds bounds(const Frame& fr, double X, double r) {
    Bounds bd;
    if (X < r) return bd;
    // Need rho real and positive: B >= kappa.
    bd.limited = true;
    bd.kappa = std::sqrt(X * X - r * r);
    const double need = std::numbers::sqrt2 * bd.kappa;
    bd.a1max = angle_limit(fr.a, need - fr.b);
    bd.a2max_any = angle_limit(fr.b, need - fr.a);
    if (bd.a1max < 0.0 || bd.a2max_any < 0.0) bd.empty = true;
    return bd;
  }

  void ball(const Vec& x, double r, int q, const ChartFn& fn) const {
    const Frame fr = frame(x);
    const double X = x.norm();
    const Bounds bd = bounds(fr, X, r);
    if (bd.empty) return;
    const double need = std::numbers::sqrt2 * bd.kappa;
    detail::edge_nodes(q, bd.a1max, bd.limited && bd.a1max < std::numbers::pi,
                       [&](double a1, double w1) {
      const double c1 = std::cos(a1);
      const double a2max =
          bd.limited ? angle_limit(fr.b, need - fr.a * c1) : std::numbers::pi;
      if (a2max <= 0.0) return;
      detail::edge_nodes(q, a2max, bd.limited && a2max < std::numbers::pi,
                         [&](double a2, double w2) {
        const double B = (fr.a * c1 + fr.b * std::cos(a2)) / std::numbers::sqrt2;
        const double D = B * B - X * X + r * r;
        if (D <= 0.0) return;
        const double lo = std::max(0.0, B - std::sqrt(D)), hi = B + std::sqrt(D);
        if (!(hi > lo)) return;
        for_gauss_nodes(q, lo, hi, [&](double rho, double wr) {
          fn(point(fr, rho, a1, a2), w1 * w2 * wr * density(rho, a1, a2));
        });
      });
    });
  }
};

// ---------------------------------------------------------------------------
// Mass and density

struct CurrentOptions {
  int order = 16;  // chart Gauss order
};

/// Integral over M within r_in < |y - x| <= r_out of an invariant g, with the
/// difference against a 3/4-order rule as the error.
template <class G>
QuadResult chart_integral(const HypersurfaceModel& m, const Vec& x, double r_in, double r_out,
                          G&& g, int order = 16) {
  auto run = [&](int q) {
    double acc = 0.0;
    m.chart(x, r_in, r_out, q, [&](const Vec& p, double w) { acc += w * g(p); });
    return acc;
  };
  const double fine = run(order);
  const double coarse = run(std::max(2, 3 * order / 4));
  return {fine, std::abs(fine - coarse)};
}

/// |M|(B_r(x)).
inline QuadResult mass(const HypersurfaceModel& m, const Vec& x, double r,
                       const CurrentOptions& opt = {}) {
  if (!(r > 0.0)) throw OutOfDomain("need r > 0");
  if (x.size() != m.ambient_dim()) throw OutOfDomain("dimension mismatch");
  return chart_integral(m, x, 0.0, r, [](const Vec&) { return 1.0; }, opt.order);
}

/// theta_r(x) = r^{-k} |M|(B_r(x)), k = n - 1.
inline QuadResult density(const HypersurfaceModel& m, const Vec& x, double r,
                          const CurrentOptions& opt = {}) {
  QuadResult q = mass(m, x, r, opt);
  const double s = std::pow(r, -m.dim());
  return {q.value * s, q.error * s};
}

struct MassProfile {
  Vec center;
  std::vector<double> radii;
  std::vector<double> values;
  std::vector<double> errors;

  bool monotone(double factor = 3.0) const {
    for (std::size_t j = 0; j + 1 < radii.size(); ++j)
      if (values[j + 1] > values[j] + factor * (errors[j] + errors[j + 1])) return false;
    return true;
  }
  double max_relative_deviation(double reference) const {
    double d = 0.0;
    for (double v : values) d = std::max(d, std::abs(v - reference) / reference);
    return d;
  }
};

inline MassProfile mass_profile(const HypersurfaceModel& m, const Vec& x, double gamma, int j_max,
                                double r0 = 1.0, const CurrentOptions& opt = {}) {
  MassProfile p;
  p.center = x;
  double r = r0;
  for (int j = 0; j <= j_max; ++j, r *= gamma) {
    const QuadResult q = density(m, x, r, opt);
    p.radii.push_back(r);
    p.values.push_back(q.value);
    p.errors.push_back(q.error);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Second fundamental form

struct ShapeOperator {
  double norm = 0.0;  // |A|, Frobenius
  double mean = 0.0;  // trace (mean curvature, unnormalised)
};

/// Shape operator from central differences of the unit normal field along a
/// tangent frame at y, step 1e-4 max(|y|, 1e-3).
inline ShapeOperator shape_operator_fd(const HypersurfaceModel& m, const Vec& y) {
  if (m.singular_distance(y) <= 1e-12) throw SingularPoint("shape operator at a singular point");
  const int n = m.ambient_dim();
  const Vec N = m.normal(y);
  const Mat T = complement_basis(N);
  const double h = 1e-4 * std::max(y.norm(), 1e-3);
  Mat S(n - 1, n - 1);
  for (int i = 0; i < n - 1; ++i) {
    const Vec dN = (m.normal(Vec(y + h * T.col(i))) - m.normal(Vec(y - h * T.col(i)))) / (2.0 * h);
    S.col(i) = T.transpose() * dN;
  }
  const Mat sym = 0.5 * (S + S.transpose());
  return {sym.norm(), sym.trace()};
}

/// |A|(y): closed form where available, else finite differences.
inline double shape_norm(const HypersurfaceModel& m, const Vec& y) {
  if (m.singular_distance(y) <= 1e-12) throw SingularPoint("|A| is infinite at a singular point");
  if (auto a = m.shape_norm_exact(y)) return *a;
  return shape_operator_fd(m, y).norm;
}

// ---------------------------------------------------------------------------
// Regularity scale

/// Largest r <= R - |x| with sup over M within B_r(x) of r |A| <= 1, the sup
/// taken over chart nodes, x itself, and the boundary point facing each
/// singular point. Zero at singular points.
inline double current_regularity_scale(const HypersurfaceModel& m, const Vec& x, int sheets = 1,
                                       const RegularityOptions& opt = {}) {
  if (sheets != 1) throw UnsupportedModel("catalog hypersurfaces are single sheets");
  const double cap = m.radius() - x.norm();
  if (!(cap > 0.0)) return 0.0;
  if (m.singular_distance(x) <= 1e-12) return 0.0;
  const double sdist = m.singular_distance(x);
  double hi = cap;
  const double a0 = shape_norm(m, x);
  if (a0 > 0.0) hi = std::min(hi, 1.0 / a0);
  if (std::isfinite(sdist)) hi = std::min(hi, sdist * (1.0 - 1e-12));
  return detail::log_bisect(hi, opt.floor * cap, opt, [&](double r) {
    if (sdist <= r) return false;
    double sup = r * a0;
    for (const Vec& p : m.singular_points()) {
      const Vec d = p - x;
      const Vec y = x + std::min(r, d.norm()) * d.normalized();
      if (m.on_surface(y)) sup = std::max(sup, r * shape_norm(m, y));
    }
    if (sup > 1.0) return false;
    m.chart(x, 0.0, r, 4, [&](const Vec& p, double) {
      if (sup <= 1.0) sup = std::max(sup, r * shape_norm(m, p));
    });
    return sup <= 1.0;
  });
}

// ---------------------------------------------------------------------------
// Curvature L^p

/// Integral of |A|^p over M within B_1(0) outside B_eps of the singular
/// point, swept over eps = 2^-3..2^-10. Singular points other than the
/// origin are not supported.
inline SweepResult lp_A(const HypersurfaceModel& m, double p, const SweepOptions& sw = {},
                        const CurrentOptions& opt = {}) {
  if (!(p > 0.0)) throw OutOfDomain("need p > 0");
  const int n = m.ambient_dim();
  const Vec origin = zeros(n);
  std::optional<Vec> sing;
  for (const Vec& s : m.singular_points()) {
    if (s.norm() > 1.0) continue;
    if (s.norm() > 1e-12 || sing) throw UnsupportedModel("curvature sweeps need the singular point at the origin");
    sing = s;
  }
  auto g = [&](const Vec& y) { return std::pow(shape_norm(m, y), p); };
  SweepResult res;
  res.p = p;
  if (!sing) {
    const QuadResult whole = chart_integral(m, origin, 0.0, 1.0, g, opt.order);
    for (int k = sw.m_lo; k <= sw.m_hi; ++k) {
      res.eps.push_back(std::ldexp(1.0, -k));
      res.values.push_back(whole.value);
      res.errors.push_back(whole.error);
    }
    res.verdict = Verdict::Convergent;
    res.decay = std::numeric_limits<double>::infinity();
    res.extrapolated = whole.value;
    return res;
  }
  QuadResult acc = chart_integral(m, origin, std::ldexp(1.0, -sw.m_lo), 1.0, g, opt.order);
  std::vector<double> inc;
  for (int k = sw.m_lo; k <= sw.m_hi; ++k) {
    if (k > sw.m_lo) {
      const QuadResult shell =
          chart_integral(m, origin, std::ldexp(1.0, -k), std::ldexp(1.0, -(k - 1)), g, opt.order);
      acc.value += shell.value;
      acc.error += shell.error;
      inc.push_back(shell.value);
    }
    res.eps.push_back(std::ldexp(1.0, -k));
    res.values.push_back(acc.value);
    res.errors.push_back(acc.error);
  }
  detail::classify_sweep(res, inc, sw);
  return res;
}

// ---------------------------------------------------------------------------
// Tube masses

struct TubeMass {
  double value = 0.0;
  double error = 0.0;
  bool exact_chart = false;
};

/// |M|(T_r(S) within B_1). A single centre whose ball lies in B_1 uses the
/// chart; otherwise each ball B_r(s) is sampled and samples are weighted by
/// 1 / (number of balls containing them), so overlaps count once.
inline TubeMass current_tube_mass(const HypersurfaceModel& m, const std::vector<Vec>& S, double r,
                                  std::size_t samples_per_ball = 2048, std::uint64_t seed = 1,
                                  const CurrentOptions& opt = {}) {
  TubeMass out;
  if (S.empty()) return out;
  if (S.size() == 1 && S.front().norm() + r <= 1.0) {
    const QuadResult q = mass(m, S.front(), r, opt);
    out.value = q.value;
    out.error = q.error;
    out.exact_chart = true;
    return out;
  }
  PointIndex index(S, r);
  HaltonSequence seq(m.sample_dims(), seed);
  double total = 0.0, var = 0.0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    double sum = 0.0, sum2 = 0.0;
    std::size_t accepted = 0;
    m.sample(S[i], r, samples_per_ball, seq, i * 64 * samples_per_ball, [&](const Vec& y, double w) {
      ++accepted;
      if (y.norm() > 1.0) return;
      std::size_t c = 0;
      index.for_each_within(y, r, [&](std::size_t) { ++c; });
      const double v = w / static_cast<double>(std::max<std::size_t>(c, 1));
      sum += v;
      sum2 += v * v;
    });
    total += sum;
    const double n = static_cast<double>(samples_per_ball);
    var += std::max(0.0, sum2 - sum * sum / n);
  }
  out.value = total;
  out.error = std::sqrt(var);
  return out;
}

// ---------------------------------------------------------------------------
// Conical defect

struct ConicalOptions {
  std::size_t samples = 4096;
  int translations = 4;  // quasi-random translates per sample along the plane
  int ray_nodes = 8;     // Gauss nodes along each ray
  int net_size = 16;     // Grassmannian candidates besides the tangent plane
  std::uint64_t seed = 11;
};

struct ConicalResult {
  double defect = 0.0;
  Vec vertex;   // in rescaled coordinates
  Mat plane;    // n x ell
  int candidates = 0;
  std::size_t samples = 0;
};

namespace detail {

/// Fixed generic rotation for binning, so that bin boundaries never line up
/// with coordinate symmetries of the models.
inline const Mat& binning_frame(int n) {
  static std::mutex mu;
  static std::map<int, Mat> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    HaltonSequence seq(n * n, 0x5eedULL);
    std::vector<double> u(n * n);
    seq.point(1, u.data());
    Eigen::MatrixXd g(n, n);
    for (int c = 0; c < n; ++c)
      for (int r = 0; r < n; ++r) g(r, c) = normal_quantile(u[c * n + r]);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    it = cache.emplace(n, Mat(Eigen::MatrixXd(qr.householderQ()))).first;
  }
  return it->second;
}

/// Bins: 3 dyadic radial shells x 2n signed coordinate sectors x n normal
/// cells (dominant normal coordinate), in the binning frame.
inline std::size_t varifold_bin(const Vec& z0, const Vec& N0) {
  const int n = static_cast<int>(z0.size());
  const Mat& Q = binning_frame(n);
  const Vec z = Q.transpose() * z0, N = Q.transpose() * N0;
  const double rz = z.norm();
  const int shell = rz < 0.25 ? 0 : rz < 0.5 ? 1 : 2;
  int sj = 0, nj = 0;
  for (int j = 1; j < n; ++j) {
    if (std::abs(z(j)) > std::abs(z(sj))) sj = j;
    if (std::abs(N(j)) > std::abs(N(nj))) nj = j;
  }
  const int sector = 2 * sj + (z(sj) < 0.0 ? 1 : 0);
  return (static_cast<std::size_t>(shell) * 2 * n + sector) * n + nj;
}

}  // namespace detail

/// Binned total-variation surrogate for the distance from the rescaled mass
/// measure of M in B_r(x) to ell-conical measures. Candidates are built from
/// the measure itself: each sample is spread over its orbit under
/// translations along an ell-plane V and dilations about a vertex v, with
/// density s^{k-ell-1} along the rays and its own normal. Vertices are the
/// centre and singular points in the ball; planes are the tangent plane at x
/// (when smooth) and a Grassmannian net. The result is normalised by the
/// total mass, so it lies in [0, 2].
inline ConicalResult conical_defect(const HypersurfaceModel& m, const Vec& x, double r, int ell,
                                    const ConicalOptions& opt = {}) {
  const int n = m.ambient_dim(), k = n - 1;
  if (ell < 0 || ell > k) throw OutOfDomain("ell outside [0, k]");
  if (!(r > 0.0)) throw OutOfDomain("need r > 0");

  struct S {
    Vec z, N;
    double w;
  };
  std::vector<S> smp;
  HaltonSequence seq(m.sample_dims(), opt.seed);
  m.sample_accepted(x, r, opt.samples, seq, 0, [&](const Vec& y, double w) {
    if (m.singular_distance(y) <= 1e-14) return;
    smp.push_back({Vec((y - x) / r), m.normal(y), w});
  });
  ConicalResult res;
  res.samples = smp.size();
  res.vertex = zeros(n);
  res.plane = Mat(n, ell);
  if (smp.empty()) return res;

  const std::size_t nbins = 3 * 2 * n * n;
  std::vector<double> mu(nbins, 0.0);
  double total = 0.0;
  for (const auto& s : smp) {
    mu[detail::varifold_bin(s.z, s.N)] += s.w;
    total += s.w;
  }

  std::vector<Vec> vertices = {zeros(n)};
  for (const Vec& p : m.singular_points()) {
    const Vec z = (p - x) / r;
    if (z.norm() < 1.0 && z.norm() > 1e-12) vertices.push_back(z);
  }
  std::vector<Mat> planes;
  if (ell == 0) {
    planes.push_back(Mat(n, 0));
  } else {
    if (m.singular_distance(x) > 1e-12 && m.on_surface(x)) {
      const Mat T = complement_basis(m.normal(x));
      planes.push_back(Mat(T.leftCols(ell)));
    }
    for (const Mat& V : detail::grassmannian_net(n, ell, opt.net_size, opt.seed)) planes.push_back(V);
  }

  const GaussRule& gl = gauss_legendre(opt.ray_nodes);
  const int M = ell == 0 ? 1 : opt.translations;
  HaltonSequence tseq(std::max(1, ell + 1), opt.seed + 1);
  std::vector<double> u(ell + 1);
  const int expo = k - ell - 1;

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> J(nbins);
  struct Spread {
    Vec z;
    double w;
  };
  std::vector<Spread> buf;
  for (const Vec& v : vertices) {
    for (const Mat& V : planes) {
      ++res.candidates;
      std::fill(J.begin(), J.end(), 0.0);
      const double treach = 1.0 + v.norm();
      for (std::size_t i = 0; i < smp.size(); ++i) {
        const Vec d = smp[i].z - v;
        const Vec a = ell > 0 ? Vec(V * (V.transpose() * d)) : zeros(n);
        Vec b = d - a;
        if (ell == k) b.setZero();
        const double s0 = b.norm();
        if (ell < k && s0 < 1e-12) {
          J[detail::varifold_bin(smp[i].z, smp[i].N)] += smp[i].w;
          continue;
        }
        const Vec bh = ell < k ? Vec(b / s0) : zeros(n);
        buf.clear();
        double norm = 0.0;
        for (int t = 0; t < M; ++t) {
          Vec c = v;
          if (ell > 0) {
            tseq.point(i * M + t, u.data());
            c += V * (treach * ball_point_from_uniforms(u.data(), ell));
          }
          if (ell == k) {
            if (c.norm() <= 1.0) {
              buf.push_back({c, 1.0});
              norm += 1.0;
            }
            continue;
          }
          // Exit distance of c + s bh from B_1.
          const double cb = c.dot(bh);
          const double disc = cb * cb - c.squaredNorm() + 1.0;
          if (disc <= 0.0) continue;
          const double smax = -cb + std::sqrt(disc);
          if (!(smax > 0.0)) continue;
          const double smin = std::max(0.0, -cb - std::sqrt(disc));
          if (smin > 0.0) continue;  // c outside B_1: the ray enters later
          for (int e = 0; e < opt.ray_nodes; ++e) {
            const double s = 0.5 * smax * (gl.nodes[e] + 1.0);
            const double w = 0.5 * smax * gl.weights[e] * std::pow(s, expo);
            buf.push_back({Vec(c + s * bh), w});
            norm += w;
          }
        }
        if (!(norm > 0.0)) {
          J[detail::varifold_bin(smp[i].z, smp[i].N)] += smp[i].w;
          continue;
        }
        for (const auto& sp : buf) J[detail::varifold_bin(sp.z, smp[i].N)] += smp[i].w * sp.w / norm;
      }
      double tv = 0.0;
      for (std::size_t b = 0; b < nbins; ++b) tv += std::abs(mu[b] - J[b]);
      tv /= total;
      if (tv < best) {
        best = tv;
        res.defect = tv;
        res.vertex = v;
        res.plane = V;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Factories

inline std::shared_ptr<const HypersurfaceModel> hyperplane(int n) {
  return std::make_shared<Hyperplane>(n);
}
inline std::shared_ptr<const HypersurfaceModel> simons_cone() {
  return std::make_shared<SimonsCone>();
}
inline std::shared_ptr<const HypersurfaceModel> sphere_surface(int n, double R) {
  return std::make_shared<Sphere>(n, R);
}
inline std::shared_ptr<const HypersurfaceModel> cylinder_surface(int n, int axis, double a = 0.5) {
  return std::make_shared<Cylinder>(n, axis, a);
}

}  // namespace stratlab
