#pragma once

// Regularity scale r_f(x), bad sets, and L^p integrals near isolated
// singular points with a divergence verdict from a dyadic cutoff sweep.

#include "stratlab/energy.hpp"
#include "stratlab/map_models.hpp"
#include "stratlab/parallel.hpp"
#include "stratlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace stratlab {

struct RegularityOptions {
  double rel_tol = 1e-4;       // bisection stops at hi/lo - 1 below this
  double floor = 1e-9;         // resolution floor, relative to the cap
  int directions = 0;          // sup-net directions; 0: 2n axes + 16 Halton
  int polish_steps = 8;        // compass-search halvings around the worst sample
};

namespace detail {

inline std::vector<Vec> net_directions(int n, int extra) {
  std::vector<Vec> dirs;
  for (int i = 0; i < n; ++i) {
    dirs.push_back(unit(n, i));
    dirs.push_back(-unit(n, i));
  }
  HaltonSequence seq(n, 0);
  std::vector<double> u(n);
  for (int i = 0; i < extra; ++i) {
    seq.point(i, u.data());
    dirs.push_back(sphere_point_from_uniforms(u.data(), n - 1));
  }
  return dirs;
}

/// Sampled lower bound for sup over B_r(x) of phi, refined by compass search
/// from the worst sample. `toward` adds the boundary point facing a given
/// point (typically the nearest singularity); it is tried first. Returns as
/// soon as a value exceeds `limit`.
template <class Phi>
double sampled_sup(const Vec& x, double r, const std::vector<Vec>& dirs,
                   const std::optional<Vec>& toward, int polish, double limit, Phi&& phi) {
  const int n = static_cast<int>(x.size());
  Vec best_pt = x;
  double best = -std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec& y) {
    const double v = phi(y);
    if (v > best) best = v, best_pt = y;
    return best > limit;
  };
  if (toward) {
    const Vec d = *toward - x;
    const double nd = d.norm();
    if (nd > 0.0 && consider(Vec(x + std::min(r, nd) * d / nd))) return best;
  }
  if (consider(x)) return best;
  for (double s : {1.0, 0.75, 0.5, 0.25})
    for (const Vec& d : dirs)
      if (consider(Vec(x + s * r * d))) return best;
  double step = 0.125 * r;
  for (int it = 0; it < polish; ++it, step *= 0.5) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (int i = 0; i < n; ++i) {
        for (double sgn : {1.0, -1.0}) {
          Vec y = best_pt;
          y(i) += sgn * step;
          const Vec dy = y - x;
          if (dy.norm() > r) y = x + r * dy.normalized();
          const double v = phi(y);
          if (v > best * (1.0 + 1e-12)) {
            best = v;
            best_pt = y;
            moved = true;
            if (best > limit) return best;
          }
        }
      }
    }
  }
  return best;
}

/// Bisection in log r for the largest r in [floor, hi] with ok(r); ok is
/// assumed monotone (true below the answer). The bracket is found by halving
/// from hi. Returns 0 if ok fails down to floor.
template <class Ok>
double log_bisect(double hi, double floor, const RegularityOptions& opt, Ok&& ok) {
  if (ok(hi)) return hi;
  double lo = 0.5 * hi;
  while (!ok(lo)) {
    hi = lo;
    lo *= 0.5;
    if (lo < floor) return 0.0;
  }
  while (hi / lo - 1.0 > opt.rel_tol) {
    const double mid = std::sqrt(lo * hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace detail

/// Largest r <= R - |x| with sup_{B_r(x)} (r |grad f| + r^2 |grad^2 f|) <= 1.
/// A declared singularity inside B_r(x) makes the supremum infinite. The
/// supremum is sampled, so the returned r_f is an upper bound.
inline double regularity_scale(const ManifoldMap& f, const Vec& x,
                               const RegularityOptions& opt = {}) {
  f.check_domain(x);
  const int n = f.dim();
  const double cap = f.radius() - x.norm();
  if (!(cap > 0.0)) return 0.0;
  if (f.is_singular(x)) return 0.0;
  const auto dirs = detail::net_directions(n, opt.directions > 0 ? opt.directions : 16);
  const auto sing = f.nearest_singular_point(x);
  const double sdist = f.singular_distance(x);
  auto phi = [&](double r, const Vec& y) {
    return r * std::sqrt(f.gradient_norm_sq(y)) + r * r * f.hessian_norm(y);
  };
  // The value at x alone bounds r_f from above: r a + r^2 b <= 1.
  const double a = std::sqrt(f.gradient_norm_sq(x)), b = f.hessian_norm(x);
  double hi = cap;
  if (b > 0.0) {
    hi = std::min(hi, 2.0 / (a + std::sqrt(a * a + 4.0 * b)));
  } else if (a > 0.0) {
    hi = std::min(hi, 1.0 / a);
  }
  if (std::isfinite(sdist)) hi = std::min(hi, sdist * (1.0 - 1e-12));
  return detail::log_bisect(hi, opt.floor * cap, opt, [&](double r) {
    if (sdist <= r) return false;
    const double s = detail::sampled_sup(x, r, dirs, sing, opt.polish_steps, 1.0,
                                         [&](const Vec& y) { return phi(r, y); });
    return s <= 1.0;
  });
}

struct RegularityField {
  std::vector<Vec> points;
  std::vector<double> scale;  // r_f
  std::vector<double> cap;
};

inline RegularityField regularity_field(const ManifoldMap& f, const std::vector<Vec>& grid,
                                        const RegularityOptions& opt = {}) {
  RegularityField rf;
  rf.points = grid;
  rf.scale.assign(grid.size(), 0.0);
  rf.cap.assign(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t i) {
    rf.scale[i] = regularity_scale(f, grid[i], opt);
    rf.cap[i] = f.radius() - grid[i].norm();
  });
  return rf;
}

/// {x in grid : r_f(x) <= r}.
inline std::vector<Vec> bad_set(const RegularityField& rf, double r) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < rf.points.size(); ++i)
    if (rf.scale[i] <= r) out.push_back(rf.points[i]);
  return out;
}

inline std::vector<Vec> bad_set(const ManifoldMap& f, const std::vector<Vec>& grid, double r,
                                const RegularityOptions& opt = {}) {
  return bad_set(regularity_field(f, grid, opt), r);
}

// ---------------------------------------------------------------------------
// L^p sweeps

enum class Verdict { Convergent, DivergentLog, DivergentPower };

inline std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Convergent: return "CONVERGENT";
    case Verdict::DivergentLog: return "DIVERGENT(log)";
    case Verdict::DivergentPower: return "DIVERGENT(power)";
  }
  return "?";
}

inline char verdict_char(Verdict v) { return v == Verdict::Convergent ? 'C' : 'D'; }

/// Outcome of a dyadic cutoff sweep eps = 2^-m, m = m_lo..m_hi.
struct SweepResult {
  double p = 0.0;
  std::vector<double> eps;
  std::vector<double> values;   // integral outside B_eps(singular set)
  std::vector<double> errors;
  Verdict verdict = Verdict::Convergent;
  double decay = 0.0;           // c in increment ratio 2^{-c}
  double rate = 0.0;            // log: growth per unit ln(1/eps); power: exponent
  double extrapolated = 0.0;    // eps -> 0 limit when convergent
  double value_at(double e) const {
    for (std::size_t i = 0; i < eps.size(); ++i)
      if (std::abs(eps[i] - e) <= 1e-12 * e) return values[i];
    throw OutOfDomain("cutoff not on the sweep ladder");
  }
};

struct SweepOptions {
  int m_lo = 3;
  int m_hi = 10;
  double threshold = 0.05;  // |c| below this is logarithmic divergence
  int fit_increments = 4;
};

namespace detail {

/// Classifies shell increments Delta_m = I(2^-(m+1)) - I(2^-m), m = m_lo..m_hi-1.
inline void classify_sweep(SweepResult& res, const std::vector<double>& inc,
                           const SweepOptions& opt) {
  const double last = res.values.back();
  const std::size_t k = std::min<std::size_t>(opt.fit_increments, inc.size());
  const bool all_zero =
      std::all_of(inc.end() - k, inc.end(), [&](double d) { return std::abs(d) <= 1e-14 * std::max(1.0, std::abs(last)); });
  if (all_zero || k < 2) {
    res.verdict = Verdict::Convergent;
    res.decay = std::numeric_limits<double>::infinity();
    res.extrapolated = last;
    return;
  }
  // Least-squares slope of log2(Delta) against m over the last k increments.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = inc.size() - k; i < inc.size(); ++i) {
    const double x = static_cast<double>(i);
    const double y = std::log2(std::max(inc[i], 1e-300));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double m = static_cast<double>(k);
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  res.decay = -slope;
  if (res.decay > opt.threshold) {
    res.verdict = Verdict::Convergent;
    const double q = std::exp2(slope);
    res.extrapolated = last + inc.back() * q / (1.0 - q);
  } else if (res.decay >= -opt.threshold) {
    res.verdict = Verdict::DivergentLog;
    double mean = 0.0;
    for (std::size_t i = inc.size() - k; i < inc.size(); ++i) mean += inc[i];
    res.rate = mean / m / std::log(2.0);
    res.extrapolated = std::numeric_limits<double>::infinity();
  } else {
    res.verdict = Verdict::DivergentPower;
    res.rate = -res.decay;
    res.extrapolated = std::numeric_limits<double>::infinity();
  }
}

/// Sweep of the integral of g over B_1(0) minus B_eps(p) for one isolated
/// point p, or the plain integral when p is empty.
template <class G>
SweepResult dyadic_sweep(int n, const std::optional<Vec>& p, double power, G&& g,
                         const QuadOrders& ord, const SweepOptions& opt) {
  SweepResult res;
  res.p = power;
  const Vec origin = zeros(n);
  if (!p) {
    const QuadResult whole = integrate_ball(origin, 1.0, origin, g, ord);
    for (int m = opt.m_lo; m <= opt.m_hi; ++m) {
      res.eps.push_back(std::ldexp(1.0, -m));
      res.values.push_back(whole.value);
      res.errors.push_back(whole.error);
    }
    res.verdict = Verdict::Convergent;
    res.decay = std::numeric_limits<double>::infinity();
    res.extrapolated = whole.value;
    return res;
  }
  QuadResult acc = integrate_ball(origin, 1.0, *p, g, ord, std::ldexp(1.0, -opt.m_lo));
  std::vector<double> inc;
  for (int m = opt.m_lo; m <= opt.m_hi; ++m) {
    if (m > opt.m_lo) {
      const QuadResult shell = integrate_ball(origin, 1.0, *p, g, ord, std::ldexp(1.0, -m),
                                              std::ldexp(1.0, -(m - 1)));
      acc.value += shell.value;
      acc.error += shell.error;
      inc.push_back(shell.value);
    }
    res.eps.push_back(std::ldexp(1.0, -m));
    res.values.push_back(acc.value);
    res.errors.push_back(acc.error);
  }
  classify_sweep(res, inc, opt);
  return res;
}

/// The single isolated singular point in the closed unit ball, if any.
inline std::optional<Vec> lp_singularity(const ManifoldMap& f) {
  const int n = f.dim();
  auto pts = f.model().singular_samples(0.5, 1.0);
  if (!f.model().isolated_singularities()) {
    if (!pts.empty()) throw UnsupportedModel("L^p sweeps need isolated singular points");
    return std::nullopt;
  }
  if (pts.size() > 1) throw UnsupportedModel("L^p sweeps support one singular point");
  if (pts.empty()) {
    // Models that declare a singular point without enumerating it.
    if (auto s = f.nearest_singular_point(zeros(n)); s && s->norm() <= 1.0) return s;
    return std::nullopt;
  }
  return pts.front();
}

}  // namespace detail

enum class LpIntegrand { Gradient, InverseRegularity };

struct LpOptions {
  SweepOptions sweep{};
  QuadOrders gradient_orders{};
  // r_f^{-p} is as smooth as the map's derivatives but costs a bisection per
  // node, so its rule is coarser and its bisection looser.
  QuadOrders regularity_orders{4, 3, 3};
  RegularityOptions regularity{1e-3};
};

/// Integral over B_1 of |grad f|^p or r_f^{-p} outside B_eps of the singular
/// point, swept over eps = 2^-3..2^-10, with a verdict.
inline SweepResult lp_integral(const ManifoldMap& f, double p,
                               LpIntegrand which = LpIntegrand::Gradient,
                               const LpOptions& opt = {}) {
  if (!(p > 0.0)) throw OutOfDomain("need p > 0");
  if (f.radius() < 1.0) throw OutOfDomain("domain must contain B_1");
  const auto sing = detail::lp_singularity(f);
  if (which == LpIntegrand::Gradient) {
    return detail::dyadic_sweep(
        f.dim(), sing, p,
        [&](const Vec& y) { return std::pow(f.gradient_norm_sq(y), 0.5 * p); },
        opt.gradient_orders, opt.sweep);
  }
  return detail::dyadic_sweep(
      f.dim(), sing, p,
      [&](const Vec& y) {
        const double r = regularity_scale(f, y, opt.regularity);
        return r > 0.0 ? std::pow(r, -p) : std::numeric_limits<double>::infinity();
      },
      opt.regularity_orders, opt.sweep);
}

/// lp_integral at p = 2+k-0.5, 2+k-0.1, 2+k, 2+k+0.1.
inline std::vector<SweepResult> lp_sharpness_sweep(const ManifoldMap& f, int k,
                                                   const LpOptions& opt = {}) {
  std::vector<SweepResult> out;
  for (double dp : {-0.5, -0.1, 0.0, 0.1}) out.push_back(lp_integral(f, 2.0 + k + dp, LpIntegrand::Gradient, opt));
  return out;
}

}  // namespace stratlab
