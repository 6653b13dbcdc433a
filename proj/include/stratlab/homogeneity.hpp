#pragma once

// Homogeneity defects D_k(f, y, r): the mean squared chordal distance over
// B_1 from T_{y,r} f to the nearest k-homogeneous map with base y.
//
// For a fixed k-plane V the optimal link is explicit. Write z in B_1 as
// z = u + s theta with u in V, s >= 0 and theta a unit vector of V^perp.
// With G(theta) the integral of T_{y,r} f over the fiber of theta and m(theta)
// the fiber measure, the best link is G/|G| and
//
//   D_k(V) = (2 / |B_1|) sum_theta (m(theta) - |G(theta)|).
//
// The infimum over planes comes from a low-discrepancy Grassmannian net
// followed by golden-section refinement of rotation angles, so the reported
// defect is an upper bound.

#include "stratlab/energy.hpp"
#include "stratlab/map_models.hpp"
#include "stratlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <vector>

namespace stratlab {

struct HomogeneityOptions {
  int net_size = 0;         // 0: 256 * 2^(dim G(n,k) - 2), capped at 4096
  int coarse_order = 4;     // fiber rule order for the net and refinement
  int fine_order = 10;      // fiber rule order for reported values
  int refine_candidates = 2;
  int refine_budget = 600;  // objective evaluations per candidate
  double refine_tol = 2e-3; // radians
  std::uint64_t seed = 0;   // Halton shift for the net; 0 is unshifted
  std::vector<Mat> initial_planes;  // extra candidates, n x k frames
};

struct DefectResult {
  int k = 0;
  double defect = 0.0;
  Vec base;
  Mat frame;           // n x k orthonormal
  LinkMap link;        // sampled best link on the unit sphere of the complement
  double radius = 0.0;
  int net_size = 0;
  int planes_tried = 0;
  int refinement_steps = 0;
  bool projection_failed = false;
  bool budget_exceeded = false;

  HomogeneousModel model() const { return HomogeneousModel(base, frame, link); }
};

namespace detail {

/// Quadrature for B_1 split into fibers over the unit sphere of a
/// complement of dimension d = n - k. Entry e of fiber t sits at
/// z = V a_e + b_e C theta_t.
struct FiberRule {
  int n = 0, k = 0;
  std::vector<Vec> thetas;          // points of S^{d-1}, d-vectors
  std::vector<double> theta_w;
  std::vector<Vec> a;               // k-vectors
  std::vector<double> b;
  std::vector<double> w;            // includes the Jacobian
  std::vector<double> fiber_mass;   // m(theta) / theta_w, identical per fiber
};

inline FiberRule make_fiber_rule(int n, int k, int q) {
  FiberRule fr;
  fr.n = n;
  fr.k = k;
  const int d = n - k;
  if (d > 0) {
    const SphereRule& th = sphere_rule(d - 1, q);
    fr.thetas = th.points;
    fr.theta_w = th.weights;
  } else {
    fr.thetas = {Vec(0)};
    fr.theta_w = {1.0};
  }
  if (k == 0) {
    for_gauss_nodes(q, 0.0, 1.0, [&](double R, double w) {
      fr.a.push_back(Vec(0));
      fr.b.push_back(R);
      fr.w.push_back(w * std::pow(R, n - 1));
    });
  } else if (d == 0) {
    const SphereRule& nu = sphere_rule(n - 1, q);
    for_gauss_nodes(q, 0.0, 1.0, [&](double R, double w) {
      for (std::size_t i = 0; i < nu.size(); ++i) {
        fr.a.push_back(R * nu.points[i]);
        fr.b.push_back(0.0);
        fr.w.push_back(w * nu.weights[i] * std::pow(R, n - 1));
      }
    });
  } else {
    const SphereRule& nu = sphere_rule(k - 1, q);
    for_gauss_nodes(q, 0.0, 1.0, [&](double R, double wr) {
      for_gauss_nodes(q, 0.0, 0.5 * std::numbers::pi, [&](double phi, double wp) {
        const double c = std::cos(phi), s = std::sin(phi);
        const double jac = std::pow(R, n - 1) * std::pow(c, k - 1) * std::pow(s, d - 1);
        for (std::size_t i = 0; i < nu.size(); ++i) {
          fr.a.push_back(R * c * nu.points[i]);
          fr.b.push_back(R * s);
          fr.w.push_back(wr * wp * nu.weights[i] * jac);
        }
      });
    });
  }
  const double m = std::accumulate(fr.w.begin(), fr.w.end(), 0.0);
  fr.fiber_mass.assign(fr.thetas.size(), m);
  return fr;
}

inline const FiberRule& fiber_rule(int n, int k, int q) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int>, std::unique_ptr<FiberRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{n, k, q}];
  if (!slot) slot = std::make_unique<FiberRule>(make_fiber_rule(n, k, q));
  return *slot;
}

struct PlaneFit {
  double defect = 0.0;
  bool projection_failed = false;
  std::vector<Vec> link_values;  // one per theta
};

/// Fiber averages of z -> f(y + r z) for the plane with orthonormal basis V
/// and complement basis C.
inline PlaneFit fit_plane(const ManifoldMap& f, const Vec& y, double r, const Mat& V,
                          const Mat& C, const FiberRule& fr, bool keep_link) {
  const int n = fr.n, k = fr.k;
  const int m1 = f.target_dim() + 1;
  PlaneFit out;
  std::vector<Vec> va(fr.a.size());
  for (std::size_t e = 0; e < fr.a.size(); ++e) va[e] = k > 0 ? Vec(V * fr.a[e]) : zeros(n);
  double deficit = 0.0, total = 0.0;
  Vec g(m1);
  for (std::size_t t = 0; t < fr.thetas.size(); ++t) {
    const Vec ct = n - k > 0 ? Vec(C * fr.thetas[t]) : zeros(n);
    g.setZero();
    for (std::size_t e = 0; e < fr.a.size(); ++e) {
      const Vec z = va[e] + fr.b[e] * ct;
      g += fr.w[e] * f.value(Vec(y + r * z));
    }
    const double m = fr.fiber_mass[t];
    const double gn = g.norm();
    double part;
    if (gn < 1e-8 * m) {
      // Projection undefined: compare against the unprojected average.
      out.projection_failed = true;
      part = 0.5 * (m - gn * gn / m);
    } else {
      part = m - gn;
    }
    deficit += fr.theta_w[t] * part;
    total += fr.theta_w[t] * m;
    if (keep_link) out.link_values.push_back(gn > 0.0 ? Vec(g / gn) : unit(m1, 0));
  }
  out.defect = std::max(0.0, 2.0 * deficit / total);
  return out;
}

/// n x k frames from a Halton sequence pushed through the normal quantile
/// and orthonormalised. Frames with k > n/2 are complements of (n-k)-frames.
inline std::vector<Mat> grassmannian_net(int n, int k, int size, std::uint64_t seed) {
  std::vector<Mat> out;
  if (k == 0) return {Mat(n, 0)};
  if (k == n) return {Mat(Mat::Identity(n, n))};
  const int kk = std::min(k, n - k);
  HaltonSequence seq(n * kk, seed);
  std::vector<double> u(n * kk);
  for (int i = 0; i < size; ++i) {
    seq.point(static_cast<std::uint64_t>(i), u.data());
    Eigen::MatrixXd g(n, kk);
    for (int c = 0; c < kk; ++c)
      for (int r = 0; r < n; ++r) g(r, c) = normal_quantile(u[c * n + r]);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Mat frame = q.leftCols(kk);
    out.push_back(kk == k ? frame : orthogonal_complement(frame, n));
  }
  return out;
}

inline int default_net_size(int n, int k) {
  const int dim = k * (n - k);
  if (dim <= 0) return 1;
  return std::min(4096, 256 << std::max(0, dim - 2));
}

}  // namespace detail

/// Defect of the best k-homogeneous approximation to f on B_r(y).
inline DefectResult homogeneity_defect(const ManifoldMap& f, const Vec& y, double r, int k,
                                       const HomogeneityOptions& opt = {}) {
  const int n = f.dim();
  if (k < 0 || k > n) throw OutOfDomain("k outside [0, n]");
  detail::check_ball(f, y, r);

  DefectResult res;
  res.k = k;
  res.base = y;
  res.radius = r;

  const auto& coarse = detail::fiber_rule(n, k, opt.coarse_order);
  const auto& fine = detail::fiber_rule(n, k, opt.fine_order);

  struct Cand {
    Mat V;
    double value;
  };
  auto complement = [&](const Mat& V) { return orthogonal_complement(V, n); };

  std::vector<Cand> cands;
  const int net = opt.net_size > 0 ? opt.net_size : detail::default_net_size(n, k);
  const auto planes = detail::grassmannian_net(n, k, net, opt.seed);
  res.net_size = static_cast<int>(planes.size());
  for (const auto& V : planes) {
    cands.push_back({V, detail::fit_plane(f, y, r, V, complement(V), coarse, false).defect});
  }
  res.planes_tried = static_cast<int>(cands.size());

  // Stable sort keeps the lowest net index first among ties.
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cands[a].value < cands[b].value; });

  std::vector<Mat> finals;
  for (const auto& V0 : opt.initial_planes) {
    if (V0.rows() != n || V0.cols() != k) throw DegenerateFrame("initial plane has wrong shape");
    finals.push_back(checked_frame(V0));
  }
  const int ncand = std::min<int>(opt.refine_candidates, static_cast<int>(order.size()));
  std::vector<Mat> seeds;
  for (int c = 0; c < ncand; ++c) seeds.push_back(cands[order[c]].V);
  for (const auto& V : finals) seeds.push_back(V);

  // Golden-section on the rotation angle of each (plane vector, complement
  // vector) pair, sweeping until the angles stop moving.
  const int pairs = k * (n - k);
  for (const Mat& start : seeds) {
    if (pairs == 0) break;
    Mat V = start;
    Mat C = complement(V);
    int evals = 0;
    auto objective = [&](int i, int j, double t) {
      Mat Vt = V, Ct = C;
      Vt.col(i) = std::cos(t) * V.col(i) + std::sin(t) * C.col(j);
      Ct.col(j) = -std::sin(t) * V.col(i) + std::cos(t) * C.col(j);
      ++evals;
      return detail::fit_plane(f, y, r, Vt, Ct, coarse, false).defect;
    };
    double h = 0.5 * std::numbers::pi / std::sqrt(static_cast<double>(net));
    bool converged = false;
    while (evals < opt.refine_budget) {
      double moved = 0.0;
      for (int i = 0; i < k && evals < opt.refine_budget; ++i) {
        for (int j = 0; j < n - k && evals < opt.refine_budget; ++j) {
          constexpr double g = 0.6180339887498949;
          double a = -h, b = h;
          double c = b - g * (b - a), d = a + g * (b - a);
          double fc = objective(i, j, c), fd = objective(i, j, d);
          while (b - a > opt.refine_tol && evals < opt.refine_budget) {
            if (fc < fd) {
              b = d, d = c, fd = fc;
              c = b - g * (b - a);
              fc = objective(i, j, c);
            } else {
              a = c, c = d, fc = fd;
              d = a + g * (b - a);
              fd = objective(i, j, d);
            }
          }
          double t = 0.5 * (a + b);
          if (objective(i, j, t) >= objective(i, j, 0.0)) t = 0.0;
          if (t != 0.0) {
            const Vec vi = V.col(i), cj = C.col(j);
            V.col(i) = std::cos(t) * vi + std::sin(t) * cj;
            C.col(j) = -std::sin(t) * vi + std::cos(t) * cj;
          }
          moved = std::max(moved, std::abs(t));
        }
      }
      ++res.refinement_steps;
      if (moved < opt.refine_tol) {
        converged = true;
        break;
      }
      h = std::max(2.0 * moved, 4.0 * opt.refine_tol);
    }
    if (!converged) res.budget_exceeded = true;
    // The defect is quadratic in the angle near a minimum; a few parabolic
    // steps pin down exact planes far below the golden-section tolerance.
    for (int pass = 0; pass < 2; ++pass) {
      const double step = pass == 0 ? opt.refine_tol : 0.1 * opt.refine_tol;
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < n - k; ++j) {
          const double fm = objective(i, j, -step), f0 = objective(i, j, 0.0),
                       fp = objective(i, j, step);
          const double curv = fp - 2.0 * f0 + fm;
          if (!(curv > 0.0)) continue;
          const double t = std::clamp(0.5 * step * (fm - fp) / curv, -step, step);
          if (objective(i, j, t) < f0) {
            const Vec vi = V.col(i), cj = C.col(j);
            V.col(i) = std::cos(t) * vi + std::sin(t) * cj;
            C.col(j) = -std::sin(t) * vi + std::cos(t) * cj;
          }
        }
      }
    }
    finals.push_back(V);
  }
  if (pairs == 0 || seeds.empty()) finals.push_back(cands[order[0]].V);

  double best = std::numeric_limits<double>::infinity();
  for (const Mat& V : finals) {
    const Mat C = complement(V);
    detail::PlaneFit fit = detail::fit_plane(f, y, r, V, C, fine, true);
    if (fit.defect < best) {
      best = fit.defect;
      res.defect = fit.defect;
      res.frame = V;
      res.projection_failed = fit.projection_failed;
      res.link = LinkMap{};
      if (k == n) {
        res.link = LinkMap::constant_value(fit.link_values.front());
      } else {
        res.link.kind = LinkMap::Kind::Sampled;
        res.link.nodes = fine.thetas;
        res.link.node_values = std::move(fit.link_values);
      }
    }
  }
  return res;
}

/// Best 0-homogeneous approximation about y: the radial average of T_{y,r} f
/// along each ray, projected to the sphere.
inline DefectResult best_zero_homogeneous(const ManifoldMap& f, const Vec& y, double r,
                                          const HomogeneityOptions& opt = {}) {
  return homogeneity_defect(f, y, r, 0, opt);
}

/// N_t(f, B_r(x)), identified with D_0(x, t r).
inline double nonhomogeneity(const ManifoldMap& f, const Vec& x, double r, double t,
                             const HomogeneityOptions& opt = {}) {
  return best_zero_homogeneous(f, x, t * r, opt).defect;
}

enum class HL { L, H, OutOfDomain };

inline char hl_char(HL l) { return l == HL::H ? 'H' : l == HL::L ? 'L' : 'X'; }

/// H where N_t(f, B_r(x)) >= eps, L otherwise; points whose ball B_{tr}(x)
/// leaves the domain are marked OutOfDomain.
inline std::vector<HL> classify_hl(const ManifoldMap& f, const std::vector<Vec>& grid, double t,
                                   double r, double eps, const HomogeneityOptions& opt = {}) {
  std::vector<HL> out(grid.size(), HL::L);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (t * r > f.radius() - grid[i].norm()) {
      out[i] = HL::OutOfDomain;
      continue;
    }
    if (std::isinf(eps) && eps > 0) continue;
    out[i] = nonhomogeneity(f, grid[i], r, t, opt) >= eps ? HL::H : HL::L;
  }
  return out;
}

struct ConeSplitReport {
  double dk_y = 0.0;         // D_k(y, r / gamma)
  double d0_z = 0.0;         // D_0(z, 2r)
  DefectResult dk1;          // D_{k+1}(y, r)
  double plane_distance = 0.0;
  bool below_margin = false; // dist(z, y + V) < tau r
  bool radius_clipped = false;
};

/// Checks the cone-splitting step: given the k-plane V at y and an off-plane
/// point z, searches D_{k+1}(y, r) starting from span{z - y, V}.
inline ConeSplitReport cone_splitting_check(const ManifoldMap& f, const Vec& y, const Vec& z,
                                            const Mat& V, double r, double gamma = 0.5,
                                            double tau = 0.1, HomogeneityOptions opt = {}) {
  const int n = f.dim();
  const int k = static_cast<int>(V.cols());
  if (k >= n) throw PlaneDegenerate("plane already spans R^n");
  const Mat frame = k > 0 ? checked_frame(V) : Mat(n, 0);
  const Vec d = z - y;
  const Vec off = d - frame * (frame.transpose() * d);

  ConeSplitReport rep;
  rep.plane_distance = off.norm();
  if (rep.plane_distance < 1e-8) throw PlaneDegenerate("z lies on y + V");
  rep.below_margin = rep.plane_distance < tau * r;

  auto clip = [&](const Vec& c, double s) {
    const double cap = f.radius() - c.norm();
    if (s > cap) {
      rep.radius_clipped = true;
      return cap;
    }
    return s;
  };
  HomogeneityOptions base = opt;
  base.initial_planes.clear();
  if (k > 0) base.initial_planes.push_back(frame);
  rep.dk_y = homogeneity_defect(f, y, clip(y, r / gamma), k, base).defect;
  HomogeneityOptions zopt = opt;
  zopt.initial_planes.clear();
  rep.d0_z = homogeneity_defect(f, z, clip(z, 2.0 * r), 0, zopt).defect;

  Mat aug(n, k + 1);
  if (k > 0) aug.leftCols(k) = frame;
  aug.col(k) = off / rep.plane_distance;
  opt.initial_planes.push_back(aug);
  rep.dk1 = homogeneity_defect(f, y, r, k + 1, opt);
  return rep;
}

}  // namespace stratlab
