#pragma once

// Effective strata on sample grids, scale tuples, the pigeonhole count of
// bad scales, greedy covers, the covering induction, tube volumes and
// Minkowski-exponent fits.

#include "stratlab/energy.hpp"
#include "stratlab/homogeneity.hpp"
#include "stratlab/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <unordered_map>
#include <vector>

namespace stratlab {

// ---------------------------------------------------------------------------
// Point sets

inline bool lex_less(const Vec& a, const Vec& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

/// Sorts lexicographically and drops points closer than 1e-12 to the
/// previous kept point with the same rounded key.
inline std::vector<Vec> canonical_points(std::vector<Vec> pts) {
  std::map<std::vector<long long>, Vec> uniq;
  for (const auto& p : pts) {
    std::vector<long long> key(p.size());
    for (int i = 0; i < p.size(); ++i) key[i] = std::llround(p(i) * 1e10);
    uniq.emplace(std::move(key), p);
  }
  std::vector<Vec> out;
  out.reserve(uniq.size());
  for (auto& [k, v] : uniq) out.push_back(v);
  std::sort(out.begin(), out.end(), lex_less);
  return out;
}

/// Cubic lattice of spacing h (containing the origin) inside the closed unit ball.
inline std::vector<Vec> uniform_grid(int n, double h) {
  std::vector<Vec> out;
  const int m = static_cast<int>(std::floor(1.0 / h + 1e-9));
  std::vector<int> idx(n, -m);
  for (;;) {
    Vec p(n);
    for (int i = 0; i < n; ++i) p(i) = h * idx[i];
    if (p.norm() <= 1.0 + 1e-12) out.push_back(p);
    int i = 0;
    while (i < n && ++idx[i] > m) idx[i++] = -m;
    if (i == n) break;
  }
  return canonical_points(std::move(out));
}

struct GradedGridOptions {
  double background = 0.25;  // uniform lattice spacing
  int levels = 8;            // dyadic refinement levels 2^-1 .. 2^-levels
  double spine_spacing = 0;  // spacing along the singular set; 0: 2^-(levels+1)
};

/// Uniform background plus dyadic refinement around the declared singular
/// set. Around isolated singular points each level adds the cube stencil
/// {-1,0,1}^n (n <= 4) or the coordinate cross scaled by 2^-l; around higher
/// dimensional singular sets it adds normal offsets at spacing 2^{1-l}.
inline std::vector<Vec> graded_grid(const ManifoldMap& f, const GradedGridOptions& g = {}) {
  const int n = f.dim();
  std::vector<Vec> pts = uniform_grid(n, g.background);
  const double fine =
      g.spine_spacing > 0 ? g.spine_spacing : std::ldexp(1.0, -(g.levels + 1));
  for (const Vec& s : f.model().singular_samples(fine, 1.0)) pts.push_back(s);

  const bool isolated = f.model().isolated_singularities();
  std::vector<Vec> stencil;
  if (isolated && n <= 4) {
    std::vector<int> idx(n, -1);
    for (;;) {
      Vec v(n);
      for (int i = 0; i < n; ++i) v(i) = idx[i];
      if (v.squaredNorm() > 0) stencil.push_back(v);
      int i = 0;
      while (i < n && ++idx[i] > 1) idx[i++] = -1;
      if (i == n) break;
    }
  } else if (isolated) {
    for (int i = 0; i < n; ++i) {
      stencil.push_back(unit(n, i));
      stencil.push_back(-unit(n, i));
    }
  }
  for (int l = 1; l <= g.levels; ++l) {
    const double d = std::ldexp(1.0, -l);
    if (isolated) {
      for (const Vec& s : f.model().singular_samples(d, 1.0)) {
        for (const Vec& v : stencil) pts.push_back(s + d * v);
      }
    } else {
      for (const Vec& s : f.model().singular_samples(2.0 * d, 1.0)) {
        // Tangent directions of the singular set at s are the projections of
        // small coordinate steps; the offsets go along their complement.
        Mat tangent(n, 0);
        for (int i = 0; i < n; ++i) {
          const Vec e = unit(n, i);
          const Vec t = *f.nearest_singular_point(Vec(s + d * e)) - s;
          if (t.norm() > 1e-3 * d) {
            Vec u = t;
            for (int c = 0; c < tangent.cols(); ++c)
              u -= tangent.col(c).dot(u) * Vec(tangent.col(c));
            if (u.norm() > 1e-3 * d) {
              Mat grown(n, tangent.cols() + 1);
              grown << tangent, u.normalized();
              tangent = grown;
            }
          }
        }
        const Mat normals = orthogonal_complement(tangent, n);
        for (int c = 0; c < normals.cols(); ++c) {
          pts.push_back(s + d * Vec(normals.col(c)));
          pts.push_back(s - d * Vec(normals.col(c)));
        }
      }
    }
  }
  std::vector<Vec> inside;
  for (auto& p : pts)
    if (p.norm() <= 1.0 + 1e-12) inside.push_back(p);
  return canonical_points(std::move(inside));
}

/// Bucket index on the first min(n, 3) coordinates, for radius queries.
class PointIndex {
 public:
  PointIndex(const std::vector<Vec>& pts, double cell) : pts_(pts), cell_(cell) {
    for (std::size_t i = 0; i < pts.size(); ++i) buckets_[key(pts[i])].push_back(i);
  }

  /// Calls fn(index) for every point within distance r of q.
  template <class Fn>
  void for_each_within(const Vec& q, double r, Fn&& fn) const {
    if (pts_.empty()) return;
    const int d = std::min<int>(3, static_cast<int>(q.size()));
    const int reach = static_cast<int>(std::ceil(r / cell_));
    std::array<long long, 3> base{0, 0, 0};
    for (int i = 0; i < d; ++i) base[i] = static_cast<long long>(std::floor(q(i) / cell_));
    std::array<long long, 3> off{0, 0, 0};
    for (int i = 0; i < d; ++i) off[i] = -reach;
    const double r2 = r * r;
    for (;;) {
      std::array<long long, 3> k{0, 0, 0};
      for (int i = 0; i < d; ++i) k[i] = base[i] + off[i];
      auto it = buckets_.find(k);
      if (it != buckets_.end()) {
        for (std::size_t idx : it->second) {
          if ((pts_[idx] - q).squaredNorm() <= r2) fn(idx);
        }
      }
      int i = 0;
      while (i < d && ++off[i] > reach) off[i++] = -reach;
      if (i == d) break;
    }
  }

  bool any_within(const Vec& q, double r) const {
    bool hit = false;
    for_each_within(q, r, [&](std::size_t) { hit = true; });
    return hit;
  }

 private:
  using Cell = std::array<long long, 3>;
  struct CellHash {
    std::size_t operator()(const Cell& k) const { return fnv1a(k.data(), sizeof(Cell)); }
  };
  Cell key(const Vec& p) const {
    Cell k{0, 0, 0};
    for (int i = 0; i < std::min<int>(3, static_cast<int>(p.size())); ++i)
      k[i] = static_cast<long long>(std::floor(p(i) / cell_));
    return k;
  }

  const std::vector<Vec>& pts_;
  double cell_;
  std::unordered_map<Cell, std::vector<std::size_t>, CellHash> buckets_;
};

// ---------------------------------------------------------------------------
// Effective strata

struct StratumOptions {
  double eta = 0.05;
  double gamma = 0.5;
  int j_max = 8;
  HomogeneityOptions homogeneity{};
};

/// Stratum membership on a grid. depth[a][p] is the largest j such that
/// point p lies in S^{ks[a]}_{eta, gamma^j}, or -1 if it is not even in
/// S^{ks[a]}_{eta, 1}. Since membership at j requires the defect condition at
/// every ladder scale gamma^0..gamma^j, S_{eta, gamma^j} shrinks as j grows.
struct StratumGrid {
  std::vector<Vec> points;
  std::vector<int> ks;
  double eta = 0.0;
  double gamma = 0.5;
  int j_max = 0;
  std::vector<std::vector<int>> depth;
  std::vector<int> skipped_scales;  // per point, scales beyond the domain

  // Scale tuples, filled by assign_tuples: tuples[p][i-1] for i = 1..j_max.
  std::vector<std::vector<HL>> labels;

  int k_index(int k) const {
    auto it = std::find(ks.begin(), ks.end(), k);
    if (it == ks.end()) throw OutOfDomain("order not computed");
    return static_cast<int>(it - ks.begin());
  }

  bool in_stratum(int k, std::size_t p, int j) const { return depth[k_index(k)][p] >= j; }

  std::vector<std::size_t> members(int k, int j) const {
    std::vector<std::size_t> out;
    const auto& d = depth[k_index(k)];
    for (std::size_t p = 0; p < points.size(); ++p)
      if (d[p] >= j) out.push_back(p);
    return out;
  }

  /// Bits of T^j(x) as a string of 0/1, entries i = 1..j.
  std::string tuple(std::size_t p, int j) const {
    std::string s;
    for (int i = 1; i <= j; ++i) s += labels[p][i - 1] == HL::H ? '1' : '0';
    return s;
  }

  int popcount(std::size_t p, int j) const {
    int c = 0;
    for (int i = 1; i <= j; ++i) c += labels[p][i - 1] == HL::H;
    return c;
  }
};

/// Membership of each grid point in S^k_{eta, gamma^j} for every k in ks and
/// j <= j_max. Defects are combined into the envelope min over computed
/// orders k' >= k of D_{k'+1}, so that S^k is contained in S^{k'} whenever
/// k <= k' among the computed orders. Scales gamma^i exceeding the domain
/// radius at a point are skipped and counted.
inline StratumGrid effective_stratum(const ManifoldMap& f, const std::vector<Vec>& grid,
                                     std::vector<int> ks, const StratumOptions& opt) {
  const int n = f.dim();
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  for (int k : ks)
    if (k < 0 || k >= n) throw OutOfDomain("stratum order outside [0, n-1]");
  StratumGrid sg;
  sg.points = grid;
  sg.ks = ks;
  sg.eta = opt.eta;
  sg.gamma = opt.gamma;
  sg.j_max = opt.j_max;
  sg.depth.assign(ks.size(), std::vector<int>(grid.size(), -1));
  sg.skipped_scales.assign(grid.size(), 0);

  parallel_for(grid.size(), [&](std::size_t p) {
    const Vec& y = grid[p];
    const double cap = f.radius() - y.norm();
    std::vector<bool> alive(ks.size(), true);
    double s = 1.0;
    for (int i = 0; i <= opt.j_max; ++i, s *= opt.gamma) {
      if (s > cap) {
        ++sg.skipped_scales[p];
      } else {
        // Descending in k: a failure at k' kills every k <= k'.
        for (int a = static_cast<int>(ks.size()) - 1; a >= 0; --a) {
          if (!alive[a]) continue;
          const double d = homogeneity_defect(f, y, s, ks[a] + 1, opt.homogeneity).defect;
          if (d <= opt.eta) {
            for (int b = 0; b <= a; ++b) alive[b] = false;
          }
        }
      }
      bool any = false;
      for (std::size_t a = 0; a < ks.size(); ++a) {
        if (alive[a]) sg.depth[a][p] = i, any = true;
      }
      if (!any) break;
    }
  });
  return sg;
}

/// T^j(x): entry i (1 <= i <= j) is H iff N_t(f, B_{gamma^i}(x)) >= eps.
/// Entries whose ball B_{t gamma^i}(x) leaves the domain are OutOfDomain and
/// count as 0. t <= 0 selects the default gamma^{-n}.
inline std::vector<HL> scale_tuple(const ManifoldMap& f, const Vec& x, double gamma, int j,
                                   double eps, double t = 0.0,
                                   const HomogeneityOptions& opt = {}) {
  if (t <= 0.0) t = std::pow(gamma, -f.dim());
  std::vector<HL> out;
  const double cap = f.radius() - x.norm();
  double r = gamma;
  for (int i = 1; i <= j; ++i, r *= gamma) {
    if (t * r > cap) {
      out.push_back(HL::OutOfDomain);
      continue;
    }
    out.push_back(nonhomogeneity(f, x, r, t, opt) >= eps ? HL::H : HL::L);
  }
  return out;
}

inline void assign_tuples(const ManifoldMap& f, StratumGrid& sg, double eps, double t = 0.0,
                          const HomogeneityOptions& opt = {}) {
  sg.labels.assign(sg.points.size(), {});
  parallel_for(sg.points.size(), [&](std::size_t p) {
    sg.labels[p] = scale_tuple(f, sg.points[p], sg.gamma, sg.j_max, eps, t, opt);
  });
}

// ---------------------------------------------------------------------------
// Quantitative differentiation

/// K = ceil((n+1) Lambda / delta).
inline long long bad_scale_bound(double lambda, double delta, int n) {
  if (!(lambda >= 0.0) || !(delta > 0.0)) throw OutOfDomain("need Lambda >= 0 and delta > 0");
  const double k = std::ceil((n + 1) * lambda / delta);
  if (!std::isfinite(k) || k > 9e18) return std::numeric_limits<long long>::max();
  return std::max(1LL, static_cast<long long>(k));
}

struct BadScaleScan {
  std::vector<int> scales;        // i with gamma^{i-n} inside the domain
  std::vector<double> drops;      // W_{gamma^i, gamma^{i-n}}(x)
  std::vector<double> errors;

  int count(double delta) const {
    int c = 0;
    for (double w : drops) c += w > delta;
    return c;
  }
};

/// W_{gamma^i, gamma^{i-n}}(x) for i = 0..j_max where gamma^{i-n} fits in
/// the domain.
inline BadScaleScan bad_scales(const ManifoldMap& f, const Vec& x, double gamma, int j_max,
                               const EnergyOptions& opt = {}) {
  const int n = f.dim();
  const double cap = f.radius() - x.norm();
  BadScaleScan scan;
  // theta at gamma^m for m = -n..j_max, computed once each.
  std::map<int, QuadResult> th;
  auto theta_at = [&](int m) -> const QuadResult& {
    auto it = th.find(m);
    if (it == th.end()) it = th.emplace(m, theta(f, x, std::pow(gamma, m), opt)).first;
    return it->second;
  };
  for (int i = 0; i <= j_max; ++i) {
    if (std::pow(gamma, i - n) > cap * (1.0 + 1e-12)) continue;
    const QuadResult& top = theta_at(i - n);
    const QuadResult& bot = theta_at(i);
    scan.scales.push_back(i);
    scan.drops.push_back(top.value - bot.value);
    scan.errors.push_back(top.error + bot.error);
  }
  return scan;
}

/// sum_{i <= K} C(j, i), saturating.
inline double tuple_class_bound(int j, long long K) {
  double total = 0.0, c = 1.0;
  for (long long i = 0; i <= std::min<long long>(K, j); ++i) {
    total += c;
    c = c * (j - i) / (i + 1);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Covers

/// Greedy cover: repeatedly take the lexicographically smallest uncovered
/// point as a centre and mark everything within `radius` covered.
inline std::vector<Vec> greedy_cover(std::vector<Vec> points, double radius) {
  std::sort(points.begin(), points.end(), lex_less);
  std::vector<Vec> centers;
  if (points.empty()) return centers;
  PointIndex index(points, radius);
  std::vector<char> covered(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (covered[i]) continue;
    centers.push_back(points[i]);
    index.for_each_within(points[i], radius, [&](std::size_t j) { covered[j] = 1; });
  }
  return centers;
}

struct CoverLevel {
  int j = 0;
  double radius = 0.0;
  std::map<std::string, std::vector<Vec>> balls;  // tuple prefix -> centres
  std::size_t total() const {
    std::size_t t = 0;
    for (auto& [k, v] : balls) t += v.size();
    return t;
  }
  std::size_t classes() const {
    std::size_t c = 0;
    for (auto& [k, v] : balls) c += !v.empty();
    return c;
  }
};

struct CoverResult {
  int k = 0;
  std::vector<CoverLevel> levels;  // j = 0..j_max
};

/// The covering induction. Level 0 is the single ball B_1(0). At level j
/// the stratum points S^k_{eta, gamma^j} of each tuple class T^j are covered
/// greedily at radius gamma^j inside each level j-1 ball of the parent class
/// T^{j-1}, skipping points already covered.
inline CoverResult decompose(const StratumGrid& sg, int k, int j_max = -1) {
  if (j_max < 0) j_max = sg.j_max;
  if (j_max > sg.j_max) throw OutOfDomain("decompose depth beyond the stratum ladder");
  const bool tuples = !sg.labels.empty();
  if (tuples && static_cast<int>(sg.labels.front().size()) < j_max)
    throw OutOfDomain("scale tuples shorter than the requested depth");
  CoverResult res;
  res.k = k;
  const int n = sg.points.empty() ? 0 : static_cast<int>(sg.points.front().size());
  CoverLevel root;
  root.j = 0;
  root.radius = 1.0;
  if (!sg.members(k, 0).empty()) root.balls[""] = {zeros(n)};
  res.levels.push_back(root);

  for (int j = 1; j <= j_max; ++j) {
    CoverLevel lvl;
    lvl.j = j;
    lvl.radius = std::pow(sg.gamma, j);
    const CoverLevel& parent = res.levels.back();
    std::map<std::string, std::vector<std::size_t>> cls;
    for (std::size_t p : sg.members(k, j)) cls[tuples ? sg.tuple(p, j) : ""].push_back(p);
    for (auto& [tag, idx] : cls) {
      const std::string ptag = tuples ? tag.substr(0, j - 1) : "";
      auto pit = parent.balls.find(ptag);
      if (pit == parent.balls.end()) continue;
      std::vector<Vec> pts;
      for (std::size_t p : idx) pts.push_back(sg.points[p]);
      std::sort(pts.begin(), pts.end(), lex_less);
      std::vector<char> done(pts.size(), 0);
      std::vector<Vec> centers;
      for (const Vec& c : pit->second) {
        std::vector<Vec> inside;
        std::vector<std::size_t> where;
        for (std::size_t q = 0; q < pts.size(); ++q) {
          if (!done[q] && (pts[q] - c).norm() <= parent.radius * (1.0 + 1e-12)) {
            inside.push_back(pts[q]);
            where.push_back(q);
          }
        }
        for (const Vec& b : greedy_cover(inside, lvl.radius)) {
          centers.push_back(b);
          for (std::size_t q : where)
            if ((pts[q] - b).norm() <= lvl.radius * (1.0 + 1e-12)) done[q] = 1;
        }
      }
      lvl.balls[tag] = std::move(centers);
    }
    res.levels.push_back(std::move(lvl));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Tubes and Minkowski fits

struct TubeEstimate {
  double r = 0.0;
  double volume = 0.0;
  double error = 0.0;
  std::size_t samples = 0;
  bool union_sampling = false;
};

enum class TubeMethod { Auto, Uniform, Union };

/// Vol(T_r(S) cap B_1) in R^n.
///
/// Uniform: the fraction of uniform samples of B_1 within r of S, times
/// |B_1|; the same seed reuses the same samples for every r, so estimates
/// are monotone in r. Union: uniform samples in a uniformly chosen ball
/// B_r(s), weighted by 1/(number of balls containing them), which keeps the
/// relative error bounded when the tube is tiny. Auto uses Uniform only when
/// the tube may fill a quarter of B_1: an r-net N of S gives
/// |T_r(S)| <= |N| |B_2r|.
inline TubeEstimate tube_volume(const std::vector<Vec>& S, int n, double r,
                                std::size_t samples, std::uint64_t seed,
                                TubeMethod method = TubeMethod::Auto) {
  TubeEstimate est;
  est.r = r;
  est.samples = samples;
  if (S.empty() || samples == 0) return est;
  const double vb = ball_volume(n);
  const double vr = vb * std::pow(r, n);
  if (method == TubeMethod::Auto) {
    const double bound = std::min(static_cast<double>(S.size()) * vr,
                                  static_cast<double>(greedy_cover(S, r).size()) * vr * std::pow(2.0, n));
    method = bound < vb / 4.0 ? TubeMethod::Union : TubeMethod::Uniform;
  }
  PointIndex index(S, std::max(r, 1e-12));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> u(n + 1);
  auto ball_sample = [&]() {
    for (auto& v : u) v = unif(rng);
    return ball_point_from_uniforms(u.data(), n);
  };
  if (method == TubeMethod::Uniform) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples; ++i) {
      if (index.any_within(ball_sample(), r)) ++hits;
    }
    const double p = static_cast<double>(hits) / samples;
    est.volume = vb * p;
    est.error = vb * std::sqrt(p * (1.0 - p) / samples);
    return est;
  }
  est.union_sampling = true;
  std::uniform_int_distribution<std::size_t> pick(0, S.size() - 1);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Vec y = S[pick(rng)] + r * ball_sample();
    double w = 0.0;
    if (y.norm() <= 1.0) {
      std::size_t c = 0;
      index.for_each_within(y, r, [&](std::size_t) { ++c; });
      w = 1.0 / static_cast<double>(std::max<std::size_t>(c, 1));
    }
    sum += w;
    sum2 += w * w;
  }
  const double scale = static_cast<double>(S.size()) * vr;
  const double mean = sum / samples;
  const double var = std::max(0.0, sum2 / samples - mean * mean);
  est.volume = scale * mean;
  est.error = scale * std::sqrt(var / samples);
  return est;
}

struct MinkowskiFit {
  double slope = 0.0;      // exponent of r in Vol(T_r)
  double intercept = 0.0;  // log Vol at r = 1
  double residual = 0.0;   // RMS of the log residuals
  std::size_t points = 0;
};

/// Least-squares fit of log Vol(T_r) against log r.
inline MinkowskiFit minkowski_fit(const std::vector<TubeEstimate>& tubes) {
  std::vector<double> xs, ys;
  for (const auto& t : tubes) {
    if (t.volume > 0.0 && t.r > 0.0) {
      xs.push_back(std::log(t.r));
      ys.push_back(std::log(t.volume));
    }
  }
  if (xs.size() < 4) throw InsufficientData("Minkowski fit needs at least 4 positive estimates");
  const double m = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double den = m * sxx - sx * sx;
  if (std::abs(den) < 1e-300) throw InsufficientData("degenerate radius ladder");
  MinkowskiFit fit;
  fit.slope = (m * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / m;
  double rss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - fit.intercept - fit.slope * xs[i];
    rss += e * e;
  }
  fit.residual = std::sqrt(rss / m);
  fit.points = xs.size();
  return fit;
}

/// Least-squares slope of log(count) against j log(1/gamma): the growth
/// exponent of ball counts across levels j_lo..j_hi.
inline double count_growth_exponent(const CoverResult& cr, double gamma, int j_lo, int j_hi) {
  std::vector<TubeEstimate> pts;
  for (const auto& lvl : cr.levels) {
    if (lvl.j < j_lo || lvl.j > j_hi) continue;
    TubeEstimate t;
    t.r = std::pow(gamma, lvl.j);
    t.volume = static_cast<double>(lvl.total());
    pts.push_back(t);
  }
  return -minkowski_fit(pts).slope;
}

}  // namespace stratlab
