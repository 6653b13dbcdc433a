#pragma once

// Closed-form harmonic-map test instances B_R(0) subset R^n -> S^m, with
// value, gradient and second-derivative oracles.

#include "stratlab/core.hpp"
#include "stratlab/quadrature.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stratlab {

/// Abstract evaluable map into the unit sphere S^m subset R^{m+1}.
/// Implementations are immutable; all oracles are pure.
class MapModel {
 public:
  virtual ~MapModel() = default;

  virtual int domain_dim() const = 0;
  virtual int target_dim() const = 0;  // m
  virtual std::string id() const = 0;

  /// f(x). Called without domain checks; at a declared singularity the
  /// returned value is arbitrary but finite.
  virtual Vec value(const Vec& x) const = 0;

  /// Analytic Df(x), an (m+1) x n matrix, when available.
  virtual std::optional<Mat> jacobian(const Vec&) const { return std::nullopt; }

  /// Analytic Frobenius norm of the second differential, when available.
  virtual std::optional<double> hessian_norm(const Vec&) const { return std::nullopt; }

  /// Point of the declared singular set closest to x, if the set is nonempty.
  virtual std::optional<Vec> nearest_singular_point(const Vec&) const { return std::nullopt; }

  /// True when the declared singular set consists of isolated points.
  virtual bool isolated_singularities() const { return true; }

  /// Points of the declared singular set inside B_radius(0), spaced about
  /// `spacing` apart along it.
  virtual std::vector<Vec> singular_samples(double /*spacing*/, double /*radius*/) const {
    return {};
  }
};

/// A map from the ball B_R(0) into a unit sphere, with its energy bound.
class ManifoldMap {
 public:
  ManifoldMap() = default;
  ManifoldMap(std::shared_ptr<const MapModel> model, double radius, double energy_bound)
      : model_(std::move(model)), radius_(radius), energy_bound_(energy_bound) {}

  int dim() const { return model_->domain_dim(); }
  int target_dim() const { return model_->target_dim(); }
  double radius() const { return radius_; }
  double energy_bound() const { return energy_bound_; }
  std::string id() const { return model_->id(); }
  const MapModel& model() const { return *model_; }
  const std::shared_ptr<const MapModel>& model_ptr() const { return model_; }

  /// f(x) with domain and singularity checks.
  Vec evaluate(const Vec& x) const {
    check_domain(x);
    if (is_singular(x)) {
      std::ostringstream os;
      os << "x = " << x.transpose() << " is a declared singularity of " << id();
      throw SingularPoint(os.str());
    }
    return model_->value(x);
  }

  /// f(x) without checks, for quadrature kernels.
  Vec value(const Vec& x) const { return model_->value(x); }

  /// Df(x): analytic when the model provides it, else central differences
  /// with step 1e-5 max(1, |x|).
  Mat jacobian(const Vec& x) const {
    if (auto j = model_->jacobian(x)) return *j;
    return fd_jacobian(x);
  }

  Mat fd_jacobian(const Vec& x, double rel_step = 1e-5) const {
    const int n = dim();
    const double h = rel_step * std::max(1.0, x.norm());
    Mat j(target_dim() + 1, n);
    for (int i = 0; i < n; ++i) {
      Vec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      j.col(i) = (model_->value(xp) - model_->value(xm)) / (2.0 * h);
    }
    return j;
  }

  /// |grad f|^2 as the squared Frobenius norm of Df.
  double gradient_norm_sq(const Vec& x) const { return jacobian(x).squaredNorm(); }

  /// |grad^2 f| (Frobenius). Analytic when available, else central
  /// differences of Df with step 1e-4 max(1, |x|).
  double hessian_norm(const Vec& x) const {
    if (auto h = model_->hessian_norm(x)) return *h;
    const int n = dim();
    const double h = 1e-4 * std::max(1.0, x.norm());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      acc += ((jacobian(xp) - jacobian(xm)) / (2.0 * h)).squaredNorm();
    }
    return std::sqrt(acc);
  }

  std::optional<Vec> nearest_singular_point(const Vec& x) const {
    return model_->nearest_singular_point(x);
  }

  double singular_distance(const Vec& x) const {
    auto s = nearest_singular_point(x);
    return s ? (x - *s).norm() : std::numeric_limits<double>::infinity();
  }

  bool is_singular(const Vec& x) const {
    return singular_distance(x) <= 1e-14 * std::max(1.0, x.norm());
  }

  void check_domain(const Vec& x) const {
    if (x.size() != dim()) throw OutOfDomain("dimension mismatch");
    if (x.norm() > radius_ * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "|x| = " << x.norm() << " exceeds domain radius " << radius_;
      throw OutOfDomain(os.str());
    }
  }

 private:
  std::shared_ptr<const MapModel> model_;
  double radius_ = 2.0;
  double energy_bound_ = std::numeric_limits<double>::quiet_NaN();
};

// ---------------------------------------------------------------------------
// Link maps and homogeneous models

/// Map on the unit sphere of the complement of the defining plane.
struct LinkMap {
  enum class Kind { Identity, Constant, Sampled };

  Kind kind = Kind::Identity;
  Vec constant;                 // Constant
  std::vector<Vec> nodes;       // Sampled: sphere nodes (complement coords)
  std::vector<Vec> node_values; // Sampled: unit values at the nodes

  static LinkMap identity() { return {}; }
  static LinkMap constant_value(const Vec& w) {
    LinkMap l;
    l.kind = Kind::Constant;
    l.constant = w.normalized();
    return l;
  }

  /// Target dimension m for a link on S^{d-1}.
  int target_dim(int d) const {
    switch (kind) {
      case Kind::Identity: return d - 1;
      case Kind::Constant: return static_cast<int>(constant.size()) - 1;
      case Kind::Sampled: return static_cast<int>(node_values.front().size()) - 1;
    }
    return 0;
  }

  Vec operator()(const Vec& theta) const {
    switch (kind) {
      case Kind::Identity: return theta;
      case Kind::Constant: return constant;
      case Kind::Sampled: {
        std::size_t best = 0;
        double best_dot = -2.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          const double d = nodes[i].dot(theta);
          if (d > best_dot) best_dot = d, best = i;
        }
        return node_values[best];
      }
    }
    return theta;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Identity: return "identity";
      case Kind::Constant: return "constant";
      case Kind::Sampled: return "sampled";
    }
    return "?";
  }
};

/// h(y) = link(P(y - base) / |P(y - base)|), P the projection onto the
/// orthogonal complement of span(frame). Dilation invariant about `base` and
/// translation invariant along the frame.
class HomogeneousModel final : public MapModel {
 public:
  HomogeneousModel(Vec base, Mat frame, LinkMap link)
      : base_(std::move(base)), frame_(std::move(frame)), link_(std::move(link)) {
    n_ = static_cast<int>(base_.size());
    k_ = static_cast<int>(frame_.cols());
    complement_ = orthogonal_complement(frame_, n_);
  }

  int domain_dim() const override { return n_; }
  int target_dim() const override { return link_.target_dim(n_ - k_); }
  int order() const { return k_; }
  const Vec& base() const { return base_; }
  const Mat& frame() const { return frame_; }
  const Mat& complement() const { return complement_; }
  const LinkMap& link() const { return link_; }

  std::string id() const override {
    std::ostringstream os;
    if (k_ == 0 && link_.kind == LinkMap::Kind::Identity && base_.norm() == 0.0) {
      os << "radial(" << n_ << "," << n_ - 1 << ")";
      return os.str();
    }
    os << "homogeneous(" << k_ << ",[";
    for (int j = 0; j < k_; ++j) {
      os << (j ? ",[" : "[");
      for (int i = 0; i < n_; ++i) os << (i ? "," : "") << frame_(i, j);
      os << "]";
    }
    os << "]," << link_.name() << "," << n_ << ")";
    return os.str();
  }

  Vec value(const Vec& y) const override {
    if (k_ == n_ || link_.kind == LinkMap::Kind::Constant) return link_(Vec());
    const Vec s = complement_.transpose() * (y - base_);
    const double rho = s.norm();
    if (rho == 0.0) return link_(unit(n_ - k_, 0));
    return link_(Vec(s / rho));
  }

  std::optional<Mat> jacobian(const Vec& y) const override {
    const int m1 = target_dim() + 1;
    if (k_ == n_ || link_.kind != LinkMap::Kind::Identity) {
      if (link_.kind == LinkMap::Kind::Sampled) return std::nullopt;
      return Mat(Mat::Zero(m1, n_));
    }
    const Vec s = complement_.transpose() * (y - base_);
    const double rho = s.norm();
    const int d = n_ - k_;
    if (rho == 0.0) return Mat(Mat::Zero(m1, n_));
    const Vec theta = s / rho;
    const Mat proj = Mat::Identity(d, d) - theta * theta.transpose();
    return Mat(proj * complement_.transpose() / rho);
  }

  std::optional<double> hessian_norm(const Vec& y) const override {
    if (k_ == n_ || link_.kind == LinkMap::Kind::Constant) return 0.0;
    if (link_.kind != LinkMap::Kind::Identity) return std::nullopt;
    const double rho = (complement_.transpose() * (y - base_)).norm();
    const int d = n_ - k_;
    return std::sqrt(3.0 * (d - 1)) / (rho * rho);
  }

  std::optional<Vec> nearest_singular_point(const Vec& y) const override {
    if (k_ == n_ || link_.kind == LinkMap::Kind::Constant) return std::nullopt;
    return Vec(base_ + frame_ * (frame_.transpose() * (y - base_)));
  }

  bool isolated_singularities() const override { return k_ == 0; }

  std::vector<Vec> singular_samples(double spacing, double radius) const override {
    std::vector<Vec> out;
    if (k_ == n_ || link_.kind == LinkMap::Kind::Constant) return out;
    // Lattice on the spine base + span(frame), centred at the point of the
    // spine nearest the origin.
    const Vec foot = base_ - frame_ * (frame_.transpose() * base_);
    const double reach = std::sqrt(std::max(0.0, radius * radius - foot.squaredNorm()));
    const int m = static_cast<int>(std::floor(reach / spacing + 1e-9));
    std::vector<int> idx(k_, -m);
    for (;;) {
      Vec p = foot;
      for (int j = 0; j < k_; ++j) p += spacing * idx[j] * frame_.col(j);
      if (p.norm() <= radius * (1.0 + 1e-12)) out.push_back(p);
      int j = 0;
      while (j < k_ && ++idx[j] > m) idx[j++] = -m;
      if (j == k_) break;
    }
    return out;
  }

 private:
  int n_ = 0, k_ = 0;
  Vec base_;
  Mat frame_;
  Mat complement_;
  LinkMap link_;
};

/// Constant map x -> w.
class ConstantModel final : public MapModel {
 public:
  ConstantModel(int n, Vec w) : n_(n), w_(w.normalized()) {}
  int domain_dim() const override { return n_; }
  int target_dim() const override { return static_cast<int>(w_.size()) - 1; }
  std::string id() const override {
    std::ostringstream os;
    const bool same = w_.size() == n_;
    os << (same ? "constant(" : "constant([");
    for (int i = 0; i < w_.size(); ++i) os << (i ? "," : "") << w_(i);
    if (same) os << ")";
    else os << "]," << n_ << ")";
    return os.str();
  }
  Vec value(const Vec&) const override { return w_; }
  std::optional<Mat> jacobian(const Vec&) const override {
    return Mat(Mat::Zero(w_.size(), n_));
  }
  std::optional<double> hessian_norm(const Vec&) const override { return 0.0; }

 private:
  int n_;
  Vec w_;
};

/// Geodesic map f(x) = (cos(a.x), sin(a.x)) into S^1.
class GeodesicModel final : public MapModel {
 public:
  explicit GeodesicModel(Vec a) : a_(std::move(a)) {}
  int domain_dim() const override { return static_cast<int>(a_.size()); }
  int target_dim() const override { return 1; }
  const Vec& frequency() const { return a_; }
  std::string id() const override {
    std::ostringstream os;
    os << "geodesic(";
    for (int i = 0; i < a_.size(); ++i) os << (i ? "," : "") << a_(i);
    os << ")";
    return os.str();
  }
  Vec value(const Vec& x) const override {
    const double t = a_.dot(x);
    Vec v(2);
    v << std::cos(t), std::sin(t);
    return v;
  }
  std::optional<Mat> jacobian(const Vec& x) const override {
    const double t = a_.dot(x);
    Vec dir(2);
    dir << -std::sin(t), std::cos(t);
    return Mat(dir * a_.transpose());
  }
  std::optional<double> hessian_norm(const Vec&) const override { return a_.squaredNorm(); }

 private:
  Vec a_;
};

/// z -> f(y + r z).
class RescaledModel final : public MapModel {
 public:
  RescaledModel(std::shared_ptr<const MapModel> base, Vec y, double r)
      : base_(std::move(base)), y_(std::move(y)), r_(r) {}
  int domain_dim() const override { return base_->domain_dim(); }
  int target_dim() const override { return base_->target_dim(); }
  std::string id() const override {
    std::ostringstream os;
    os << "rescaled(" << base_->id() << ",[";
    for (int i = 0; i < y_.size(); ++i) os << (i ? "," : "") << y_(i);
    os << "]," << r_ << ")";
    return os.str();
  }
  Vec value(const Vec& z) const override { return base_->value(y_ + r_ * z); }
  std::optional<Mat> jacobian(const Vec& z) const override {
    auto j = base_->jacobian(y_ + r_ * z);
    if (!j) return std::nullopt;
    return Mat(r_ * *j);
  }
  std::optional<double> hessian_norm(const Vec& z) const override {
    auto h = base_->hessian_norm(y_ + r_ * z);
    if (!h) return std::nullopt;
    return r_ * r_ * *h;
  }
  std::optional<Vec> nearest_singular_point(const Vec& z) const override {
    auto s = base_->nearest_singular_point(y_ + r_ * z);
    if (!s) return std::nullopt;
    return Vec((*s - y_) / r_);
  }
  bool isolated_singularities() const override { return base_->isolated_singularities(); }
  std::vector<Vec> singular_samples(double spacing, double radius) const override {
    std::vector<Vec> out;
    for (const Vec& p : base_->singular_samples(spacing * r_, y_.norm() + radius * r_)) {
      const Vec z = (p - y_) / r_;
      if (z.norm() <= radius * (1.0 + 1e-12)) out.push_back(z);
    }
    return out;
  }

  const std::shared_ptr<const MapModel>& base() const { return base_; }
  const Vec& center() const { return y_; }
  double scale() const { return r_; }

 private:
  std::shared_ptr<const MapModel> base_;
  Vec y_;
  double r_;
};

/// Nearest-point projection of base + amplitude * phi onto the sphere, phi a
/// seeded smooth random trigonometric field with |phi| <= 1. Derivatives come
/// from finite differences.
class PerturbedModel final : public MapModel {
 public:
  PerturbedModel(std::shared_ptr<const MapModel> base, double amplitude, std::uint64_t seed)
      : base_(std::move(base)), amplitude_(amplitude), seed_(seed) {
    const int n = base_->domain_dim(), m1 = base_->target_dim() + 1;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    double total = 0.0;
    for (int j = 0; j < kModes; ++j) {
      Mode mode;
      mode.coeff = Vec(m1);
      for (int i = 0; i < m1; ++i) mode.coeff(i) = normal(rng);
      mode.freq = Vec(n);
      for (int i = 0; i < n; ++i) mode.freq(i) = 2.0 * normal(rng);
      mode.phase = phase(rng);
      total += mode.coeff.norm();
      modes_.push_back(mode);
    }
    for (auto& m : modes_) m.coeff /= total;
  }

  int domain_dim() const override { return base_->domain_dim(); }
  int target_dim() const override { return base_->target_dim(); }
  std::string id() const override {
    std::ostringstream os;
    os << "perturbed(" << base_->id() << "," << amplitude_ << "," << seed_ << ")";
    return os.str();
  }
  Vec value(const Vec& x) const override {
    Vec v = base_->value(x);
    for (const auto& m : modes_) v += amplitude_ * std::sin(m.freq.dot(x) + m.phase) * m.coeff;
    return v.normalized();
  }
  std::optional<Vec> nearest_singular_point(const Vec& x) const override {
    return base_->nearest_singular_point(x);
  }
  bool isolated_singularities() const override { return base_->isolated_singularities(); }
  std::vector<Vec> singular_samples(double spacing, double radius) const override {
    return base_->singular_samples(spacing, radius);
  }

 private:
  static constexpr int kModes = 6;
  struct Mode {
    Vec coeff, freq;
    double phase = 0.0;
  };
  std::shared_ptr<const MapModel> base_;
  double amplitude_;
  std::uint64_t seed_;
  std::vector<Mode> modes_;
};

// ---------------------------------------------------------------------------
// Factories

inline constexpr double kDefaultRadius = 2.0;

/// x -> x/|x| on B_R(0) subset R^n, into S^{n-1}.
inline ManifoldMap radial_map(int n, double radius = kDefaultRadius) {
  if (n < 2) throw UnsupportedModel("radial map needs n >= 2");
  auto model = std::make_shared<HomogeneousModel>(zeros(n), Mat(n, 0), LinkMap::identity());
  // |grad f|^2 = (n-1)/|x|^2.
  const double lambda = n > 2 ? sphere_area(n - 1) * (n - 1) * std::pow(radius, n - 2) / (n - 2)
                              : std::numeric_limits<double>::infinity();
  return {model, radius, lambda};
}

inline ManifoldMap constant_map(int n, const Vec& w, double radius = kDefaultRadius) {
  return {std::make_shared<ConstantModel>(n, w), radius, 0.0};
}

inline ManifoldMap geodesic_map(const Vec& a, double radius = kDefaultRadius) {
  const int n = static_cast<int>(a.size());
  return {std::make_shared<GeodesicModel>(a), radius,
          a.squaredNorm() * ball_volume(n) * std::pow(radius, n)};
}

/// The energy bound of a perturbed map is its Dirichlet energy on B_R,
/// computed once by quadrature.
inline ManifoldMap perturbed_map(const ManifoldMap& base, double amplitude, std::uint64_t seed) {
  auto model = std::make_shared<PerturbedModel>(base.model_ptr(), amplitude, seed);
  ManifoldMap tmp(model, base.radius(), 0.0);
  const Vec origin = zeros(base.dim());
  Vec pole = origin;
  if (model->isolated_singularities()) {
    if (auto s = model->nearest_singular_point(origin)) pole = *s;
  }
  const double energy =
      integrate_ball(origin, base.radius(), pole,
                     [&](const Vec& y) { return tmp.gradient_norm_sq(y); })
          .value;
  return {model, base.radius(), energy};
}

/// z -> f(y + r z) on B_{(R - |y|)/r}(0).
inline ManifoldMap rescale(const ManifoldMap& f, const Vec& y, double r) {
  const double cap = f.radius() - y.norm();
  if (!(r > 0.0) || r >= cap) {
    std::ostringstream os;
    os << "rescale radius " << r << " must lie in (0, " << cap << ")";
    throw OutOfDomain(os.str());
  }
  // Flatten nested rescalings so that repeated blow-ups stay one level deep.
  if (auto* inner = dynamic_cast<const RescaledModel*>(&f.model())) {
    auto model = std::make_shared<RescaledModel>(inner->base(), inner->center() + inner->scale() * y,
                                                 inner->scale() * r);
    return {model, cap / r, f.energy_bound()};
  }
  return {std::make_shared<RescaledModel>(f.model_ptr(), y, r), cap / r, f.energy_bound()};
}

/// Orthonormalise `frame` (columns) after checking its Gram determinant.
inline Mat checked_frame(const Mat& frame) {
  const int k = static_cast<int>(frame.cols());
  if (k == 0) return frame;
  const Mat gram = frame.transpose() * frame;
  if (gram.determinant() < 1e-12) throw DegenerateFrame("Gram determinant below 1e-12");
  const Eigen::MatrixXd dense = frame;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(dense);
  Eigen::MatrixXd q = qr.householderQ();
  return Mat(q.leftCols(k));
}

/// k-homogeneous model with base point, defining plane and link map.
inline HomogeneousModel make_homogeneous(const Vec& base, const Mat& frame, const LinkMap& link) {
  const int n = static_cast<int>(base.size());
  if (frame.rows() != n && frame.cols() > 0) throw DegenerateFrame("frame dimension mismatch");
  Mat f = frame.cols() == 0 ? Mat(n, 0) : checked_frame(frame);
  if (f.cols() == n && link.kind != LinkMap::Kind::Constant) {
    throw UnsupportedModel("an n-homogeneous map is constant; use a constant link");
  }
  return HomogeneousModel(base, f, link);
}

inline ManifoldMap as_map(const HomogeneousModel& h, double radius = kDefaultRadius) {
  return {std::make_shared<HomogeneousModel>(h), radius, std::numeric_limits<double>::quiet_NaN()};
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
  double max_unit_violation = 0.0;
  std::optional<double> max_gradient_mismatch;  // only for analytic gradients
  bool gradient_ok = true;
  double energy = 0.0;            // integral over B_R of |grad f|^2
  double energy_error = 0.0;
  double energy_unit_ball = 0.0;  // integral over B_1
  bool energy_ok = true;
  std::size_t samples = 0;

  bool unit_ok() const { return max_unit_violation <= 1e-10; }
  bool ok() const { return unit_ok() && gradient_ok && energy_ok; }
};

namespace detail {

/// Pole for polar quadrature over B_r(center): the nearest declared isolated
/// singularity when it lies within twice the radius, else the center.
inline Vec quadrature_pole(const ManifoldMap& f, const Vec& center, double r) {
  if (f.model().isolated_singularities()) {
    if (auto s = f.nearest_singular_point(center)) {
      if ((*s - center).norm() < 2.0 * r) return *s;
    }
  }
  return center;
}

}  // namespace detail

/// Sample-based sanity report: unit-norm values, analytic gradient against
/// central differences, and the Dirichlet energy against the bound.
inline ValidationReport validate(const ManifoldMap& f, std::size_t samples = 256,
                                 const QuadOrders& ord = {}) {
  ValidationReport rep;
  const int n = f.dim();
  HaltonSequence seq(n + 1, 0x5eed);
  std::vector<double> u(n + 1);
  const Vec probe = unit(n, 0) * 0.5 * f.radius();
  const bool analytic = f.model().jacobian(probe).has_value();
  double mismatch = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    seq.point(i, u.data());
    const Vec x = 0.95 * f.radius() * ball_point_from_uniforms(u.data(), n);
    if (f.singular_distance(x) < 1e-3) continue;
    ++rep.samples;
    rep.max_unit_violation = std::max(rep.max_unit_violation, std::abs(f.value(x).norm() - 1.0));
    if (analytic) {
      const Mat ja = f.jacobian(x);
      const Mat jf = f.fd_jacobian(x);
      mismatch = std::max(mismatch, (ja - jf).norm() / std::max(1.0, ja.norm()));
    }
  }
  if (analytic) {
    rep.max_gradient_mismatch = mismatch;
    rep.gradient_ok = mismatch <= 1e-5;
  }
  auto density = [&](const Vec& y) { return f.gradient_norm_sq(y); };
  const Vec origin = zeros(n);
  const QuadResult whole =
      integrate_ball(origin, f.radius(), detail::quadrature_pole(f, origin, f.radius()), density, ord);
  const QuadResult inner =
      integrate_ball(origin, 1.0, detail::quadrature_pole(f, origin, 1.0), density, ord);
  rep.energy = whole.value;
  rep.energy_error = whole.error;
  rep.energy_unit_ball = inner.value;
  if (std::isfinite(f.energy_bound())) {
    rep.energy_ok = rep.energy <= f.energy_bound() * (1.0 + 1e-9) + 3.0 * rep.energy_error;
  }
  return rep;
}

}  // namespace stratlab
