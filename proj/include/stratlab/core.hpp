#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stratlab {

// Small dense types. The fixed upper bound keeps every point and Jacobian on
// the stack; ambient dimensions above 9 are not supported.
inline constexpr int kMaxDim = 9;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define STRATLAB_ERROR(Name)                  \
  class Name : public Error {                 \
   public:                                    \
    explicit Name(const std::string& what)    \
        : Error(std::string(#Name ": ") + what) {} \
  }

STRATLAB_ERROR(OutOfDomain);
STRATLAB_ERROR(SingularPoint);
STRATLAB_ERROR(DegenerateFrame);
STRATLAB_ERROR(QuadratureFailure);
STRATLAB_ERROR(ProjectionFailure);
STRATLAB_ERROR(PlaneDegenerate);
STRATLAB_ERROR(InsufficientData);
STRATLAB_ERROR(UnsupportedModel);
STRATLAB_ERROR(ConfigError);

#undef STRATLAB_ERROR

// ---------------------------------------------------------------------------
// Geometry constants

/// Surface area of the unit sphere S^{d} in R^{d+1}.
inline double sphere_area(int d) {
  const double m = d + 1;
  return 2.0 * std::pow(std::numbers::pi, m / 2.0) / std::tgamma(m / 2.0);
}

/// Volume of the unit ball in R^n.
inline double ball_volume(int n) {
  return std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
}

inline Vec zeros(int n) { return Vec::Zero(n); }

inline Vec unit(int n, int i) {
  Vec e = Vec::Zero(n);
  e(i) = 1.0;
  return e;
}

/// Orthonormal basis of the complement of the unit vector `a`, as the columns
/// of an n x (n-1) matrix (Householder reflection taking e_0 to `a`).
inline Mat complement_basis(const Vec& a) {
  const int n = static_cast<int>(a.size());
  Vec v = a;
  v(0) -= 1.0;
  Mat h = Mat::Identity(n, n);
  const double vv = v.squaredNorm();
  if (vv > 1e-30) h -= (2.0 / vv) * v * v.transpose();
  return h.rightCols(n - 1);
}

/// Orthonormal basis of the orthogonal complement of span(frame) in R^n.
inline Mat orthogonal_complement(const Mat& frame, int n) {
  const int k = static_cast<int>(frame.cols());
  if (k == 0) return Mat::Identity(n, n);
  if (k == n) return Mat(n, 0);
  Eigen::MatrixXd full(n, n);
  full.leftCols(k) = frame;
  full.rightCols(n - k) = Eigen::MatrixXd::Identity(n, n).leftCols(n - k);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(full);
  Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(n - k);
}

/// 64-bit FNV-1a, used for stable config hashes and seed derivation.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 14695981039346656037ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace stratlab
