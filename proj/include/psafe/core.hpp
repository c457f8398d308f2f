// Shared linear-algebra aliases, error types and scalar Gaussian helpers.
#pragma once

#include <Eigen/Dense>

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace psafe {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;
template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kLogTwoPi = 1.8378770664093453;
/// Floor applied to covariance eigenvalues after every closed-form update.
inline constexpr double kCovFloor = 1e-12;

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by config loaders; `path()` names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Raised when an observation has (numerically) zero likelihood under a belief.
class DegenerateObservation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, std::string_view msg) {
  if (!cond) throw ContractViolation(std::string(msg));
}

/// Standard normal upper tail Q(z) = P[Z > z].
inline double normal_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

/// P[a <= X <= b] for X ~ N(mean, sd^2); accurate in both tails.
inline double interval_mass(double mean, double sd, double a, double b) {
  if (!(b > a)) return 0.0;
  const double za = (a - mean) / sd;
  const double zb = (b - mean) / sd;
  if (za >= 0.0) return std::max(0.0, normal_tail(za) - normal_tail(zb));
  if (zb <= 0.0) return std::max(0.0, normal_tail(-zb) - normal_tail(-za));
  return std::max(0.0, 1.0 - normal_tail(-za) - normal_tail(zb));
}

/// z such that Q(z) = p, for p in (0, 1).
inline double normal_upper_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_upper_quantile: p must lie in (0,1)");
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Largest singular value.
template <class Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<MatX> svd{MatX(m)};
  return svd.singularValues()(0);
}

/// Smallest singular value of a square matrix.
template <class Derived>
double smallest_singular_value(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<MatX> svd{MatX(m)};
  return svd.singularValues()(svd.singularValues().size() - 1);
}

/// Extreme eigenvalues of a symmetric matrix.
template <class Derived>
std::pair<double, double> eigen_range(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() == 1) return {m(0, 0), m(0, 0)};
  Eigen::SelfAdjointEigenSolver<MatX> es(MatX(m), Eigen::EigenvaluesOnly);
  return {es.eigenvalues()(0), es.eigenvalues()(es.eigenvalues().size() - 1)};
}

/// 64-bit FNV-1a, used to key artifacts to the configuration that produced them.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

/// Axis-aligned box [lo, hi] in R^d.
struct Box {
  VecX lo;
  VecX hi;

  Eigen::Index dim() const { return lo.size(); }
  double volume() const {
    double v = 1.0;
    for (Eigen::Index i = 0; i < lo.size(); ++i) v *= std::max(0.0, hi(i) - lo(i));
    return v;
  }
  double diameter() const { return (hi - lo).norm(); }
  VecX center() const { return 0.5 * (lo + hi); }
  template <class V>
  bool contains(const V& x) const {
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (x(i) < lo(i) || x(i) > hi(i)) return false;
    return true;
  }
};

}  // namespace psafe
