// Gaussian components and mode-indexed mixtures: product and affine identities,
// evaluation, inner products and box integrals.
#pragma once

#include "psafe/model.hpp"

#include <boost/math/quadrature/gauss.hpp>

namespace psafe {

template <int Dim>
struct GaussianComponent {
  double weight = 1.0;
  Vec<Dim> mean;
  Mat<Dim> cov;
};

/// Per-mode lists of weighted Gaussians. Used for information states,
/// alpha-functions and the indicator approximation alike.
template <int Dim>
struct ModeMixture {
  std::vector<std::vector<GaussianComponent<Dim>>> modes;

  ModeMixture() = default;
  explicit ModeMixture(int n_modes) : modes(static_cast<std::size_t>(n_modes)) {}

  int n_modes() const { return static_cast<int>(modes.size()); }
  std::vector<GaussianComponent<Dim>>& operator[](int q) { return modes[static_cast<std::size_t>(q)]; }
  const std::vector<GaussianComponent<Dim>>& operator[](int q) const { return modes[static_cast<std::size_t>(q)]; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& m : modes) n += m.size();
    return n;
  }
  double total_weight() const {
    double s = 0.0;
    for (const auto& m : modes)
      for (const auto& c : m) s += c.weight;
    return s;
  }
  void scale(double f) {
    for (auto& m : modes)
      for (auto& c : m) c.weight *= f;
  }
};

/// Symmetrizes and lifts the spectrum to at least kCovFloor.
template <class M>
M regularize_cov(const M& P) {
  M S = 0.5 * (P + P.transpose());
  if (S.rows() == 1) {
    S(0, 0) = std::max(S(0, 0), kCovFloor);
    return S;
  }
  const double lmin = eigen_range(S).first;
  if (lmin < kCovFloor) S.diagonal().array() += (kCovFloor - lmin);
  return S;
}

/// log N(d; 0, P) for a residual d.
template <class VD, class M>
double gauss_logpdf0(const VD& d, const M& P) {
  const Eigen::Index n = d.size();
  if (n == 1) return -0.5 * (kLogTwoPi + std::log(P(0, 0)) + d(0) * d(0) / P(0, 0));
  using MatT = Eigen::Matrix<double, M::RowsAtCompileTime, M::ColsAtCompileTime, 0, M::MaxRowsAtCompileTime,
                             M::MaxColsAtCompileTime>;
  Eigen::LLT<MatT> llt{MatT(P)};
  const auto z = llt.matrixL().solve(d).eval();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(n) * kLogTwoPi + logdet + z.squaredNorm());
}

template <int Dim>
double component_density(const GaussianComponent<Dim>& c, const Vec<Dim>& x) {
  return std::exp(gauss_logpdf0((x - c.mean).eval(), c.cov));
}

/// Weighted density w * N(x; mean, cov).
template <int Dim>
double component_value(const GaussianComponent<Dim>& c, const Vec<Dim>& x) {
  return c.weight == 0.0 ? 0.0 : c.weight * component_density(c, x);
}

template <int Dim>
struct ProductResult {
  double scale;                 // N(mu_a; mu_b, P_a + P_b)
  GaussianComponent<Dim> out;   // weight = w_a * w_b * scale
};

/// N(x; a) N(x; b) = scale * N(x; out) pointwise.
template <int Dim>
ProductResult<Dim> product(const GaussianComponent<Dim>& a, const GaussianComponent<Dim>& b) {
  require(a.mean.size() == b.mean.size(), "product: dimension mismatch");
  const Mat<Dim> S = regularize_cov<Mat<Dim>>(a.cov + b.cov);
  const Vec<Dim> d = a.mean - b.mean;
  ProductResult<Dim> r;
  r.scale = std::exp(gauss_logpdf0(d, S));
  const Mat<Dim> Sinv = S.inverse();
  // (Pa^-1 + Pb^-1)^-1 = Pa (Pa + Pb)^-1 Pb, mean = Pb S^-1 mu_a + Pa S^-1 mu_b.
  r.out.cov = regularize_cov<Mat<Dim>>(a.cov * Sinv * b.cov);
  r.out.mean = b.cov * Sinv * a.mean + a.cov * Sinv * b.mean;
  r.out.weight = a.weight * b.weight * r.scale;
  return r;
}

/// Rewrites N(y; A x + b, P) as a density in x: |A^-1| N(x; A^-1 (y - b), A^-1 P A^-T).
/// The returned component's weight equals that scale.
template <int Dim, class VY>
GaussianComponent<Dim> affine_pushforward(const VY& y, const Mat<Dim>& A, const Vec<Dim>& b, const Mat<Dim>& P) {
  require(smallest_singular_value(A) >= 1e-10, "affine_pushforward: A is singular");
  const Mat<Dim> Ainv = A.inverse();
  GaussianComponent<Dim> c;
  c.weight = std::abs(Ainv.determinant());
  c.mean = Ainv * (Vec<Dim>(y) - b);
  c.cov = regularize_cov<Mat<Dim>>(Ainv * P * Ainv.transpose());
  return c;
}

/// Sum of weighted densities of mode q at x.
template <int Dim, class Derived>
double mixture_evaluate(const ModeMixture<Dim>& mix, const Eigen::MatrixBase<Derived>& x, int q) {
  if (q < 0 || q >= mix.n_modes()) return 0.0;
  const Vec<Dim> xv = x;
  double s = 0.0;
  for (const auto& c : mix[q]) s += component_value(c, xv);
  return s;
}

/// Integral of N(x; a) N(x; b) over R^m.
template <int Dim>
double overlap(const GaussianComponent<Dim>& a, const GaussianComponent<Dim>& b) {
  return std::exp(gauss_logpdf0((a.mean - b.mean).eval(), (a.cov + b.cov).eval()));
}

/// <f, g> = sum_q integral f(x, q) g(x, q) dx.
template <int Dim>
double mixture_inner(const ModeMixture<Dim>& f, const ModeMixture<Dim>& g) {
  require(f.n_modes() == g.n_modes(), "mixture_inner: mode count mismatch");
  double s = 0.0;
  for (int q = 0; q < f.n_modes(); ++q)
    for (const auto& a : f[q])
      for (const auto& b : g[q]) s += a.weight * b.weight * overlap(a, b);
  return s;
}

namespace detail {

inline double normal_cdf(double z) { return normal_tail(-z); }
inline double normal_inv_cdf(double p) {
  p = std::clamp(p, 1e-300, 1.0 - 1e-16);
  return -normal_upper_quantile(p);
}

// Sequential conditioning on z = L^-1 (x - mu): integrates the remaining axes
// for fixed z_0..z_{k-1}.
inline double box_mass_recursive(const MatX& L, const VecX& mu, const VecX& lo, const VecX& hi, VecX& z, Eigen::Index k) {
  const Eigen::Index n = mu.size();
  double shift = mu(k);
  for (Eigen::Index j = 0; j < k; ++j) shift += L(k, j) * z(j);
  const double a = (lo(k) - shift) / L(k, k);
  const double b = (hi(k) - shift) / L(k, k);
  if (!(b > a)) return 0.0;
  const double mass = interval_mass(0.0, 1.0, a, b);
  if (k == n - 1 || mass == 0.0) return mass;
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  const double half = 0.5 * (pb - pa);
  const double mid = 0.5 * (pa + pb);
  if (half <= 0.0) return 0.0;
  using Rule = boost::math::quadrature::gauss<double, 32>;
  const auto& xs = Rule::abscissa();
  const auto& ws = Rule::weights();
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (int sign : {-1, 1}) {
      z(k) = normal_inv_cdf(mid + sign * half * xs[i]);
      s += ws[i] * box_mass_recursive(L, mu, lo, hi, z, k + 1);
    }
  }
  return s * half;
}

}  // namespace detail

/// Probability mass of N(mean, cov) inside the box (weight ignored).
template <int Dim>
double box_integral(const GaussianComponent<Dim>& c, const Box& box) {
  const Eigen::Index n = c.mean.size();
  require(box.dim() == n, "box_integral: dimension mismatch");
  bool diagonal = true;
  for (Eigen::Index i = 0; i < n && diagonal; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && c.cov(i, j) != 0.0) {
        diagonal = false;
        break;
      }
  if (diagonal) {
    double p = 1.0;
    for (Eigen::Index i = 0; i < n && p > 0.0; ++i)
      p *= interval_mass(c.mean(i), std::sqrt(c.cov(i, i)), box.lo(i), box.hi(i));
    return p;
  }
  const MatX L = Eigen::LLT<MatX>(MatX(c.cov)).matrixL();
  VecX z = VecX::Zero(n);
  return std::clamp(detail::box_mass_recursive(L, VecX(c.mean), box.lo, box.hi, z, 0), 0.0, 1.0);
}

}  // namespace psafe
