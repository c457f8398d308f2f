// Partially observable discrete-time stochastic hybrid system (switched affine
// dynamics, linear Gaussian observations, finite mode and input sets).
#pragma once

#include "psafe/core.hpp"

#include <functional>
#include <optional>

namespace psafe {

/// Observation-space types. The observation dimension l never exceeds the
/// state dimension, so fixed-capacity storage avoids heap traffic when Dim is fixed.
template <int Dim>
using ObsVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, Dim, 1>;
template <int Dim>
using ObsMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, Dim, Dim>;
template <int Dim>
using ObsMap = Eigen::Matrix<double, Eigen::Dynamic, Dim, 0, Dim, Dim>;

template <int Dim>
struct HybridState {
  Vec<Dim> x;
  int q = 0;
};

/// Gaussian density evaluated through a Cholesky factor.
template <class VX, class VM, class M>
double gaussian_log_density(const VX& x, const VM& mean, const M& cov) {
  using MatT = Eigen::Matrix<double, M::RowsAtCompileTime, M::ColsAtCompileTime, 0,
                             M::MaxRowsAtCompileTime, M::MaxColsAtCompileTime>;
  const Eigen::Index n = x.size();
  if (n == 1) {
    const double d = x(0) - mean(0);
    return -0.5 * (kLogTwoPi + std::log(cov(0, 0)) + d * d / cov(0, 0));
  }
  Eigen::LLT<MatT> llt{MatT(cov)};
  const auto d = (x - mean).eval();
  const auto z = llt.matrixL().solve(d).eval();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(n) * kLogTwoPi + logdet + z.squaredNorm());
}

template <class VX, class VM, class M>
double gaussian_density(const VX& x, const VM& mean, const M& cov) {
  return std::exp(gaussian_log_density(x, mean, cov));
}

struct LipschitzConstants {
  double h_x1 = 0, h_x2 = 0, h_y1 = 0, h_y2 = 0, h_q = 0;
  double phi_v_star = 0, phi_w_star = 0;
};

template <int Dim>
class PodtshsModel {
 public:
  using VecT = Vec<Dim>;
  using MatT = Mat<Dim>;
  /// Optional state-dependent mode kernel Tq(q'|q, x, u).
  using ModeKernelX = std::function<double(int q_next, int q, const VecT& x, int u)>;

  int n_modes = 1;
  int dim = Dim == Eigen::Dynamic ? 1 : Dim;
  int obs_dim = 1;
  int n_obs_symbols = 1;
  std::vector<double> inputs;               // labels of the finite input set U
  std::vector<MatT> A;                      // [q]
  std::vector<std::vector<VecT>> g;         // [q][u]
  MatT V;
  std::vector<ObsMap<Dim>> C;               // [q]
  ObsMat<Dim> W;
  std::vector<std::vector<std::vector<double>>> Tq;  // [u][q][q']
  std::vector<std::vector<double>> Yq;               // [q][y^q]
  std::vector<Box> safe;                    // [q]
  std::vector<double> R_q;                  // initial mode distribution
  VecT mu0;
  MatT P0;
  int horizon = 1;
  ModeKernelX mode_kernel_x;                // finite pipeline only
  double h_q = 0.0;                         // Lipschitz constant of mode_kernel_x in x

  int n_inputs() const { return static_cast<int>(inputs.size()); }
  bool mode_kernel_depends_on_x() const { return static_cast<bool>(mode_kernel_x); }

  double mode_prob(int q_next, int q, const VecT& x, int u) const {
    if (mode_kernel_x) return mode_kernel_x(q_next, q, x, u);
    return Tq[static_cast<std::size_t>(u)][static_cast<std::size_t>(q)][static_cast<std::size_t>(q_next)];
  }

  VecT next_mean(const VecT& x, int q_next, int u) const {
    return A[static_cast<std::size_t>(q_next)] * x + g[static_cast<std::size_t>(q_next)][static_cast<std::size_t>(u)];
  }

  /// tau_x(x' | q', x, u) = N(x'; A(q')x + g(q',u), V).
  double continuous_transition_density(const VecT& x_next, int q_next, const VecT& x, int u) const {
    check_state(x, q_next);
    require(x_next.size() == dim, "continuous_transition_density: dimension mismatch");
    check_input(u);
    return gaussian_density(x_next, next_mean(x, q_next, u), V);
  }

  /// gamma(y | s) = N(y^x; C(q)x, W) * Yq(y^q | q).
  double observation_density(const ObsVec<Dim>& yx, int yq, const VecT& x, int q) const {
    check_state(x, q);
    require(yx.size() == obs_dim, "observation_density: dimension mismatch");
    require(yq >= 0 && yq < n_obs_symbols, "observation_density: unknown discrete observation symbol");
    const double t = Yq[static_cast<std::size_t>(q)][static_cast<std::size_t>(yq)];
    if (t == 0.0) return 0.0;
    return t * gaussian_density(yx, (C[static_cast<std::size_t>(q)] * x).eval(), W);
  }

  bool in_safe(const VecT& x, int q) const { return safe[static_cast<std::size_t>(q)].contains(x); }

  /// Largest Lebesgue measure over the per-mode safe boxes.
  double safe_measure() const {
    double l = 0.0;
    for (const auto& b : safe) l = std::max(l, b.volume());
    return l;
  }

  /// Checks every structural invariant. `gaussian_pipeline` additionally
  /// enforces a state-independent mode kernel and invertible A(q), C(q).
  void validate(bool gaussian_pipeline = false) const {
    auto fail = [](const std::string& path, const std::string& msg) { throw ConfigError(path, msg); };
    if (n_modes < 1) fail("modes", "must be at least 1");
    if (dim < 1 || (Dim != Eigen::Dynamic && dim != Dim)) fail("dim", "does not match the compiled dimension");
    if (obs_dim < 1 || obs_dim > dim) fail("obs_dim", "must satisfy 1 <= l <= m");
    if (inputs.empty()) fail("inputs", "input set must be nonempty");
    if (horizon < 0) fail("horizon", "must be nonnegative");
    const auto nq = static_cast<std::size_t>(n_modes);
    const auto nu = inputs.size();
    if (A.size() != nq) fail("A", "expected one matrix per mode");
    if (C.size() != nq) fail("C", "expected one matrix per mode");
    if (g.size() != nq) fail("g", "expected one row per mode");
    for (std::size_t q = 0; q < nq; ++q) {
      const std::string pq = "[" + std::to_string(q) + "]";
      if (A[q].rows() != dim || A[q].cols() != dim) fail("A" + pq, "wrong shape");
      if (C[q].rows() != obs_dim || C[q].cols() != dim) fail("C" + pq, "wrong shape");
      if (g[q].size() != nu) fail("g" + pq, "expected one vector per input");
      for (std::size_t u = 0; u < nu; ++u)
        if (g[q][u].size() != dim) fail("g" + pq + "[" + std::to_string(u) + "]", "wrong length");
      if (!A[q].allFinite() || !C[q].allFinite()) fail("A" + pq, "non-finite entries");
      if (gaussian_pipeline) {
        if (smallest_singular_value(A[q]) < 1e-10) fail("A" + pq, "must be invertible for the Gaussian pipeline");
        if (C[q].rows() != C[q].cols() || smallest_singular_value(C[q]) < 1e-10)
          fail("C" + pq, "must be square and invertible for the Gaussian pipeline");
      }
    }
    check_spd(V, "V");
    check_spd(W, "W");
    check_spd(P0, "P0");
    if (mu0.size() != dim) fail("mu0", "wrong length");
    if (Tq.size() != nu) fail("Tq", "expected one table per input");
    for (std::size_t u = 0; u < nu; ++u) {
      if (Tq[u].size() != nq) fail("Tq[" + std::to_string(u) + "]", "expected one row per mode");
      for (std::size_t q = 0; q < nq; ++q) {
        const std::string p = "Tq[" + std::to_string(u) + "][" + std::to_string(q) + "]";
        check_stochastic_row(Tq[u][q], nq, p);
      }
    }
    if (gaussian_pipeline && mode_kernel_x) fail("Tq", "state-dependent mode kernel not supported by the Gaussian pipeline");
    if (Yq.size() != nq) fail("Yq", "expected one row per mode");
    for (std::size_t q = 0; q < nq; ++q)
      check_stochastic_row(Yq[q], static_cast<std::size_t>(n_obs_symbols), "Yq[" + std::to_string(q) + "]");
    check_stochastic_row(R_q, nq, "rho.modes");
    if (safe.size() != nq) fail("safe_set", "expected one box per mode");
    for (std::size_t q = 0; q < nq; ++q) {
      const std::string p = "safe_set[" + std::to_string(q) + "]";
      if (safe[q].lo.size() != dim || safe[q].hi.size() != dim) fail(p, "wrong dimension");
      if (!safe[q].lo.allFinite() || !safe[q].hi.allFinite()) fail(p, "must be bounded");
      for (int d = 0; d < dim; ++d)
        if (!(safe[q].hi(d) > safe[q].lo(d))) fail(p, "empty box");
    }
    if (h_q < 0) fail("h_q", "must be nonnegative");
  }

  /// Lipschitz constants of the transition and observation densities, and their maxima.
  LipschitzConstants lipschitz_constants() const {
    LipschitzConstants L;
    const double detV = V.determinant();
    const double detW = W.determinant();
    require(detV > 0 && detW > 0, "lipschitz_constants: singular covariance");
    const double lminV = eigen_range(V).first;
    const double lminW = eigen_range(W).first;
    require(lminV > 0 && lminW > 0, "lipschitz_constants: singular covariance");
    L.phi_v_star = std::pow(kTwoPi, -0.5 * dim) / std::sqrt(detV);
    L.phi_w_star = std::pow(kTwoPi, -0.5 * obs_dim) / std::sqrt(detW);
    double normA = 0.0, normC = 0.0;
    for (int q = 0; q < n_modes; ++q) {
      normA = std::max(normA, spectral_norm(A[static_cast<std::size_t>(q)]));
      normC = std::max(normC, spectral_norm(C[static_cast<std::size_t>(q)]));
    }
    const double e = std::exp(-0.5);
    // Gradient of N(y; c, P) in y peaks at e^{-1/2} / sqrt(lambda_min(P)) times the density maximum.
    L.h_x1 = e * L.phi_v_star / std::sqrt(lminV);
    L.h_x2 = normA * L.h_x1;
    L.h_y1 = e * L.phi_w_star / std::sqrt(lminW);
    L.h_y2 = normC * L.h_y1;
    L.h_q = mode_kernel_x ? h_q : 0.0;
    return L;
  }

 private:
  void check_state(const VecT& x, int q) const {
    require(x.size() == dim, "state dimension mismatch");
    require(q >= 0 && q < n_modes, "mode index out of range");
  }
  void check_input(int u) const { require(u >= 0 && u < n_inputs(), "input index out of range"); }

  template <class M>
  static void check_spd(const M& P, const std::string& path) {
    if (P.rows() != P.cols()) throw ConfigError(path, "must be square");
    if (!P.allFinite()) throw ConfigError(path, "non-finite entries");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, P.cwiseAbs().maxCoeff()))
      throw ConfigError(path, "must be symmetric");
    if (eigen_range(P).first <= 0.0) throw ConfigError(path, "must be positive definite");
  }
  static void check_stochastic_row(const std::vector<double>& row, std::size_t n, const std::string& path) {
    if (row.size() != n) throw ConfigError(path, "expected " + std::to_string(n) + " entries");
    double s = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw ConfigError(path, "entries must be nonnegative");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ConfigError(path, "row must sum to 1");
  }
};

}  // namespace psafe
