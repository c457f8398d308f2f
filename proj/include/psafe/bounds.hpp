// Error-bound constants and plug-in bound formulas for both abstractions.
#pragma once

#include "psafe/finite_abstraction.hpp"
#include "psafe/obs_grid.hpp"

#include <cmath>
#include <vector>

namespace psafe {

struct BoundConstants {
  int n_modes = 1;
  double lambda = 0.0;      // largest Lebesgue measure of K_q
  double lambda_bar = 0.0;  // largest Lebesgue measure of the observation regions
  double beta1_y = 0.0, beta2_y = 0.0;
  double beta1_x = 0.0, beta2_x = 0.0;
  double lmax_W = 0.0, lmax_V = 0.0;
  LipschitzConstants L;
};

namespace detail {

/// Measure of the image of `cell` under M, inflated by `radius` on every side,
/// using the axis-aligned bounding box of the image.
template <class Derived>
double inflated_image_measure(const Eigen::MatrixBase<Derived>& M, const Box& cell, double radius) {
  const VecX edges = M.cwiseAbs() * (cell.hi - cell.lo);
  double v = 1.0;
  for (Eigen::Index i = 0; i < edges.size(); ++i) v *= edges(i) + 2.0 * radius;
  return v;
}

template <int Dim>
BoundConstants base_constants(const PodtshsModel<Dim>& m, const ObsGrid<Dim>& og) {
  BoundConstants c;
  c.n_modes = m.n_modes;
  c.L = m.lipschitz_constants();
  c.lambda = m.safe_measure();
  c.lambda_bar = og.lambda_bar;
  c.lmax_W = eigen_range(MatX(m.W)).second;
  c.lmax_V = eigen_range(MatX(m.V)).second;
  double normA = 0.0, normC = 0.0;
  for (int q = 0; q < m.n_modes; ++q) {
    normA = std::max(normA, spectral_norm(m.A[static_cast<std::size_t>(q)]));
    normC = std::max(normC, spectral_norm(m.C[static_cast<std::size_t>(q)]));
  }
  c.beta2_y = c.L.phi_w_star * normC;
  c.beta2_x = c.L.phi_v_star * normA;
  return c;
}

}  // namespace detail

/// Constants over an explicit list of state cells (cell_mode[i] is the mode of cells[i]).
template <int Dim>
BoundConstants compute_constants(const PodtshsModel<Dim>& m, const std::vector<Box>& cells,
                                 const std::vector<int>& cell_mode, const ObsGrid<Dim>& og) {
  require(cells.size() == cell_mode.size(), "compute_constants: one mode per cell required");
  BoundConstants c = detail::base_constants(m, og);
  const double ry = std::sqrt(c.lmax_W), rx = std::sqrt(c.lmax_V);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto q = static_cast<std::size_t>(cell_mode[i]);
    c.beta1_y = std::max(c.beta1_y, detail::inflated_image_measure(MatX(m.C[q]), cells[i], ry));
    c.beta1_x = std::max(c.beta1_x, detail::inflated_image_measure(MatX(m.A[q]), cells[i], rx));
  }
  return c;
}

template <int Dim>
BoundConstants compute_constants(const PodtshsModel<Dim>& m, const StateGrid<Dim>& sg, const ObsGrid<Dim>& og) {
  return compute_constants(m, sg.cells, sg.cell_mode, og);
}

/// Constants without a state grid; the beta1 terms stay zero.
template <int Dim>
BoundConstants compute_constants(const PodtshsModel<Dim>& m, const ObsGrid<Dim>& og) {
  return detail::base_constants(m, og);
}

/// Per-step state-abstraction constant N_q (beta1_y h_y2 + beta1_x h_x2 + beta2_y + beta2_x + h_q).
inline double state_step_constant(const BoundConstants& c) {
  return c.n_modes * (c.beta1_y * c.L.h_y2 + c.beta1_x * c.L.h_x2 + c.beta2_y + c.beta2_x + c.L.h_q);
}

/// Finite state abstraction: |p_safe - p_safe,delta| <= N * step constant * delta_x.
inline double grid_abstraction_bound(const BoundConstants& c, double delta_x, int N) {
  return N * state_step_constant(c) * delta_x;
}

/// Realized likelihood pair of one filter step: p(y | sigma_i, u) and p(y | sigma_hat_i, u).
struct LikelihoodStep {
  double p = 1.0;
  double p_hat = 1.0;
};

/// eta_n^sigma for n = 0..trace.size(), conditional on the realized likelihoods.
inline std::vector<double> filter_eta_sigma(const BoundConstants& c, const std::vector<LikelihoodStep>& trace) {
  const auto inv = [](const LikelihoodStep& s) { return std::min(1.0 / s.p, 1.0 / s.p_hat); };
  const auto& L = c.L;
  const double k1 = L.phi_v_star * L.h_y2 + L.phi_w_star * L.h_x2 + L.phi_w_star * L.phi_v_star * L.h_q;
  const double k2 = L.phi_w_star * c.n_modes * c.lambda;
  std::vector<double> eta(trace.size() + 1, 0.0);
  for (std::size_t n = 1; n <= trace.size(); ++n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double prod = inv(trace[i]) * k1;
      for (std::size_t j = i + 1; j < n; ++j) prod *= inv(trace[j]) * k2;
      sum += prod;
    }
    eta[n] = sum;
  }
  return eta;
}

/// The two addends of eta_n^alpha: N_q lambda eta_n^sigma and (N - n) times the step constant.
struct EtaAlpha {
  double sigma_part = 0.0;
  double grid_part = 0.0;
  double total() const { return sigma_part + grid_part; }
};

inline EtaAlpha eta_alpha(const BoundConstants& c, double eta_sigma_n, int N, int n) {
  return {c.n_modes * c.lambda * eta_sigma_n, (N - n) * state_step_constant(c)};
}

/// gamma_n^sigma = sum_{j<n} (phi_w*)^{j+1} phi*_{sigma,j}.
inline double gamma_sigma(const BoundConstants& c, const std::vector<double>& phi_sigma, int n) {
  require(n <= static_cast<int>(phi_sigma.size()), "gamma_sigma: missing phi*_sigma entries");
  double g = 0.0;
  for (int j = 0; j < n; ++j) g += std::pow(c.L.phi_w_star, j + 1) * phi_sigma[static_cast<std::size_t>(j)];
  return g;
}

/// Gaussian-mixture abstraction at n = 0.
struct MixtureAbstractionBound {
  double safety_statement = 0.0;  // gamma_0^sigma delta_I
  double value_form = 0.0;        // gamma_0^alpha N_q delta_I
};

/// `alpha_bar[n]` is the sup-norm estimate of level n for n = 0..N; level N + 1 is taken as 1.
/// `phi_sigma[j]` is the largest component density peak among level-j beliefs.
inline MixtureAbstractionBound mixture_abstraction_bound(const BoundConstants& c, double delta_I, const std::vector<double>& alpha_bar,
                                    const std::vector<double>& phi_sigma, int N) {
  MixtureAbstractionBound r;
  if (N == 0 || delta_I == 0.0) return r;
  require(static_cast<int>(alpha_bar.size()) >= N + 1, "mixture_abstraction_bound: alpha_bar needs N + 1 entries");
  require(!phi_sigma.empty(), "mixture_abstraction_bound: phi*_sigma needed for level 0");
  const auto abar = [&](int i) { return i > N ? 1.0 : alpha_bar[static_cast<std::size_t>(i)]; };
  const double lp = c.lambda * c.L.phi_v_star;
  double head = 0.0;
  for (int k = 0; k <= N; ++k) head += std::pow(lp, N - k) * abar(N - k + 1);
  const double g_alpha = head * phi_sigma[0] * delta_I + abar(0) * gamma_sigma(c, phi_sigma, 0);
  r.value_form = g_alpha * c.n_modes * delta_I;
  r.safety_statement = gamma_sigma(c, phi_sigma, 0) * delta_I;
  return r;
}

enum class BackendKind { Finite, Gaussian };

/// Observation discretization bound at n = 0. For the Gaussian backend,
/// `alpha_bar[i]` for i = 1..N scales each step's contribution.
inline double observation_bound(const BoundConstants& c, double delta_y, double epsilon, int N, BackendKind kind,
                                const std::vector<double>& alpha_bar = {}) {
  const double base = c.n_modes * c.lambda_bar * c.L.h_y1 * delta_y;
  if (kind == BackendKind::Finite) return N * base + epsilon;
  require(static_cast<int>(alpha_bar.size()) >= N + 1, "observation_bound: alpha_bar needs N + 1 entries");
  double s = 0.0;
  for (int i = 1; i <= N; ++i) s += alpha_bar[static_cast<std::size_t>(i)];
  return base * s + epsilon;
}

/// Point-based error at n = 0 from an empirical covering distance.
inline double pbvi_bound(double delta_sigma_proxy, int N) { return N * delta_sigma_proxy; }

struct BoundReport {
  BackendKind backend = BackendKind::Finite;
  int N = 0;
  double delta_x = 0.0, delta_y = 0.0, delta_I = 0.0, epsilon = 0.0, delta_sigma_proxy = 0.0;
  std::vector<double> alpha_bar;
  std::vector<double> phi_sigma;
  BoundConstants constants;
  double abstraction = 0.0;   // finite: grid bound; Gaussian: value form
  double abstraction_statement = 0.0;
  double observation = 0.0;
  double pbvi_proxy = 0.0;
  std::vector<double> eta_sigma_run;    // [n], largest eta_n^sigma over recorded trajectories
  std::vector<EtaAlpha> eta_alpha_run;  // [n], split of eta_n^alpha using eta_sigma_run[n]
  double value = 0.0;

  /// Bound used for soundness checks: state abstraction plus observation discretization.
  double certified_part() const { return abstraction + observation; }
  /// Sum of every component, including the point-based proxy.
  double heuristic_total() const { return abstraction + observation + pbvi_proxy; }
  double interval_lo() const { return value; }
  double interval_hi() const { return value + heuristic_total(); }
};

}  // namespace psafe
