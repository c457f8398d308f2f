// Gaussian-mixture abstraction: information states and alpha-functions stay
// closed under the safe-set weighted belief operator once the indicator is
// replaced by its RBF approximation.
#pragma once

#include "psafe/indicator.hpp"
#include "psafe/mixture_reduce.hpp"
#include "psafe/obs_grid.hpp"

namespace psafe {

/// Unnormalized information state.
template <int Dim>
using GmBelief = ModeMixture<Dim>;

template <int Dim>
struct GmAlpha {
  ModeMixture<Dim> mix;
  int action = 0;
  double sup_estimate = 0.0;
  /// Index into the next level's alpha set chosen for each observation cell.
  std::vector<int> choice;
};

namespace detail {

// Conditioning of a state-space Gaussian N(x; mean, P) on an observation y = C x + w.
template <int Dim>
struct Innovation {
  using ObsV = ObsVec<Dim>;
  using ObsM = ObsMat<Dim>;
  using Gain = Eigen::Matrix<double, Dim, Eigen::Dynamic, 0, Dim, Dim>;
  ObsV y_mean;
  ObsM S_inv;
  double log_norm = 0.0;
  Gain K;
  Mat<Dim> post_cov;

  Innovation(const Vec<Dim>& mean, const Mat<Dim>& P, const ObsMap<Dim>& C, const ObsMat<Dim>& W) {
    const ObsM S = regularize_cov<ObsM>(C * P * C.transpose() + W);
    const auto l = static_cast<double>(S.rows());
    y_mean = C * mean;
    if (S.rows() == 1) {
      S_inv = ObsM::Constant(1, 1, 1.0 / S(0, 0));
      log_norm = -0.5 * (kLogTwoPi + std::log(S(0, 0)));
    } else {
      Eigen::LLT<ObsM> llt(S);
      S_inv = llt.solve(ObsM::Identity(S.rows(), S.cols()));
      log_norm = -0.5 * (l * kLogTwoPi + 2.0 * llt.matrixLLT().diagonal().array().log().sum());
    }
    K = P * C.transpose() * S_inv;
    post_cov = regularize_cov<Mat<Dim>>(P - K * C * P);
    mean_ = mean;
  }
  double log_likelihood(const ObsV& y) const {
    const ObsV d = y - y_mean;
    return log_norm - 0.5 * d.dot(S_inv * d);
  }
  Vec<Dim> post_mean(const ObsV& y) const { return mean_ + K * (y - y_mean); }

 private:
  Vec<Dim> mean_;
};

// Observation points with nonnegative weights, standing for a measure on the observation space.
template <int Dim>
struct ObsPoints {
  int yq = 0;
  std::vector<ObsVec<Dim>> y;
  std::vector<double> c;       // base weights
  std::vector<double> scale;   // per destination mode
};

}  // namespace detail

/// (RBF_q * sigma_q) for every mode: I_q * L_q product components per mode.
template <int Dim>
ModeMixture<Dim> multiply_indicator(const RbfIndicator<Dim>& rbf, const ModeMixture<Dim>& sigma) {
  require(rbf.mix.n_modes() == sigma.n_modes(), "multiply_indicator: mode count mismatch");
  ModeMixture<Dim> out(sigma.n_modes());
  for (int q = 0; q < sigma.n_modes(); ++q) {
    out[q].reserve(rbf.mix[q].size() * sigma[q].size());
    for (const auto& r : rbf.mix[q])
      for (const auto& s : sigma[q]) out[q].push_back(product(r, s).out);
  }
  return out;
}

/// Prediction through the dynamics followed by conditioning on (y^x, y^q):
/// gamma(y|x',q') sum_q Tq(q'|q,u) int N(x'; A(q')x + g(q',u), V) f_q(x) dx.
/// Each destination mode receives one component per source component of every mode.
template <int Dim>
ModeMixture<Dim> predict_and_condition(const PodtshsModel<Dim>& m, const ModeMixture<Dim>& f, int u,
                                       const ObsVec<Dim>& yx, int yq) {
  require(!m.mode_kernel_depends_on_x(), "predict_and_condition: x-dependent mode kernel is not supported");
  require(u >= 0 && u < m.n_inputs(), "predict_and_condition: input out of range");
  require(yq >= 0 && yq < m.n_obs_symbols, "predict_and_condition: unknown discrete observation symbol");
  require(yx.size() == m.obs_dim, "predict_and_condition: observation dimension mismatch");
  const auto uu = static_cast<std::size_t>(u);
  ModeMixture<Dim> out(m.n_modes);
  for (int qn = 0; qn < m.n_modes; ++qn) {
    const auto qs = static_cast<std::size_t>(qn);
    const Mat<Dim>& A = m.A[qs];
    const double y_prob = m.Yq[qs][static_cast<std::size_t>(yq)];
    for (int q = 0; q < m.n_modes; ++q) {
      const double t = m.Tq[uu][static_cast<std::size_t>(q)][qs];
      for (const auto& c : f[q]) {
        const Vec<Dim> mean = A * c.mean + m.g[qs][uu];
        const Mat<Dim> P = regularize_cov<Mat<Dim>>(A * c.cov * A.transpose() + m.V);
        const detail::Innovation<Dim> inn(mean, P, m.C[qs], m.W);
        GaussianComponent<Dim> o;
        const double w = c.weight * t * y_prob;
        o.weight = w == 0.0 ? 0.0 : w * std::exp(inn.log_likelihood(yx));
        o.mean = inn.post_mean(yx);
        o.cov = inn.post_cov;
        out[qn].push_back(std::move(o));
      }
    }
  }
  return out;
}

/// Closed-form belief operator without reduction: exactly N_q * I_q * L components per mode.
template <int Dim>
GmBelief<Dim> gm_belief_update(const PodtshsModel<Dim>& m, const RbfIndicator<Dim>& rbf, const GmBelief<Dim>& sigma,
                               int u, const ObsVec<Dim>& yx, int yq) {
  return predict_and_condition(m, multiply_indicator(rbf, sigma), u, yx, yq);
}

/// Belief operator with reduction to `cap` components per mode, both after the
/// indicator product and after conditioning.
template <int Dim>
GmBelief<Dim> gm_belief_update_reduced(const PodtshsModel<Dim>& m, const RbfIndicator<Dim>& rbf,
                                       const GmBelief<Dim>& sigma, int u, const ObsVec<Dim>& yx, int yq,
                                       std::size_t cap) {
  auto f = mixture_reduce(multiply_indicator(rbf, sigma), cap);
  return mixture_reduce(predict_and_condition(m, f, u, yx, yq), cap);
}

/// rho as a mixture: R_q N(mu0, P0) in each mode with positive initial probability.
template <int Dim>
GmBelief<Dim> gm_initial_belief(const PodtshsModel<Dim>& m) {
  GmBelief<Dim> s(m.n_modes);
  for (int q = 0; q < m.n_modes; ++q) {
    const double r = m.R_q[static_cast<std::size_t>(q)];
    if (r > 0.0) s[q].push_back(GaussianComponent<Dim>{r, m.mu0, m.P0});
  }
  return s;
}

namespace detail {

// Back-projection of alpha through observation points and dynamics, before the
// indicator product: for source mode q,
//   sum_{q'} Tq(q'|q,u) Yq(yq|q') sum_j c_j s_{q'} int alpha(x',q') N(y_j; C(q')x', W) N(x'; A(q')x + g, V) dx'.
// One component per (q', alpha component, point) for every source mode.
template <int Dim>
ModeMixture<Dim> back_project(const PodtshsModel<Dim>& m, const ModeMixture<Dim>& alpha, int u,
                              const ObsPoints<Dim>& pts) {
  require(!m.mode_kernel_depends_on_x(), "back_project: x-dependent mode kernel is not supported");
  const auto uu = static_cast<std::size_t>(u);
  // Source-mode independent pieces: weight per (q', comp, point) without Tq, mean, covariance.
  std::vector<GaussianComponent<Dim>> pieces;
  std::vector<int> piece_mode;
  for (int qn = 0; qn < m.n_modes; ++qn) {
    const auto qs = static_cast<std::size_t>(qn);
    const double y_prob = m.Yq[qs][static_cast<std::size_t>(pts.yq)];
    const double sc = pts.scale.empty() ? 1.0 : pts.scale[qs];
    const Mat<Dim>& A = m.A[qs];
    const Mat<Dim> Ainv = A.inverse();
    const double det_inv = std::abs(Ainv.determinant());
    for (const auto& c : alpha[qn]) {
      const Innovation<Dim> inn(c.mean, c.cov, m.C[qs], m.W);
      const Mat<Dim> cov = regularize_cov<Mat<Dim>>(Ainv * (inn.post_cov + m.V) * Ainv.transpose());
      for (std::size_t j = 0; j < pts.y.size(); ++j) {
        GaussianComponent<Dim> o;
        const double w = c.weight * y_prob * sc * pts.c[j];
        o.weight = w == 0.0 ? 0.0 : w * std::exp(inn.log_likelihood(pts.y[j])) * det_inv;
        o.mean = Ainv * (inn.post_mean(pts.y[j]) - m.g[qs][uu]);
        o.cov = cov;
        pieces.push_back(std::move(o));
        piece_mode.push_back(qn);
      }
    }
  }
  ModeMixture<Dim> out(m.n_modes);
  for (int q = 0; q < m.n_modes; ++q) {
    out[q].reserve(pieces.size());
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      GaussianComponent<Dim> o = pieces[k];
      o.weight *= m.Tq[uu][static_cast<std::size_t>(q)][static_cast<std::size_t>(piece_mode[k])];
      out[q].push_back(std::move(o));
    }
  }
  return out;
}

}  // namespace detail

/// Closed-form alpha operator for one observation y without reduction:
/// RBF_q(x) int alpha(s') gamma(y|s') tau(s'|s,u) ds', exactly N_q * I_q * M components per mode.
template <int Dim>
ModeMixture<Dim> gm_alpha_update(const PodtshsModel<Dim>& m, const RbfIndicator<Dim>& rbf,
                                 const ModeMixture<Dim>& alpha, int u, const ObsVec<Dim>& yx, int yq) {
  require(u >= 0 && u < m.n_inputs(), "gm_alpha_update: input out of range");
  require(yq >= 0 && yq < m.n_obs_symbols, "gm_alpha_update: unknown discrete observation symbol");
  require(yx.size() == m.obs_dim, "gm_alpha_update: observation dimension mismatch");
  detail::ObsPoints<Dim> pts;
  pts.yq = yq;
  pts.y = {yx};
  pts.c = {1.0};
  return multiply_indicator(rbf, detail::back_project(m, alpha, u, pts));
}

/// Cubature for the observation kernel over each cell of the observation grid:
/// gamma_g(w | x, q) = Yq(y^q_w | q) s_{w,q} sum_j c_j N(y_j; C(q)x, W).
/// Points form a tensor trapezoid mesh with `points_per_axis` nodes per axis
/// (one node means the cell's representative point with the cell volume as
/// weight). The factor s_{w,q} <= 1 is the largest value that keeps the
/// cubature below the exact cell probability at every probe state of K_q.
template <int Dim>
struct GammaG {
  std::vector<detail::ObsPoints<Dim>> cells;
  int points_per_axis = 0;

  int size() const { return static_cast<int>(cells.size()); }
};

template <int Dim, class Derived>
double gamma_g_weight(const PodtshsModel<Dim>& m, const GammaG<Dim>& gg, int w, int q, const Eigen::MatrixBase<Derived>& x) {
  require(q >= 0 && q < m.n_modes, "gamma_g_weight: mode out of range");
  if (w < 0 || w >= gg.size()) return 0.0;  // psi_y carries no cubature
  const auto& cell = gg.cells[static_cast<std::size_t>(w)];
  const double y_prob = m.Yq[static_cast<std::size_t>(q)][static_cast<std::size_t>(cell.yq)];
  if (y_prob == 0.0) return 0.0;
  const ObsVec<Dim> mean = m.C[static_cast<std::size_t>(q)] * Vec<Dim>(x);
  double s = 0.0;
  for (std::size_t j = 0; j < cell.y.size(); ++j) s += cell.c[j] * gaussian_density(cell.y[j], mean, m.W);
  return y_prob * cell.scale[static_cast<std::size_t>(q)] * s;
}

namespace detail {

// Probe states covering the box: a tensor mesh including the faces.
inline std::vector<VecX> probe_points(const Box& K, int per_axis) {
  const auto d = static_cast<std::size_t>(K.dim());
  std::vector<VecX> out;
  std::vector<int> idx(d, 0);
  while (true) {
    VecX x(K.dim());
    for (std::size_t a = 0; a < d; ++a) {
      const auto ai = static_cast<Eigen::Index>(a);
      x(ai) = K.lo(ai) + (K.hi(ai) - K.lo(ai)) * idx[a] / static_cast<double>(per_axis - 1);
    }
    out.push_back(x);
    std::size_t a = 0;
    for (; a < d; ++a) {
      if (++idx[a] < per_axis) break;
      idx[a] = 0;
    }
    if (a == d) break;
  }
  return out;
}

}  // namespace detail

template <int Dim>
GammaG<Dim> build_gamma_g(const PodtshsModel<Dim>& m, const ObsGrid<Dim>& Y, int points_per_axis = 9) {
  require(points_per_axis >= 1, "build_gamma_g: at least one point per axis required");
  GammaG<Dim> gg;
  gg.points_per_axis = points_per_axis;
  const int l = m.obs_dim;
  const int probes = m.dim == 1 ? 65 : std::max(5, static_cast<int>(std::floor(std::pow(4096.0, 1.0 / m.dim))));
  std::vector<std::vector<VecX>> probe(static_cast<std::size_t>(m.n_modes));
  for (int q = 0; q < m.n_modes; ++q) probe[static_cast<std::size_t>(q)] = detail::probe_points(m.safe[static_cast<std::size_t>(q)], probes);
  for (const auto& cell : Y.cells) {
    detail::ObsPoints<Dim> pts;
    pts.yq = cell.yq;
    if (points_per_axis == 1) {
      pts.y.push_back(cell.rep);
      pts.c.push_back(cell.box.volume());
    } else {
      const int n = points_per_axis;
      std::vector<int> idx(static_cast<std::size_t>(l), 0);
      while (true) {
        ObsVec<Dim> y(l);
        double c = 1.0;
        for (int a = 0; a < l; ++a) {
          const double h = (cell.box.hi(a) - cell.box.lo(a)) / (n - 1);
          const int k = idx[static_cast<std::size_t>(a)];
          y(a) = cell.box.lo(a) + k * h;
          c *= (k == 0 || k == n - 1) ? 0.5 * h : h;
        }
        pts.y.push_back(y);
        pts.c.push_back(c);
        int a = 0;
        for (; a < l; ++a) {
          if (++idx[static_cast<std::size_t>(a)] < n) break;
          idx[static_cast<std::size_t>(a)] = 0;
        }
        if (a == l) break;
      }
    }
    pts.scale.assign(static_cast<std::size_t>(m.n_modes), 0.0);
    for (int q = 0; q < m.n_modes; ++q) {
      const auto qs = static_cast<std::size_t>(q);
      if (m.Yq[qs][static_cast<std::size_t>(cell.yq)] == 0.0) continue;
      double s = 1.0;
      for (const auto& xp : probe[qs]) {
        const Vec<Dim> x = xp;
        GaussianComponent<Eigen::Dynamic> g{1.0, VecX(m.C[qs] * x), MatX(m.W)};
        const double exact = box_integral(g, cell.box);
        const ObsVec<Dim> mean = m.C[qs] * x;
        double cub = 0.0;
        for (std::size_t j = 0; j < pts.y.size(); ++j) cub += pts.c[j] * gaussian_density(pts.y[j], mean, m.W);
        if (cub > 0.0) s = std::min(s, exact / cub);
      }
      pts.scale[qs] = s * (1.0 - 1e-9);
    }
    gg.cells.push_back(std::move(pts));
  }
  return gg;
}

/// Sup-norm proxy: the largest value at component means and on a 64-point
/// mesh per axis over K, inflated by 5 percent.
template <int Dim>
double alpha_sup_estimate(const ModeMixture<Dim>& mix, const std::vector<Box>& K) {
  double best = 0.0;
  for (int q = 0; q < mix.n_modes(); ++q) {
    for (const auto& c : mix[q]) best = std::max(best, mixture_evaluate(mix, c.mean, q));
    const auto& box = K[static_cast<std::size_t>(q)];
    const int per_axis = box.dim() == 1 ? 64 : std::max(4, static_cast<int>(std::floor(std::pow(4096.0, 1.0 / static_cast<double>(box.dim())))));
    for (const auto& x : detail::probe_points(box, per_axis)) best = std::max(best, mixture_evaluate(mix, x, q));
  }
  return 1.05 * best;
}

template <int Dim>
GmAlpha<Dim> gm_terminal_alpha(const RbfIndicator<Dim>& rbf, const std::vector<Box>& K) {
  GmAlpha<Dim> a;
  a.mix = rbf.mix;
  a.sup_estimate = alpha_sup_estimate(a.mix, K);
  return a;
}

/// V_N(sigma) = sum_q int RBF_q(x) sigma(x, q) dx.
template <int Dim>
double terminal_value(const RbfIndicator<Dim>& rbf, const GmBelief<Dim>& sigma) {
  return mixture_inner(rbf.mix, sigma);
}

template <int Dim>
double gm_alpha_value(const GmAlpha<Dim>& a, const GmBelief<Dim>& sigma) {
  return mixture_inner(a.mix, sigma);
}

/// Back-projections of every alpha of the next level through every observation
/// cell and input, reduced to the mixture cap. Shared by all backups of a level.
template <int Dim>
struct GmLevelProjection {
  std::vector<std::vector<std::vector<ModeMixture<Dim>>>> B;  // [u][w][alpha]
  std::size_t cap = 30;
};

template <int Dim>
GmLevelProjection<Dim> project_level(const PodtshsModel<Dim>& m, const GammaG<Dim>& gg,
                                     const std::vector<GmAlpha<Dim>>& next, std::size_t cap) {
  require(!next.empty(), "project_level: alpha set must be nonempty");
  GmLevelProjection<Dim> P;
  P.cap = cap;
  P.B.resize(static_cast<std::size_t>(m.n_inputs()));
  for (int u = 0; u < m.n_inputs(); ++u) {
    auto& Bu = P.B[static_cast<std::size_t>(u)];
    Bu.resize(gg.cells.size());
    const auto& T = m.Tq[static_cast<std::size_t>(u)];
    for (std::size_t w = 0; w < gg.cells.size(); ++w)
      for (const auto& a : next) {
        auto raw = detail::back_project(m, a.mix, u, gg.cells[w]);
        for (int q = 0; q < m.n_modes; ++q) {
          auto& comps = raw[q];
          // Terms below 1e-14 of the largest are dropped; alpha only decreases.
          double wmax = 0.0;
          for (const auto& c : comps) wmax = std::max(wmax, c.weight);
          std::erase_if(comps, [&](const GaussianComponent<Dim>& c) { return c.weight <= 1e-14 * wmax; });
          // Source modes with identical mode-transition rows share one reduction.
          int same = -1;
          for (int q0 = 0; q0 < q && same < 0; ++q0)
            if (T[static_cast<std::size_t>(q0)] == T[static_cast<std::size_t>(q)]) same = q0;
          if (same >= 0) comps = raw[same];
          else detail::reduce_list(comps, cap, ReduceOptions{}.exact_limit, ReduceOptions{}.neighbours);
        }
        Bu[w].push_back(std::move(raw));
      }
  }
  return P;
}

/// Point-based backup at sigma. For every input, each observation cell picks
/// the next-level alpha maximizing its back-projection against RBF * sigma
/// (ties to the lowest index); the candidate is RBF times the sum of the picks.
/// The input with the largest candidate value wins (ties to the lowest input).
template <int Dim>
GmAlpha<Dim> gm_alpha_backup(const PodtshsModel<Dim>& m, const RbfIndicator<Dim>& rbf,
                             const GmLevelProjection<Dim>& proj, const GmBelief<Dim>& sigma) {
  const auto f = mixture_reduce(multiply_indicator(rbf, sigma), proj.cap);
  GmAlpha<Dim> best;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int u = 0; u < m.n_inputs(); ++u) {
    const auto& Bu = proj.B[static_cast<std::size_t>(u)];
    ModeMixture<Dim> sum(m.n_modes);
    std::vector<int> choice;
    for (const auto& Bw : Bu) {
      int j_best = 0;
      double v_best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < Bw.size(); ++j) {
        const double v = mixture_inner(Bw[j], f);
        if (v > v_best) {
          v_best = v;
          j_best = static_cast<int>(j);
        }
      }
      choice.push_back(j_best);
      const auto& pick = Bw[static_cast<std::size_t>(j_best)];
      for (int q = 0; q < m.n_modes; ++q) sum[q].insert(sum[q].end(), pick[q].begin(), pick[q].end());
    }
    auto cand = mixture_reduce(multiply_indicator(rbf, mixture_reduce(std::move(sum), proj.cap)), proj.cap);
    const double v = mixture_inner(cand, sigma);
    if (v > best_val) {
      best_val = v;
      best.mix = std::move(cand);
      best.action = u;
      best.choice = std::move(choice);
    }
  }
  best.sup_estimate = alpha_sup_estimate(best.mix, m.safe);
  return best;
}

template <int Dim>
GmAlpha<Dim> gm_alpha_backup(const PodtshsModel<Dim>& m, const RbfIndicator<Dim>& rbf, const GammaG<Dim>& gg,
                             const std::vector<GmAlpha<Dim>>& next, const GmBelief<Dim>& sigma, std::size_t cap) {
  return gm_alpha_backup(m, rbf, project_level(m, gg, next, cap), sigma);
}

}  // namespace psafe
