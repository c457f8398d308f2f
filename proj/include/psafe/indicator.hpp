// Gaussian radial-basis approximation of per-mode box indicators and its L1 error.
#pragma once

#include "psafe/gaussian.hpp"

namespace psafe {

namespace detail {

// Per-axis cell edges covering [lo, hi] with breakpoints at the box faces.
inline std::vector<double> axis_edges(double lo, double hi, double klo, double khi, double h) {
  std::vector<double> cuts{lo};
  for (double c : {klo, khi})
    if (c > cuts.back() && c < hi) cuts.push_back(c);
  cuts.push_back(hi);
  std::vector<double> edges{cuts.front()};
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil((cuts[s + 1] - cuts[s]) / h)));
    for (std::size_t k = 1; k <= n; ++k) edges.push_back(cuts[s] + (cuts[s + 1] - cuts[s]) * static_cast<double>(k) / n);
  }
  return edges;
}

// Midpoint-rule integral of |1_K - f| over a tensor mesh.
template <int Dim>
double l1_on_mesh(const std::vector<GaussianComponent<Dim>>& comps, const Box& K, const VecX& lo, const VecX& hi,
                  double h) {
  const auto d = static_cast<std::size_t>(K.dim());
  std::vector<std::vector<double>> edges(d);
  for (std::size_t a = 0; a < d; ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    edges[a] = axis_edges(lo(ai), hi(ai), K.lo(ai), K.hi(ai), h);
  }
  std::vector<std::size_t> idx(d, 0);
  Vec<Dim> x(static_cast<Eigen::Index>(d));
  double total = 0.0;
  while (true) {
    double vol = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double e0 = edges[a][idx[a]], e1 = edges[a][idx[a] + 1];
      x(static_cast<Eigen::Index>(a)) = 0.5 * (e0 + e1);
      vol *= e1 - e0;
    }
    double f = 0.0;
    for (const auto& c : comps) f += component_value(c, x);
    total += std::abs((K.contains(x) ? 1.0 : 0.0) - f) * vol;
    std::size_t a = 0;
    for (; a < d; ++a) {
      if (++idx[a] + 1 < edges[a].size()) break;
      idx[a] = 0;
    }
    if (a == d) break;
  }
  return total;
}

}  // namespace detail

/// Integral of |1_{K} - f| for one mode. The mesh covers K and eight standard
/// deviations around every component, and is halved until successive values
/// differ by less than `tol`.
template <int Dim>
double mode_l1_error(const std::vector<GaussianComponent<Dim>>& comps, const Box& K, double tol = 1e-4) {
  if (comps.empty()) return K.volume();
  VecX lo = K.lo, hi = K.hi;
  double min_sd = std::numeric_limits<double>::infinity();
  for (const auto& c : comps) {
    for (Eigen::Index a = 0; a < K.dim(); ++a) {
      const double sd = std::sqrt(c.cov(a, a));
      min_sd = std::min(min_sd, sd);
      lo(a) = std::min(lo(a), c.mean(a) - 8.0 * sd);
      hi(a) = std::max(hi(a), c.mean(a) + 8.0 * sd);
    }
  }
  double h = std::min(min_sd, (K.hi - K.lo).minCoeff() / 8.0);
  double prev = detail::l1_on_mesh(comps, K, lo, hi, h);
  for (int it = 0; it < 8; ++it) {
    h *= 0.5;
    const double cur = detail::l1_on_mesh(comps, K, lo, hi, h);
    if (std::abs(cur - prev) < tol) return cur;
    prev = cur;
  }
  return prev;
}

/// delta^I = max_q || 1_{K_q} - mix_q ||_1.
template <int Dim>
double mixture_l1_error(const ModeMixture<Dim>& mix, const std::vector<Box>& K, double tol = 1e-4) {
  require(static_cast<int>(K.size()) == mix.n_modes(), "mixture_l1_error: one box per mode required");
  double e = 0.0;
  for (int q = 0; q < mix.n_modes(); ++q) e = std::max(e, mode_l1_error(mix[q], K[static_cast<std::size_t>(q)], tol));
  return e;
}

/// Minimizes w^T G w - 2 b^T w subject to w >= 0 (G symmetric positive definite).
/// Coordinate descent finds the support, then Lawson-Hanson active-set steps make it exact.
inline VecX nonnegative_quadratic_fit(const MatX& G, const VecX& b, int max_sweeps = 20000) {
  const Eigen::Index n = b.size();
  VecX w = VecX::Zero(n);
  VecX r = b;  // r = b - G w
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = std::max(0.0, w(i) + r(i) / G(i, i));
      const double dw = wi - w(i);
      if (dw != 0.0) {
        r -= dw * G.col(i);
        w(i) = wi;
        change = std::max(change, std::abs(dw) * G(i, i));
      }
    }
    if (change < 1e-10 * scale) break;
  }
  std::vector<bool> passive(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) passive[static_cast<std::size_t>(i)] = w(i) > 0.0;
  auto solve_passive = [&]() {
    std::vector<Eigen::Index> P;
    for (Eigen::Index i = 0; i < n; ++i)
      if (passive[static_cast<std::size_t>(i)]) P.push_back(i);
    VecX s = VecX::Zero(n);
    if (P.empty()) return s;
    const auto p = static_cast<Eigen::Index>(P.size());
    MatX Gp(p, p);
    VecX bp(p);
    for (Eigen::Index a = 0; a < p; ++a) {
      bp(a) = b(P[static_cast<std::size_t>(a)]);
      for (Eigen::Index c = 0; c < p; ++c) Gp(a, c) = G(P[static_cast<std::size_t>(a)], P[static_cast<std::size_t>(c)]);
    }
    const VecX sp = Gp.ldlt().solve(bp);
    for (Eigen::Index a = 0; a < p; ++a) s(P[static_cast<std::size_t>(a)]) = sp(a);
    return s;
  };
  for (int outer = 0; outer < 4 * n + 10; ++outer) {
    for (int inner = 0; inner < 4 * n + 10; ++inner) {
      const VecX s = solve_passive();
      double alpha = 1.0;
      bool feasible = true;
      for (Eigen::Index i = 0; i < n; ++i)
        if (passive[static_cast<std::size_t>(i)] && s(i) <= 0.0) {
          feasible = false;
          alpha = std::min(alpha, w(i) / (w(i) - s(i)));
        }
      if (feasible) {
        w = s;
        break;
      }
      w += alpha * (s - w);
      for (Eigen::Index i = 0; i < n; ++i)
        if (passive[static_cast<std::size_t>(i)] && w(i) <= 1e-15 * scale) {
          passive[static_cast<std::size_t>(i)] = false;
          w(i) = 0.0;
        }
    }
    r = b - G * w;
    Eigen::Index best = -1;
    double best_r = 1e-12 * scale;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!passive[static_cast<std::size_t>(i)] && r(i) > best_r) {
        best_r = r(i);
        best = i;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;
  }
  return w.cwiseMax(0.0);
}

template <int Dim>
struct RbfIndicator {
  ModeMixture<Dim> mix;
  std::vector<int> components_per_mode;
  double bandwidth_factor = 1.0;
  double delta_I = 0.0;
};

/// Fits 1_{K_q} by I_q Gaussians with centres on a uniform grid inside K_q and a
/// shared diagonal bandwidth of `bandwidth_factor` times the centre spacing.
/// Along an axis with n centres the spacing is len / (n + 1), with centres at
/// the interior grid points lo + k * spacing.
/// Weights minimize the exact L2 error subject to nonnegativity.
template <int Dim>
RbfIndicator<Dim> fit_indicator_rbf(const std::vector<Box>& K, const std::vector<int>& I_q,
                                    double bandwidth_factor = 1.0) {
  require(!K.empty() && K.size() == I_q.size(), "fit_indicator_rbf: one component count per mode required");
  require(bandwidth_factor > 0.0, "fit_indicator_rbf: bandwidth factor must be positive");
  RbfIndicator<Dim> rbf;
  rbf.mix = ModeMixture<Dim>(static_cast<int>(K.size()));
  rbf.bandwidth_factor = bandwidth_factor;
  for (std::size_t q = 0; q < K.size(); ++q) {
    const Box& box = K[q];
    const auto d = box.dim();
    require(I_q[q] >= 1, "fit_indicator_rbf: I_q must be at least 1");
    require(I_q[q] <= 20000, "fit_indicator_rbf: I_q too large for a dense fit");
    // Centres per axis: n_a^d ~ I_q, with I_q itself used exactly in one dimension.
    const int per_axis = d == 1 ? I_q[q] : std::max(1, static_cast<int>(std::lround(std::pow(I_q[q], 1.0 / static_cast<double>(d)))));
    const VecX spacing = (box.hi - box.lo) / static_cast<double>(per_axis + 1);
    Mat<Dim> cov = Mat<Dim>::Zero(d, d);
    for (Eigen::Index a = 0; a < d; ++a) cov(a, a) = std::pow(bandwidth_factor * spacing(a), 2);
    std::vector<GaussianComponent<Dim>> comps;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    while (true) {
      GaussianComponent<Dim> c;
      c.mean = Vec<Dim>(d);
      for (Eigen::Index a = 0; a < d; ++a) c.mean(a) = box.lo(a) + (idx[static_cast<std::size_t>(a)] + 1) * spacing(a);
      c.cov = cov;
      comps.push_back(c);
      std::size_t a = 0;
      for (; a < static_cast<std::size_t>(d); ++a) {
        if (++idx[a] < per_axis) break;
        idx[a] = 0;
      }
      if (a == static_cast<std::size_t>(d)) break;
    }
    const auto n = static_cast<Eigen::Index>(comps.size());
    MatX G(n, n);
    VecX bvec(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      bvec(i) = box_integral(comps[static_cast<std::size_t>(i)], box);
      for (Eigen::Index j = 0; j <= i; ++j)
        G(i, j) = G(j, i) = overlap(comps[static_cast<std::size_t>(i)], comps[static_cast<std::size_t>(j)]);
    }
    G.diagonal().array() += 1e-13 * G.diagonal().maxCoeff();
    const VecX w = nonnegative_quadratic_fit(G, bvec);
    for (Eigen::Index i = 0; i < n; ++i) comps[static_cast<std::size_t>(i)].weight = w(i);
    rbf.components_per_mode.push_back(static_cast<int>(n));
    rbf.mix[static_cast<int>(q)] = std::move(comps);
  }
  rbf.delta_I = mixture_l1_error(rbf.mix, K);
  return rbf;
}

}  // namespace psafe
