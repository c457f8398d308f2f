// Point-based value iteration over either abstraction, with Perseus-style
// randomized sweeps per time level.
#pragma once

#include "psafe/finite_abstraction.hpp"
#include "psafe/gm_abstraction.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace psafe {

/// Deterministic RNG stream for a (seed, stream) pair.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

/// Samples (x, q) from the true initial distribution.
template <int Dim, class Rng>
HybridState<Dim> sample_initial_state(const PodtshsModel<Dim>& m, Rng& rng) {
  std::discrete_distribution<int> mode(m.R_q.begin(), m.R_q.end());
  HybridState<Dim> s;
  s.q = mode(rng);
  std::normal_distribution<double> N(0.0, 1.0);
  const Mat<Dim> L = Eigen::LLT<Mat<Dim>>(m.P0).matrixL();
  Vec<Dim> z(m.dim);
  for (int i = 0; i < m.dim; ++i) z(i) = N(rng);
  s.x = m.mu0 + L * z;
  return s;
}

/// One step of the true dynamics.
template <int Dim, class Rng>
HybridState<Dim> sample_transition(const PodtshsModel<Dim>& m, const HybridState<Dim>& s, int u, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(m.n_modes));
  for (int qn = 0; qn < m.n_modes; ++qn) p[static_cast<std::size_t>(qn)] = m.mode_prob(qn, s.q, s.x, u);
  std::discrete_distribution<int> mode(p.begin(), p.end());
  HybridState<Dim> n;
  n.q = mode(rng);
  std::normal_distribution<double> N(0.0, 1.0);
  const Mat<Dim> L = Eigen::LLT<Mat<Dim>>(m.V).matrixL();
  Vec<Dim> z(m.dim);
  for (int i = 0; i < m.dim; ++i) z(i) = N(rng);
  n.x = m.next_mean(s.x, n.q, u) + L * z;
  return n;
}

/// Observation drawn from gamma(. | s).
template <int Dim, class Rng>
std::pair<ObsVec<Dim>, int> sample_observation(const PodtshsModel<Dim>& m, const HybridState<Dim>& s, Rng& rng) {
  const auto& row = m.Yq[static_cast<std::size_t>(s.q)];
  std::discrete_distribution<int> sym(row.begin(), row.end());
  const int yq = sym(rng);
  std::normal_distribution<double> N(0.0, 1.0);
  const MatX L = Eigen::LLT<MatX>(MatX(m.W)).matrixL();
  VecX z(m.obs_dim);
  for (int i = 0; i < m.obs_dim; ++i) z(i) = N(rng);
  ObsVec<Dim> y = m.C[static_cast<std::size_t>(s.q)] * s.x;
  y += L * z;
  return {y, yq};
}

/// Finite-state backend: beliefs are probability vectors over cells plus psi_s.
template <int Dim>
class FiniteBackend {
 public:
  using Belief = VecX;
  using Alpha = FiniteAlpha;
  struct Level {
    const std::vector<FiniteAlpha>* next;
  };

  FiniteBackend(const PodtshsModel<Dim>& m, StateGrid<Dim> grid, ObsGrid<Dim> obs)
      : model_(&m), grid_(std::move(grid)), obs_(std::move(obs)), pomdp_(build_finite_pomdp(m, grid_, obs_)) {}
  /// Backend over a given abstract POMDP only; model-dependent operations are unavailable.
  explicit FiniteBackend(FinitePomdp P) : pomdp_(std::move(P)) {}

  static constexpr const char* name() { return "finite"; }
  const FinitePomdp& pomdp() const { return pomdp_; }
  const StateGrid<Dim>& grid() const { return grid_; }
  const ObsGrid<Dim>& obs_grid() const { return obs_; }
  int n_inputs() const { return static_cast<int>(pomdp_.tau.size()); }

  Belief initial_belief(const PodtshsModel<Dim>& m) const { return rho_delta(m, grid_); }
  Alpha terminal() const { return finite_terminal_alpha(pomdp_); }
  Level prepare(const std::vector<Alpha>& next) const { return Level{&next}; }
  Alpha backup(const Level& lv, const Belief& b) const { return finite_alpha_backup(pomdp_, *lv.next, b); }
  double value(const Alpha& a, const Belief& b) const { return alpha_value(a, b); }
  static int action(const Alpha& a) { return a.action; }
  double sup_norm(const Alpha& a) const { return a.values.size() ? a.values.maxCoeff() : 0.0; }

  /// Filter step on a continuous observation; nullopt when the observation is degenerate.
  std::optional<Belief> update(const Belief& b, int u, const ObsVec<Dim>& yx, int yq, double* likelihood = nullptr) const {
    try {
      auto r = finite_belief_update(*model_, grid_, pomdp_, b, u, yx, yq);
      if (likelihood) *likelihood = r.likelihood;
      return std::move(r.belief);
    } catch (const DegenerateObservation&) {
      return std::nullopt;
    }
  }

  /// A state drawn from the normalized safe part of b (uniform inside the drawn cell).
  template <class Rng>
  std::optional<HybridState<Dim>> sample_state(const Belief& b, Rng& rng) const {
    const VecX k = b.head(grid_.n_cells());
    if (!(k.sum() > 0.0)) return std::nullopt;
    std::discrete_distribution<int> cell(k.data(), k.data() + k.size());
    const int z = cell(rng);
    const Box& c = grid_.cells[static_cast<std::size_t>(z)];
    HybridState<Dim> s;
    s.q = grid_.cell_mode[static_cast<std::size_t>(z)];
    s.x = Vec<Dim>(model_->dim);
    for (int a = 0; a < model_->dim; ++a) s.x(a) = std::uniform_real_distribution<double>(c.lo(a), c.hi(a))(rng);
    return s;
  }

  static Belief normalized(const Belief& b) { return b / b.sum(); }
  static double distance(const Belief& a, const Belief& b) { return (a - b).cwiseAbs().sum(); }

 private:
  const PodtshsModel<Dim>* model_ = nullptr;
  StateGrid<Dim> grid_;
  ObsGrid<Dim> obs_;
  FinitePomdp pomdp_;
};

/// Gaussian-mixture backend: unnormalized mixtures, closed-form updates and
/// backups with reduction to `cap` components per mode.
template <int Dim>
class GaussianBackend {
 public:
  using Belief = GmBelief<Dim>;
  using Alpha = GmAlpha<Dim>;
  using Level = GmLevelProjection<Dim>;

  GaussianBackend(const PodtshsModel<Dim>& m, RbfIndicator<Dim> rbf, ObsGrid<Dim> obs, std::size_t cap,
                  int points_per_axis = 9)
      : model_(&m), rbf_(std::move(rbf)), obs_(std::move(obs)), gg_(build_gamma_g(m, obs_, points_per_axis)), cap_(cap) {
    require(cap >= 1, "GaussianBackend: cap must be at least 1");
  }

  static constexpr const char* name() { return "gaussian"; }
  const RbfIndicator<Dim>& rbf() const { return rbf_; }
  const ObsGrid<Dim>& obs_grid() const { return obs_; }
  const GammaG<Dim>& gamma_g() const { return gg_; }
  std::size_t cap() const { return cap_; }
  int n_inputs() const { return model_->n_inputs(); }

  Belief initial_belief(const PodtshsModel<Dim>& m) const { return gm_initial_belief(m); }
  Alpha terminal() const { return gm_terminal_alpha(rbf_, model_->safe); }
  Level prepare(const std::vector<Alpha>& next) const { return project_level(*model_, gg_, next, cap_); }
  Alpha backup(const Level& lv, const Belief& b) const { return gm_alpha_backup(*model_, rbf_, lv, b); }
  double value(const Alpha& a, const Belief& b) const { return gm_alpha_value(a, b); }
  static int action(const Alpha& a) { return a.action; }
  static double sup_norm(const Alpha& a) { return a.sup_estimate; }

  /// Filter step; the result is rescaled to unit total weight and the returned
  /// likelihood is the total weight before rescaling.
  std::optional<Belief> update(const Belief& b, int u, const ObsVec<Dim>& yx, int yq, double* likelihood = nullptr) const {
    auto n = gm_belief_update_reduced(*model_, rbf_, b, u, yx, yq, cap_);
    const double t = n.total_weight();
    if (!(t > 1e-300) || !std::isfinite(t)) return std::nullopt;
    if (likelihood) *likelihood = t / b.total_weight();
    n.scale(1.0 / t);
    return n;
  }

  template <class Rng>
  std::optional<HybridState<Dim>> sample_state(const Belief& b, Rng& rng) const {
    std::vector<double> w;
    std::vector<std::pair<int, std::size_t>> id;
    for (int q = 0; q < b.n_modes(); ++q)
      for (std::size_t k = 0; k < b[q].size(); ++k) {
        w.push_back(b[q][k].weight);
        id.emplace_back(q, k);
      }
    if (w.empty() || !(std::accumulate(w.begin(), w.end(), 0.0) > 0.0)) return std::nullopt;
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    const auto [q, k] = id[pick(rng)];
    const auto& c = b[q][k];
    std::normal_distribution<double> N(0.0, 1.0);
    Vec<Dim> z(c.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = N(rng);
    HybridState<Dim> s;
    s.q = q;
    s.x = c.mean + Mat<Dim>(Eigen::LLT<Mat<Dim>>(c.cov).matrixL()) * z;
    return s;
  }

  static Belief normalized(Belief b) {
    b.scale(1.0 / b.total_weight());
    return b;
  }
  /// L1 distance between the normalized mixtures by midpoint quadrature.
  static double distance(const Belief& a, const Belief& b) {
    const Belief na = normalized(a), nb = normalized(b);
    double total = 0.0;
    for (int q = 0; q < na.n_modes(); ++q) {
      if (na[q].empty() && nb[q].empty()) continue;
      const auto d = (na[q].empty() ? nb[q] : na[q]).front().mean.size();
      VecX lo = VecX::Constant(d, std::numeric_limits<double>::infinity()), hi = -lo;
      for (const auto* s : {&na, &nb})
        for (const auto& c : (*s)[q])
          for (Eigen::Index i = 0; i < d; ++i) {
            lo(i) = std::min(lo(i), c.mean(i) - 8.0 * std::sqrt(c.cov(i, i)));
            hi(i) = std::max(hi(i), c.mean(i) + 8.0 * std::sqrt(c.cov(i, i)));
          }
      const int per_axis = d == 1 ? 4096 : std::max(8, static_cast<int>(std::pow(4096.0, 1.0 / static_cast<double>(d))));
      const auto pts = detail::probe_points(Box{lo, hi}, per_axis + 1);
      VecX h = (hi - lo) / per_axis;
      double cell = h.prod();
      for (const auto& x : pts) {
        double wgt = cell;
        for (Eigen::Index i = 0; i < d; ++i)
          if (x(i) == lo(i) || x(i) == hi(i)) wgt *= 0.5;
        total += wgt * std::abs(mixture_evaluate(na, x, q) - mixture_evaluate(nb, x, q));
      }
    }
    return total;
  }

 private:
  const PodtshsModel<Dim>* model_;
  RbfIndicator<Dim> rbf_;
  ObsGrid<Dim> obs_;
  GammaG<Dim> gg_;
  std::size_t cap_;
};

/// How a sampled belief was generated from its parent.
struct Lineage {
  int parent = -1;
  int u = -1;
  VecX yx;
  int yq = -1;
};

template <class Belief>
struct BeliefSet {
  std::vector<std::vector<Belief>> levels;     // [n], n = 0..N
  std::vector<std::vector<Lineage>> lineage;   // same shape
  int size() const { return static_cast<int>(levels.size()); }
};

/// Level 0: `count` initial beliefs with mean uniform on the safe box of the
/// most likely initial mode and the model's covariance. Level n + 1: the filter
/// update of each level-n belief under a uniformly random input and an
/// observation drawn from the true model given a state drawn from that belief.
/// Chain i uses its own RNG stream, so a larger count extends a smaller one.
template <class Backend, int Dim>
BeliefSet<typename Backend::Belief> sample_belief_sets(const PodtshsModel<Dim>& m, const Backend& be, int count,
                                                       std::uint64_t seed, int max_retries = 100) {
  require(count >= 1, "sample_belief_sets: count must be at least 1");
  BeliefSet<typename Backend::Belief> B;
  B.levels.resize(static_cast<std::size_t>(m.horizon + 1));
  B.lineage.resize(static_cast<std::size_t>(m.horizon + 1));
  const auto q0 = static_cast<std::size_t>(std::max_element(m.R_q.begin(), m.R_q.end()) - m.R_q.begin());
  const Box& K0 = m.safe[q0];
  for (int i = 0; i < count; ++i) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(i) + 1);
    auto mi = m;
    for (int a = 0; a < m.dim; ++a) mi.mu0(a) = std::uniform_real_distribution<double>(K0.lo(a), K0.hi(a))(rng);
    B.levels[0].push_back(be.initial_belief(mi));
    B.lineage[0].push_back(Lineage{});
    for (int n = 0; n < m.horizon; ++n) {
      const auto& b = B.levels[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)];
      const int u = std::uniform_int_distribution<int>(0, be.n_inputs() - 1)(rng);
      bool done = false;
      for (int attempt = 0; attempt < max_retries && !done; ++attempt) {
        const auto s = be.sample_state(b, rng);
        HybridState<Dim> cur;
        if (s) {
          cur = *s;
        } else {
          // No safe mass left: any observation keeps the belief on psi_s.
          cur.q = 0;
          cur.x = m.safe[0].center();
        }
        const auto nxt = sample_transition(m, cur, u, rng);
        const auto [yx, yq] = sample_observation(m, nxt, rng);
        auto nb = be.update(b, u, yx, yq);
        if (!nb) continue;
        B.levels[static_cast<std::size_t>(n + 1)].push_back(std::move(*nb));
        B.lineage[static_cast<std::size_t>(n + 1)].push_back(Lineage{i, u, VecX(yx), yq});
        done = true;
      }
      if (!done) throw DegenerateObservation("sample_belief_sets: no nondegenerate observation after retries");
    }
  }
  return B;
}

template <class Alpha>
struct Policy {
  std::vector<std::vector<Alpha>> levels;  // [n], n = 0..N; levels[N] holds the terminal alpha
  int horizon() const { return static_cast<int>(levels.size()) - 1; }
};

struct Evaluation {
  double value = 0.0;
  int action = 0;
  int index = -1;
};

/// max over the level of <alpha, b>; ties go to the lowest alpha index.
template <class Backend>
Evaluation evaluate_value(const Backend& be, const std::vector<typename Backend::Alpha>& level,
                          const typename Backend::Belief& b) {
  require(!level.empty(), "evaluate_value: empty alpha set");
  Evaluation e;
  e.value = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < level.size(); ++j) {
    const double v = be.value(level[j], b);
    if (v > e.value) {
      e.value = v;
      e.index = static_cast<int>(j);
      e.action = Backend::action(level[j]);
    }
  }
  return e;
}

struct SolveOptions {
  std::uint64_t seed = 0;
  /// Skip a point when the alphas already built at its level reach the next
  /// level's value there (exact safety values never increase with the horizon).
  bool perseus_skip = true;
  double skip_tol = 1e-12;
  /// Also back up at the initial belief on level 0.
  bool backup_at_rho = true;
};

template <class Alpha>
struct SolveResult {
  Policy<Alpha> policy;
  double value_at_rho = 0.0;
  int action_at_rho = 0;
  std::vector<int> backups_per_level;
  std::vector<double> alpha_sup;  // [n], largest sup-norm proxy per level
};

/// Backward Perseus sweep n = N-1 .. 0 over the given belief sets.
template <class Backend>
SolveResult<typename Backend::Alpha> solve(const Backend& be, const BeliefSet<typename Backend::Belief>& sets,
                                           const typename Backend::Belief& rho, const SolveOptions& opt = {}) {
  using Alpha = typename Backend::Alpha;
  require(sets.size() >= 1, "solve: belief sets must cover levels 0..N");
  const int N = sets.size() - 1;
  SolveResult<Alpha> res;
  res.policy.levels.resize(static_cast<std::size_t>(N + 1));
  res.backups_per_level.assign(static_cast<std::size_t>(N + 1), 0);
  res.policy.levels[static_cast<std::size_t>(N)] = {be.terminal()};
  for (int n = N - 1; n >= 0; --n) {
    const auto& next = res.policy.levels[static_cast<std::size_t>(n + 1)];
    auto& cur = res.policy.levels[static_cast<std::size_t>(n)];
    const auto level = be.prepare(next);
    const auto& pts = sets.levels[static_cast<std::size_t>(n)];
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(opt.seed, static_cast<std::uint64_t>(n) + 1);
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) {
      const auto& b = pts[i];
      if (opt.perseus_skip && !cur.empty()) {
        const double now = evaluate_value(be, cur, b).value;
        const double ref = evaluate_value(be, next, b).value;
        if (now >= ref - opt.skip_tol) continue;
      }
      cur.push_back(be.backup(level, b));
      ++res.backups_per_level[static_cast<std::size_t>(n)];
    }
    if ((n == 0 && opt.backup_at_rho) || cur.empty()) {
      cur.push_back(be.backup(level, rho));
      ++res.backups_per_level[static_cast<std::size_t>(n)];
    }
  }
  for (const auto& lv : res.policy.levels) {
    double s = 0.0;
    for (const auto& a : lv) s = std::max(s, be.sup_norm(a));
    res.alpha_sup.push_back(s);
  }
  const auto e = evaluate_value(be, res.policy.levels[0], rho);
  res.value_at_rho = e.value;
  res.action_at_rho = e.action;
  return res;
}

/// All beliefs reachable from rho through finite observation symbols with
/// positive likelihood, level by level (finite backend only).
inline BeliefSet<VecX> exhaustive_finite_beliefs(const FinitePomdp& P, const VecX& rho, int N) {
  BeliefSet<VecX> B;
  B.levels.resize(static_cast<std::size_t>(N + 1));
  B.lineage.resize(static_cast<std::size_t>(N + 1));
  B.levels[0] = {rho};
  B.lineage[0] = {Lineage{}};
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < static_cast<int>(B.levels[static_cast<std::size_t>(n)].size()); ++i)
      for (int u = 0; u < static_cast<int>(P.tau.size()); ++u)
        for (int w = 0; w < P.n_obs; ++w) {
          try {
            auto r = finite_belief_update_discrete(P, B.levels[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)], u, w);
            B.levels[static_cast<std::size_t>(n + 1)].push_back(std::move(r.belief));
            B.lineage[static_cast<std::size_t>(n + 1)].push_back(Lineage{i, u, VecX(), w});
          } catch (const DegenerateObservation&) {
          }
        }
  return B;
}

/// Exact optimum at rho by enumerating every alpha vector: |U| |Gamma|^|W| per level.
inline double exhaustive_alpha_value(const FinitePomdp& P, const VecX& rho, int N) {
  std::vector<VecX> cur = {VecX::Ones(P.n_cells)};
  const auto nc = static_cast<Eigen::Index>(P.n_cells);
  for (int n = N - 1; n >= 0; --n) {
    std::vector<VecX> out;
    const auto W = static_cast<std::size_t>(P.n_obs);
    std::vector<std::size_t> pick(W, 0);
    for (const auto& T : P.tau) {
      const MatX Tkk = T.topLeftCorner(nc, nc);
      std::fill(pick.begin(), pick.end(), 0);
      while (true) {
        VecX acc = VecX::Zero(nc);
        for (std::size_t w = 0; w < W; ++w)
          acc += P.gamma.row(static_cast<Eigen::Index>(w)).transpose().cwiseProduct(cur[pick[w]]);
        out.push_back(Tkk * acc);
        std::size_t k = 0;
        for (; k < W; ++k) {
          if (++pick[k] < cur.size()) break;
          pick[k] = 0;
        }
        if (k == W) break;
      }
    }
    cur = std::move(out);
  }
  double best = 0.0;
  for (const auto& a : cur) best = std::max(best, a.dot(rho.head(nc)));
  return best;
}

/// Directed Hausdorff distance from each probe level to the sampled level,
/// maximized over levels: max_n max_{p} min_{s} d(p, s).
template <class Backend>
double hausdorff_delta_sigma(const BeliefSet<typename Backend::Belief>& sampled,
                             const BeliefSet<typename Backend::Belief>& probes) {
  require(probes.size() >= 1, "hausdorff_delta_sigma: probe set must be nonempty");
  double worst = 0.0;
  for (int n = 0; n < std::min(sampled.size(), probes.size()); ++n) {
    const auto& S = sampled.levels[static_cast<std::size_t>(n)];
    for (const auto& p : probes.levels[static_cast<std::size_t>(n)]) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : S) best = std::min(best, Backend::distance(p, s));
      worst = std::max(worst, best);
    }
  }
  return worst;
}

}  // namespace psafe
