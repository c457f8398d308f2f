// Finite-state abstraction: grid over the safe set plus an absorbing unsafe
// state, discrete transition/observation tables, belief update and alpha backup.
#pragma once

#include "psafe/gaussian.hpp"
#include "psafe/obs_grid.hpp"

#include <fstream>

namespace psafe {

enum class RepresentativePoint { Lower, Center };

template <int Dim>
struct StateGrid {
  std::vector<UniformPartition> parts;  // per mode
  std::vector<int> offset;              // global index of each mode's first cell
  std::vector<int> cell_mode;           // [z] -> q
  std::vector<Box> cells;               // [z]
  std::vector<Vec<Dim>> reps;           // [z]
  double delta_x = 0.0;
  RepresentativePoint rep_kind = RepresentativePoint::Lower;

  int n_cells() const { return static_cast<int>(cells.size()); }
  /// Index of the absorbing unsafe state.
  int psi() const { return n_cells(); }
  int size() const { return n_cells() + 1; }
  /// Cell index of s = (x, q), or psi() when s lies outside K.
  int locate(const Vec<Dim>& x, int q) const {
    const int i = parts[static_cast<std::size_t>(q)].locate(x);
    return i < 0 ? psi() : offset[static_cast<std::size_t>(q)] + i;
  }
};

template <int Dim>
StateGrid<Dim> build_state_grid(const PodtshsModel<Dim>& m, double delta_x,
                                RepresentativePoint rep = RepresentativePoint::Lower) {
  require(delta_x > 0.0, "build_state_grid: delta_x must be positive");
  StateGrid<Dim> G;
  G.rep_kind = rep;
  for (int q = 0; q < m.n_modes; ++q) {
    const auto part = make_partition(m.safe[static_cast<std::size_t>(q)], delta_x);
    G.offset.push_back(G.n_cells());
    for (int i = 0; i < part.size(); ++i) {
      const Box c = part.cell(i);
      G.cells.push_back(c);
      G.cell_mode.push_back(q);
      G.reps.push_back(rep == RepresentativePoint::Lower ? Vec<Dim>(c.lo) : Vec<Dim>(c.center()));
    }
    G.delta_x = std::max(G.delta_x, part.diameter());
    G.parts.push_back(part);
  }
  return G;
}

/// The finite POMDP: per-input transition matrices over Z (rows = source),
/// observation table over W x K, and the initial distribution over Z.
struct FinitePomdp {
  std::vector<MatX> tau;  // [u] (n+1) x (n+1), row z sums to 1
  MatX gamma;             // (|W|+1) x n, column z' sums to 1 over W
  VecX rho;               // n+1
  int n_cells = 0;
  int n_obs = 0;          // |W| including psi_y

  int psi() const { return n_cells; }
};

namespace detail {

// Mass of N(mean, V) in every cell of `part`, using per-axis erf factors when V is diagonal.
template <int Dim>
void cell_masses(const UniformPartition& part, const Vec<Dim>& mean, const Mat<Dim>& V, double scale,
                 double* out) {
  const auto d = static_cast<std::size_t>(mean.size());
  bool diagonal = true;
  for (Eigen::Index i = 0; i < V.rows(); ++i)
    for (Eigen::Index j = 0; j < V.cols(); ++j)
      if (i != j && V(i, j) != 0.0) diagonal = false;
  const int n = part.size();
  if (!diagonal) {
    GaussianComponent<Dim> c{1.0, mean, V};
    for (int i = 0; i < n; ++i) out[i] = scale * box_integral(c, part.cell(i));
    return;
  }
  std::vector<std::vector<double>> axis(d);
  for (std::size_t a = 0; a < d; ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    const double sd = std::sqrt(V(ai, ai));
    for (int k = 0; k < part.counts[a]; ++k) {
      const double lo = part.box.lo(ai) + k * part.edge(ai);
      const double hi = (k + 1 == part.counts[a]) ? part.box.hi(ai) : part.box.lo(ai) + (k + 1) * part.edge(ai);
      axis[a].push_back(interval_mass(mean(ai), sd, lo, hi));
    }
  }
  for (int i = 0; i < n; ++i) {
    int r = i;
    double p = scale;
    for (std::size_t a = 0; a < d; ++a) {
      p *= axis[a][static_cast<std::size_t>(r % part.counts[a])];
      r /= part.counts[a];
    }
    out[i] = p;
  }
}

}  // namespace detail

/// tau_delta for input u: transitions evaluated from each cell's representative point.
template <int Dim>
MatX tau_delta_matrix(const PodtshsModel<Dim>& m, const StateGrid<Dim>& G, int u) {
  const int n = G.n_cells();
  MatX T = MatX::Zero(n + 1, n + 1);
  std::vector<double> buf;
  for (int z = 0; z < n; ++z) {
    const int q = G.cell_mode[static_cast<std::size_t>(z)];
    const Vec<Dim>& x = G.reps[static_cast<std::size_t>(z)];
    double inside = 0.0;
    for (int qn = 0; qn < m.n_modes; ++qn) {
      const double pq = m.mode_prob(qn, q, x, u);
      if (pq == 0.0) continue;
      const auto& part = G.parts[static_cast<std::size_t>(qn)];
      buf.assign(static_cast<std::size_t>(part.size()), 0.0);
      detail::cell_masses<Dim>(part, m.next_mean(x, qn, u), m.V, pq, buf.data());
      const int off = G.offset[static_cast<std::size_t>(qn)];
      for (int i = 0; i < part.size(); ++i) {
        T(z, off + i) = buf[static_cast<std::size_t>(i)];
        inside += buf[static_cast<std::size_t>(i)];
      }
    }
    T(z, n) = std::max(0.0, 1.0 - inside);
  }
  T(n, n) = 1.0;
  return T;
}

/// Single entry tau_delta(z' | z, u).
template <int Dim>
double tau_delta(const PodtshsModel<Dim>& m, const StateGrid<Dim>& G, int z_next, int z, int u) {
  const int n = G.n_cells();
  if (z == n) return z_next == n ? 1.0 : 0.0;
  if (z_next == n) {
    double inside = 0.0;
    for (int k = 0; k < n; ++k) inside += tau_delta(m, G, k, z, u);
    return std::max(0.0, 1.0 - inside);
  }
  const int q = G.cell_mode[static_cast<std::size_t>(z)];
  const int qn = G.cell_mode[static_cast<std::size_t>(z_next)];
  const Vec<Dim>& x = G.reps[static_cast<std::size_t>(z)];
  GaussianComponent<Dim> c{1.0, m.next_mean(x, qn, u), m.V};
  return m.mode_prob(qn, q, x, u) * box_integral(c, G.cells[static_cast<std::size_t>(z_next)]);
}

/// Initial distribution: per-cell mass of rho, remainder on psi_s.
template <int Dim>
VecX rho_delta(const PodtshsModel<Dim>& m, const StateGrid<Dim>& G) {
  const int n = G.n_cells();
  VecX r = VecX::Zero(n + 1);
  double inside = 0.0;
  for (int q = 0; q < m.n_modes; ++q) {
    const double pq = m.R_q[static_cast<std::size_t>(q)];
    if (pq == 0.0) continue;
    const auto& part = G.parts[static_cast<std::size_t>(q)];
    std::vector<double> buf(static_cast<std::size_t>(part.size()));
    detail::cell_masses<Dim>(part, m.mu0, m.P0, pq, buf.data());
    const int off = G.offset[static_cast<std::size_t>(q)];
    for (int i = 0; i < part.size(); ++i) {
      r(off + i) = buf[static_cast<std::size_t>(i)];
      inside += buf[static_cast<std::size_t>(i)];
    }
  }
  r(n) = std::max(0.0, 1.0 - inside);
  return r;
}

/// gamma_delta(w | z'): exact observation mass of each cell from the representative point, residual on psi_y.
template <int Dim>
MatX gamma_delta_matrix(const PodtshsModel<Dim>& m, const StateGrid<Dim>& G, const ObsGrid<Dim>& Y) {
  const int n = G.n_cells();
  const int nw = Y.size();
  MatX gam = MatX::Zero(nw + 1, n);
  for (int z = 0; z < n; ++z) {
    const int q = G.cell_mode[static_cast<std::size_t>(z)];
    const Vec<Dim>& x = G.reps[static_cast<std::size_t>(z)];
    const ObsVec<Dim> mean = m.C[static_cast<std::size_t>(q)] * x;
    int offset = 0;
    double total = 0.0;
    for (std::size_t s = 0; s < Y.regions.size(); ++s) {
      const auto& part = Y.regions[s];
      const double py = m.Yq[static_cast<std::size_t>(q)][s];
      if (py > 0.0) {
        std::vector<double> buf(static_cast<std::size_t>(part.size()));
        detail::cell_masses<Dim>(part, mean, m.W, py, buf.data());
        for (int i = 0; i < part.size(); ++i) {
          gam(offset + i, z) = buf[static_cast<std::size_t>(i)];
          total += buf[static_cast<std::size_t>(i)];
        }
      }
      offset += part.size();
    }
    gam(nw, z) = std::max(0.0, 1.0 - total);
  }
  return gam;
}

template <int Dim>
FinitePomdp build_finite_pomdp(const PodtshsModel<Dim>& m, const StateGrid<Dim>& G, const ObsGrid<Dim>& Y) {
  FinitePomdp P;
  P.n_cells = G.n_cells();
  P.n_obs = Y.size() + 1;
  for (int u = 0; u < m.n_inputs(); ++u) P.tau.push_back(tau_delta_matrix(m, G, u));
  P.gamma = gamma_delta_matrix(m, G, Y);
  P.rho = rho_delta(m, G);
  return P;
}

/// Binary cache of the transition tables (row-major float64), keyed by a caller-supplied hash.
inline bool save_tau_cache(const std::string& path, const std::string& key, const std::vector<MatX>& tau) {
  std::ofstream f(path, std::ios::binary);
  if (!f) return false;
  const std::uint64_t klen = key.size(), nu = tau.size(), n = tau.empty() ? 0 : static_cast<std::uint64_t>(tau[0].rows());
  f.write(reinterpret_cast<const char*>(&klen), sizeof klen);
  f.write(key.data(), static_cast<std::streamsize>(klen));
  f.write(reinterpret_cast<const char*>(&nu), sizeof nu);
  f.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const auto& T : tau) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = T;
    f.write(reinterpret_cast<const char*>(R.data()), static_cast<std::streamsize>(sizeof(double) * R.size()));
  }
  return static_cast<bool>(f);
}

inline std::optional<std::vector<MatX>> load_tau_cache(const std::string& path, const std::string& key) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::uint64_t klen = 0, nu = 0, n = 0;
  f.read(reinterpret_cast<char*>(&klen), sizeof klen);
  if (!f || klen > 4096) return std::nullopt;
  std::string k(klen, '\0');
  f.read(k.data(), static_cast<std::streamsize>(klen));
  if (!f || k != key) return std::nullopt;
  f.read(reinterpret_cast<char*>(&nu), sizeof nu);
  f.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!f || nu > 1024 || n > 100000) return std::nullopt;
  std::vector<MatX> tau;
  for (std::uint64_t u = 0; u < nu; ++u) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R(n, n);
    f.read(reinterpret_cast<char*>(R.data()), static_cast<std::streamsize>(sizeof(double) * R.size()));
    if (!f) return std::nullopt;
    tau.emplace_back(R);
  }
  return tau;
}

struct FiniteUpdate {
  VecX belief;
  double likelihood;
};

/// Bayes step given per-cell observation likelihoods `lik` over K.
/// Mass entering psi_s carries no observation information, so the output keeps
/// psi_s mass m_psi and the K part is num * (1 - m_psi) / sum(num).
inline FiniteUpdate finite_update_with_likelihood(const FinitePomdp& P, const VecX& b, int u, const VecX& lik) {
  const int n = P.n_cells;
  require(b.size() == n + 1 && lik.size() == n, "finite_belief_update: size mismatch");
  const MatX& T = P.tau[static_cast<std::size_t>(u)];
  const VecX bK = b.head(n);
  const VecX pred = T.topLeftCorner(n, n).transpose() * bK;
  const double m_psi = std::min(1.0, b(n) + T.col(n).head(n).dot(bK));
  FiniteUpdate r;
  r.belief = VecX::Zero(n + 1);
  if (pred.sum() <= 0.0) {
    r.belief(n) = 1.0;
    r.likelihood = 0.0;
    return r;
  }
  const VecX num = lik.cwiseProduct(pred);
  const double s = num.sum();
  if (!(s >= 1e-300)) throw DegenerateObservation("finite_belief_update: observation has zero likelihood");
  r.likelihood = s / std::max(1.0 - m_psi, 1e-300);
  r.belief.head(n) = num / r.likelihood;
  r.belief(n) = m_psi;
  return r;
}

/// Update with a continuous observation (y^x, y^q), likelihood evaluated at cell representatives.
template <int Dim>
FiniteUpdate finite_belief_update(const PodtshsModel<Dim>& m, const StateGrid<Dim>& G, const FinitePomdp& P,
                                  const VecX& b, int u, const ObsVec<Dim>& yx, int yq) {
  const int n = G.n_cells();
  VecX lik(n);
  for (int z = 0; z < n; ++z)
    lik(z) = m.observation_density(yx, yq, G.reps[static_cast<std::size_t>(z)], G.cell_mode[static_cast<std::size_t>(z)]);
  return finite_update_with_likelihood(P, b, u, lik);
}

/// Update with a discretized observation w in W_delta.
inline FiniteUpdate finite_belief_update_discrete(const FinitePomdp& P, const VecX& b, int u, int w) {
  return finite_update_with_likelihood(P, b, u, P.gamma.row(w).transpose());
}

/// Alpha-vector over K (zero on psi_s) tagged with the input that generated it.
struct FiniteAlpha {
  VecX values;
  int action = 0;
};

inline double alpha_value(const FiniteAlpha& a, const VecX& b) { return a.values.dot(b.head(a.values.size())); }

/// Point-based backup at belief b against the next-level set.
inline FiniteAlpha finite_alpha_backup(const FinitePomdp& P, const std::vector<FiniteAlpha>& next, const VecX& b) {
  require(!next.empty(), "finite_alpha_backup: next-level set is empty");
  const int n = P.n_cells;
  const VecX bK = b.head(n);
  FiniteAlpha best;
  double best_val = -1.0;
  for (int u = 0; u < static_cast<int>(P.tau.size()); ++u) {
    const auto TK = P.tau[static_cast<std::size_t>(u)].topLeftCorner(n, n);
    const VecX pred = TK.transpose() * bK;
    VecX acc = VecX::Zero(n);
    for (int w = 0; w < P.n_obs; ++w) {
      const VecX g = P.gamma.row(w).transpose().cwiseProduct(pred);
      std::size_t jstar = 0;
      double vstar = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < next.size(); ++j) {
        const double v = next[j].values.dot(g);
        if (v > vstar) {
          vstar = v;
          jstar = j;
        }
      }
      acc += P.gamma.row(w).transpose().cwiseProduct(next[jstar].values);
    }
    FiniteAlpha cand;
    cand.values = (TK * acc).cwiseMax(0.0).cwiseMin(1.0);
    cand.action = u;
    const double v = cand.values.dot(bK);
    if (v > best_val) {
      best_val = v;
      best = std::move(cand);
    }
  }
  return best;
}

/// Terminal alpha: indicator of K.
inline FiniteAlpha finite_terminal_alpha(const FinitePomdp& P) { return FiniteAlpha{VecX::Ones(P.n_cells), 0}; }

}  // namespace psafe
