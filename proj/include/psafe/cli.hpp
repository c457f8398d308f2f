// Run configuration and the fit / solve / sweep / simulate / bounds pipeline
// shared by the command-line tool and the acceptance suite.
#pragma once

#include "psafe/io.hpp"
#include "psafe/simulate.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace psafe {

struct SweepSpec {
  double lo = 17.5;
  double hi = 22.0;
  double step = 0.1;
};

struct RunConfig {
  Json model;  // model document
  std::string backend = "finite";
  double delta_x = 0.1;
  std::string representative = "lower";
  double delta_y = 0.5;
  double epsilon = 0.05;
  std::optional<Box> obs_region;
  int iq = 10;
  double bandwidth = 1.0;
  int cap = 30;
  int gamma_points = 9;
  int beliefs = 40;
  int probes = 40;
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
  SweepSpec sweep;
};

inline void validate_config(const RunConfig& c) {
  if (c.backend != "finite" && c.backend != "gaussian") throw ConfigError("backend", "expected finite or gaussian");
  if (c.representative != "lower" && c.representative != "center")
    throw ConfigError("representative", "expected lower or center");
  if (!(c.delta_x > 0.0)) throw ConfigError("delta_x", "must be positive");
  if (!(c.delta_y > 0.0)) throw ConfigError("delta_y", "must be positive");
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ConfigError("epsilon", "must lie in (0,1)");
  if (c.iq < 1) throw ConfigError("iq", "must be at least 1");
  if (!(c.bandwidth > 0.0)) throw ConfigError("bandwidth", "must be positive");
  if (c.cap < 1) throw ConfigError("cap", "must be at least 1");
  if (c.gamma_points < 1) throw ConfigError("gamma_points", "must be at least 1");
  if (c.beliefs < 1) throw ConfigError("beliefs", "must be at least 1");
  if (c.probes < 1) throw ConfigError("probes", "must be at least 1");
  if (c.trials < 1) throw ConfigError("trials", "must be at least 1");
  if (!(c.sweep.step > 0.0) || c.sweep.hi < c.sweep.lo) throw ConfigError("sweep", "need step > 0 and hi >= lo");
  if (!c.model.is_object()) throw ConfigError("model", "missing model document");
}

inline Json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError(p.string(), "cannot open file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(p.string(), e.what());
  }
}

/// Parses a run configuration. A string `model` entry is a path relative to `base_dir`.
inline RunConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = ".") {
  static const std::vector<std::string> known = {"schema", "model", "backend", "delta_x", "representative", "delta_y",
                                                 "epsilon", "obs_region", "iq", "bandwidth", "cap", "gamma_points",
                                                 "beliefs", "probes", "trials", "seed", "sweep"};
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError(k, "unknown config key");
  RunConfig c;
  const auto& m = detail::field(j, "model", "");
  c.model = m.is_string() ? read_json_file(base_dir / m.get<std::string>()) : m;
  const auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = detail::as_number(j.at(key), key);
  };
  const auto str = [&](const char* key, std::string& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) throw ConfigError(key, "expected a string");
    out = j.at(key).get<std::string>();
  };
  const auto integer = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(key, "expected a nonnegative integer");
    out = static_cast<std::decay_t<decltype(out)>>(v.get<long long>());
  };
  str("backend", c.backend);
  num("delta_x", c.delta_x);
  str("representative", c.representative);
  num("delta_y", c.delta_y);
  num("epsilon", c.epsilon);
  if (j.contains("obs_region")) {
    const auto& r = j.at("obs_region");
    if (!r.is_array() || r.empty()) throw ConfigError("obs_region", "expected one [lo, hi] interval per axis");
    Box b{VecX(static_cast<Eigen::Index>(r.size())), VecX(static_cast<Eigen::Index>(r.size()))};
    for (std::size_t a = 0; a < r.size(); ++a) {
      const auto iv = detail::as_vector(r[a], "obs_region[" + std::to_string(a) + "]", 2);
      b.lo(static_cast<Eigen::Index>(a)) = iv[0];
      b.hi(static_cast<Eigen::Index>(a)) = iv[1];
    }
    c.obs_region = b;
  }
  integer("iq", c.iq);
  num("bandwidth", c.bandwidth);
  integer("cap", c.cap);
  integer("gamma_points", c.gamma_points);
  integer("beliefs", c.beliefs);
  integer("probes", c.probes);
  integer("trials", c.trials);
  integer("seed", c.seed);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    c.sweep.lo = detail::as_number(detail::field(s, "lo", "sweep"), "sweep.lo");
    c.sweep.hi = detail::as_number(detail::field(s, "hi", "sweep"), "sweep.hi");
    c.sweep.step = detail::as_number(detail::field(s, "step", "sweep"), "sweep.step");
  }
  return c;
}

/// Settings that determine the abstraction a policy was solved on.
inline Json abstraction_to_json(const RunConfig& c) {
  Json j = {{"backend", c.backend}, {"delta_y", c.delta_y}, {"epsilon", c.epsilon}};
  if (c.obs_region) {
    Json r = Json::array();
    for (Eigen::Index a = 0; a < c.obs_region->dim(); ++a) r.push_back({c.obs_region->lo(a), c.obs_region->hi(a)});
    j["obs_region"] = r;
  }
  if (c.backend == "finite") {
    j["delta_x"] = c.delta_x;
    j["representative"] = c.representative;
  } else {
    j["iq"] = c.iq;
    j["bandwidth"] = c.bandwidth;
    j["cap"] = c.cap;
    j["gamma_points"] = c.gamma_points;
  }
  return j;
}

inline Json config_to_json(const RunConfig& c) {
  Json j = abstraction_to_json(c);
  j["schema"] = "psafe.config/1";
  j["model"] = c.model;
  j["delta_x"] = c.delta_x;
  j["representative"] = c.representative;
  j["iq"] = c.iq;
  j["bandwidth"] = c.bandwidth;
  j["cap"] = c.cap;
  j["gamma_points"] = c.gamma_points;
  j["beliefs"] = c.beliefs;
  j["probes"] = c.probes;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["sweep"] = {{"lo", c.sweep.lo}, {"hi", c.sweep.hi}, {"step", c.sweep.step}};
  return j;
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(config_to_json(c).dump())); }
inline std::string abstraction_hash(const RunConfig& c) { return hex64(fnv1a(abstraction_to_json(c).dump())); }

/// Model, observation grid and provenance for one configuration. Backends keep
/// a pointer to the model, so a Problem is neither copied nor moved.
template <int Dim>
struct Problem {
  RunConfig cfg;
  PodtshsModel<Dim> m;
  ObsGrid<Dim> og;
  ArtifactMeta meta;

  explicit Problem(RunConfig c)
      : cfg((validate_config(c), std::move(c))),
        m(model_from_json<Dim>(cfg.model, cfg.backend == "gaussian")),
        og(build_obs_grid(m, cfg.delta_y, cfg.epsilon, cfg.obs_region)),
        meta{config_hash(cfg), model_hash(m), cfg.seed} {}
  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  RepresentativePoint representative() const {
    return cfg.representative == "center" ? RepresentativePoint::Center : RepresentativePoint::Lower;
  }
};

template <int Dim>
FiniteBackend<Dim> make_finite_backend(const Problem<Dim>& p) {
  return FiniteBackend<Dim>(p.m, build_state_grid(p.m, p.cfg.delta_x, p.representative()), p.og);
}

template <int Dim>
RbfIndicator<Dim> fit_rbf(const Problem<Dim>& p) {
  return fit_indicator_rbf<Dim>(p.m.safe, std::vector<int>(static_cast<std::size_t>(p.m.n_modes), p.cfg.iq),
                                p.cfg.bandwidth);
}

template <int Dim>
GaussianBackend<Dim> make_gaussian_backend(const Problem<Dim>& p, RbfIndicator<Dim> rbf) {
  return GaussianBackend<Dim>(p.m, std::move(rbf), p.og, static_cast<std::size_t>(p.cfg.cap), p.cfg.gamma_points);
}

template <class Backend>
struct SolveRun {
  BeliefSet<typename Backend::Belief> sets;
  SolveResult<typename Backend::Alpha> result;
  double seconds = 0.0;
};

template <class Backend, int Dim>
SolveRun<Backend> run_solve(const Problem<Dim>& p, const Backend& be) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveRun<Backend> r;
  r.sets = sample_belief_sets(p.m, be, p.cfg.beliefs, p.cfg.seed);
  r.result = solve(be, r.sets, be.initial_belief(p.m), SolveOptions{p.cfg.seed});
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Seed of the independent belief sample used for the covering-distance proxy.
inline std::uint64_t probe_seed(std::uint64_t seed) { return seed ^ 0x5bd1e995u; }

/// Largest component density peak (2 pi)^{-m/2} |P|^{-1/2} per belief level.
template <int Dim>
std::vector<double> peak_component_density(const BeliefSet<GmBelief<Dim>>& sets) {
  std::vector<double> out;
  for (const auto& lv : sets.levels) {
    double best = 0.0;
    for (const auto& b : lv)
      for (int q = 0; q < b.n_modes(); ++q)
        for (const auto& c : b[q]) {
          const auto d = static_cast<double>(c.mean.size());
          best = std::max(best, std::pow(kTwoPi, -0.5 * d) / std::sqrt(c.cov.determinant()));
        }
    out.push_back(best);
  }
  return out;
}

/// Filter likelihoods along each sampled chain, recomputed from the lineage.
template <class Backend>
std::vector<std::vector<double>> chain_likelihoods(const Backend& be, const BeliefSet<typename Backend::Belief>& sets) {
  const std::size_t count = sets.levels.empty() ? 0 : sets.levels[0].size();
  std::vector<std::vector<double>> out(count);
  for (std::size_t n = 1; n < sets.levels.size(); ++n)
    for (std::size_t i = 0; i < sets.levels[n].size(); ++i) {
      const auto& L = sets.lineage[n][i];
      const auto& parent = sets.levels[n - 1][static_cast<std::size_t>(L.parent)];
      double lik = 0.0;
      be.update(parent, L.u, L.yx, L.yq, &lik);
      out[i].push_back(lik);
    }
  return out;
}

template <class Backend, int Dim>
BoundReport make_bound_report(const Problem<Dim>& p, const Backend& be, const BeliefSet<typename Backend::Belief>& sets,
                              const SolveResult<typename Backend::Alpha>& r) {
  BoundReport rep;
  const int N = p.m.horizon;
  rep.N = N;
  rep.delta_y = p.og.delta_y;
  rep.epsilon = p.og.epsilon_achieved;
  rep.alpha_bar = r.alpha_sup;
  rep.value = r.value_at_rho;
  const auto probes = sample_belief_sets(p.m, be, p.cfg.probes, probe_seed(p.cfg.seed));
  rep.delta_sigma_proxy = hausdorff_delta_sigma<Backend>(sets, probes);
  rep.pbvi_proxy = pbvi_bound(rep.delta_sigma_proxy, N);
  if constexpr (std::is_same_v<Backend, FiniteBackend<Dim>>) {
    rep.backend = BackendKind::Finite;
    rep.delta_x = be.grid().delta_x;
    rep.constants = compute_constants(p.m, be.grid(), p.og);
    rep.abstraction = grid_abstraction_bound(rep.constants, rep.delta_x, N);
    rep.abstraction_statement = rep.abstraction;
    rep.observation = observation_bound(rep.constants, rep.delta_y, rep.epsilon, N, BackendKind::Finite);
    rep.eta_sigma_run.assign(static_cast<std::size_t>(N + 1), 0.0);
    for (const auto& chain : chain_likelihoods(be, sets)) {
      std::vector<LikelihoodStep> trace;
      for (double l : chain) trace.push_back({l, l});
      const auto eta = filter_eta_sigma(rep.constants, trace);
      for (std::size_t n = 0; n < eta.size() && n < rep.eta_sigma_run.size(); ++n)
        rep.eta_sigma_run[n] = std::max(rep.eta_sigma_run[n], eta[n]);
    }
    for (int n = 0; n <= N; ++n)
      rep.eta_alpha_run.push_back(eta_alpha(rep.constants, rep.eta_sigma_run[static_cast<std::size_t>(n)], N, n));
  } else {
    rep.backend = BackendKind::Gaussian;
    rep.delta_I = be.rbf().delta_I;
    rep.constants = compute_constants(p.m, p.og);
    rep.phi_sigma = peak_component_density(sets);
    const auto mixture = mixture_abstraction_bound(rep.constants, rep.delta_I, rep.alpha_bar, rep.phi_sigma, N);
    rep.abstraction = mixture.value_form;
    rep.abstraction_statement = mixture.safety_statement;
    rep.observation = observation_bound(rep.constants, rep.delta_y, rep.epsilon, N, BackendKind::Gaussian, rep.alpha_bar);
  }
  return rep;
}

struct SweepRow {
  double mu0 = 0.0;
  double value = 0.0;
  int action = 0;
};

/// Re-evaluates the level-0 alpha set at initial beliefs whose mean's first
/// coordinate runs over the sweep grid.
template <class Backend, int Dim>
std::vector<SweepRow> run_sweep(const Problem<Dim>& p, const Backend& be, const Policy<typename Backend::Alpha>& policy,
                                const SweepSpec& s) {
  require(!policy.levels.empty(), "run_sweep: empty policy");
  std::vector<SweepRow> rows;
  const auto steps = static_cast<long>(std::floor((s.hi - s.lo) / s.step + 1e-9));
  for (long k = 0; k <= steps; ++k) {
    auto mk = p.m;
    const double mu = s.lo + static_cast<double>(k) * s.step;
    mk.mu0(0) = mu;
    const auto e = evaluate_value(be, policy.levels[0], be.initial_belief(mk));
    rows.push_back({mu, e.value, e.action});
  }
  return rows;
}

/// First sweep point whose initial action differs from the first row's, if any.
inline std::optional<double> first_flip(const std::vector<SweepRow>& rows) {
  for (const auto& r : rows)
    if (r.action != rows.front().action) return r.mu0;
  return std::nullopt;
}

/// True when the actions switch exactly once, from `from` to `to`.
inline bool single_flip(const std::vector<SweepRow>& rows, int from, int to) {
  if (rows.empty() || rows.front().action != from) return false;
  bool switched = false;
  for (const auto& r : rows) {
    if (r.action == to) switched = true;
    else if (r.action != from || switched) return false;
  }
  return switched;
}

inline std::string format_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Comment lines carrying provenance; CSV bodies start after them.
inline void write_csv_preamble(std::ostream& os, const std::string& schema, const ArtifactMeta& meta,
                               const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  os << "# schema=" << schema << "\n# config_hash=" << meta.config_hash << "\n# model_hash=" << meta.model_hash
     << "\n# seed=" << meta.seed << '\n';
  for (const auto& [k, v] : extra) os << "# " << k << '=' << v << '\n';
}

/// Columns: mu0,value,action,abstraction_bound,observation_bound,pbvi_proxy.
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, const BoundReport& rep) {
  os << "mu0,value,action,abstraction_bound,observation_bound,pbvi_proxy\n";
  for (const auto& r : rows)
    os << format_short(r.mu0) << ',' << format_double(r.value) << ',' << r.action << ',' << format_double(rep.abstraction)
       << ',' << format_double(rep.observation) << ',' << format_double(rep.pbvi_proxy) << '\n';
}

/// Lines of a CSV document that are not comments.
inline std::string csv_body(const std::string& text) {
  std::istringstream is(text);
  std::string line, out;
  while (std::getline(is, line))
    if (line.empty() || line[0] != '#') out += line + '\n';
  return out;
}

inline std::string summary_table(const BoundReport& r) {
  std::ostringstream os;
  os << "backend              " << backend_name(r.backend) << '\n'
     << "reported value       " << format_double(r.value) << '\n'
     << "abstraction bound    " << format_double(r.abstraction) << '\n'
     << "observation bound    " << format_double(r.observation) << '\n'
     << "pbvi proxy bound     " << format_double(r.pbvi_proxy) << "  (delta_sigma proxy "
     << format_double(r.delta_sigma_proxy) << ")\n"
     << "heuristic total      " << format_double(r.heuristic_total()) << '\n'
     << "interval             [" << format_double(r.interval_lo()) << ", " << format_double(r.interval_hi()) << "]\n";
  return os.str();
}

}  // namespace psafe
