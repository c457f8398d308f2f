// Monte-Carlo closed-loop oracle: the true hybrid system drives the
// observations while the backend filter and the policy pick the inputs.
#pragma once

#include "psafe/pbvi.hpp"

#include <cinttypes>
#include <cstdio>
#include <ostream>

namespace psafe {

template <int Dim>
struct TrajectoryRecord {
  std::vector<HybridState<Dim>> states;  // s_0 .. s_k, k <= N (stops at the first unsafe state)
  std::vector<int> inputs;               // u_0 .. u_{k-1}
  std::vector<ObsVec<Dim>> obs_x;        // y_1 .. y_k
  std::vector<int> obs_q;
  std::vector<double> likelihoods;       // filter normalizer per update
  std::vector<bool> safe;                // per recorded state
  int first_unsafe = -1;
  bool filter_failed = false;
  bool success() const { return first_unsafe < 0 && !filter_failed; }
};

struct McEstimate {
  std::size_t trials = 0;
  std::size_t successes = 0;
  std::size_t filter_failures = 0;
  double estimate = 0.0;
  double half_width = 0.0;
  std::uint64_t seed = 0;
};

struct TrialRow {
  std::size_t trial = 0;
  bool success = false;
  int first_unsafe = -1;
  bool filter_failed = false;
};

struct McRun {
  McEstimate summary;
  std::vector<TrialRow> rows;
};

/// Stream offset keeping trial RNGs disjoint from belief-sampling chains.
inline constexpr std::uint64_t kTrialStreamBase = std::uint64_t{1} << 40;

inline McEstimate make_estimate(std::size_t trials, std::size_t successes, std::size_t filter_failures,
                                std::uint64_t seed) {
  McEstimate e;
  e.trials = trials;
  e.successes = successes;
  e.filter_failures = filter_failures;
  e.seed = seed;
  e.estimate = trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0;
  e.half_width = trials ? 1.96 * std::sqrt(e.estimate * (1.0 - e.estimate) / static_cast<double>(trials)) : 0.0;
  return e;
}

/// One closed-loop run. `controller.act(n)` returns the input at step n;
/// `controller.observe(u, yx, yq, lik)` advances the filter and returns false on degeneracy.
template <int Dim, class Controller, class Rng>
TrajectoryRecord<Dim> simulate_trial(const PodtshsModel<Dim>& m, Controller& controller, Rng& rng) {
  TrajectoryRecord<Dim> t;
  HybridState<Dim> s = sample_initial_state(m, rng);
  for (int n = 0;; ++n) {
    t.states.push_back(s);
    const bool ok = m.in_safe(s.x, s.q);
    t.safe.push_back(ok);
    if (!ok) {
      t.first_unsafe = n;
      break;
    }
    if (n == m.horizon) break;
    const int u = controller.act(n);
    t.inputs.push_back(u);
    s = sample_transition(m, s, u, rng);
    auto [yx, yq] = sample_observation(m, s, rng);
    double lik = 0.0;
    const bool filtered = controller.observe(u, yx, yq, lik);
    t.obs_x.push_back(yx);
    t.obs_q.push_back(yq);
    t.likelihoods.push_back(lik);
    if (!filtered) {
      // The state is still checked so the record shows whether it left K.
      t.states.push_back(s);
      const bool still = m.in_safe(s.x, s.q);
      t.safe.push_back(still);
      if (!still) t.first_unsafe = n + 1;
      t.filter_failed = true;
      break;
    }
  }
  return t;
}

namespace detail {

template <class Backend, int Dim>
struct PolicyController {
  const Backend& be;
  const Policy<typename Backend::Alpha>& policy;
  typename Backend::Belief b;
  int act(int n) const { return evaluate_value(be, policy.levels[static_cast<std::size_t>(n)], b).action; }
  bool observe(int u, const ObsVec<Dim>& yx, int yq, double& lik) {
    auto next = be.update(b, u, yx, yq, &lik);
    if (!next) return false;
    b = std::move(*next);
    return true;
  }
};

template <int Dim>
struct ConstantController {
  int u;
  int act(int) const { return u; }
  bool observe(int, const ObsVec<Dim>&, int, double& lik) {
    lik = 1.0;
    return true;
  }
};

template <int Dim, class MakeController>
McRun run_trials(const PodtshsModel<Dim>& m, std::size_t trials, std::uint64_t seed, MakeController make,
                 std::vector<TrajectoryRecord<Dim>>* records) {
  require(trials > 0, "simulation needs at least one trial");
  McRun run;
  run.rows.reserve(trials);
  std::size_t ok = 0, failed = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    auto rng = make_rng(seed, kTrialStreamBase + i);
    auto ctl = make();
    auto t = simulate_trial(m, ctl, rng);
    ok += t.success();
    failed += t.filter_failed;
    run.rows.push_back({i, t.success(), t.first_unsafe, t.filter_failed});
    if (records) records->push_back(std::move(t));
  }
  run.summary = make_estimate(trials, ok, failed, seed);
  return run;
}

}  // namespace detail

/// Closed loop under the solved policy and the backend's filter. Trials whose
/// filter degenerates count as failures and are tallied separately.
template <class Backend, int Dim>
McRun run_closed_loop(const PodtshsModel<Dim>& m, const Policy<typename Backend::Alpha>& policy, const Backend& be,
                      std::size_t trials, std::uint64_t seed, std::vector<TrajectoryRecord<Dim>>* records = nullptr) {
  require(policy.horizon() == m.horizon, "run_closed_loop: policy horizon differs from model horizon");
  const auto b0 = be.initial_belief(m);
  return detail::run_trials(
      m, trials, seed, [&] { return detail::PolicyController<Backend, Dim>{be, policy, b0}; }, records);
}

/// Closed loop under the constant input `u`.
template <int Dim>
McRun evaluate_fixed_policy(const PodtshsModel<Dim>& m, int u, std::size_t trials, std::uint64_t seed,
                            std::vector<TrajectoryRecord<Dim>>* records = nullptr) {
  require(u >= 0 && u < m.n_inputs(), "evaluate_fixed_policy: input index out of range");
  return detail::run_trials(m, trials, seed, [&] { return detail::ConstantController<Dim>{u}; }, records);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Columns: kind,trial,seed,success,first_unsafe_step,filter_failed,estimate,half_width.
/// Trial rows leave the last two empty; the summary row carries the trial count
/// in `trial`, the success count in `success` and the filter-failure count in `filter_failed`.
inline void write_mc_csv(std::ostream& os, const McRun& run) {
  os << "kind,trial,seed,success,first_unsafe_step,filter_failed,estimate,half_width\n";
  for (const auto& r : run.rows)
    os << "trial," << r.trial << ',' << run.summary.seed << ',' << (r.success ? 1 : 0) << ',' << r.first_unsafe << ','
       << (r.filter_failed ? 1 : 0) << ",,\n";
  const auto& s = run.summary;
  os << "summary," << s.trials << ',' << s.seed << ',' << s.successes << ",," << s.filter_failures << ','
     << format_double(s.estimate) << ',' << format_double(s.half_width) << '\n';
}

}  // namespace psafe
