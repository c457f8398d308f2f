// psafe command-line front end: fit-indicator, solve, sweep, simulate, bounds.
#include "psafe/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace psafe;

namespace {

struct Flags {
  std::string config;
  std::string backend;
  double delta_x = 0, delta_y = 0, epsilon = 0;
  int iq = 0, cap = 0, beliefs = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string policy;
  CLI::App* app = nullptr;
  bool given(const char* name) const { return app->count(name) > 0; }
};

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

RunConfig load_config(const Flags& f) {
  const fs::path path(f.config);
  auto cfg = config_from_json(read_json_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
  if (f.given("--backend")) cfg.backend = f.backend;
  if (f.given("--delta-x")) cfg.delta_x = f.delta_x;
  if (f.given("--delta-y")) cfg.delta_y = f.delta_y;
  if (f.given("--epsilon")) cfg.epsilon = f.epsilon;
  if (f.given("--iq")) cfg.iq = f.iq;
  if (f.given("--cap")) cfg.cap = f.cap;
  if (f.given("--beliefs")) cfg.beliefs = f.beliefs;
  if (f.given("--trials")) cfg.trials = f.trials;
  if (f.given("--seed")) cfg.seed = f.seed;
  validate_config(cfg);
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw ConfigError(p.string(), "cannot write file");
  os << text;
}

void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

template <int Dim>
struct Session {
  const Flags& flags;
  Problem<Dim> p;
  fs::path out;

  Session(const Flags& f, RunConfig cfg) : flags(f), p(std::move(cfg)), out(f.out) {}

  Json policy_doc(const auto& result) const {
    auto j = policy_to_json(result, p.cfg.backend, p.meta);
    j["abstraction_hash"] = abstraction_hash(p.cfg);
    return j;
  }

  /// Reads a policy file and checks that it was solved for this model and abstraction.
  template <class Alpha, class ReadAlpha>
  SolveResult<Alpha> load_policy(const fs::path& path, ReadAlpha read) const {
    if (!fs::exists(path)) throw ConfigError(path.string(), "policy file not found");
    const auto j = read_json_file(path);
    const auto meta = read_meta(j, "psafe.policy/1");
    if (meta.model_hash != p.meta.model_hash) throw ConfigError("model_hash", "policy was solved for another model");
    if (j.value("abstraction_hash", std::string{}) != abstraction_hash(p.cfg))
      throw ConfigError("abstraction_hash", "policy was solved with other abstraction settings");
    auto r = policy_from_json<Alpha>(j, p.cfg.backend, read);
    if (r.policy.horizon() != p.m.horizon) throw ConfigError("horizon", "policy horizon differs from the model");
    return r;
  }

  fs::path policy_path() const { return flags.policy.empty() ? out / "policy.json" : fs::path(flags.policy); }

  int fit_indicator() {
    const auto rbf = fit_rbf(p);
    write_json(out / "rbf.json", rbf_to_json(rbf, p.meta));
    std::cout << "delta_I " << format_double(rbf.delta_I) << '\n';
    return 0;
  }

  template <class Backend, class ReadAlpha>
  int dispatch(const std::string& cmd, const Backend& be, ReadAlpha read) {
    using Alpha = typename Backend::Alpha;
    const Timer total;
    if (cmd == "simulate") {
      const auto r = load_policy<Alpha>(policy_path(), read);
      const auto run = run_closed_loop(p.m, r.policy, be, p.cfg.trials, p.cfg.seed);
      std::ostringstream os;
      write_csv_preamble(os, "psafe.mc/1", p.meta,
                         {{"backend", p.cfg.backend}, {"wall_seconds", format_short(total.seconds())}});
      write_mc_csv(os, run);
      write_text(out / "simulate.csv", os.str());
      const auto& s = run.summary;
      std::cout << "estimate " << format_double(s.estimate) << " +- " << format_double(s.half_width) << " ("
                << s.successes << '/' << s.trials << ", filter failures " << s.filter_failures << ")\n"
                << "reported value " << format_double(r.value_at_rho) << '\n';
      return 0;
    }

    // solve, sweep and bounds need belief sets; sweep and bounds reuse a policy file when given.
    SolveRun<Backend> run;
    if (cmd != "solve" && !flags.policy.empty()) {
      run.result = load_policy<Alpha>(policy_path(), read);
      run.sets = sample_belief_sets(p.m, be, p.cfg.beliefs, p.cfg.seed);
    } else {
      run = run_solve(p, be);
      write_json(out / "policy.json", policy_doc(run.result));
    }
    const auto report = make_bound_report(p, be, run.sets, run.result);

    if (cmd == "sweep") {
      const auto rows = run_sweep(p, be, run.result.policy, p.cfg.sweep);
      std::ostringstream os;
      write_csv_preamble(os, "psafe.sweep/1", p.meta,
                         {{"backend", p.cfg.backend},
                          {"solve_seconds", format_short(run.seconds)},
                          {"wall_seconds", format_short(total.seconds())}});
      write_sweep_csv(os, rows, report);
      write_text(out / "sweep.csv", os.str());
      const auto flip = first_flip(rows);
      std::cout << "rows " << rows.size() << '\n'
                << "threshold " << (flip ? format_short(*flip) : std::string("none")) << '\n';
      return 0;
    }

    write_json(out / "bounds.json", bound_report_to_json(report, p.meta));
    if (cmd == "solve")
      std::cout << "value " << format_double(run.result.value_at_rho) << "\naction " << run.result.action_at_rho
                << "\nsolve_seconds " << format_short(run.seconds) << '\n';
    std::cout << summary_table(report);
    return 0;
  }

  int execute(const std::string& cmd) {
    if (cmd == "fit-indicator") return fit_indicator();
    if (p.cfg.backend == "finite") return dispatch(cmd, make_finite_backend(p), finite_alpha_from_json);
    const int dim = p.m.dim;
    return dispatch(cmd, make_gaussian_backend(p, fit_rbf(p)),
                    [dim](const Json& a) { return gm_alpha_from_json<Dim>(a, dim); });
  }
};

int run_command(const std::string& cmd, const Flags& f) {
  auto cfg = load_config(f);
  if (cmd == "fit-indicator") cfg.backend = "gaussian";
  switch (model_dimension(cfg.model)) {
    case 1: return Session<1>(f, std::move(cfg)).execute(cmd);
    case 2: return Session<2>(f, std::move(cfg)).execute(cmd);
    default: throw ConfigError("model.dim", "only dimensions 1 and 2 are built into the tool");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety probability lower bounds for partially observable stochastic hybrid systems"};
  app.require_subcommand(1);
  Flags f;
  f.app = &app;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"fit-indicator", "Fit the RBF safe-set indicator and print delta_I"},
      {"solve", "Solve for a policy and write policy.json and bounds.json"},
      {"sweep", "Evaluate the initial action and value over a range of initial means"},
      {"simulate", "Monte-Carlo evaluation of a solved policy"},
      {"bounds", "Write the error-bound report"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", f.config, "Run configuration JSON")->required();
    sub->add_option("--backend", f.backend, "finite or gaussian")->check(CLI::IsMember({"finite", "gaussian"}));
    sub->add_option("--delta-x", f.delta_x, "State grid width");
    sub->add_option("--delta-y", f.delta_y, "Observation grid width");
    sub->add_option("--epsilon", f.epsilon, "Observation mass outside the grid region");
    sub->add_option("--iq", f.iq, "RBF components per mode");
    sub->add_option("--cap", f.cap, "Mixture component cap");
    sub->add_option("--beliefs", f.beliefs, "Sampled beliefs per level");
    sub->add_option("--trials", f.trials, "Monte-Carlo trials");
    sub->add_option("--seed", f.seed, "Random seed");
    sub->add_option("--out", f.out, "Output directory")->capture_default_str();
    if (name != "fit-indicator" && name != "solve")
      sub->add_option("--policy", f.policy, "Policy JSON (default: <out>/policy.json for simulate)");
  }
  CLI11_PARSE(app, argc, argv);
  const auto* sub = app.get_subcommands().front();
  f.app = const_cast<CLI::App*>(sub);
  try {
    return run_command(sub->get_name(), f);
  } catch (const ConfigError& e) {
    std::cerr << "psafe: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "psafe: " << e.what() << '\n';
    return 1;
  }
}
