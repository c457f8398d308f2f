// Acceptance run: one PASS/FAIL line per benchmark criterion, exit status 1 if any fails.
#include "psafe/psafe.hpp"

#include <cstdio>
#include <iostream>
#include <random>

using namespace psafe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  failures += o.pass ? 0 : 1;
}

std::string fmt(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Box interval(double a, double b) { return Box{VecX::Constant(1, a), VecX::Constant(1, b)}; }

RunConfig benchmark_config() {
  const fs::path p = fs::path(PSAFE_SOURCE_DIR) / "configs" / "thermostat.json";
  return config_from_json(read_json_file(p), p.parent_path());
}

// ---------------------------------------------------------------------------
// Thermostat benchmark runs, shared by the threshold and soundness criteria.

struct BenchmarkRun {
  std::string label;
  std::vector<SweepRow> rows;
  BoundReport bounds;
  McEstimate mc;
  std::string mc_body;
  double solve_seconds = 0.0;
  double total_seconds = 0.0;
};

template <class Backend>
BenchmarkRun run_benchmark(const std::string& label, const Problem<1>& p, const Backend& be, bool simulate) {
  const auto t0 = std::chrono::steady_clock::now();
  BenchmarkRun out;
  out.label = label;
  const auto run = run_solve(p, be);
  out.solve_seconds = run.seconds;
  out.rows = run_sweep(p, be, run.result.policy, p.cfg.sweep);
  out.bounds = make_bound_report(p, be, run.sets, run.result);
  if (simulate) {
    const auto mc = run_closed_loop(p.m, run.result.policy, be, p.cfg.trials, p.cfg.seed);
    out.mc = mc.summary;
    std::ostringstream os;
    write_mc_csv(os, mc);
    out.mc_body = os.str();
  }
  out.total_seconds = seconds_since(t0);
  return out;
}

BenchmarkRun finite_benchmark(bool simulate) {
  Problem<1> p(benchmark_config());
  return run_benchmark("finite dx=" + fmt(p.cfg.delta_x), p, make_finite_backend(p), simulate);
}

BenchmarkRun gaussian_benchmark(int iq, bool simulate) {
  auto cfg = benchmark_config();
  cfg.backend = "gaussian";
  cfg.iq = iq;
  Problem<1> p(cfg);
  return run_benchmark("gaussian I_q=" + std::to_string(iq), p, make_gaussian_backend(p, fit_rbf(p)), simulate);
}

Outcome threshold(const std::vector<BenchmarkRun>& runs, double step) {
  Outcome o{true, ""};
  std::optional<double> finite_flip;
  for (const auto& r : runs) {
    const auto flip = first_flip(r.rows);
    bool ok = flip && r.rows.front().action == 1 && *flip >= 18.2 - 1e-9 && *flip <= 19.2 + 1e-9;
    if (ok)
      for (const auto& row : r.rows)
        if (std::abs(row.mu0 - *flip) < 1e-9) ok = row.action == 0;
    o.pass = o.pass && ok;
    o.detail += r.label + " flip " + (flip ? fmt(*flip, 4) : std::string("none")) +
                (single_flip(r.rows, 1, 0) ? " (single)" : " (not single)") + "; ";
    if (r.label.rfind("finite", 0) == 0) finite_flip = flip;
  }
  for (const auto& r : runs) {
    const auto flip = first_flip(r.rows);
    if (finite_flip && flip && std::abs(*flip - *finite_flip) > step + 1e-9) o.pass = false;
  }
  o.detail += "required: heater-on to heater-off in [18.2, 19.2], backends within " + fmt(step) + " of finite";
  return o;
}

Outcome soundness(const BenchmarkRun& r) {
  const double lhs = r.mc.estimate;
  const double rhs = r.bounds.value - r.bounds.certified_part() - 3.0 * r.mc.half_width;
  Outcome o;
  o.pass = lhs >= rhs && r.total_seconds < 600.0;
  o.detail = r.label + ": MC " + fmt(lhs) + " +- " + fmt(r.mc.half_width) + " (" + std::to_string(r.mc.trials) +
             " trials), reported " + fmt(r.bounds.value) + ", abstraction+observation bound " +
             fmt(r.bounds.certified_part()) + ", tight check MC >= reported - 3hw: " +
             (lhs >= r.bounds.value - 3.0 * r.mc.half_width ? "holds" : "fails") + ", runtime " +
             fmt(r.total_seconds, 4) + " s (limit 600)";
  return o;
}

// ---------------------------------------------------------------------------
// Brute-force oracle on small random abstract POMDPs.

FinitePomdp random_pomdp(std::mt19937_64& rng, int cells) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  FinitePomdp P;
  P.n_cells = cells;
  P.n_obs = 3;  // two observation cells and the outside symbol
  for (int u = 0; u < 2; ++u) {
    MatX T = MatX::Zero(cells + 1, cells + 1);
    for (int z = 0; z < cells; ++z) {
      for (int k = 0; k <= cells; ++k) T(z, k) = U(rng) * (k == cells ? 0.4 : 1.0);
      T.row(z) /= T.row(z).sum();
    }
    T(cells, cells) = 1.0;
    P.tau.push_back(T);
  }
  P.gamma = MatX(3, cells);
  for (int z = 0; z < cells; ++z) {
    for (int w = 0; w < 3; ++w) P.gamma(w, z) = U(rng) * (w == 2 ? 0.2 : 1.0);
    P.gamma.col(z) /= P.gamma.col(z).sum();
  }
  P.rho = VecX(cells + 1);
  for (int z = 0; z <= cells; ++z) P.rho(z) = U(rng) * (z == cells ? 0.1 : 1.0);
  P.rho /= P.rho.sum();
  return P;
}

Outcome brute_force() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int instances = 0;
  for (int cells = 2; cells <= 5; ++cells)
    for (int k = 0; k < 10; ++k) {
      const auto P = random_pomdp(rng, cells);
      FiniteBackend<1> be(P);
      const double pbvi = solve(be, exhaustive_finite_beliefs(P, P.rho, 2), P.rho).value_at_rho;
      worst = std::max(worst, std::abs(pbvi - exhaustive_alpha_value(P, P.rho, 2)));
      ++instances;
    }
  return {worst <= 1e-9, std::to_string(instances) + " instances with 3-6 abstract states, 2 inputs, N=2; max |diff| " +
                             fmt(worst) + " (limit 1e-9)"};
}

// ---------------------------------------------------------------------------
// Gaussian operators on scalar instances.

double npdf(double x, double m, double var) { return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(kTwoPi * var); }

GaussianComponent<1> g1(double w, double m, double var) {
  return GaussianComponent<1>{w, Vec<1>::Constant(m), Mat<1>::Constant(var)};
}

struct Scalar {
  double a, g, v, c, w;
};

PodtshsModel<1> scalar_model(const Scalar& s, const Box& K) {
  PodtshsModel<1> m;
  m.n_modes = 1;
  m.dim = 1;
  m.obs_dim = 1;
  m.n_obs_symbols = 1;
  m.inputs = {0.0, 1.0};
  m.A = {Mat<1>::Constant(s.a)};
  m.g = {{Vec<1>::Constant(s.g), Vec<1>::Constant(s.g - 0.4)}};
  m.V = Mat<1>::Constant(s.v);
  ObsMap<1> C(1, 1);
  C(0, 0) = s.c;
  m.C = {C};
  m.W = ObsMat<1>::Constant(1, 1, s.w);
  m.Tq = {{{1.0}}, {{1.0}}};
  m.Yq = {{1.0}};
  m.safe = {K};
  m.R_q = {1.0};
  m.mu0 = Vec<1>::Constant(0.4);
  m.P0 = Mat<1>::Constant(0.5);
  m.horizon = 2;
  m.validate(true);
  return m;
}

template <class F>
double simpson(F f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(lo + k * h);
  return s * h / 3.0;
}

template <class F, class G>
double relative_l1(F closed, G quad, double lo, double hi, int n) {
  double num = 0, den = 0;
  for (int k = 0; k <= n; ++k) {
    const double x = lo + k * (hi - lo) / n;
    const double q = quad(x);
    num += std::abs(closed(x) - q);
    den += std::abs(q);
  }
  return num / den;
}

ObsVec<1> obs1(double v) { return ObsVec<1>::Constant(1, v); }

double eval1(const ModeMixture<1>& mix, double x) { return mixture_evaluate(mix, Vec<1>::Constant(x), 0); }

Outcome quadrature() {
  const Box K = interval(-1.0, 2.0);
  const std::vector<Scalar> cases = {{0.9, 0.5, 0.3, 1.2, 0.4}, {1.1, -0.2, 0.6, 0.7, 0.2}, {0.6, 0.1, 0.15, 1.0, 0.8}};
  double worst_belief = 0.0, worst_alpha = 0.0;
  for (const auto& s : cases) {
    const auto m = scalar_model(s, K);
    for (int I : {1, 3, 6}) {
      const auto rbf = fit_indicator_rbf<1>({K}, {I});
      GmBelief<1> b(1);
      b[0] = {g1(0.7, 0.3, 0.5), g1(0.2, 1.4, 0.2)};
      const double y = 0.8;
      const auto out = gm_belief_update(m, rbf, b, 1, obs1(y), 0);
      const double g_u = s.g - 0.4;
      auto belief_quad = [&](double xn) {
        const double inner = simpson(
            [&](double x) { return eval1(rbf.mix, x) * npdf(xn, s.a * x + g_u, s.v) * eval1(b, x); }, -8.0, 10.0, 6000);
        return npdf(y, s.c * xn, s.w) * inner;
      };
      worst_belief = std::max(worst_belief, relative_l1([&](double x) { return eval1(out, x); }, belief_quad, -6.0, 8.0, 500));

      ModeMixture<1> next = rbf.mix;
      next[0].push_back(g1(0.3, 0.2, 0.8));
      const double y2 = 0.4;
      const auto alpha = gm_alpha_update(m, rbf, next, 0, obs1(y2), 0);
      auto alpha_quad = [&](double x) {
        const double inner = simpson(
            [&](double xn) { return eval1(next, xn) * npdf(y2, s.c * xn, s.w) * npdf(xn, s.a * x + s.g, s.v); }, -8.0,
            10.0, 6000);
        return eval1(rbf.mix, x) * inner;
      };
      worst_alpha = std::max(worst_alpha, relative_l1([&](double x) { return eval1(alpha, x); }, alpha_quad, -4.0, 5.0, 500));
    }
  }
  return {worst_belief <= 1e-5 && worst_alpha <= 1e-5,
          "max relative L1: belief operator " + fmt(worst_belief) + ", alpha operator " + fmt(worst_alpha) +
              " (limit 1e-5, " + std::to_string(cases.size() * 3) + " instances each)"};
}

Outcome closure_counts() {
  bool ok = true;
  std::string detail;
  {
    const Box K = interval(-1.0, 2.0);
    const auto m = scalar_model({0.9, 0.5, 0.3, 1.2, 0.4}, K);
    const auto rbf = fit_indicator_rbf<1>({K}, {1});
    GmBelief<1> s(1);
    s[0] = {g1(1.0, 0.0, 1.0)};
    const auto b = gm_belief_update(m, rbf, s, 0, obs1(0.1), 0)[0].size();
    const auto a = gm_alpha_update(m, rbf, s, 0, obs1(0.1), 0)[0].size();
    ok = ok && b == 1 && a == 1;
    detail += "(1,1,1): belief " + std::to_string(b) + ", alpha " + std::to_string(a) + " (expected 1); ";
  }
  {
    const auto m = thermostat_model();
    const auto rbf = fit_indicator_rbf<1>(m.safe, {3, 3});
    GmBelief<1> s(2);
    for (int q = 0; q < 2; ++q)
      for (int l = 0; l < 5; ++l) s[q].push_back(g1(0.1 + 0.01 * l, 18.0 + 0.7 * l, 0.3 + 0.1 * q));
    for (int u = 0; u < 2; ++u)
      for (int yq = 0; yq < 2; ++yq) {
        const auto b = gm_belief_update(m, rbf, s, u, obs1(19.0), yq);
        const auto a = gm_alpha_update(m, rbf, s, u, obs1(19.0), yq);
        for (int q = 0; q < 2; ++q) ok = ok && b[q].size() == 30 && a[q].size() == 30;
      }
    detail += "(2,3,5): every mode has 30 belief and 30 alpha components for all inputs and symbols (expected 30)";
  }
  return {ok, detail};
}

Outcome delta_i_trend() {
  const Box K = interval(17.5, 22.0);
  std::vector<double> d;
  for (int I : {10, 30, 100, 400}) d.push_back(fit_indicator_rbf<1>({K}, {I}).delta_I);
  bool ok = true;
  for (std::size_t i = 1; i < d.size(); ++i) ok = ok && d[i] < d[i - 1];
  return {ok, "delta_I for I_q = 10, 30, 100, 400: " + fmt(d[0]) + ", " + fmt(d[1]) + ", " + fmt(d[2]) + ", " + fmt(d[3]) +
                  " (strictly decreasing required)"};
}

// ---------------------------------------------------------------------------
// Structural invariants.

Outcome invariants(const BenchmarkRun& finite, const std::string& finite_rerun_body) {
  std::vector<std::string> failed;
  const auto m = thermostat_model();
  const auto G = build_state_grid(m, 0.1);
  const auto Y = build_obs_grid(m, 0.5, 0.05, interval(16, 24));

  double row_err = 0.0;
  for (int u = 0; u < 2; ++u) {
    const MatX T = tau_delta_matrix(m, G, u);
    for (int z = 0; z < T.rows(); ++z) row_err = std::max(row_err, std::abs(T.row(z).sum() - 1.0));
    if (T.minCoeff() < 0.0) failed.push_back("negative transition entry");
  }
  if (row_err > 1e-12) failed.push_back("row sums off by " + fmt(row_err));

  const auto P = build_finite_pomdp(m, G, Y);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(17.0, 22.5);
  double norm_err = 0.0;
  VecX b = P.rho;
  for (int k = 0; k < 40; ++k) {
    try {
      const auto r = finite_belief_update(m, G, P, b, k % 2, obs1(U(rng)), k % 2);
      norm_err = std::max(norm_err, std::abs(r.belief.sum() - 1.0));
      b = r.belief;
    } catch (const DegenerateObservation&) {
      b = P.rho;
    }
  }
  if (norm_err > 1e-9) failed.push_back("finite belief normalization off by " + fmt(norm_err));

  FiniteBackend<1> be(m, G, Y);
  const auto sets = sample_belief_sets(m, be, 20, 5);
  const auto sol = solve(be, sets, be.initial_belief(m));
  double convex_violation = 0.0;
  for (int n = 0; n <= m.horizon; ++n) {
    const auto& lv = sol.policy.levels[static_cast<std::size_t>(n)];
    const auto& pts = sets.levels[static_cast<std::size_t>(n)];
    std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
    for (int k = 0; k < 20; ++k) {
      const auto& b1 = pts[pick(rng)];
      const auto& b2 = pts[pick(rng)];
      for (double lam : {0.25, 0.5, 0.75}) {
        const VecX mix = lam * b1 + (1 - lam) * b2;
        const double lhs = evaluate_value(be, lv, mix).value;
        const double rhs = lam * evaluate_value(be, lv, b1).value + (1 - lam) * evaluate_value(be, lv, b2).value;
        convex_violation = std::max(convex_violation, lhs - rhs);
      }
    }
  }
  if (convex_violation > 1e-12) failed.push_back("convexity violated by " + fmt(convex_violation));

  std::uniform_real_distribution<double> V(0.0, 1.0);
  for (int cells = 3; cells <= 5; ++cells) {
    const auto Q = random_pomdp(rng, cells);
    std::vector<FiniteAlpha> set = {finite_terminal_alpha(Q)};
    set[0].values *= 0.3;
    double prev = alpha_value(finite_alpha_backup(Q, set, Q.rho), Q.rho);
    for (int k = 0; k < 20; ++k) {
      VecX vals(cells);
      for (int z = 0; z < cells; ++z) vals(z) = V(rng);
      set.push_back({vals, k % 2});
      const double v = alpha_value(finite_alpha_backup(Q, set, Q.rho), Q.rho);
      if (v < prev - 1e-15) failed.push_back("backup not monotone");
      prev = v;
    }
  }

  std::normal_distribution<double> N(0, 1);
  auto random_cov = [&] {
    Mat<2> B;
    B << N(rng), N(rng), N(rng), N(rng);
    return Mat<2>(B * B.transpose() + 0.3 * Mat<2>::Identity());
  };
  double prod_err = 0.0, push_err = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const GaussianComponent<2> c1{1.0, Vec<2>(N(rng), N(rng)), random_cov()};
    const GaussianComponent<2> c2{1.0, Vec<2>(N(rng), N(rng)), random_cov()};
    const auto r = product(c1, c2);
    Mat<2> A;
    A << N(rng) + 2.0, N(rng), N(rng), N(rng) - 2.0;
    const Vec<2> off(N(rng), N(rng)), y(N(rng), N(rng));
    const Mat<2> Pc = random_cov();
    const auto pf = affine_pushforward<2>(y, A, off, Pc);
    for (int k = 0; k < 100; ++k) {
      const Vec<2> x(1.5 * N(rng), 1.5 * N(rng));
      const double lhs = component_density(c1, x) * component_density(c2, x);
      prod_err = std::max(prod_err, std::abs(lhs - r.scale * component_density(r.out, x)) / (std::abs(lhs) + 1e-300));
      const double lp = std::exp(gauss_logpdf0((y - (A * x + off)).eval(), Pc));
      push_err = std::max(push_err, std::abs(lp - pf.weight * component_density(pf, x)) / (std::abs(lp) + 1e-300));
    }
  }
  if (prod_err > 1e-8) failed.push_back("product identity off by " + fmt(prod_err));
  if (push_err > 1e-8) failed.push_back("pushforward identity off by " + fmt(push_err));

  if (finite.mc_body != finite_rerun_body || finite.mc_body.empty()) failed.push_back("MC CSV differs between reruns");

  Outcome o{failed.empty(), ""};
  o.detail = "transition rows " + fmt(row_err) + " (1e-12), belief sums " + fmt(norm_err) + " (1e-9), convexity " +
             fmt(std::max(convex_violation, 0.0)) + " (1e-12), product " + fmt(prod_err) + " and pushforward " +
             fmt(push_err) + " relative (1e-8), backup monotone, same-seed MC CSV byte-identical";
  for (const auto& f : failed) o.detail += "; " + f;
  return o;
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = benchmark_config();

  auto finite = finite_benchmark(true);
  auto gm10 = gaussian_benchmark(10, true);
  auto gm30 = gaussian_benchmark(30, false);

  report("threshold policy", threshold({finite, gm10, gm30}, cfg.sweep.step));
  report("lower-bound soundness (finite)", soundness(finite));
  report("lower-bound soundness (gaussian)", soundness(gm10));
  report("brute-force equivalence", brute_force());
  report("gaussian closure counts", closure_counts());
  report("quadrature equivalence", quadrature());
  report("delta_I trend", delta_i_trend());
  report("structural invariants", invariants(finite, finite_benchmark(true).mc_body));

  std::cout << "total " << fmt(seconds_since(t0), 4) << " s, " << failures << " failing" << std::endl;
  return failures == 0 ? 0 : 1;
}
