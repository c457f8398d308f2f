#include "psafe/psafe.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace psafe;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int status = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  CmdResult r;
  const std::string cmd = std::string(PSAFE_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory holding a thermostat config with the given overrides.
struct Workdir {
  fs::path dir;
  explicit Workdir(const std::string& name, const Json& overrides = Json::object()) {
    dir = fs::temp_directory_path() / ("psafe_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    Json cfg = {{"model", model_to_json(thermostat_model())},
                {"representative", "center"},
                {"obs_region", {{16, 24}}},
                {"trials", 500}};
    cfg.update(overrides);
    std::ofstream(dir / "config.json") << cfg.dump(2);
  }
  std::string args(const std::string& sub, const std::string& extra = "") const {
    return sub + " --config " + (dir / "config.json").string() + " --out " + (dir / "out").string() + " " + extra;
  }
  fs::path out(const std::string& file) const { return dir / "out" / file; }
};

double delta_i_from(const std::string& output) {
  const auto pos = output.find("delta_I ");
  return pos == std::string::npos ? -1.0 : std::stod(output.substr(pos + 8));
}

}  // namespace

TEST(Config, RejectsUnknownKeysAndBadValues) {
  const Json model = model_to_json(thermostat_model());
  EXPECT_THROW(config_from_json({{"model", model}, {"delta_z", 1}}), ConfigError);
  EXPECT_THROW(validate_config(config_from_json({{"model", model}, {"iq", 0}})), ConfigError);
  EXPECT_THROW(validate_config(config_from_json({{"model", model}, {"delta_x", -0.1}})), ConfigError);
  EXPECT_THROW(validate_config(config_from_json({{"model", model}, {"backend", "exact"}})), ConfigError);
  EXPECT_NO_THROW(validate_config(config_from_json({{"model", model}})));
}

TEST(Config, HashTracksEveryField) {
  RunConfig a;
  a.model = model_to_json(thermostat_model());
  RunConfig b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.trials = 7;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(abstraction_hash(a), abstraction_hash(b));
  b.delta_y = 0.25;
  EXPECT_NE(abstraction_hash(a), abstraction_hash(b));
}

TEST(Config, ShippedBenchmarkConfigLoads) {
  const fs::path cfg_path = fs::path(PSAFE_SOURCE_DIR) / "configs" / "thermostat.json";
  const auto cfg = config_from_json(read_json_file(cfg_path), cfg_path.parent_path());
  EXPECT_NO_THROW(validate_config(cfg));
  Problem<1> p(cfg);
  EXPECT_EQ(p.m.horizon, 5);
  EXPECT_EQ(p.m.n_modes, 2);
}

TEST(Pipeline, HorizonZeroValueIsTerminalPairing) {
  Json mj = model_to_json(thermostat_model());
  mj["horizon"] = 0;
  RunConfig c;
  c.model = mj;
  c.obs_region = Box{VecX::Constant(1, 16), VecX::Constant(1, 24)};
  Problem<1> p(c);
  const auto be = make_finite_backend(p);
  const auto run = run_solve(p, be);
  const auto b0 = be.initial_belief(p.m);
  ASSERT_EQ(run.result.policy.levels.size(), 1u);
  const auto& terminal = run.result.policy.levels[0][0];
  EXPECT_NEAR(run.result.value_at_rho, terminal.values.dot(b0), 1e-12);
}

TEST(Pipeline, SweepRowsAndFlipHelpers) {
  std::vector<SweepRow> rows = {{17.5, 0.3, 1}, {17.6, 0.4, 1}, {17.7, 0.5, 0}, {17.8, 0.6, 0}};
  EXPECT_EQ(*first_flip(rows), 17.7);
  EXPECT_TRUE(single_flip(rows, 1, 0));
  rows.push_back({17.9, 0.6, 1});
  EXPECT_FALSE(single_flip(rows, 1, 0));
  EXPECT_FALSE(first_flip({{17.5, 0.3, 1}}).has_value());
  EXPECT_EQ(csv_body("# a=1\nx,y\n1,2\n# b\n"), "x,y\n1,2\n");
}

TEST(Cli, FitIndicatorErrorShrinksWithMoreComponents) {
  Workdir w("fit");
  const auto r10 = run_cli(w.args("fit-indicator", "--iq 10"));
  ASSERT_EQ(r10.status, 0) << r10.output;
  const auto file10 = slurp(w.out("rbf.json"));
  const auto again = run_cli(w.args("fit-indicator", "--iq 10"));
  EXPECT_EQ(slurp(w.out("rbf.json")), file10);
  const auto r30 = run_cli(w.args("fit-indicator", "--iq 30"));
  ASSERT_EQ(r30.status, 0) << r30.output;
  EXPECT_LT(delta_i_from(r30.output), delta_i_from(r10.output));
  EXPECT_GT(delta_i_from(r30.output), 0.0);
  const auto doc = Json::parse(file10);
  EXPECT_EQ(doc.at("schema"), "psafe.rbf/1");
  EXPECT_TRUE(doc.contains("config_hash"));
}

TEST(Cli, ConfigErrorsExitNonzero) {
  Workdir w("errors");
  EXPECT_NE(run_cli(w.args("fit-indicator", "--iq 0")).status, 0);
  EXPECT_NE(run_cli("solve --config " + (w.dir / "missing.json").string()).status, 0);
  EXPECT_NE(run_cli(w.args("simulate", "--policy " + (w.dir / "nope.json").string())).status, 0);
  EXPECT_NE(run_cli("").status, 0);
}

TEST(Cli, SolveSweepSimulateAreDeterministic) {
  Workdir w("determinism", {{"sweep", {{"lo", 18.0}, {"hi", 19.0}, {"step", 0.5}}}});
  ASSERT_EQ(run_cli(w.args("solve")).status, 0);
  const auto policy1 = slurp(w.out("policy.json"));
  const auto bounds1 = slurp(w.out("bounds.json"));
  ASSERT_EQ(run_cli(w.args("sweep")).status, 0);
  const auto sweep1 = slurp(w.out("sweep.csv"));
  ASSERT_EQ(run_cli(w.args("simulate")).status, 0);
  const auto sim1 = slurp(w.out("simulate.csv"));

  ASSERT_EQ(run_cli(w.args("solve")).status, 0);
  EXPECT_EQ(slurp(w.out("policy.json")), policy1);
  EXPECT_EQ(slurp(w.out("bounds.json")), bounds1);
  ASSERT_EQ(run_cli(w.args("sweep")).status, 0);
  EXPECT_EQ(csv_body(slurp(w.out("sweep.csv"))), csv_body(sweep1));
  ASSERT_EQ(run_cli(w.args("simulate")).status, 0);
  EXPECT_EQ(csv_body(slurp(w.out("simulate.csv"))), csv_body(sim1));

  const auto body = csv_body(sweep1);
  EXPECT_EQ(std::count(body.begin(), body.end(), '\n'), 4);  // header plus 18, 18.5, 19
  EXPECT_NE(sweep1.find("# config_hash="), std::string::npos);
  EXPECT_NE(sweep1.find("# seed=1"), std::string::npos);
  const auto pol = Json::parse(policy1);
  EXPECT_EQ(pol.at("schema"), "psafe.policy/1");
  EXPECT_EQ(Json::parse(bounds1).at("schema"), "psafe.bounds/1");
}

TEST(Cli, SinglePointSweepHasOneRow) {
  Workdir w("single", {{"sweep", {{"lo", 18.7}, {"hi", 18.7}, {"step", 0.1}}}});
  ASSERT_EQ(run_cli(w.args("sweep")).status, 0);
  const auto body = csv_body(slurp(w.out("sweep.csv")));
  EXPECT_EQ(std::count(body.begin(), body.end(), '\n'), 2);
  EXPECT_NE(body.find("\n18.7,"), std::string::npos);
}

TEST(Cli, SimulateRejectsMismatchedPolicy) {
  Workdir w("mismatch");
  ASSERT_EQ(run_cli(w.args("solve")).status, 0);
  EXPECT_EQ(run_cli(w.args("simulate", "--delta-y 0.25")).status, 2);
  auto doc = Json::parse(slurp(w.out("policy.json")));
  doc["model_hash"] = "0000000000000000";
  std::ofstream(w.out("policy.json")) << doc.dump();
  EXPECT_EQ(run_cli(w.args("simulate")).status, 2);
}

TEST(Cli, SeedFlagChangesSimulation) {
  Workdir w("seed");
  ASSERT_EQ(run_cli(w.args("solve")).status, 0);
  ASSERT_EQ(run_cli(w.args("simulate", "--trials 200")).status, 0);
  const auto a = csv_body(slurp(w.out("simulate.csv")));
  ASSERT_EQ(run_cli(w.args("simulate", "--trials 200 --seed 1 --policy " + w.out("policy.json").string())).status, 0);
  EXPECT_EQ(csv_body(slurp(w.out("simulate.csv"))), a);
  // The seed is not an abstraction setting, so the policy file stays valid.
  ASSERT_EQ(run_cli(w.args("simulate", "--trials 200 --seed 2")).status, 0);
  EXPECT_NE(csv_body(slurp(w.out("simulate.csv"))), a);
}
