#include "psafe/finite_abstraction.hpp"
#include "psafe/model_json.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <random>

using namespace psafe;

namespace {

Box interval(double a, double b) { return Box{VecX::Constant(1, a), VecX::Constant(1, b)}; }

// Hand-built POMDP with 3 cells, 2 observation symbols plus psi_y, 2 inputs.
FinitePomdp hand_pomdp() {
  FinitePomdp P;
  P.n_cells = 3;
  P.n_obs = 3;
  MatX T0(4, 4), T1(4, 4);
  T0 << 0.5, 0.3, 0.1, 0.1,
        0.2, 0.5, 0.2, 0.1,
        0.0, 0.3, 0.5, 0.2,
        0.0, 0.0, 0.0, 1.0;
  T1 << 0.1, 0.1, 0.7, 0.1,
        0.6, 0.2, 0.0, 0.2,
        0.3, 0.3, 0.3, 0.1,
        0.0, 0.0, 0.0, 1.0;
  P.tau = {T0, T1};
  P.gamma = MatX(3, 3);
  P.gamma << 0.7, 0.4, 0.1,
             0.2, 0.5, 0.8,
             0.1, 0.1, 0.1;
  P.rho = VecX(4);
  P.rho << 0.3, 0.4, 0.2, 0.1;
  return P;
}

}  // namespace

TEST(Finite, ThermostatStateGrid) {
  const auto m = thermostat_model();
  const auto G = build_state_grid(m, 0.1);
  EXPECT_EQ(G.parts[0].size(), 45);
  EXPECT_EQ(G.parts[1].size(), 45);
  EXPECT_EQ(G.n_cells(), 90);
  EXPECT_NEAR(G.reps[0](0), 17.5, 1e-12);
  EXPECT_NEAR(G.reps[1](0), 17.6, 1e-12);
  EXPECT_NEAR(G.delta_x, 0.1, 1e-12);
  EXPECT_EQ(G.locate(Vec<1>::Constant(17.55), 1), 45);
  EXPECT_EQ(G.locate(Vec<1>::Constant(22.0), 0), 44);
  EXPECT_EQ(G.locate(Vec<1>::Constant(22.01), 0), G.psi());
  const auto Gc = build_state_grid(m, 0.1, RepresentativePoint::Center);
  EXPECT_NEAR(Gc.reps[0](0), 17.55, 1e-12);
  EXPECT_EQ(build_state_grid(m, 10.0).parts[0].size(), 1);
}

TEST(Finite, TwoDimensionalGridGeometry) {
  PodtshsModel<2> m;
  m.n_modes = 1;
  m.dim = 2;
  m.safe = {Box{VecX::Zero(2), VecX::Constant(2, 0.3)}};
  const auto G = build_state_grid(m, 0.1);
  EXPECT_EQ(G.n_cells(), 9);
  EXPECT_NEAR(G.delta_x, std::sqrt(2.0) * 0.1, 1e-12);
  // Cells tile the box without overlap.
  double vol = 0;
  for (const auto& c : G.cells) vol += c.volume();
  EXPECT_NEAR(vol, 0.09, 1e-14);
  EXPECT_THROW(build_state_grid(m, 0.0), ContractViolation);
}

TEST(Finite, TauRowsAreStochasticAndPsiAbsorbing) {
  const auto m = thermostat_model();
  const auto G = build_state_grid(m, 0.1);
  for (int u = 0; u < 2; ++u) {
    const MatX T = tau_delta_matrix(m, G, u);
    for (int z = 0; z < T.rows(); ++z) {
      EXPECT_NEAR(T.row(z).sum(), 1.0, 1e-12);
      EXPECT_GE(T.row(z).minCoeff(), 0.0);
    }
    EXPECT_EQ(T(G.psi(), G.psi()), 1.0);
    EXPECT_EQ(T.row(G.psi()).head(G.n_cells()).cwiseAbs().sum(), 0.0);
  }
}

TEST(Finite, TauEntryMatchesHandComputation) {
  const auto m = thermostat_model();
  const auto G = build_state_grid(m, 0.1);
  const MatX T = tau_delta_matrix(m, G, 1);
  // From cell 20 of mode 0 (x = 19.5) to cell 12 of mode 1 ([18.7, 18.8]) under u = 1.
  const double x = 19.5;
  const double mean = 0.9833 * x + 0.8 + 0.1002;
  const double sd = std::sqrt(0.5);
  const double mass = 0.5 * (std::erf((18.8 - mean) / (sd * std::sqrt(2.0))) - std::erf((18.7 - mean) / (sd * std::sqrt(2.0))));
  EXPECT_NEAR(T(20, 45 + 12), 0.9 * mass, 1e-14);
  EXPECT_NEAR(tau_delta(m, G, 45 + 12, 20, 1), T(20, 45 + 12), 1e-15);
  EXPECT_NEAR(tau_delta(m, G, G.psi(), 20, 1), T(20, G.psi()), 1e-13);
  EXPECT_EQ(tau_delta(m, G, G.psi(), G.psi(), 0), 1.0);
  EXPECT_EQ(tau_delta(m, G, 3, G.psi(), 0), 0.0);
}

TEST(Finite, DynamicsLeavingKGoToPsi) {
  auto m = thermostat_model();
  for (auto& gq : m.g)
    for (auto& v : gq) v(0) += 20 * std::sqrt(0.5) + 30.0;
  const auto G = build_state_grid(m, 0.1);
  const MatX T = tau_delta_matrix(m, G, 0);
  for (int z = 0; z < G.n_cells(); ++z) EXPECT_GT(T(z, G.psi()), 1 - 1e-12);
}

TEST(Finite, RhoDeltaTailsAndSymmetry) {
  auto m = thermostat_model();
  m.P0 = Mat<1>::Constant(0.2 * 0.2 / 4.0);
  m.mu0 = Vec<1>::Constant(19.75);
  auto G = build_state_grid(m, 0.1, RepresentativePoint::Center);
  VecX r = rho_delta(m, G);
  EXPECT_LT(r(G.psi()), 1e-12);
  EXPECT_NEAR(r.sum(), 1.0, 1e-12);
  // Symmetric about the box centre: cell i mirrors cell 44 - i in mode 0.
  for (int i = 0; i < 45; ++i) EXPECT_NEAR(r(i), r(44 - i), 1e-12);
  EXPECT_EQ(r.segment(45, 45).sum(), 0.0);
  m.mu0 = Vec<1>::Constant(60.0);
  r = rho_delta(m, G);
  EXPECT_NEAR(r(G.psi()), 1.0, 1e-12);
}

TEST(Finite, ObservationGridExamples) {
  const auto m = thermostat_model();
  const auto Y = build_obs_grid(m, 0.5, 0.05, interval(16, 24));
  EXPECT_EQ(Y.regions[0].size(), 16);
  EXPECT_EQ(Y.size(), 32);
  EXPECT_NEAR(Y.delta_y, 0.5, 1e-12);
  EXPECT_NEAR(Y.lambda_bar, 8.0, 1e-12);
  // Achieved tail mass: worst state is x = 17.5.
  const double sd = std::sqrt(0.5);
  EXPECT_NEAR(Y.epsilon_achieved, normal_tail(1.5 / sd) + normal_tail(6.5 / sd), 1e-12);
  // Representatives sit on the cell end farther from the image centre 19.75.
  EXPECT_EQ(Y.cells[0].rep(0), 16.0);
  EXPECT_EQ(Y.cells[15].rep(0), 24.0);
  EXPECT_EQ(Y.cells[7].rep(0), 19.5);  // cell [19.5, 20] contains the centre
  EXPECT_EQ(Y.locate(ObsVec<1>::Constant(1, 19.7), 1), 16 + 7);
  EXPECT_EQ(Y.locate(ObsVec<1>::Constant(1, 30.0), 1), Y.psi());

  auto unit = m;
  unit.W = ObsMat<1>::Constant(1, 1, 1.0);
  const auto Yi = build_obs_grid(unit, 0.5, 1e-6);
  EXPECT_LE(Yi.regions[0].box.lo(0), 17.5 - 4.75);
  EXPECT_GE(Yi.regions[0].box.hi(0), 22.0 + 4.75);
  EXPECT_LT(Yi.epsilon_achieved, 1e-6);
}

TEST(Finite, GammaColumnsSumToOne) {
  const auto m = thermostat_model();
  const auto G = build_state_grid(m, 0.1);
  const auto Y = build_obs_grid(m, 0.5, 0.05, interval(16, 24));
  const MatX gam = gamma_delta_matrix(m, G, Y);
  for (int z = 0; z < G.n_cells(); ++z) EXPECT_NEAR(gam.col(z).sum(), 1.0, 1e-12);
  // Mode 0 cells never emit symbol 1.
  EXPECT_EQ(gam.block(16, 0, 16, 45).cwiseAbs().sum(), 0.0);
}

TEST(Finite, BeliefUpdateMatchesHandBayes) {
  const auto P = hand_pomdp();
  VecX b(4);
  b << 0.2, 0.5, 0.2, 0.1;
  const int u = 1, w = 0;
  // Hand enumeration.
  double num[3] = {0, 0, 0};
  double mpsi = b(3);
  for (int z = 0; z < 3; ++z) mpsi += P.tau[1](z, 3) * b(z);
  for (int zp = 0; zp < 3; ++zp) {
    double pred = 0;
    for (int z = 0; z < 3; ++z) pred += P.tau[1](z, zp) * b(z);
    num[zp] = P.gamma(w, zp) * pred;
  }
  const double s = num[0] + num[1] + num[2];
  const double p = s / (1 - mpsi);
  const auto r = finite_belief_update_discrete(P, b, u, w);
  EXPECT_NEAR(r.likelihood, p, 1e-15);
  for (int z = 0; z < 3; ++z) EXPECT_NEAR(r.belief(z), num[z] / p, 1e-15);
  EXPECT_NEAR(r.belief(3), mpsi, 1e-15);
  EXPECT_NEAR(r.belief.sum(), 1.0, 1e-12);
}

TEST(Finite, BeliefUpdateEdgeCases) {
  const auto P = hand_pomdp();
  VecX psi = VecX::Zero(4);
  psi(3) = 1.0;
  const auto r = finite_belief_update_discrete(P, psi, 0, 1);
  EXPECT_EQ(r.belief(3), 1.0);
  EXPECT_EQ(r.likelihood, 0.0);
  // Constant likelihood cancels: output is the propagated belief restricted to K.
  VecX b = VecX::Constant(4, 0.25);
  b(3) = 0.25;
  const auto c = finite_update_with_likelihood(P, b, 0, VecX::Constant(3, 0.37));
  const VecX pred = P.tau[0].transpose() * b;
  for (int z = 0; z < 3; ++z) EXPECT_NEAR(c.belief(z), pred(z), 1e-15);
  EXPECT_THROW(finite_update_with_likelihood(P, b, 0, VecX::Zero(3)), DegenerateObservation);
}

TEST(Finite, ThermostatBeliefUpdateNormalized) {
  const auto m = thermostat_model();
  const auto G = build_state_grid(m, 0.1);
  const auto Y = build_obs_grid(m, 0.5, 0.05, interval(16, 24));
  const auto P = build_finite_pomdp(m, G, Y);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(17.0, 22.5);
  VecX b = P.rho;
  for (int k = 0; k < 20; ++k) {
    const int u = k % 2;
    ObsVec<1> y(1);
    y(0) = U(rng);
    try {
      const auto r = finite_belief_update(m, G, P, b, u, y, u);
      EXPECT_NEAR(r.belief.sum(), 1.0, 1e-9);
      EXPECT_GE(r.belief.minCoeff(), 0.0);
      b = r.belief;
    } catch (const DegenerateObservation&) {
    }
  }
}

TEST(Finite, BackupTrivialChains) {
  FinitePomdp P;
  P.n_cells = 2;
  P.n_obs = 2;
  MatX T(3, 3);
  T << 0.4, 0.6, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0;
  P.tau = {T, T};
  P.gamma = MatX(2, 2);
  P.gamma << 0.3, 0.9, 0.7, 0.1;
  VecX b(3);
  b << 0.5, 0.5, 0.0;
  const auto a = finite_alpha_backup(P, {finite_terminal_alpha(P)}, b);
  EXPECT_NEAR(a.values(0), 1.0, 1e-15);
  EXPECT_NEAR(a.values(1), 1.0, 1e-15);
  MatX D(3, 3);
  D << 0, 0, 1, 0, 0, 1, 0, 0, 1;
  P.tau = {D, D};
  const auto z = finite_alpha_backup(P, {finite_terminal_alpha(P)}, b);
  EXPECT_EQ(z.values.cwiseAbs().sum(), 0.0);
}

TEST(Finite, BackupEqualsExhaustiveEnumeration) {
  FinitePomdp P;
  P.n_cells = 2;
  P.n_obs = 2;
  MatX T0(3, 3), T1(3, 3);
  T0 << 0.6, 0.2, 0.2, 0.1, 0.7, 0.2, 0, 0, 1;
  T1 << 0.3, 0.6, 0.1, 0.5, 0.1, 0.4, 0, 0, 1;
  P.tau = {T0, T1};
  P.gamma = MatX(2, 2);
  P.gamma << 0.8, 0.3, 0.2, 0.7;
  std::vector<FiniteAlpha> next = {{(VecX(2) << 1.0, 0.0).finished(), 0},
                                   {(VecX(2) << 0.0, 1.0).finished(), 1},
                                   {(VecX(2) << 0.55, 0.55).finished(), 0}};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 200; ++t) {
    VecX b(3);
    b << U(rng), U(rng), U(rng) * 0.3;
    b /= b.sum();
    // Enumerate all |U| * |Gamma|^|W| candidates.
    double best = -1;
    for (int u = 0; u < 2; ++u)
      for (int j0 = 0; j0 < 3; ++j0)
        for (int j1 = 0; j1 < 3; ++j1) {
          const int js[2] = {j0, j1};
          VecX cand = VecX::Zero(2);
          for (int z = 0; z < 2; ++z)
            for (int w = 0; w < 2; ++w)
              for (int zp = 0; zp < 2; ++zp)
                cand(z) += next[js[w]].values(zp) * P.gamma(w, zp) * P.tau[u](z, zp);
          best = std::max(best, cand.dot(b.head(2)));
        }
    const auto a = finite_alpha_backup(P, next, b);
    EXPECT_NEAR(alpha_value(a, b), best, 1e-14);
  }
}

TEST(Finite, BackupMonotoneInAlphaSet) {
  const auto P = hand_pomdp();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<FiniteAlpha> set = {finite_terminal_alpha(P)};
  set[0].values *= 0.3;
  VecX b = P.rho;
  double prev = alpha_value(finite_alpha_backup(P, set, b), b);
  for (int k = 0; k < 30; ++k) {
    set.push_back({(VecX(3) << U(rng), U(rng), U(rng)).finished(), k % 2});
    const double v = alpha_value(finite_alpha_backup(P, set, b), b);
    EXPECT_GE(v, prev - 1e-15);
    prev = v;
  }
}

TEST(Finite, TauCacheRoundTrip) {
  const auto m = thermostat_model();
  const auto G = build_state_grid(m, 0.5);
  std::vector<MatX> tau = {tau_delta_matrix(m, G, 0), tau_delta_matrix(m, G, 1)};
  const std::string path = ::testing::TempDir() + "tau_cache.bin";
  ASSERT_TRUE(save_tau_cache(path, "key-1", tau));
  const auto back = load_tau_cache(path, "key-1");
  ASSERT_TRUE(back.has_value());
  ASSERT_EQ(back->size(), 2u);
  EXPECT_EQ(((*back)[1] - tau[1]).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_FALSE(load_tau_cache(path, "other").has_value());
  std::remove(path.c_str());
}
