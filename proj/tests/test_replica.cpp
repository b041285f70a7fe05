#include <doctest.h>

#include <cmath>

#include "dae_asym/errors.hpp"
#include "dae_asym/linalg.hpp"
#include "dae_asym/metrics.hpp"
#include "dae_asym/mixture.hpp"
#include "dae_asym/replica.hpp"
#include "dae_asym/rng.hpp"
#include "oracles.hpp"

using namespace dae;

namespace {

SpectralMeasure two_atom_measure() {
  SpectralMeasure nu;
  nu.d = 2;
  SpectralAtom a, b;
  a.weight = 0.4;
  a.gamma = Eigen::Vector2d(1.0, 2.0);
  a.tau = Eigen::Vector2d(1.5, 0.5);
  b.weight = 0.6;
  b.gamma = Eigen::Vector2d(0.5, 0.25);
  b.tau = Eigen::Vector2d(0.0, -1.0);
  nu.atoms = {a, b};
  return nu;
}

}  // namespace

TEST_CASE("stat_update against plain arithmetic on a two-atom measure") {
  SpectralMeasure nu = two_atom_measure();
  HatStats H = HatStats::zero(1, 2);
  H.q_hat(0, 0) = 0.2;
  H.V_hat(0, 0) = 0.3;
  H.q_hat_k[0](0, 0) = 0.1;
  H.q_hat_k[1](0, 0) = 0.4;
  H.V_hat_k[0](0, 0) = 0.2;
  H.V_hat_k[1](0, 0) = 0.1;
  H.m_hat_k[0][0] = 0.7;
  H.m_hat_k[1][0] = -0.3;
  const double lambda = 0.5;
  SummaryStats S = stat_update(H, nu, lambda);

  // the same sums written out longhand, atom by atom
  double q = 0, V = 0, q1 = 0, q2 = 0, V1 = 0, V2 = 0, m1 = 0, m2 = 0;
  for (const auto& atom : nu.atoms) {
    double M = lambda + 0.3 + atom.gamma[0] * 0.2 + atom.gamma[1] * 0.1;
    double R = 1.0 / M;
    double mbar = atom.tau[0] * 0.7 + atom.tau[1] * -0.3;
    double N = 0.2 + atom.gamma[0] * 0.1 + atom.gamma[1] * 0.4 + mbar * mbar;
    double RNR = R * N * R;
    q += atom.weight * RNR;
    V += atom.weight * R;
    q1 += atom.weight * atom.gamma[0] * RNR;
    q2 += atom.weight * atom.gamma[1] * RNR;
    V1 += atom.weight * atom.gamma[0] * R;
    V2 += atom.weight * atom.gamma[1] * R;
    m1 += atom.weight * atom.tau[0] * R * mbar;
    m2 += atom.weight * atom.tau[1] * R * mbar;
  }
  CHECK(S.q(0, 0) == doctest::Approx(q).epsilon(1e-14));
  CHECK(S.V(0, 0) == doctest::Approx(V).epsilon(1e-14));
  CHECK(S.q_k[0](0, 0) == doctest::Approx(q1).epsilon(1e-14));
  CHECK(S.q_k[1](0, 0) == doctest::Approx(q2).epsilon(1e-14));
  CHECK(S.V_k[0](0, 0) == doctest::Approx(V1).epsilon(1e-14));
  CHECK(S.V_k[1](0, 0) == doctest::Approx(V2).epsilon(1e-14));
  CHECK(S.m_k[0][0] == doctest::Approx(m1).epsilon(1e-14));
  CHECK(S.m_k[1][0] == doctest::Approx(m2).epsilon(1e-14));
}

TEST_CASE("alpha = 0 zeroes every conjugate") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 40);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(2, 0.5);
  SolverConfig cfg = SolverConfig::defaults_for(1);
  SummaryStats S = init_stats(nu, 1);
  HatStats H = hat_update(S, 0.2, 0.5, 0.0, rho, Activation::tanh_act(), cfg);
  CHECK(H.q_hat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(H.V_hat.cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < 2; ++k) {
    CHECK(H.q_hat_k[k].cwiseAbs().maxCoeff() == 0.0);
    CHECK(H.V_hat_k[k].cwiseAbs().maxCoeff() == 0.0);
    CHECK(H.m_hat_k[k].cwiseAbs().maxCoeff() == 0.0);
  }
  // the resulting stats are the bare resolvent: q = 0, V = 1/lambda
  double lambda = 0.1;
  SummaryStats S0 = stat_update(H, nu, lambda);
  CHECK(S0.q(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(S0.V(0, 0) == doctest::Approx(1.0 / lambda).epsilon(1e-12));
  CHECK(S0.m_k[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stat_update preserves positivity") {
  Rng rng(83);
  auto nu = isotropic_binary_measure(0.2, 1.0, 30);
  for (int rep = 0; rep < 50; ++rep) {
    HatStats H = HatStats::zero(1, 2);
    H.q_hat(0, 0) = rng.uniform();
    H.V_hat(0, 0) = rng.uniform();
    for (int k = 0; k < 2; ++k) {
      H.q_hat_k[k](0, 0) = rng.uniform();
      H.V_hat_k[k](0, 0) = rng.uniform() - 0.2;  // mildly negative allowed
      H.m_hat_k[k][0] = 2.0 * rng.uniform() - 1.0;
    }
    double lambda = 0.5 + rng.uniform();  // keeps the resolvent PD
    SummaryStats S = stat_update(H, nu, lambda);  // validates internally
    CHECK(min_eig_sym(S.q) >= -1e-12);
    CHECK(min_eig_sym(S.V) > 0.0);
    for (int k = 0; k < 2; ++k) {
      CHECK(min_eig_sym(S.q_k[k]) >= -1e-12);
      CHECK(min_eig_sym(S.V_k[k]) > 0.0);
    }
  }
}

TEST_CASE("skip strength closed form through the measure") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 100);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(2, 0.5);
  CHECK(skip_strength(nu, rho, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(skip_strength(nu, rho, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(skip_strength(nu, rho, 0.5) == doctest::Approx(0.116770).epsilon(1e-5));
}

TEST_CASE("hat_update is stable under quadrature doubling") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 100);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(2, 0.5);
  SummaryStats S = init_stats(nu, 1);
  double b_hat = skip_strength(nu, rho, 0.5);
  SolverConfig c40 = SolverConfig::defaults_for(1);
  SolverConfig c80 = c40;
  c80.quadrature = QuadratureSpec::gh(80);
  HatStats a = hat_update(S, b_hat, 0.5, 1.0, rho, Activation::tanh_act(), c40);
  HatStats b = hat_update(S, b_hat, 0.5, 1.0, rho, Activation::tanh_act(), c80);
  CHECK(std::abs(a.q_hat(0, 0) - b.q_hat(0, 0)) < 1e-6);
  CHECK(std::abs(a.V_hat(0, 0) - b.V_hat(0, 0)) < 1e-6);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(a.q_hat_k[k](0, 0) - b.q_hat_k[k](0, 0)) < 1e-6);
    CHECK(std::abs(a.V_hat_k[k](0, 0) - b.V_hat_k[k](0, 0)) < 1e-6);
    CHECK(std::abs(a.m_hat_k[k][0] - b.m_hat_k[k][0]) < 1e-6);
  }
}

TEST_CASE("monte carlo hats agree with gauss-hermite") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 100);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(2, 0.5);
  SummaryStats S = init_stats(nu, 1);
  double b_hat = skip_strength(nu, rho, 0.5);
  SolverConfig gh = SolverConfig::defaults_for(1);
  SolverConfig mc = gh;
  mc.quadrature = QuadratureSpec::mc(4096, 12);
  HatStats a = hat_update(S, b_hat, 0.5, 1.0, rho, Activation::tanh_act(), gh);
  HatStats b = hat_update(S, b_hat, 0.5, 1.0, rho, Activation::tanh_act(), mc);
  auto close = [](double x, double y) {
    return std::abs(x - y) < 0.01 * (1.0 + std::abs(x));
  };
  CHECK(close(a.q_hat(0, 0), b.q_hat(0, 0)));
  CHECK(close(a.V_hat(0, 0), b.V_hat(0, 0)));
  for (int k = 0; k < 2; ++k) {
    CHECK(close(a.q_hat_k[k](0, 0), b.q_hat_k[k](0, 0)));
    CHECK(close(a.V_hat_k[k](0, 0), b.V_hat_k[k](0, 0)));
    CHECK(close(a.m_hat_k[k][0], b.m_hat_k[k][0]));
  }
}

TEST_CASE("converged solutions re-check as fixed points") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 50);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(2, 0.5);
  SolverConfig cfg = SolverConfig::defaults_for(1);
  ReplicaSolution sol =
      solve_fixed_point(nu, rho, 1.0, 0.5, 0.1, Activation::tanh_act(), cfg);
  CHECK(sol.converged);
  CHECK(sol.residual <= cfg.tol);
  HatStats H = hat_update(sol.stats, sol.b_hat, 0.5, 1.0, rho,
                          Activation::tanh_act(), cfg);
  SummaryStats S1 = stat_update(H, nu, 0.1);
  double change = 0.0;
  change = std::max(change, (S1.q - sol.stats.q).cwiseAbs().maxCoeff());
  change = std::max(change, (S1.V - sol.stats.V).cwiseAbs().maxCoeff());
  for (int k = 0; k < 2; ++k) {
    change = std::max(change, (S1.q_k[k] - sol.stats.q_k[k]).cwiseAbs().maxCoeff());
    change = std::max(change, (S1.V_k[k] - sol.stats.V_k[k]).cwiseAbs().maxCoeff());
    change = std::max(change, (S1.m_k[k] - sol.stats.m_k[k]).cwiseAbs().maxCoeff());
  }
  CHECK(change < 1e-5);
  // solving twice is bitwise deterministic
  ReplicaSolution sol2 =
      solve_fixed_point(nu, rho, 1.0, 0.5, 0.1, Activation::tanh_act(), cfg);
  CHECK((sol.stats.q - sol2.stats.q).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sol.stats.m_k[0] - sol2.stats.m_k[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("huge ridge collapses the network to the skip") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 50);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(2, 0.5);
  SolverConfig cfg = SolverConfig::defaults_for(1);
  ReplicaSolution sol =
      solve_fixed_point(nu, rho, 1.0, 0.5, 1e6, Activation::tanh_act(), cfg);
  // q* is ~1/lambda^2 but the iteration stops at the residual tolerance
  CHECK(sol.stats.q(0, 0) < 1e-6);
  CHECK(std::abs(sol.stats.m_k[0][0]) < 1e-4);
  ClusterMoments mom = moments_of(nu);
  double mse = mse_theory(sol, mom, rho, 0.5, 50, Activation::tanh_act(),
                          cfg.quadrature);
  double circ = mse_rescaling(mom, rho, 0.5, 50, sol.b_hat);
  CHECK(std::abs(mse - circ) < 1e-6);
}

TEST_CASE("variant flags propagate to the solution") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 40);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(2, 0.5);
  SolverConfig cfg = SolverConfig::defaults_for(1);
  ReplicaSolution bn = solve_fixed_point(nu, rho, 1.0, 0.5, 0.1,
                                         Activation::tanh_act(), cfg,
                                         Variant::bottleneck);
  CHECK(bn.b_hat == 0.0);
  CHECK(bn.variant == Variant::bottleneck);
  ReplicaSolution rae =
      solve_rae(nu, rho, 1.0, 0.1, Activation::tanh_act(), cfg);
  CHECK(rae.b_hat == 0.0);
  CHECK(rae.variant == Variant::rae);
  CHECK(rae.hats.q_hat.cwiseAbs().maxCoeff() == 0.0);  // no x channel
  CHECK(min_eig_sym(rae.hats.V_hat) > 0.0);            // +alpha E[ss']
}

TEST_CASE("config errors are rejected early") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 40);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(2, 0.5);
  SolverConfig cfg = SolverConfig::defaults_for(1);
  CHECK_THROWS_AS(solve_fixed_point(nu, rho, 1.0, 0.5, 0.0,
                                    Activation::tanh_act(), cfg),
                  ConfigError);
  CHECK_THROWS_AS(solve_fixed_point(nu, rho, 1.0, 0.0, 0.1,
                                    Activation::tanh_act(), cfg),
                  DegenerateProblem);
  Eigen::VectorXd bad = Eigen::VectorXd::Constant(2, 0.4);
  CHECK_THROWS_AS(solve_fixed_point(nu, bad, 1.0, 0.5, 0.1,
                                    Activation::tanh_act(), cfg),
                  ConfigError);
}
