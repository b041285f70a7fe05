#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "dae_asym/errors.hpp"
#include "dae_asym/metrics.hpp"
#include "dae_asym/mixture.hpp"
#include "dae_asym/rng.hpp"
#include "oracles.hpp"

using namespace dae;

TEST_CASE("isotropic binary measure carries the right moments") {
  auto nu = isotropic_binary_measure(0.09, 1.0, 700);
  nu.validate();
  CHECK(nu.K() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(nu.gamma_mean(k) == doctest::Approx(0.09).epsilon(1e-14));
    CHECK(nu.tau_sq_mean(k) == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(nu.tau_mean(0) == doctest::Approx(std::sqrt(700.0) / 700.0).epsilon(1e-12));
  CHECK(nu.tau_mean(1) == doctest::Approx(-nu.tau_mean(0)).epsilon(1e-12));
}

TEST_CASE("concrete isotropic mixture matches its compressed measure") {
  MixtureSpec mix = isotropic_binary_mixture(0.09, 1.0, 60, 3);
  mix.validate();
  CHECK(mix.K() == 2);
  CHECK(mix.means[0].squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((mix.means[0] + mix.means[1]).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((mix.covariances[0] - 0.09 * Eigen::MatrixXd::Identity(60, 60))
            .cwiseAbs()
            .maxCoeff() < 1e-14);

  SpectralMeasure nu = build_spectral_measure(mix);
  SpectralMeasure ref = isotropic_binary_measure(0.09, 1.0, 60);
  ClusterMoments a = moments_of(nu), b = moments_of(ref);
  for (int k = 0; k < 2; ++k) {
    CHECK(a.tau_sq[k] == doctest::Approx(b.tau_sq[k]).epsilon(1e-10));
    CHECK(a.gamma_mean[k] == doctest::Approx(b.gamma_mean[k]).epsilon(1e-10));
  }
}

TEST_CASE("spectral measure preserves trace and mean norms") {
  Rng rng(21);
  int d = 18;
  Eigen::MatrixXd A = rng.normal_mat(d, d);
  Eigen::MatrixXd cov = A * A.transpose() / d;
  MixtureSpec mix;
  mix.weights = Eigen::VectorXd::Constant(2, 0.5);
  mix.means = {rng.normal_vec(d), rng.normal_vec(d)};
  mix.covariances = {cov, 2.0 * cov};  // commuting pair
  SpectralMeasure nu = build_spectral_measure(mix);
  nu.validate();
  CHECK(nu.gamma_mean(0) == doctest::Approx(cov.trace() / d).epsilon(1e-10));
  CHECK(nu.gamma_mean(1) == doctest::Approx(2.0 * cov.trace() / d).epsilon(1e-10));
  CHECK(nu.tau_sq_mean(0) == doctest::Approx(mix.means[0].squaredNorm()).epsilon(1e-10));
  CHECK(nu.tau_sq_mean(1) == doctest::Approx(mix.means[1].squaredNorm()).epsilon(1e-10));
}

TEST_CASE("non-commuting covariances are rejected") {
  MixtureSpec mix;
  mix.weights = Eigen::VectorXd::Constant(2, 0.5);
  mix.means = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  Eigen::MatrixXd s1(2, 2), s2(2, 2);
  s1 << 2.0, 0.0, 0.0, 0.5;
  s2 << 1.25, 0.75, 0.75, 1.25;  // rotated 45 degrees
  mix.covariances = {s1, s2};
  CHECK_THROWS_AS(build_spectral_measure(mix), CommutativityViolation);
}

TEST_CASE("sample_dataset applies the corruption convention") {
  MixtureSpec mix = isotropic_binary_mixture(0.09, 1.0, 30, 9);
  double delta = 0.37;
  Dataset ds = sample_dataset(mix, 4000, delta, 1234);
  CHECK(ds.n() == 4000);
  CHECK(ds.d() == 30);
  CHECK(ds.delta == delta);

  // noisy - sqrt(1-delta) clean is iid N(0, delta I) independent of clean
  Eigen::MatrixXd eps = ds.noisy - std::sqrt(1.0 - delta) * ds.clean;
  double var = eps.array().square().mean();
  CHECK(var == doctest::Approx(delta).epsilon(0.05));
  double cross = (eps.array() * ds.clean.array()).mean();
  CHECK(std::abs(cross) < 0.01);

  // labels are balanced-ish and consistent with the signed means
  int n1 = (ds.labels.array() == 1).count();
  CHECK(n1 > 1500);
  CHECK(n1 < 2500);
  for (int i = 0; i < 50; ++i) {
    int lab = ds.labels[i];
    double proj = ds.clean.row(i).dot(mix.means[lab]);
    CHECK(proj > 0.3);  // sigma = 0.3 around |mu| = 1: wrong sign is ~8 sigma
  }
  // deterministic regeneration
  Dataset ds2 = sample_dataset(mix, 4000, delta, 1234);
  CHECK((ds.clean - ds2.clean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ds.noisy - ds2.noisy).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("empirical cluster stats on a hand example") {
  Eigen::MatrixXd x(5, 2);
  x << 1.0, 0.0, 3.0, 2.0, 2.0, 1.0,  // label 0: mean (2,1)
      -1.0, 4.0, -3.0, 6.0;           // label 7: mean (-2,5)
  Eigen::VectorXi labels(5);
  labels << 0, 0, 0, 7, 7;
  MixtureSpec emp = empirical_cluster_stats(x, labels);
  CHECK(emp.K() == 2);
  CHECK(emp.weights[0] == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(emp.means[0][0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(emp.means[0][1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(emp.means[1][0] == doctest::Approx(-2.0).epsilon(1e-14));
  // unbiased covariance of {1,3,2} is 1
  CHECK(emp.covariances[0](0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(emp.covariances[0](0, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(emp.covariances[1](0, 0) == doctest::Approx(2.0).epsilon(1e-14));

  Eigen::VectorXi bad(5);
  bad << 0, 0, 0, 0, 7;
  CHECK_THROWS_AS(empirical_cluster_stats(x, bad), DegenerateCluster);
}

TEST_CASE("empirical stats concentrate on the truth") {
  MixtureSpec mix = isotropic_binary_mixture(0.25, 1.0, 10, 5);
  Dataset ds = sample_dataset(mix, 20000, 0.5, 77);
  MixtureSpec emp = empirical_cluster_stats(ds.clean, ds.labels);
  for (int k = 0; k < 2; ++k) {
    CHECK((emp.means[k] - mix.means[k]).norm() < 0.05);
    CHECK((emp.covariances[k] - mix.covariances[k]).cwiseAbs().maxCoeff() < 0.05);
  }
}

TEST_CASE("labeled csv round trip") {
  Eigen::MatrixXd x(3, 2);
  x << 0.25, -1.5, 3.0, 0.0625, -2.0, 0.5;
  Eigen::VectorXi labels(3);
  labels << 1, 0, 1;
  const char* path = "tmp_roundtrip.csv";
  write_labeled_csv(path, x, labels);
  LabeledData back = read_labeled_csv(path);
  CHECK((back.x - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.labels - labels).cwiseAbs().maxCoeff() == 0);
  LabeledData scaled = read_labeled_csv(path, 2.0);
  CHECK((scaled.x - 2.0 * x).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path);
}

TEST_CASE("csv reader rejects malformed input") {
  const char* path = "tmp_bad.csv";
  {
    std::ofstream f(path);
    f << "f0,f1,label\n1.0,2.0\n";
  }
  CHECK_THROWS_AS(read_labeled_csv(path), IoError);
  {
    std::ofstream f(path);
    f << "a,b,label\n1.0,2.0,0\n";
  }
  CHECK_THROWS_AS(read_labeled_csv(path), IoError);
  {
    std::ofstream f(path);
    f << "f0,f1,label\n1.0,zz,0\n";
  }
  CHECK_THROWS_AS(read_labeled_csv(path), IoError);
  std::remove(path);
  CHECK_THROWS_AS(read_labeled_csv("does_not_exist.csv"), IoError);
}

TEST_CASE("mixture validation catches broken invariants") {
  MixtureSpec mix = isotropic_binary_mixture(0.09, 1.0, 5, 1);
  mix.weights[0] = 0.7;  // no longer sums to 1
  CHECK_THROWS_AS(mix.validate(), ConfigError);
  mix = isotropic_binary_mixture(0.09, 1.0, 5, 1);
  mix.covariances[0](0, 0) = -1.0;
  CHECK_THROWS(mix.validate());
}
