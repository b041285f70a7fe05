#include <cmath>
#include <limits>

#include "dae_asym/errors.hpp"
#include "dae_asym/linalg.hpp"
#include "dae_asym/metrics.hpp"

namespace dae {

void ClusterMoments::validate() const {
  if (K() < 1 || gamma_mean.size() != K())
    throw ConfigError("ClusterMoments: inconsistent sizes");
  for (int k = 0; k < K(); ++k)
    if (tau_sq[k] < 0.0 || gamma_mean[k] < 0.0)
      throw ConfigError("ClusterMoments: negative moment");
}

ClusterMoments moments_of(const SpectralMeasure& nu) {
  nu.validate();
  const int K = nu.K();
  ClusterMoments m;
  m.tau_sq = Eigen::VectorXd::Zero(K);
  m.gamma_mean = Eigen::VectorXd::Zero(K);
  for (const auto& atom : nu.atoms)
    for (int k = 0; k < K; ++k) {
      m.tau_sq[k] += atom.weight * atom.tau[k] * atom.tau[k];
      m.gamma_mean[k] += atom.weight * atom.gamma[k];
    }
  return m;
}

ClusterMoments moments_of(const MixtureSpec& mix) {
  mix.validate();
  const int K = mix.K();
  ClusterMoments m;
  m.tau_sq = Eigen::VectorXd::Zero(K);
  m.gamma_mean = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < K; ++k) {
    m.tau_sq[k] = mix.means[k].squaredNorm();
    m.gamma_mean[k] = mix.covariances[k].trace() / mix.d();
  }
  return m;
}

namespace {
void check_weights(const ClusterMoments& mom, const Eigen::VectorXd& rho) {
  mom.validate();
  if (rho.size() != mom.K())
    throw ConfigError("metrics: weights/moments K mismatch");
  if (std::abs(rho.sum() - 1.0) > 1e-10 || rho.minCoeff() < 0.0)
    throw ConfigError("metrics: cluster weights must be a distribution");
}

double effective_delta(const ReplicaSolution& sol, double delta) {
  if (sol.variant == Variant::rae) {
    if (delta != 0.0)
      throw ConfigError("metrics: rae solutions require delta = 0");
    return 0.0;
  }
  if (!(delta > 0.0 && delta <= 1.0))
    throw ConfigError("metrics: delta must lie in (0,1]");
  return delta;
}
}  // namespace

double mse_rescaling(const ClusterMoments& mom, const Eigen::VectorXd& rho,
                     double delta, int d, double b_hat) {
  check_weights(mom, rho);
  if (d < 1) throw ConfigError("mse_rescaling: d must be >= 1");
  if (delta < 0.0 || delta > 1.0)
    throw ConfigError("mse_rescaling: delta must lie in [0,1]");
  const double c1 = 1.0 - std::sqrt(1.0 - delta) * b_hat;
  double second = 0.0;
  for (int k = 0; k < mom.K(); ++k)
    second += rho[k] * (mom.tau_sq[k] + d * mom.gamma_mean[k]);
  return d * delta * b_hat * b_hat + c1 * c1 * second;
}

double mse_rescaling(const SpectralMeasure& nu, const Eigen::VectorXd& rho,
                     double delta, int d, double b_hat) {
  return mse_rescaling(moments_of(nu), rho, delta, d, b_hat);
}

double mse_theory(const ReplicaSolution& sol, const ClusterMoments& mom,
                  const Eigen::VectorXd& rho, double delta, int d,
                  const Activation& act, const QuadratureSpec& quad) {
  check_weights(mom, rho);
  if (!sol.converged) throw ConfigError("mse_theory: solution not converged");
  const double dlt = effective_delta(sol, delta);
  const SummaryStats& S = sol.stats;
  if (S.K() != mom.K()) throw ConfigError("mse_theory: K mismatch");
  const int p = S.p();
  const double b = sol.b_hat;
  const double sq1m = std::sqrt(1.0 - dlt), sqd = std::sqrt(dlt);
  const double c1 = 1.0 - sq1m * b;

  const Eigen::MatrixXd Qs = sqrt_psd(S.q);
  GaussGrid grid(quad, 2 * p);
  double corr = 0.0;
  Eigen::VectorXd z;
  double w;
  for (int k = 0; k < mom.K(); ++k) {
    const Eigen::MatrixXd Qk = sqrt_psd(S.q_k[k]);
    double acc = 0.0;
    for (int i = 0; i < grid.count(); ++i) {
      grid.node(i, z, w);
      Eigen::VectorXd a = S.m_k[k] + Qk * z.head(p);
      Eigen::VectorXd g = sqd * (Qs * z.tail(p));
      Eigen::VectorXd s = act.f(Eigen::VectorXd(sq1m * a + g));
      acc += w * (s.dot(S.q * s) - 2.0 * s.dot(c1 * a - b * g));
    }
    corr += rho[k] * acc;
  }
  return mse_rescaling(mom, rho, dlt, d, b) + corr;
}

double mse_theory(const ReplicaSolution& sol, const SpectralMeasure& nu,
                  const Eigen::VectorXd& rho, double delta, int d,
                  const Activation& act, const QuadratureSpec& quad) {
  return mse_theory(sol, moments_of(nu), rho, delta, d, act, quad);
}

Eigen::MatrixXd cosine_theory(const ReplicaSolution& sol,
                              const ClusterMoments& mom) {
  mom.validate();
  const SummaryStats& S = sol.stats;
  if (S.K() != mom.K()) throw ConfigError("cosine_theory: K mismatch");
  const int p = S.p(), K = S.K();
  Eigen::MatrixXd theta(p, K);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < p; ++i)
    for (int k = 0; k < K; ++k) {
      const double den2 = S.q(i, i) * mom.tau_sq[k];
      theta(i, k) = den2 > 0.0 ? S.m_k[k][i] / std::sqrt(den2) : nan;
    }
  return theta;
}

Eigen::MatrixXd cosine_theory(const ReplicaSolution& sol,
                              const SpectralMeasure& nu) {
  return cosine_theory(sol, moments_of(nu));
}

double train_error_theory(const ReplicaSolution& sol, const ClusterMoments& mom,
                          const Eigen::VectorXd& rho, double delta, int d,
                          const Activation& act, const QuadratureSpec& quad) {
  check_weights(mom, rho);
  if (!sol.converged)
    throw ConfigError("train_error_theory: solution not converged");
  const double dlt = effective_delta(sol, delta);
  const SummaryStats& S = sol.stats;
  if (S.K() != mom.K()) throw ConfigError("train_error_theory: K mismatch");
  const int p = S.p();
  const bool rae = sol.variant == Variant::rae;
  const double b = sol.b_hat;
  const double sq1m = rae ? 1.0 : std::sqrt(1.0 - dlt);
  const double c1 = 1.0 - (rae ? 0.0 : std::sqrt(1.0 - dlt)) * b;

  SolverConfig cfg;  // default prox tolerances, caller-chosen quadrature
  cfg.quadrature = quad;
  GaussGrid grid(quad, rae ? p : 2 * p);
  double corr = 0.0;
  Eigen::VectorXd z;
  double w;
  for (int k = 0; k < mom.K(); ++k) {
    ProxCtx ctx = make_prox_ctx(S, k, b, dlt, act, rae);
    double acc = 0.0;
    ProxPoint prev;
    bool has_prev = false;
    for (int i = 0; i < grid.count(); ++i) {
      grid.node(i, z, w);
      Eigen::VectorXd xi = rae ? Eigen::VectorXd() : Eigen::VectorXd(z.head(p));
      Eigen::VectorXd eta = rae ? z : Eigen::VectorXd(z.tail(p));
      ProxPoint pt = prox_solve(ctx, xi, eta, cfg, has_prev ? &prev : nullptr);
      Eigen::VectorXd s =
          rae ? act.f(pt.y) : act.f(Eigen::VectorXd(sq1m * pt.y + pt.x));
      Eigen::VectorXd tgt = rae ? pt.y : Eigen::VectorXd(c1 * pt.y - b * pt.x);
      acc += w * (s.dot(S.q * s) - 2.0 * s.dot(tgt));
      prev = std::move(pt);
      has_prev = true;
    }
    corr += rho[k] * acc;
  }
  return mse_rescaling(mom, rho, dlt, d, b) + corr;
}

double train_error_theory(const ReplicaSolution& sol, const SpectralMeasure& nu,
                          const Eigen::VectorXd& rho, double delta, int d,
                          const Activation& act, const QuadratureSpec& quad) {
  return train_error_theory(sol, moments_of(nu), rho, delta, d, act, quad);
}

double bottleneck_gap_from_trace(double T, double delta) {
  if (T < 0.0) throw ConfigError("bottleneck_gap: negative average trace");
  if (delta < 0.0 || delta > 1.0)
    throw ConfigError("bottleneck_gap: delta must lie in [0,1]");
  const double den = T * (1.0 - delta) + delta;
  if (den <= 0.0)
    throw DegenerateProblem("bottleneck_gap: delta = 0 with zero average trace");
  return T * T * (1.0 - delta) / den;
}

double bottleneck_gap(const SpectralMeasure& nu, const Eigen::VectorXd& rho,
                      double delta) {
  ClusterMoments mom = moments_of(nu);
  check_weights(mom, rho);
  double T = 0.0;
  for (int k = 0; k < mom.K(); ++k) T += rho[k] * mom.gamma_mean[k];
  return bottleneck_gap_from_trace(T, delta);
}

TheoryMetrics theory_metrics(const ReplicaSolution& sol,
                             const ClusterMoments& mom,
                             const Eigen::VectorXd& rho, double delta, int d,
                             const Activation& act, const QuadratureSpec& quad,
                             bool with_train_error) {
  TheoryMetrics tm;
  tm.b_hat = sol.b_hat;
  tm.mse = mse_theory(sol, mom, rho, delta, d, act, quad);
  tm.mse_circ = mse_rescaling(mom, rho, sol.variant == Variant::rae ? 0.0 : delta,
                              d, sol.b_hat);
  tm.theta = cosine_theory(sol, mom);
  tm.weight_norm2_per_d = sol.stats.q.trace();
  tm.train_error =
      with_train_error
          ? train_error_theory(sol, mom, rho, delta, d, act, quad)
          : std::numeric_limits<double>::quiet_NaN();
  if (sol.variant == Variant::full_dae || sol.variant == Variant::anisotropic_k2) {
    double T = 0.0;
    for (int k = 0; k < mom.K(); ++k) T += rho[k] * mom.gamma_mean[k];
    tm.gap_per_d = bottleneck_gap_from_trace(T, delta);
  }
  return tm;
}

}  // namespace dae
