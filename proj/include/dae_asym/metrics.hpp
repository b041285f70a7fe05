#pragma once

#include <Eigen/Dense>
#include <optional>

#include "dae_asym/replica.hpp"

namespace dae {

// Dimension-free per-cluster moments of the spectral measure:
// tau_sq[k] = int dnu tau_k^2 (the squared mean norm), gamma_mean[k] =
// int dnu gamma_k (the covariance trace over d).
struct ClusterMoments {
  Eigen::VectorXd tau_sq;
  Eigen::VectorXd gamma_mean;
  int K() const { return static_cast<int>(tau_sq.size()); }
  void validate() const;
};
ClusterMoments moments_of(const SpectralMeasure& nu);
ClusterMoments moments_of(const MixtureSpec& mix);

// Test MSE of the pure rescaling map x ~> b x~ at dimension d:
//   d Delta b^2 + (1 - sqrt(1-Delta) b)^2 sum_k rho_k (tau_sq_k + d gamma_mean_k).
double mse_rescaling(const ClusterMoments& mom, const Eigen::VectorXd& rho,
                     double delta, int d, double b_hat);
double mse_rescaling(const SpectralMeasure& nu, const Eigen::VectorXd& rho,
                     double delta, int d, double b_hat);

// Full test MSE at dimension d: the rescaling part plus the two Gaussian
// correction averages
//   sum_k rho_k E[ s' q s - 2 s' ((1 - sqrt(1-Delta) b)(m_k + q_k^{1/2} u)
//                               - b sqrt(Delta) q^{1/2} v) ],
// s = act(sqrt(1-Delta)(m_k + q_k^{1/2} u) + sqrt(Delta) q^{1/2} v).
// The rae variant is the delta = 0, b = 0 specialization.
double mse_theory(const ReplicaSolution& sol, const ClusterMoments& mom,
                  const Eigen::VectorXd& rho, double delta, int d,
                  const Activation& act, const QuadratureSpec& quad);
double mse_theory(const ReplicaSolution& sol, const SpectralMeasure& nu,
                  const Eigen::VectorXd& rho, double delta, int d,
                  const Activation& act, const QuadratureSpec& quad);

// theta_ik = (m_k)_i / sqrt(q_ii tau_sq_k); entries with a nonpositive
// denominator are returned as quiet NaN (serialization maps them to blanks).
Eigen::MatrixXd cosine_theory(const ReplicaSolution& sol,
                              const ClusterMoments& mom);
Eigen::MatrixXd cosine_theory(const ReplicaSolution& sol,
                              const SpectralMeasure& nu);

// Training MSE: rescaling part plus sum_k rho_k E_{xi,eta}[ s' q s
//   - 2 s' ((1 - sqrt(1-Delta) b) prox_y - b prox_x) ] with the inner
// minimizers re-solved at the fixed point (act(prox_y) and target prox_y for
// the rae variant).
double train_error_theory(const ReplicaSolution& sol, const ClusterMoments& mom,
                          const Eigen::VectorXd& rho, double delta, int d,
                          const Activation& act, const QuadratureSpec& quad);
double train_error_theory(const ReplicaSolution& sol, const SpectralMeasure& nu,
                          const Eigen::VectorXd& rho, double delta, int d,
                          const Activation& act, const QuadratureSpec& quad);

// Per-dimension MSE gap between the bottleneck-only network and the full one:
//   T^2 (1-Delta) / (T (1-Delta) + Delta), T = sum_k rho_k gamma_mean_k.
double bottleneck_gap_from_trace(double T, double delta);
double bottleneck_gap(const SpectralMeasure& nu, const Eigen::VectorXd& rho,
                      double delta);

struct TheoryMetrics {
  double mse = 0.0;                 // at the stated d
  double mse_circ = 0.0;            // rescaling baseline at the same b
  Eigen::MatrixXd theta;            // p x K, NaN = undefined
  double weight_norm2_per_d = 0.0;  // Tr q
  double b_hat = 0.0;
  double train_error = 0.0;
  std::optional<double> gap_per_d;  // full_dae only
};

TheoryMetrics theory_metrics(const ReplicaSolution& sol,
                             const ClusterMoments& mom,
                             const Eigen::VectorXd& rho, double delta, int d,
                             const Activation& act, const QuadratureSpec& quad,
                             bool with_train_error = true);

}  // namespace dae
