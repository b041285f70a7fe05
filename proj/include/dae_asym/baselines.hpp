#pragma once

#include <Eigen/Dense>

#include "dae_asym/mixture.hpp"
#include "dae_asym/quadrature.hpp"

namespace dae {

// ---------------------------------------------------------------------------
// Posterior-mean (Tweedie) denoiser for a known Gaussian mixture:
//   t(x~) = sum_k r_k(x~) C_k^{-1} [ sqrt(1-Delta) Sigma_k x~ + Delta mu_k ],
//   C_k = (1-Delta) Sigma_k + Delta I,
// r_k the posterior cluster responsibilities (log-sum-exp stabilized).
// Delta = 0 returns x~ unchanged (after checking the Sigma_k are invertible).

Eigen::VectorXd tweedie_responsibilities(const Eigen::VectorXd& x_noisy,
                                         const MixtureSpec& mix, double delta);
Eigen::VectorXd tweedie_denoise(const Eigen::VectorXd& x_noisy,
                                const MixtureSpec& mix, double delta);
// rows of `noisy` are samples; returns denoised rows
Eigen::MatrixXd tweedie_denoise_batch(const Eigen::MatrixXd& noisy,
                                      const MixtureSpec& mix, double delta);

// ---------------------------------------------------------------------------
// Sharp asymptotic MSE of the oracle denoiser for the binary symmetric
// isotropic mixture (means +-mu with ||mu|| = 1, covariances sigma2 I).
// Both terms are differences to the rescaling error at the oracle shrinkage
// b = sqrt(1-Delta) sigma2 / D, D = sigma2 (1-Delta) + Delta; the absolute
// MSE at dimension d is mse_rescaling(..., d, b) + minus_circ().

struct OracleMse {
  double sq_term = 0.0;     // (Delta/D)^2 avg_s E[tanh^2]
  double cross_term = 0.0;  // -2 (Delta/D) avg_s E[tanh] (1-b sqrt(1-Delta)) s
  double b = 0.0;           // oracle shrinkage
  double minus_circ() const { return sq_term + cross_term; }
};
OracleMse oracle_mse_theory(double sigma2, double delta,
                            const QuadratureSpec& quad);

// ---------------------------------------------------------------------------
// Means-agnostic Bayes denoiser for the same mixture: scalar overlaps of the
// posterior over the centroid, from the six self-consistent equations.

struct BayesConfig {
  double damping = 0.5;
  double tol = 1e-10;
  int max_iter = 10000;
  int gh_nodes = 80;
};

struct BayesStats {
  double q = 0.0, m = 0.0, V = 0.0;
  double q_hat = 0.0, m_hat = 0.0, V_hat = 0.0;
  double sigma2 = 0.0, alpha = 0.0;
  double sigma_hat2 = 0.0;  // sigma2 / (sigma2 + alpha)
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  // the printed equations give q = sigma_hat2 at alpha = 0; evaluated
  // literally and flagged rather than corrected
  bool alpha_near_zero = false;
};

BayesStats bayes_fixed_point(double alpha, double sigma2,
                             const BayesConfig& cfg = BayesConfig());

// Difference of the Bayes MSE to the rescaling error at the oracle shrinkage
// (same convention as OracleMse):
//   -2 (Delta/D) (1-b sqrt(1-Delta)) m E_z tanh(g(sqrt(q+V) z))
//   + (Delta/D)^2 q E_{(u,v) ~ N(0,Omega)} tanh(g(u)) tanh(g(v)),
// g(t) = ((1-Delta) m + sqrt(1-Delta) sqrt(D) t) / D,
// Omega = [[q+V, q], [q, q+V]].
double bayes_mse(const BayesStats& stats, double sigma2, double delta,
                 const QuadratureSpec& quad);

// ---------------------------------------------------------------------------
// PCA denoisers.

struct PcaBasis {
  Eigen::MatrixXd components;   // d x p, orthonormal, descending eigenvalue
  Eigen::VectorXd eigenvalues;  // all d, descending
  double gap_ratio = 0.0;       // lambda_p / lambda_{p+1} (inf if exhausted)
  bool low_separation = false;  // gap_ratio < 1.5
};

// top-p eigenvectors of the centered sample covariance of `clean` (rows are
// samples); deterministic sign (first component above 1e-12 made positive)
PcaBasis pca_fit(const Eigen::MatrixXd& clean, int p);

// plain orthogonal projection x^ = P P' x~; `scale` (default 1) exposes a
// rescaled variant for sensitivity checks
Eigen::VectorXd pca_denoise(const Eigen::VectorXd& x_noisy,
                            const PcaBasis& basis, double scale = 1.0);
Eigen::MatrixXd pca_denoise_batch(const Eigen::MatrixXd& noisy,
                                  const PcaBasis& basis, double scale = 1.0);

// oracle form with an estimated centroid plugged in:
//   b x~ + (Delta/D) tanh(sqrt(1-Delta) x~' mu_hat / D) mu_hat
Eigen::VectorXd pca_plugin_denoise(const Eigen::VectorXd& x_noisy,
                                   const Eigen::VectorXd& mu_hat, double sigma2,
                                   double delta);
Eigen::MatrixXd pca_plugin_denoise_batch(const Eigen::MatrixXd& noisy,
                                         const Eigen::VectorXd& mu_hat,
                                         double sigma2, double delta);

}  // namespace dae
