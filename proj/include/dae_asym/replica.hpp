#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "dae_asym/activation.hpp"
#include "dae_asym/mixture.hpp"
#include "dae_asym/quadrature.hpp"

namespace dae {

// Order parameters of the saddle point: decoder overlap q, resolvent trace V,
// and per-cluster q_k, V_k, m_k.
struct SummaryStats {
  Eigen::MatrixXd q, V;                   // p x p
  std::vector<Eigen::MatrixXd> q_k, V_k;  // K entries, p x p
  std::vector<Eigen::VectorXd> m_k;       // K entries, p
  int p() const { return static_cast<int>(q.rows()); }
  int K() const { return static_cast<int>(q_k.size()); }
  // symmetric within sym_tol, q/q_k PSD, V/V_k PD
  void validate(double sym_tol = 1e-10) const;
};

struct HatStats {
  Eigen::MatrixXd q_hat, V_hat;
  std::vector<Eigen::MatrixXd> q_hat_k, V_hat_k;
  std::vector<Eigen::VectorXd> m_hat_k;
  int p() const { return static_cast<int>(q_hat.rows()); }
  int K() const { return static_cast<int>(q_hat_k.size()); }
  static HatStats zero(int p, int K);
};

enum class Variant { full_dae, bottleneck, rae, anisotropic_k2 };
const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct SolverConfig {
  double damping = 0.3;          // applied to the summary statistics only
  double tol = 1e-7;             // max-abs entrywise change, undamped update
  int max_iter = 2000;
  QuadratureSpec quadrature;     // rule for the (xi, eta) expectations
  double prox_tol = 1e-10;       // gradient norm at the inner minimizer
  int prox_max_iter = 200;       // Newton iterations per start
  bool verbose = false;
  int p = 1;                     // order-parameter width used by the default init
  // optional initial summary statistics (default: deterministic init below)
  std::shared_ptr<SummaryStats> init;

  // tensor Gauss-Hermite with 40 nodes per variable at p = 1, randomized
  // quasi Monte Carlo with 4096 samples otherwise
  static SolverConfig defaults_for(int p);
};

struct ReplicaSolution {
  SummaryStats stats;
  HatStats hats;
  double b_hat = 0.0;       // skip strength (0 for bottleneck / rae)
  Variant variant = Variant::full_dae;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;    // undamped fixed-point residual at return
};

// ---------------------------------------------------------------------------
// scalar skip connection

// b = T sqrt(1-delta) / (T (1-delta) + delta) with T = sum_k rho_k tr(Sigma_k)/d.
// Throws DegenerateProblem when delta = 0 and T = 0.
double skip_strength(const SpectralMeasure& nu, const Eigen::VectorXd& rho,
                     double delta);
double skip_strength_from_trace(double T, double delta);

// ---------------------------------------------------------------------------
// inner 2p-dimensional minimization
//
// phi(x, y) = (y - q_k^{1/2} eta - m_k)' V_k^{-1} (y - q_k^{1/2} eta - m_k)
//           + (1/delta) (x - sqrt(delta) q^{1/2} xi)' V^{-1} (x - ...)
//           + s' q s - 2 s' ((1 - sqrt(1-delta) b) y - b x),
// s = act(sqrt(1-delta) y + x).  The rae variant keeps only the y part with
// s = act(y) and target y (no x, no xi).

struct ProxPoint {
  Eigen::VectorXd x, y;
  double objective = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

// Precomputed per-(stats, cluster) data reused across quadrature nodes.
struct ProxCtx {
  int p = 0;
  bool rae = false;
  double delta = 0.0, b_hat = 0.0, sq1m = 1.0;  // sq1m = sqrt(1-delta)
  Activation act;
  Eigen::MatrixXd Vk_inv, V_inv, q, qk_sqrt, q_sqrt;
  Eigen::VectorXd m_k;
};
ProxCtx make_prox_ctx(const SummaryStats& S, int cluster, double b_hat,
                      double delta, const Activation& act, bool rae = false);

double prox_objective(const ProxCtx& c, const Eigen::VectorXd& xi,
                      const Eigen::VectorXd& eta, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& y);
// grad and hess are laid out as [x; y] (just [y] for rae)
void prox_grad_hess(const ProxCtx& c, const Eigen::VectorXd& xi,
                    const Eigen::VectorXd& eta, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& y, Eigen::VectorXd* grad,
                    Eigen::MatrixXd* hess);

// Damped Newton with Armijo backtracking from three starts (quadratic
// minimizer, origin, warm start when given); returns the best stationary
// point found, throws ProxNoConvergence if no start reaches prox_tol.
ProxPoint prox_solve(const ProxCtx& c, const Eigen::VectorXd& xi,
                     const Eigen::VectorXd& eta, const SolverConfig& cfg,
                     const ProxPoint* warm = nullptr);
ProxPoint prox_solve(const Eigen::VectorXd& xi, const Eigen::VectorXd& eta,
                     const SummaryStats& S, int cluster, double b_hat,
                     double delta, const Activation& act,
                     const SolverConfig& cfg);
ProxPoint prox_solve_rae(const Eigen::VectorXd& eta, const SummaryStats& S,
                         int cluster, const Activation& act,
                         const SolverConfig& cfg);

// ---------------------------------------------------------------------------
// saddle-point updates

// Conjugate statistics from the inner minimizers, expectations over (xi, eta)
// with the configured rule.  For Variant::rae the x channel is dropped,
// q_hat = 0 and V_hat = alpha sum_k rho_k E[s s'].
HatStats hat_update(const SummaryStats& S, double b_hat, double delta,
                    double alpha, const Eigen::VectorXd& rho,
                    const Activation& act, const SolverConfig& cfg,
                    Variant variant = Variant::full_dae);

// Summary statistics from the conjugates through the spectral measure:
// R(gamma) = (lambda I + V_hat + sum_j gamma_j V_hat_j)^{-1},
// N(gamma, tau) = q_hat + sum_j gamma_j q_hat_j + (sum_j tau_j m_hat_j)^{x2},
// q = int R N R, V = int R, q_k = int gamma_k R N R, V_k = int gamma_k R,
// m_k = int tau_k R sum_j tau_j m_hat_j.
SummaryStats stat_update(const HatStats& H, const SpectralMeasure& nu,
                         double lambda);

ReplicaSolution solve_fixed_point(const SpectralMeasure& nu,
                                  const Eigen::VectorXd& rho, double alpha,
                                  double delta, double lambda,
                                  const Activation& act,
                                  const SolverConfig& cfg,
                                  Variant variant = Variant::full_dae);

ReplicaSolution solve_rae(const SpectralMeasure& nu, const Eigen::VectorXd& rho,
                          double alpha, double lambda, const Activation& act,
                          const SolverConfig& cfg);

// K = 2 binary mixture with means +-mu and arbitrary (possibly non-commuting)
// covariances, p = 1.  Trace terms are evaluated exactly through the
// eigendecomposition of (lambda + V_hat) I + V_hat_+ Sigma_+ + V_hat_- Sigma_-
// recomputed every iteration.  Returned stats: q_k = (q_+, q_-), m_k = (m, -m).
ReplicaSolution solve_anisotropic_binary(const Eigen::MatrixXd& sigma_plus,
                                         const Eigen::MatrixXd& sigma_minus,
                                         const Eigen::VectorXd& mu, double rho,
                                         double alpha, double delta,
                                         double lambda, const Activation& act,
                                         const SolverConfig& cfg);

// Deterministic default initialization (also used by the anisotropic solver).
SummaryStats init_stats(const SpectralMeasure& nu, int p);

}  // namespace dae
