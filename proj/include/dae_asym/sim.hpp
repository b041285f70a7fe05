#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dae_asym/activation.hpp"
#include "dae_asym/mixture.hpp"

namespace dae {

// Which parameters of f(x~) = b x~ + w^T sigma(w x~ / sqrt(d)) / sqrt(d)
// are present and trainable.  `rescaling` keeps only the skip term (w frozen
// at 0); `bottleneck` and `rae` keep only the network term (b frozen at 0).
enum class SimVariant { full, bottleneck, rescaling, rae };
const char* sim_variant_name(SimVariant v);
SimVariant parse_sim_variant(const std::string& name);

struct DaeParams {
  Eigen::MatrixXd w;  // p x d
  double b = 0.0;
  SimVariant variant = SimVariant::full;
  int p() const { return static_cast<int>(w.rows()); }
  int d() const { return static_cast<int>(w.cols()); }
};

struct TrainConfig {
  double lr = 0.05;
  int epochs = 2000;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  Activation act = Activation::tanh_act();
  void validate() const;  // ConfigError on bad ranges
};

struct LossGrad {
  // loss = (1/n) sum_mu |x^mu - f(x~^mu)|^2; the weight-decay energy is not
  // included in the loss value.  grad_w carries the additive decay term
  // (weight_decay / n) w, the sum-normalized lambda*w written in the mean
  // normalization, so stationary points minimize
  // sum_mu |x - f|^2 + (lambda/2) |w|_F^2.
  double loss = 0.0;
  Eigen::MatrixXd grad_w;
  double grad_b = 0.0;
};

Eigen::VectorXd dae_forward(const DaeParams& params,
                            const Eigen::VectorXd& x_noisy,
                            const Activation& act);
Eigen::MatrixXd dae_forward_batch(const DaeParams& params,
                                  const Eigen::MatrixXd& noisy,
                                  const Activation& act);

// Analytic gradients of the mean squared residual through both terms of the
// forward map (tied weights: encoder and decoder paths both contribute).
// Branches absent from the variant get exactly zero gradient.
LossGrad dae_loss_grad(const DaeParams& params, const Eigen::MatrixXd& clean,
                       const Eigen::MatrixXd& noisy, double weight_decay,
                       const Activation& act);

struct TrainResult {
  DaeParams params;
  // epochs + 1 entries: loss_trace[t] is the training loss before update
  // t+1; the last entry is the loss at the returned parameters.
  Eigen::VectorXd loss_trace;
};

// Full-batch Adam with bias correction.  Deterministic given cfg.seed:
// w entries ~ N(0, 1/d), b starts at 0.5 where trainable.
// Throws Divergence if the loss becomes non-finite.
TrainResult adam_train(const Dataset& data, int p, SimVariant variant,
                       const TrainConfig& cfg);
TrainResult adam_train_from(const Dataset& data, DaeParams init,
                            const TrainConfig& cfg);

struct EmpiricalMetrics {
  double test_mse = 0.0;
  double test_mse_se = 0.0;
  double train_mse = std::numeric_limits<double>::quiet_NaN();
  double train_mse_se = 0.0;
  Eigen::MatrixXd theta;     // p x K, w_i.mu_k / (|w_i| |mu_k|), NaN if 0/0
  Eigen::MatrixXd theta_se;  // same shape
  double weight_norm2_per_d = 0.0;
  double weight_norm2_se = 0.0;
  double b = 0.0;
  double b_se = 0.0;
  int n_test = 0;
};

// Monte Carlo estimate of the denoising test MSE on fresh samples plus the
// deterministic summary statistics of `params`.  n_seeds independent test
// sets (seeds seed, seed+1, ...) give the std error of the MC estimate; the
// per-parameter std errors stay 0 here and are filled by aggregation.
EmpiricalMetrics empirical_metrics(const DaeParams& params,
                                   const MixtureSpec& spec, double delta,
                                   int n_test, int n_seeds, std::uint64_t seed,
                                   const Activation& act);

// Every supported activation is odd, so negating a row of w leaves the
// network unchanged; independently trained runs land on either sign at
// random, which would cancel in cross-run averages of the overlaps.  Flips
// each row so its largest-|dot| cluster mean (first index on ties) has a
// positive dot product.
void canonicalize_signs(DaeParams& params, const MixtureSpec& spec);

// Mean and cross-run standard error of every quantity over independently
// trained runs.
EmpiricalMetrics aggregate_metrics(const std::vector<EmpiricalMetrics>& runs);

}  // namespace dae
