#include <cmath>
#include <limits>

#include "dae_asym/errors.hpp"
#include "dae_asym/rng.hpp"
#include "dae_asym/sim.hpp"

namespace dae {

const char* sim_variant_name(SimVariant v) {
  switch (v) {
    case SimVariant::full: return "full";
    case SimVariant::bottleneck: return "bottleneck";
    case SimVariant::rescaling: return "rescaling";
    case SimVariant::rae: return "rae";
  }
  return "?";
}

SimVariant parse_sim_variant(const std::string& name) {
  if (name == "full") return SimVariant::full;
  if (name == "bottleneck") return SimVariant::bottleneck;
  if (name == "rescaling") return SimVariant::rescaling;
  if (name == "rae") return SimVariant::rae;
  throw ConfigError("unknown sim variant '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0))
    throw ConfigError("train: beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: beta2 must lie in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("train: eps must be > 0");
}

namespace {

bool has_net(SimVariant v) { return v != SimVariant::rescaling; }
bool has_skip(SimVariant v) {
  return v == SimVariant::full || v == SimVariant::rescaling;
}

Eigen::MatrixXd apply_act(const Activation& act, Eigen::MatrixXd a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = act.f(a(i));
  return a;
}

Eigen::MatrixXd apply_dact(const Activation& act, Eigen::MatrixXd a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = act.df(a(i));
  return a;
}

}  // namespace

Eigen::VectorXd dae_forward(const DaeParams& params,
                            const Eigen::VectorXd& x_noisy,
                            const Activation& act) {
  if (x_noisy.size() != params.d())
    throw ConfigError("dae_forward: dimension mismatch");
  const double isq = 1.0 / std::sqrt(static_cast<double>(params.d()));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(params.d());
  if (has_skip(params.variant)) out += params.b * x_noisy;
  if (has_net(params.variant))
    out += isq * (params.w.transpose() * act.f(isq * (params.w * x_noisy)));
  return out;
}

Eigen::MatrixXd dae_forward_batch(const DaeParams& params,
                                  const Eigen::MatrixXd& noisy,
                                  const Activation& act) {
  if (noisy.cols() != params.d())
    throw ConfigError("dae_forward: dimension mismatch");
  const double isq = 1.0 / std::sqrt(static_cast<double>(params.d()));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(noisy.rows(), noisy.cols());
  if (has_skip(params.variant)) out += params.b * noisy;
  if (has_net(params.variant))
    out += isq * apply_act(act, isq * (noisy * params.w.transpose())) *
           params.w;
  return out;
}

LossGrad dae_loss_grad(const DaeParams& params, const Eigen::MatrixXd& clean,
                       const Eigen::MatrixXd& noisy, double weight_decay,
                       const Activation& act) {
  const Eigen::Index n = clean.rows();
  if (n == 0) throw ConfigError("dae_loss_grad: empty batch");
  if (noisy.rows() != n || clean.cols() != params.d() ||
      noisy.cols() != params.d())
    throw ConfigError("dae_loss_grad: shape mismatch");
  const double isq = 1.0 / std::sqrt(static_cast<double>(params.d()));
  const double inv_n = 1.0 / static_cast<double>(n);

  LossGrad out;
  out.grad_w = Eigen::MatrixXd::Zero(params.p(), params.d());

  Eigen::MatrixXd resid = clean;
  if (has_skip(params.variant)) resid -= params.b * noisy;
  Eigen::MatrixXd pre, s;
  if (has_net(params.variant)) {
    pre = isq * (noisy * params.w.transpose());  // n x p
    s = apply_act(act, pre);
    resid -= isq * s * params.w;
  }
  out.loss = inv_n * resid.squaredNorm();
  if (has_skip(params.variant))
    out.grad_b = -2.0 * inv_n * resid.cwiseProduct(noisy).sum();
  if (has_net(params.variant)) {
    // two tied-weight paths: decoder w^T sigma and encoder sigma(w x~)
    Eigen::MatrixXd gate = apply_dact(act, pre).cwiseProduct(
        resid * params.w.transpose());  // n x p
    out.grad_w = -2.0 * inv_n * isq *
                     (s.transpose() * resid +
                      isq * gate.transpose() * noisy) +
                 (weight_decay * inv_n) * params.w;
  }
  return out;
}

TrainResult adam_train_from(const Dataset& data, DaeParams init,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (data.n() < 1) throw ConfigError("train: empty dataset");
  if (init.d() != data.d()) throw ConfigError("train: dimension mismatch");
  const bool train_w = has_net(init.variant);
  const bool train_b = has_skip(init.variant);
  const double inv_n = 1.0 / static_cast<double>(data.n());

  TrainResult res;
  res.params = std::move(init);
  res.loss_trace.resize(cfg.epochs + 1);
  Eigen::MatrixXd mw = Eigen::MatrixXd::Zero(res.params.p(), res.params.d());
  Eigen::MatrixXd vw = mw;
  double mb = 0.0, vb = 0.0;
  double b1t = 1.0, b2t = 1.0;
  for (int t = 1; t <= cfg.epochs; ++t) {
    LossGrad lg = dae_loss_grad(res.params, data.clean, data.noisy,
                                cfg.weight_decay, cfg.act);
    if (!std::isfinite(lg.loss))
      throw Divergence("train: non-finite loss at epoch " + std::to_string(t));
    res.loss_trace[t - 1] = lg.loss;
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    const double c1 = 1.0 / (1.0 - b1t), c2 = 1.0 / (1.0 - b2t);
    if (train_w) {
      mw = cfg.beta1 * mw + (1.0 - cfg.beta1) * lg.grad_w;
      vw = cfg.beta2 * vw + (1.0 - cfg.beta2) * lg.grad_w.cwiseAbs2();
      res.params.w -=
          cfg.lr * (c1 * mw.array() / ((c2 * vw.array()).sqrt() + cfg.eps))
                       .matrix();
    }
    if (train_b) {
      const double g = lg.grad_b;  // the skip strength is not decayed
      mb = cfg.beta1 * mb + (1.0 - cfg.beta1) * g;
      vb = cfg.beta2 * vb + (1.0 - cfg.beta2) * g * g;
      res.params.b -= cfg.lr * (c1 * mb) / (std::sqrt(c2 * vb) + cfg.eps);
    }
  }
  Eigen::MatrixXd resid =
      data.clean - dae_forward_batch(res.params, data.noisy, cfg.act);
  const double final_loss = inv_n * resid.squaredNorm();
  if (!std::isfinite(final_loss))
    throw Divergence("train: non-finite loss after final update");
  res.loss_trace[cfg.epochs] = final_loss;
  return res;
}

TrainResult adam_train(const Dataset& data, int p, SimVariant variant,
                       const TrainConfig& cfg) {
  if (p < 1) throw ConfigError("train: p must be >= 1");
  const int d = data.d();
  DaeParams init;
  init.variant = variant;
  Rng rng(cfg.seed);
  if (has_net(variant))
    init.w = rng.normal_mat(p, d) / std::sqrt(static_cast<double>(d));
  else
    init.w = Eigen::MatrixXd::Zero(p, d);
  init.b = has_skip(variant) ? 0.5 : 0.0;
  return adam_train_from(data, std::move(init), cfg);
}

void canonicalize_signs(DaeParams& params, const MixtureSpec& spec) {
  for (Eigen::Index i = 0; i < params.w.rows(); ++i) {
    double best = 0.0, bestabs = 0.0;
    for (const auto& mu : spec.means) {
      double dot = params.w.row(i).dot(mu);
      if (std::abs(dot) > bestabs) {
        bestabs = std::abs(dot);
        best = dot;
      }
    }
    if (best < 0.0) params.w.row(i) *= -1.0;
  }
}

EmpiricalMetrics empirical_metrics(const DaeParams& params,
                                   const MixtureSpec& spec, double delta,
                                   int n_test, int n_seeds, std::uint64_t seed,
                                   const Activation& act) {
  if (n_test < 1) throw ConfigError("empirical_metrics: n_test must be >= 1");
  if (n_seeds < 1) throw ConfigError("empirical_metrics: n_seeds must be >= 1");
  const int p = params.p(), K = spec.K();
  EmpiricalMetrics em;
  em.theta.setConstant(p, K, std::numeric_limits<double>::quiet_NaN());
  em.theta_se = Eigen::MatrixXd::Zero(p, K);
  for (int i = 0; i < p; ++i) {
    double wn = params.w.row(i).norm();
    for (int k = 0; k < K; ++k) {
      double mn = spec.means[k].norm();
      if (wn > 0.0 && mn > 0.0)
        em.theta(i, k) = params.w.row(i).dot(spec.means[k]) / (wn * mn);
    }
  }
  em.weight_norm2_per_d =
      params.w.squaredNorm() / static_cast<double>(params.d());
  em.b = params.b;

  Eigen::VectorXd per_seed(n_seeds);
  double first_seed_var = 0.0;
  for (int s = 0; s < n_seeds; ++s) {
    Dataset test = sample_dataset(spec, n_test, delta,
                                  seed + static_cast<std::uint64_t>(s));
    Eigen::MatrixXd resid =
        test.clean - dae_forward_batch(params, test.noisy, act);
    Eigen::VectorXd sq = resid.rowwise().squaredNorm();
    per_seed[s] = sq.mean();
    if (s == 0 && n_test > 1)
      first_seed_var =
          (sq.array() - per_seed[0]).matrix().squaredNorm() / (n_test - 1);
  }
  em.test_mse = per_seed.mean();
  if (n_seeds > 1)
    em.test_mse_se = std::sqrt(
        (per_seed.array() - em.test_mse).matrix().squaredNorm() /
        ((n_seeds - 1.0) * n_seeds));
  else
    em.test_mse_se = std::sqrt(first_seed_var / n_test);
  em.n_test = n_test * n_seeds;
  return em;
}

EmpiricalMetrics aggregate_metrics(const std::vector<EmpiricalMetrics>& runs) {
  if (runs.empty()) throw ConfigError("aggregate_metrics: no runs");
  const auto N = static_cast<double>(runs.size());
  EmpiricalMetrics agg;
  agg.train_mse = 0.0;  // the NaN default would poison the accumulation
  const Eigen::Index p = runs[0].theta.rows(), K = runs[0].theta.cols();
  agg.theta = Eigen::MatrixXd::Zero(p, K);
  agg.theta_se = Eigen::MatrixXd::Zero(p, K);
  for (const auto& r : runs) {
    if (r.theta.rows() != p || r.theta.cols() != K)
      throw ConfigError("aggregate_metrics: shape mismatch");
    agg.test_mse += r.test_mse;
    agg.train_mse += r.train_mse;
    agg.theta += r.theta;
    agg.weight_norm2_per_d += r.weight_norm2_per_d;
    agg.b += r.b;
    agg.n_test += r.n_test;
  }
  agg.test_mse /= N;
  agg.train_mse /= N;
  agg.theta /= N;
  agg.weight_norm2_per_d /= N;
  agg.b /= N;
  if (runs.size() > 1) {
    double vt = 0.0, vtr = 0.0, vn = 0.0, vb = 0.0;
    Eigen::MatrixXd vth = Eigen::MatrixXd::Zero(p, K);
    for (const auto& r : runs) {
      vt += (r.test_mse - agg.test_mse) * (r.test_mse - agg.test_mse);
      vtr += (r.train_mse - agg.train_mse) * (r.train_mse - agg.train_mse);
      vth += (r.theta - agg.theta).cwiseAbs2();
      vn += (r.weight_norm2_per_d - agg.weight_norm2_per_d) *
            (r.weight_norm2_per_d - agg.weight_norm2_per_d);
      vb += (r.b - agg.b) * (r.b - agg.b);
    }
    const double denom = (N - 1.0) * N;
    agg.test_mse_se = std::sqrt(vt / denom);
    agg.train_mse_se = std::sqrt(vtr / denom);
    agg.theta_se = (vth / denom).cwiseSqrt();
    agg.weight_norm2_se = std::sqrt(vn / denom);
    agg.b_se = std::sqrt(vb / denom);
  } else {
    agg.test_mse_se = runs[0].test_mse_se;
  }
  return agg;
}

}  // namespace dae
