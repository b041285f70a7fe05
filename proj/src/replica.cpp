#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>

#include "dae_asym/errors.hpp"
#include "dae_asym/linalg.hpp"
#include "dae_asym/replica.hpp"

namespace dae {

void SummaryStats::validate(double sym_tol) const {
  const int pp = p(), KK = K();
  if (pp < 1) throw ConfigError("SummaryStats: p must be >= 1");
  if (KK < 1) throw ConfigError("SummaryStats: no clusters");
  if (static_cast<int>(V_k.size()) != KK || static_cast<int>(m_k.size()) != KK)
    throw ConfigError("SummaryStats: per-cluster sizes mismatch");
  auto check = [&](const Eigen::MatrixXd& M, const char* name, bool pd) {
    if (M.rows() != pp || M.cols() != pp)
      throw ConfigError(std::string("SummaryStats: ") + name + " has wrong shape");
    double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale)
      throw ConfigError(std::string("SummaryStats: ") + name + " not symmetric");
    double me = min_eig_sym(M);
    if (pd ? me <= 0.0 : me < -1e-10 * scale)
      throw NotPsd(std::string("SummaryStats: ") + name +
                   (pd ? " not positive definite" : " not PSD"));
  };
  check(q, "q", false);
  check(V, "V", true);
  for (int k = 0; k < KK; ++k) {
    check(q_k[k], "q_k", false);
    check(V_k[k], "V_k", true);
    if (m_k[k].size() != pp)
      throw ConfigError("SummaryStats: m_k has wrong size");
  }
}

HatStats HatStats::zero(int p, int K) {
  HatStats H;
  H.q_hat = Eigen::MatrixXd::Zero(p, p);
  H.V_hat = Eigen::MatrixXd::Zero(p, p);
  H.q_hat_k.assign(K, Eigen::MatrixXd::Zero(p, p));
  H.V_hat_k.assign(K, Eigen::MatrixXd::Zero(p, p));
  H.m_hat_k.assign(K, Eigen::VectorXd::Zero(p));
  return H;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full_dae: return "full_dae";
    case Variant::bottleneck: return "bottleneck";
    case Variant::rae: return "rae";
    default: return "anisotropic_k2";
  }
}

Variant parse_variant(const std::string& name) {
  if (name == "full_dae") return Variant::full_dae;
  if (name == "bottleneck") return Variant::bottleneck;
  if (name == "rae") return Variant::rae;
  if (name == "anisotropic_k2") return Variant::anisotropic_k2;
  throw ConfigError("unknown variant '" + name + "'");
}

SolverConfig SolverConfig::defaults_for(int p) {
  SolverConfig cfg;
  cfg.p = p;
  cfg.quadrature =
      p == 1 ? QuadratureSpec::gh(40) : QuadratureSpec::mc(4096, 0);
  return cfg;
}

double skip_strength_from_trace(double T, double delta) {
  if (T < 0.0) throw ConfigError("skip_strength: negative average trace");
  if (delta < 0.0 || delta > 1.0)
    throw ConfigError("skip_strength: delta must lie in [0,1]");
  double den = T * (1.0 - delta) + delta;
  if (den <= 0.0)
    throw DegenerateProblem("skip_strength: delta = 0 with zero average trace");
  return T * std::sqrt(1.0 - delta) / den;
}

double skip_strength(const SpectralMeasure& nu, const Eigen::VectorXd& rho,
                     double delta) {
  nu.validate();
  if (rho.size() != nu.K())
    throw ConfigError("skip_strength: weights/measure K mismatch");
  double T = 0.0;
  for (int k = 0; k < nu.K(); ++k) T += rho[k] * nu.gamma_mean(k);
  return skip_strength_from_trace(T, delta);
}

HatStats hat_update(const SummaryStats& S, double b_hat, double delta,
                    double alpha, const Eigen::VectorXd& rho,
                    const Activation& act, const SolverConfig& cfg,
                    Variant variant) {
  S.validate();
  const int p = S.p(), K = S.K();
  if (rho.size() != K) throw ConfigError("hat_update: weights/K mismatch");
  if (alpha < 0.0) throw ConfigError("hat_update: alpha must be >= 0");
  const bool rae = variant == Variant::rae;
  if (!rae && !(delta > 0.0 && delta <= 1.0))
    throw DegenerateProblem("hat_update: delta must lie in (0,1]");

  HatStats H = HatStats::zero(p, K);
  const int dim = rae ? p : 2 * p;
  GaussGrid grid(cfg.quadrature, dim);
  const double sq1m = rae ? 1.0 : std::sqrt(1.0 - delta);
  const double sqd = rae ? 0.0 : std::sqrt(delta);

  Eigen::MatrixXd acc_xx = Eigen::MatrixXd::Zero(p, p);   // sum rho E[vx vx']
  Eigen::MatrixXd acc_xxi = Eigen::MatrixXd::Zero(p, p);  // sum rho E[vx xi']
  Eigen::MatrixXd acc_ss = Eigen::MatrixXd::Zero(p, p);   // sum rho E[s s']

  Eigen::VectorXd z;
  double w;
  for (int k = 0; k < K; ++k) {
    ProxCtx ctx = make_prox_ctx(S, k, b_hat, delta, act, rae);
    Eigen::MatrixXd a_yy = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd a_ye = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd a_y = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd k_xx = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd k_xxi = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd k_ss = Eigen::MatrixXd::Zero(p, p);
    ProxPoint prev;
    bool has_prev = false;
    for (int i = 0; i < grid.count(); ++i) {
      grid.node(i, z, w);
      Eigen::VectorXd xi = rae ? Eigen::VectorXd() : Eigen::VectorXd(z.head(p));
      Eigen::VectorXd eta = rae ? z : Eigen::VectorXd(z.tail(p));
      ProxPoint pt = prox_solve(ctx, xi, eta, cfg, has_prev ? &prev : nullptr);
      Eigen::VectorXd ry = pt.y - ctx.qk_sqrt * eta - ctx.m_k;
      Eigen::VectorXd vy = ctx.Vk_inv * ry;
      a_yy.noalias() += w * vy * vy.transpose();
      a_ye.noalias() += w * vy * eta.transpose();
      a_y += w * vy;
      Eigen::VectorXd s =
          rae ? act.f(pt.y) : act.f(Eigen::VectorXd(sq1m * pt.y + pt.x));
      k_ss.noalias() += w * s * s.transpose();
      if (!rae) {
        Eigen::VectorXd rx = pt.x - sqd * (ctx.q_sqrt * xi);
        Eigen::VectorXd vx = ctx.V_inv * rx;
        k_xx.noalias() += w * vx * vx.transpose();
        k_xxi.noalias() += w * vx * xi.transpose();
      }
      prev = std::move(pt);
      has_prev = true;
    }
    const double rk = rho[k];
    H.q_hat_k[k] = symmetrize(alpha * rk * a_yy);
    H.m_hat_k[k] = alpha * rk * a_y;
    H.V_hat_k[k] = symmetrize(-alpha * rk * (pinv_sqrt(S.q_k[k]) * a_ye));
    acc_ss += rk * k_ss;
    if (!rae) {
      acc_xx += rk * k_xx;
      acc_xxi += rk * k_xxi;
    }
  }
  if (rae) {
    H.V_hat = symmetrize(alpha * acc_ss);  // q_hat stays 0
  } else {
    H.q_hat = symmetrize((alpha / delta) * acc_xx);
    H.V_hat = symmetrize(
        -alpha * ((pinv_sqrt(S.q) * acc_xxi) / sqd - acc_ss));
  }
  return H;
}

SummaryStats stat_update(const HatStats& H, const SpectralMeasure& nu,
                         double lambda) {
  nu.validate();
  const int p = H.p(), K = H.K();
  if (nu.K() != K) throw ConfigError("stat_update: measure/hats K mismatch");
  if (lambda <= 0.0) throw ConfigError("stat_update: lambda must be > 0");

  SummaryStats S;
  S.q = Eigen::MatrixXd::Zero(p, p);
  S.V = Eigen::MatrixXd::Zero(p, p);
  S.q_k.assign(K, Eigen::MatrixXd::Zero(p, p));
  S.V_k.assign(K, Eigen::MatrixXd::Zero(p, p));
  S.m_k.assign(K, Eigen::VectorXd::Zero(p));

  for (size_t a = 0; a < nu.atoms.size(); ++a) {
    const auto& atom = nu.atoms[a];
    Eigen::MatrixXd M =
        lambda * Eigen::MatrixXd::Identity(p, p) + H.V_hat;
    for (int j = 0; j < K; ++j) M += atom.gamma[j] * H.V_hat_k[j];
    Eigen::MatrixXd R =
        inv_spd(M, ("stat_update resolvent at atom " + std::to_string(a)).c_str());
    Eigen::VectorXd mh = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < K; ++j) mh += atom.tau[j] * H.m_hat_k[j];
    Eigen::MatrixXd N = H.q_hat;
    for (int j = 0; j < K; ++j) N += atom.gamma[j] * H.q_hat_k[j];
    N.noalias() += mh * mh.transpose();
    Eigen::MatrixXd RNR = symmetrize(R * symmetrize(N) * R);
    Eigen::VectorXd Rmh = R * mh;
    S.q += atom.weight * RNR;
    S.V += atom.weight * R;
    for (int k = 0; k < K; ++k) {
      S.q_k[k] += atom.weight * atom.gamma[k] * RNR;
      S.V_k[k] += atom.weight * atom.gamma[k] * R;
      S.m_k[k] += atom.weight * atom.tau[k] * Rmh;
    }
  }
  S.q = symmetrize(S.q);
  S.V = symmetrize(S.V);
  for (int k = 0; k < K; ++k) {
    S.q_k[k] = symmetrize(S.q_k[k]);
    S.V_k[k] = symmetrize(S.V_k[k]);
    if (min_eig_sym(S.V_k[k]) <= 0.0)
      throw DegenerateProblem("stat_update: cluster " + std::to_string(k) +
                              " carries no spectral mass (V_k singular)");
  }
  S.validate();
  return S;
}

SummaryStats init_stats(const SpectralMeasure& nu, int p) {
  nu.validate();
  const int K = nu.K();
  SummaryStats S;
  S.q = 0.5 * Eigen::MatrixXd::Identity(p, p);
  S.V = Eigen::MatrixXd::Identity(p, p);
  for (int k = 0; k < K; ++k) {
    double gm = nu.gamma_mean(k);
    if (gm <= 0.0)
      throw DegenerateProblem("init_stats: cluster " + std::to_string(k) +
                              " has zero average spectral gamma");
    S.q_k.push_back(gm * S.q);
    S.V_k.push_back(gm * Eigen::MatrixXd::Identity(p, p));
    double tm = nu.tau_mean(k);
    double sign = tm < 0.0 ? -1.0 : 1.0;
    S.m_k.push_back(0.1 * sign * Eigen::VectorXd::Ones(p));
  }
  return S;
}

namespace {
double max_abs_diff(const SummaryStats& a, const SummaryStats& b) {
  double r = (a.q - b.q).cwiseAbs().maxCoeff();
  r = std::max(r, (a.V - b.V).cwiseAbs().maxCoeff());
  for (int k = 0; k < a.K(); ++k) {
    r = std::max(r, (a.q_k[k] - b.q_k[k]).cwiseAbs().maxCoeff());
    r = std::max(r, (a.V_k[k] - b.V_k[k]).cwiseAbs().maxCoeff());
    r = std::max(r, (a.m_k[k] - b.m_k[k]).cwiseAbs().maxCoeff());
  }
  return r;
}

void damp_into(SummaryStats& S, const SummaryStats& Snew, double gamma) {
  S.q = (1.0 - gamma) * S.q + gamma * Snew.q;
  S.V = (1.0 - gamma) * S.V + gamma * Snew.V;
  for (int k = 0; k < S.K(); ++k) {
    S.q_k[k] = (1.0 - gamma) * S.q_k[k] + gamma * Snew.q_k[k];
    S.V_k[k] = (1.0 - gamma) * S.V_k[k] + gamma * Snew.V_k[k];
    S.m_k[k] = (1.0 - gamma) * S.m_k[k] + gamma * Snew.m_k[k];
  }
}
}  // namespace

ReplicaSolution solve_fixed_point(const SpectralMeasure& nu,
                                  const Eigen::VectorXd& rho, double alpha,
                                  double delta, double lambda,
                                  const Activation& act,
                                  const SolverConfig& cfg, Variant variant) {
  nu.validate();
  if (rho.size() != nu.K())
    throw ConfigError("solve_fixed_point: weights/measure K mismatch");
  if (std::abs(rho.sum() - 1.0) > 1e-12)
    throw ConfigError("solve_fixed_point: cluster weights must sum to 1");
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0))
    throw ConfigError("solve_fixed_point: damping must lie in (0,1]");
  if (lambda <= 0.0) throw ConfigError("solve_fixed_point: lambda must be > 0");
  if (variant == Variant::anisotropic_k2)
    throw ConfigError("solve_fixed_point: use solve_anisotropic_binary");

  const bool rae = variant == Variant::rae;
  double b_hat = 0.0;
  double dlt = rae ? 0.0 : delta;
  if (variant == Variant::full_dae) b_hat = skip_strength(nu, rho, delta);
  if (!rae && !(delta > 0.0 && delta <= 1.0))
    throw DegenerateProblem(
        "solve_fixed_point: delta must lie in (0,1] for the dae variants");

  SummaryStats S = cfg.init ? *cfg.init : init_stats(nu, cfg.p);
  if (rae && !cfg.init) {
    // The -2 s'y reconstruction term makes the inner problem expansive
    // around the origin unless q sigma'(0)^2 > 2; starting q well above
    // that keeps the first resolvent positive definite.
    S.q *= 5.0;
    for (auto& qk : S.q_k) qk *= 5.0;
  }
  double resid = std::numeric_limits<double>::infinity();
  int it = 0;
  bool done = false;
  SummaryStats S_prev = S;
  int backoffs = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    HatStats H = hat_update(S, b_hat, dlt, alpha, rho, act, cfg, variant);
    SummaryStats Sn;
    try {
      Sn = stat_update(H, nu, lambda);
    } catch (const SingularResolvent&) {
      // A transient overshoot can push the resolvent out of the PD cone;
      // retreating halfway toward the last accepted iterate recovers it
      // without moving the fixed point.
      if (it == 1 || ++backoffs > 40) throw;
      damp_into(S, S_prev, 0.5);
      continue;
    }
    S_prev = S;
    resid = max_abs_diff(Sn, S);
    damp_into(S, Sn, cfg.damping);
    if (cfg.verbose)
      std::fprintf(stderr, "[solve] it=%d resid=%.3e q00=%.6f\n", it, resid,
                   S.q(0, 0));
    if (resid <= cfg.tol) {
      done = true;
      break;
    }
  }
  if (!done)
    throw NoConvergence("solve_fixed_point: residual " + std::to_string(resid) +
                            " after " + std::to_string(cfg.max_iter) +
                            " iterations",
                        cfg.max_iter, resid);
  ReplicaSolution sol;
  sol.hats = hat_update(S, b_hat, dlt, alpha, rho, act, cfg, variant);
  sol.stats = std::move(S);
  sol.b_hat = b_hat;
  sol.variant = variant;
  sol.iterations = it;
  sol.converged = true;
  sol.residual = resid;
  return sol;
}

ReplicaSolution solve_rae(const SpectralMeasure& nu, const Eigen::VectorXd& rho,
                          double alpha, double lambda, const Activation& act,
                          const SolverConfig& cfg) {
  return solve_fixed_point(nu, rho, alpha, 0.0, lambda, act, cfg, Variant::rae);
}

}  // namespace dae
