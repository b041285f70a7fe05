#include <cmath>
#include <limits>
#include <vector>

#include "dae_asym/baselines.hpp"
#include "dae_asym/errors.hpp"
#include "dae_asym/linalg.hpp"

namespace dae {

namespace {

struct TweedieWork {
  // per cluster: Cholesky of C_k = (1-Delta) Sigma_k + Delta I,
  // log rho_k - (1/2) ln det C_k, and the centered mean sqrt(1-Delta) mu_k
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt;
  std::vector<double> log_prior;
  std::vector<Eigen::VectorXd> mean;
  double sq1m = 0.0, delta = 0.0;
  int d = 0, K = 0;
};

TweedieWork tweedie_prepare(const MixtureSpec& mix, double delta) {
  mix.validate();
  if (delta < 0.0 || delta > 1.0)
    throw ConfigError("tweedie: delta must lie in [0,1]");
  TweedieWork w;
  w.d = mix.d();
  w.K = mix.K();
  w.delta = delta;
  w.sq1m = std::sqrt(1.0 - delta);
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(w.d, w.d);
  for (int k = 0; k < w.K; ++k) {
    Eigen::MatrixXd C = (1.0 - delta) * mix.covariances[k] + delta * eye;
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success)
      throw SingularCovariance("tweedie: C_" + std::to_string(k) +
                               " = (1-delta) Sigma + delta I not positive "
                               "definite");
    double half_logdet = 0.0;
    for (int i = 0; i < w.d; ++i)
      half_logdet += std::log(llt.matrixL()(i, i));
    w.log_prior.push_back(std::log(mix.weights[k]) - half_logdet);
    w.llt.push_back(std::move(llt));
    w.mean.push_back(w.sq1m * mix.means[k]);
  }
  return w;
}

Eigen::VectorXd responsibilities(const TweedieWork& w,
                                 const Eigen::VectorXd& x) {
  Eigen::VectorXd lw(w.K);
  for (int k = 0; k < w.K; ++k) {
    Eigen::VectorXd r = x - w.mean[k];
    // log density up to the shared (2 pi)^{-d/2}
    lw[k] = w.log_prior[k] - 0.5 * r.dot(w.llt[k].solve(r));
  }
  double mx = lw.maxCoeff();
  Eigen::VectorXd e = (lw.array() - mx).exp();
  return e / e.sum();
}

Eigen::VectorXd denoise_one(const TweedieWork& w, const MixtureSpec& mix,
                            const Eigen::VectorXd& x) {
  Eigen::VectorXd r = responsibilities(w, x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(w.d);
  for (int k = 0; k < w.K; ++k)
    out += r[k] * w.llt[k].solve(w.sq1m * (mix.covariances[k] * x) +
                                 w.delta * mix.means[k]);
  return out;
}

void check_delta_zero(const MixtureSpec& mix) {
  for (int k = 0; k < mix.K(); ++k)
    if (min_eig_sym(mix.covariances[k]) <= 0.0)
      throw SingularCovariance("tweedie: Sigma_" + std::to_string(k) +
                               " singular at delta = 0");
}

}  // namespace

Eigen::VectorXd tweedie_responsibilities(const Eigen::VectorXd& x_noisy,
                                         const MixtureSpec& mix, double delta) {
  TweedieWork w = tweedie_prepare(mix, delta);
  if (x_noisy.size() != w.d) throw ConfigError("tweedie: dimension mismatch");
  return responsibilities(w, x_noisy);
}

Eigen::VectorXd tweedie_denoise(const Eigen::VectorXd& x_noisy,
                                const MixtureSpec& mix, double delta) {
  if (delta == 0.0) {
    mix.validate();
    check_delta_zero(mix);
    return x_noisy;
  }
  TweedieWork w = tweedie_prepare(mix, delta);
  if (x_noisy.size() != w.d) throw ConfigError("tweedie: dimension mismatch");
  return denoise_one(w, mix, x_noisy);
}

Eigen::MatrixXd tweedie_denoise_batch(const Eigen::MatrixXd& noisy,
                                      const MixtureSpec& mix, double delta) {
  if (delta == 0.0) {
    mix.validate();
    check_delta_zero(mix);
    return noisy;
  }
  TweedieWork w = tweedie_prepare(mix, delta);
  if (noisy.cols() != w.d) throw ConfigError("tweedie: dimension mismatch");
  Eigen::MatrixXd out(noisy.rows(), noisy.cols());
  for (Eigen::Index i = 0; i < noisy.rows(); ++i)
    out.row(i) = denoise_one(w, mix, noisy.row(i).transpose()).transpose();
  return out;
}

OracleMse oracle_mse_theory(double sigma2, double delta,
                            const QuadratureSpec& quad) {
  if (sigma2 <= 0.0) throw ConfigError("oracle_mse: sigma2 must be > 0");
  if (delta < 0.0 || delta > 1.0)
    throw ConfigError("oracle_mse: delta must lie in [0,1]");
  const double D = sigma2 * (1.0 - delta) + delta;
  const double sq1m = std::sqrt(1.0 - delta);
  OracleMse res;
  res.b = sq1m * sigma2 / D;
  const double c1 = 1.0 - res.b * sq1m;
  const double noise = sq1m * std::sqrt(D);
  GaussGrid grid(quad, 1);
  Eigen::VectorXd z;
  double w;
  double e_sq = 0.0, e_cross = 0.0;
  for (int s = -1; s <= 1; s += 2)
    for (int i = 0; i < grid.count(); ++i) {
      grid.node(i, z, w);
      double t = std::tanh(((1.0 - delta) * s + noise * z[0]) / D);
      e_sq += 0.5 * w * t * t;
      e_cross += 0.5 * w * t * c1 * s;
    }
  res.sq_term = (delta / D) * (delta / D) * e_sq;
  res.cross_term = -2.0 * (delta / D) * e_cross;
  return res;
}

BayesStats bayes_fixed_point(double alpha, double sigma2,
                             const BayesConfig& cfg) {
  if (alpha < 0.0) throw ConfigError("bayes: alpha must be >= 0");
  if (sigma2 <= 0.0) throw ConfigError("bayes: sigma2 must be > 0");
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0))
    throw ConfigError("bayes: damping must lie in (0,1]");
  BayesStats st;
  st.sigma2 = sigma2;
  st.alpha = alpha;
  st.sigma_hat2 = sigma2 / (sigma2 + alpha);
  st.alpha_near_zero = alpha < 1e-8;
  if (alpha == 0.0) {
    st.V = st.sigma_hat2;
    st.q = st.sigma_hat2;
    st.m = 0.0;
    st.converged = true;
    return st;
  }

  Eigen::VectorXd gx, gw;
  gauss_hermite_prob(cfg.gh_nodes, gx, gw);
  const double sigma = std::sqrt(sigma2);
  double q = st.sigma_hat2, V = st.sigma_hat2, m = 0.1;
  double qh = 0.0, mh = 0.0, Vh = 0.0, resid = 0.0;
  auto hats = [&](double q_, double m_, double V_) {
    double sq = std::sqrt(std::max(q_, 0.0));
    double e_t = 0.0, e_te = 0.0;
    for (int i = 0; i < gx.size(); ++i) {
      double t = std::tanh((sigma * sq * gx[i] + m_) / sigma2);
      e_t += gw[i] * t;
      e_te += gw[i] * t * gx[i];
    }
    Vh = sq > 0.0 ? -alpha / (sigma * sq) * e_te : 0.0;
    qh = alpha * V_ / sigma2;
    mh = alpha / sigma2 * e_t;
  };
  bool done = false;
  int it = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    hats(q, m, V);
    double den = 1.0 + Vh * st.sigma_hat2;
    if (den <= 0.0)
      throw NoConvergence("bayes: resolvent denominator nonpositive", it, den);
    double Vn = st.sigma_hat2 / den;
    double qn = st.sigma_hat2 * st.sigma_hat2 * (qh + mh * mh) / (den * den) +
                st.sigma_hat2 / den;
    double mn = st.sigma_hat2 * mh / den;
    resid = std::max({std::abs(Vn - V), std::abs(qn - q), std::abs(mn - m)});
    V += cfg.damping * (Vn - V);
    q += cfg.damping * (qn - q);
    m += cfg.damping * (mn - m);
    if (resid <= cfg.tol) {
      done = true;
      break;
    }
  }
  if (!done)
    throw NoConvergence("bayes: residual " + std::to_string(resid) + " after " +
                            std::to_string(cfg.max_iter) + " iterations",
                        cfg.max_iter, resid);
  hats(q, m, V);
  st.q = q;
  st.m = m;
  st.V = V;
  st.q_hat = qh;
  st.m_hat = mh;
  st.V_hat = Vh;
  st.converged = true;
  st.iterations = it;
  st.residual = resid;
  return st;
}

double bayes_mse(const BayesStats& stats, double sigma2, double delta,
                 const QuadratureSpec& quad) {
  if (sigma2 <= 0.0) throw ConfigError("bayes_mse: sigma2 must be > 0");
  if (delta < 0.0 || delta > 1.0)
    throw ConfigError("bayes_mse: delta must lie in [0,1]");
  const double D = sigma2 * (1.0 - delta) + delta;
  const double sq1m = std::sqrt(1.0 - delta);
  const double b = sq1m * sigma2 / D;
  const double c1 = 1.0 - b * sq1m;
  const double q = stats.q, V = stats.V, m = stats.m;
  auto g = [&](double t) {
    return std::tanh(((1.0 - delta) * m + sq1m * std::sqrt(D) * t) / D);
  };

  double e_cross = 0.0;
  {
    GaussGrid grid(quad, 1);
    Eigen::VectorXd z;
    double w;
    const double sd = std::sqrt(std::max(q + V, 0.0));
    for (int i = 0; i < grid.count(); ++i) {
      grid.node(i, z, w);
      e_cross += w * g(sd * z[0]);
    }
  }
  double e_sq = 0.0;
  {
    // u, v with covariance [[q+V, q], [q, q+V]], via the 2x2 Cholesky factor
    const double l11 = std::sqrt(std::max(q + V, 0.0));
    const double l21 = l11 > 0.0 ? q / l11 : 0.0;
    const double l22 = std::sqrt(std::max(q + V - l21 * l21, 0.0));
    GaussGrid grid(quad, 2);
    Eigen::VectorXd z;
    double w;
    for (int i = 0; i < grid.count(); ++i) {
      grid.node(i, z, w);
      double u = l11 * z[0];
      double v = l21 * z[0] + l22 * z[1];
      e_sq += w * g(u) * g(v);
    }
  }
  return -2.0 * (delta / D) * c1 * m * e_cross +
         (delta / D) * (delta / D) * q * e_sq;
}

PcaBasis pca_fit(const Eigen::MatrixXd& clean, int p) {
  const Eigen::Index n = clean.rows(), d = clean.cols();
  if (n < 2) throw ConfigError("pca_fit: need at least 2 samples");
  if (p < 1 || p > d) throw ConfigError("pca_fit: p out of range");
  Eigen::MatrixXd centered = clean.rowwise() - clean.colwise().mean();
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(cov));
  if (es.info() != Eigen::Success)
    throw ConfigError("pca_fit: eigendecomposition failed");

  PcaBasis basis;
  basis.eigenvalues.resize(d);
  Eigen::MatrixXd vecs(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {  // descending
    basis.eigenvalues[i] = es.eigenvalues()[d - 1 - i];
    vecs.col(i) = es.eigenvectors().col(d - 1 - i);
  }
  const double lmax = std::max(basis.eigenvalues[0], 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    if (basis.eigenvalues[i] > 1e-10 * std::max(lmax, 1e-300)) ++rank;
  if (p > rank)
    throw RankDeficient("pca_fit: requested " + std::to_string(p) +
                        " components from rank-" + std::to_string(rank) +
                        " covariance");
  for (int j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < d; ++i)
      if (std::abs(vecs(i, j)) > 1e-12) {
        if (vecs(i, j) < 0.0) vecs.col(j) = -vecs.col(j);
        break;
      }
  basis.components = vecs.leftCols(p);
  const double next = p < d ? basis.eigenvalues[p] : 0.0;
  basis.gap_ratio = next > 0.0 ? basis.eigenvalues[p - 1] / next
                               : std::numeric_limits<double>::infinity();
  basis.low_separation = basis.gap_ratio < 1.5;
  return basis;
}

Eigen::VectorXd pca_denoise(const Eigen::VectorXd& x_noisy,
                            const PcaBasis& basis, double scale) {
  if (x_noisy.size() != basis.components.rows())
    throw ConfigError("pca_denoise: dimension mismatch");
  return scale * (basis.components * (basis.components.transpose() * x_noisy));
}

Eigen::MatrixXd pca_denoise_batch(const Eigen::MatrixXd& noisy,
                                  const PcaBasis& basis, double scale) {
  if (noisy.cols() != basis.components.rows())
    throw ConfigError("pca_denoise: dimension mismatch");
  return scale * (noisy * basis.components) * basis.components.transpose();
}

Eigen::VectorXd pca_plugin_denoise(const Eigen::VectorXd& x_noisy,
                                   const Eigen::VectorXd& mu_hat, double sigma2,
                                   double delta) {
  if (x_noisy.size() != mu_hat.size())
    throw ConfigError("pca_plugin: dimension mismatch");
  if (sigma2 <= 0.0) throw ConfigError("pca_plugin: sigma2 must be > 0");
  if (delta < 0.0 || delta > 1.0)
    throw ConfigError("pca_plugin: delta must lie in [0,1]");
  const double D = sigma2 * (1.0 - delta) + delta;
  const double sq1m = std::sqrt(1.0 - delta);
  const double b = sq1m * sigma2 / D;
  return b * x_noisy +
         (delta / D) * std::tanh(sq1m * x_noisy.dot(mu_hat) / D) * mu_hat;
}

Eigen::MatrixXd pca_plugin_denoise_batch(const Eigen::MatrixXd& noisy,
                                         const Eigen::VectorXd& mu_hat,
                                         double sigma2, double delta) {
  Eigen::MatrixXd out(noisy.rows(), noisy.cols());
  for (Eigen::Index i = 0; i < noisy.rows(); ++i)
    out.row(i) =
        pca_plugin_denoise(noisy.row(i).transpose(), mu_hat, sigma2, delta)
            .transpose();
  return out;
}

}  // namespace dae
