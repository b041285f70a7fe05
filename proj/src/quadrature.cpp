#include "dae_asym/quadrature.hpp"

#include <cmath>
#include <stdexcept>

#include "dae_asym/errors.hpp"
#include "dae_asym/rng.hpp"

namespace dae {

void gauss_hermite_prob(int n, Eigen::VectorXd& x, Eigen::VectorXd& w) {
  if (n < 1) throw ConfigError("gauss_hermite_prob: need n >= 1");
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    double b = std::sqrt(static_cast<double>(i));
    jac(i, i - 1) = b;
    jac(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  x = es.eigenvalues();
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double c = es.eigenvectors()(0, i);
    w[i] = c * c;
  }
}

double norm_inv_cdf(double u) {
  // Acklam's approximation, |relative error| < 1.15e-9, then one Halley step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  if (!(u > 0.0 && u < 1.0))
    throw ConfigError("norm_inv_cdf: argument must lie in (0,1)");
  double q, r, z;
  if (u < plow) {
    q = std::sqrt(-2.0 * std::log(u));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= phigh) {
    q = u - 0.5;
    r = q * q;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - u));
    z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement using the CDF via erfc.
  double e = 0.5 * std::erfc(-z / std::sqrt(2.0)) - u;
  double f = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * z * z);
  z -= f / (1.0 + 0.5 * z * f);
  return z;
}

namespace {
const int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19,
                       23, 29, 31, 37, 41, 43, 47, 53};
const int kHaltonOffset = 127;

double radical_inverse(long long i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * (i % base);
    i /= base;
  }
  return r;
}
}  // namespace

GaussGrid::GaussGrid(const QuadratureSpec& spec, int dim)
    : dim_(dim), kind_(spec.kind) {
  if (dim < 1) throw ConfigError("GaussGrid: dim must be >= 1");
  if (kind_ == QuadratureSpec::Kind::gauss_hermite) {
    gauss_hermite_prob(spec.nodes, gh_x_, gh_w_);
    double total = 1.0;
    for (int m = 0; m < dim; ++m) {
      total *= spec.nodes;
      if (total > 4e7) throw ConfigError("GaussGrid: tensor rule too large; use monte_carlo");
    }
    count_ = static_cast<int>(total);
  } else {
    if (dim > static_cast<int>(sizeof(kPrimes) / sizeof(int)))
      throw ConfigError("GaussGrid: monte_carlo supports at most 16 dimensions");
    count_ = spec.samples;
    primes_.assign(kPrimes, kPrimes + dim);
    shift_.resize(dim);  // Cranley-Patterson rotation keyed by the seed
    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    for (int m = 0; m < dim; ++m) shift_[m] = rng.uniform();
  }
}

void GaussGrid::node(int i, Eigen::VectorXd& z, double& w) const {
  z.resize(dim_);
  if (kind_ == QuadratureSpec::Kind::gauss_hermite) {
    int n = static_cast<int>(gh_x_.size());
    w = 1.0;
    int rem = i;
    for (int m = 0; m < dim_; ++m) {
      int idx = rem % n;
      rem /= n;
      z[m] = gh_x_[idx];
      w *= gh_w_[idx];
    }
  } else {
    w = 1.0 / count_;
    for (int m = 0; m < dim_; ++m) {
      double u = radical_inverse(i + kHaltonOffset, primes_[m]) + shift_[m];
      u -= std::floor(u);
      u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
      z[m] = norm_inv_cdf(u);
    }
  }
}

}  // namespace dae
