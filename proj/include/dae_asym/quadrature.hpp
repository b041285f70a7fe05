#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace dae {

// How to evaluate Gaussian expectations E_{z ~ N(0, I_dim)}[f(z)].
// gauss_hermite: tensor product rule, `nodes` points per coordinate.
// monte_carlo: randomized Halton points mapped through the normal inverse CDF.
struct QuadratureSpec {
  enum class Kind { gauss_hermite, monte_carlo };
  Kind kind = Kind::gauss_hermite;
  int nodes = 40;
  int samples = 4096;
  std::uint64_t seed = 0;

  static QuadratureSpec gh(int n) {
    QuadratureSpec q;
    q.kind = Kind::gauss_hermite;
    q.nodes = n;
    return q;
  }
  static QuadratureSpec mc(int samples, std::uint64_t seed) {
    QuadratureSpec q;
    q.kind = Kind::monte_carlo;
    q.samples = samples;
    q.seed = seed;
    return q;
  }
};

// Nodes x and weights w with sum(w) = 1 such that E_{z~N(0,1)} f(z) ~= sum w_i f(x_i).
// Golub-Welsch on the Jacobi matrix of the Hermite polynomials orthonormal
// under the standard normal weight.
void gauss_hermite_prob(int n, Eigen::VectorXd& x, Eigen::VectorXd& w);

// Inverse CDF of N(0,1) (Acklam's rational approximation plus one Halley step).
double norm_inv_cdf(double u);

// Deterministic enumeration of the nodes of a dim-dimensional Gaussian rule.
class GaussGrid {
 public:
  GaussGrid(const QuadratureSpec& spec, int dim);
  int count() const { return count_; }
  // Fills z (size dim) and the weight of node i.
  void node(int i, Eigen::VectorXd& z, double& w) const;

 private:
  int dim_;
  int count_;
  QuadratureSpec::Kind kind_;
  Eigen::VectorXd gh_x_, gh_w_;          // gauss_hermite
  std::vector<int> primes_;              // monte_carlo
  std::vector<double> shift_;
};

}  // namespace dae
