#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace dae {

// A K-component Gaussian mixture in dimension d.
struct MixtureSpec {
  Eigen::VectorXd weights;                  // K, sums to 1
  std::vector<Eigen::VectorXd> means;       // K vectors of size d
  std::vector<Eigen::MatrixXd> covariances; // K PSD d x d matrices
  int K() const { return static_cast<int>(weights.size()); }
  int d() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  // Throws ConfigError / NotPsd when the invariants fail:
  // weights sum to 1 within 1e-12, shared d, symmetric PSD covariances
  // (smallest eigenvalue >= -1e-10 * largest across the mixture).
  void validate() const;
};

// One atom of the joint spectral measure of the mixture in the common
// eigenbasis: gamma_k = e_i' Sigma_k e_i and tau_k = sqrt(d) e_i' mu_k.
struct SpectralAtom {
  double weight;
  Eigen::VectorXd gamma;  // K, >= 0
  Eigen::VectorXd tau;    // K
};

struct SpectralMeasure {
  std::vector<SpectralAtom> atoms;
  int d = 0;
  int K() const { return atoms.empty() ? 0 : static_cast<int>(atoms[0].gamma.size()); }
  double gamma_mean(int k) const;   // = tr(Sigma_k) / d
  double tau_mean(int k) const;
  double tau_sq_mean(int k) const;  // = |mu_k|^2
  void validate() const;            // weights sum to 1 within 1e-10, gamma >= 0
};

// n paired samples: noisy = sqrt(1-delta) * clean + sqrt(delta) * xi.
// Rows are samples.  Regenerating with the same seed reproduces the draws.
struct Dataset {
  Eigen::MatrixXd clean;   // n x d
  Eigen::MatrixXd noisy;   // n x d
  Eigen::VectorXi labels;  // n, cluster index
  double delta = 0.0;
  std::uint64_t seed = 0;
  int n() const { return static_cast<int>(clean.rows()); }
  int d() const { return static_cast<int>(clean.cols()); }
};

// Joint spectral measure in the eigenbasis of sum_k weights_k Sigma_k.
// All covariances must commute pairwise within commute_tol (relative
// Frobenius norm), otherwise CommutativityViolation is thrown.  Eigenpairs
// are sorted by descending eigenvalue; each eigenvector is flipped so its
// first nonzero component is positive.
SpectralMeasure build_spectral_measure(const MixtureSpec& spec,
                                       double commute_tol = 1e-8);

// Measure of the symmetric binary mixture rho = (1/2, 1/2),
// mu_1 = -mu_2 (|mu|^2 = mu_norm2), Sigma_k = sigma2 * I_d: one atom of
// weight 1/d carrying tau = (sqrt(d mu_norm2), -sqrt(d mu_norm2)) and the
// remaining weight (d-1)/d with tau = 0; gamma = (sigma2, sigma2) throughout.
SpectralMeasure isotropic_binary_measure(double sigma2, double mu_norm2, int d);

// Concrete mixture realizing isotropic_binary_measure: the mean direction is
// a seeded random unit vector scaled to |mu| = sqrt(mu_norm2).
MixtureSpec isotropic_binary_mixture(double sigma2, double mu_norm2, int d,
                                     std::uint64_t direction_seed);

Dataset sample_dataset(const MixtureSpec& spec, int n, double delta,
                       std::uint64_t seed);

// Per-label empirical weights, means and unbiased covariances.  Labels may be
// arbitrary integers; clusters are ordered by ascending label.  Throws
// DegenerateCluster when a label has fewer than 2 samples.
MixtureSpec empirical_cluster_stats(const Eigen::MatrixXd& x,
                                    const Eigen::VectorXi& labels);

// Labeled-vector CSV: header "f0,...,f{d-1},label", one sample per row,
// features scaled by `scale` on read.
struct LabeledData {
  Eigen::MatrixXd x;
  Eigen::VectorXi labels;
};
LabeledData read_labeled_csv(const std::string& path, double scale = 1.0);
void write_labeled_csv(const std::string& path, const Eigen::MatrixXd& x,
                       const Eigen::VectorXi& labels);

}  // namespace dae
