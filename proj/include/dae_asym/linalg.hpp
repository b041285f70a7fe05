#pragma once

#include <Eigen/Dense>

namespace dae {

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

// Smallest eigenvalue of a symmetric matrix.
double min_eig_sym(const Eigen::MatrixXd& a);

// Symmetric PSD square root; eigenvalues below zero are clipped to zero.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& a);

// Pseudo-inverse square root: eigendirections with lambda <= rel_tol * lambda_max
// map to zero.  Needed where q^{-1/2} appears and q may be singular.
Eigen::MatrixXd pinv_sqrt(const Eigen::MatrixXd& a, double rel_tol = 1e-12);

// Inverse of a symmetric positive definite matrix; throws SingularResolvent
// (with `what_name` in the message) if the smallest eigenvalue is <= 0.
Eigen::MatrixXd inv_spd(const Eigen::MatrixXd& a, const char* what_name);

}  // namespace dae
