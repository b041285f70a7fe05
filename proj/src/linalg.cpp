#include "dae_asym/linalg.hpp"

#include "dae_asym/errors.hpp"

namespace dae {

double min_eig_sym(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd pinv_sqrt(const Eigen::MatrixXd& a, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
  const Eigen::VectorXd& ev = es.eigenvalues();
  double cut = ev.maxCoeff() * rel_tol;
  Eigen::VectorXd inv(ev.size());
  for (int i = 0; i < ev.size(); ++i)
    inv[i] = ev[i] > cut && ev[i] > 0.0 ? 1.0 / std::sqrt(ev[i]) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd inv_spd(const Eigen::MatrixXd& a, const char* what_name) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
  const Eigen::VectorXd& ev = es.eigenvalues();
  if (ev.minCoeff() <= 0.0)
    throw SingularResolvent(std::string(what_name) +
                            ": matrix not positive definite (min eig " +
                            std::to_string(ev.minCoeff()) + ")");
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace dae
