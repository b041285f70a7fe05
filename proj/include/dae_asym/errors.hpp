#pragma once

#include <stdexcept>
#include <string>

namespace dae {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct NotPsd : Error { using Error::Error; };
struct CommutativityViolation : Error { using Error::Error; };
struct DegenerateCluster : Error { using Error::Error; };
struct DegenerateProblem : Error { using Error::Error; };
struct SingularResolvent : Error { using Error::Error; };
struct SingularCovariance : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct Divergence : Error { using Error::Error; };

struct ProxNoConvergence : Error {
  double best_grad_norm;
  ProxNoConvergence(const std::string& msg, double g) : Error(msg), best_grad_norm(g) {}
};

struct NoConvergence : Error {
  int iterations;
  double residual;
  NoConvergence(const std::string& msg, int it, double r)
      : Error(msg), iterations(it), residual(r) {}
};

}  // namespace dae
