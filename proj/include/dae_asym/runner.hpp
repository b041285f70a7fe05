#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dae_asym/activation.hpp"
#include "dae_asym/mixture.hpp"
#include "dae_asym/replica.hpp"
#include "dae_asym/sim.hpp"

#define DAE_ASYM_VERSION "0.1.0"

namespace dae {

enum class RunMode { theory, simulate, baselines, compare };
const char* run_mode_name(RunMode m);
RunMode parse_run_mode(const std::string& name);

// Architecture at the run level; mapped onto the solver Variant and the
// trainer SimVariant internally.
enum class ModelVariant { dae, bottleneck, rae, rescaling };
const char* run_variant_name(ModelVariant v);
ModelVariant parse_run_variant(const std::string& name);

struct MixtureSource {
  enum class Kind { isotropic_binary, atoms, csv };
  Kind kind = Kind::isotropic_binary;
  // isotropic_binary: rho = (1/2, 1/2), mu_1 = -mu_2, Sigma = sigma2 I_d
  double sigma2 = 0.09;
  double mu_norm2 = 1.0;
  std::uint64_t direction_seed = 0;  // mean direction used when sampling
  int d = 0;                         // isotropic_binary / atoms
  // atoms: explicit spectral measure plus cluster weights
  SpectralMeasure measure;
  Eigen::VectorXd rho;
  // csv: labeled samples, clusters fitted empirically
  std::string csv_path;
  double csv_scale = 1.0;
  bool csv_center = false;
};

// The sweep is the cross product, alpha outer, delta inner.
struct GridSpec {
  std::vector<double> alpha;
  std::vector<double> delta;
};

struct ModelSpec {
  int p = 1;
  Activation act = Activation::tanh_act();
  double lambda = 0.1;
  ModelVariant variant = ModelVariant::dae;
};

struct SimSpec {
  int n_seeds = 5;
  int n_test = 1000;
  TrainConfig train;  // train.act mirrors model.act; train.seed from run seed
};

struct RunSpec {
  RunMode mode = RunMode::theory;
  MixtureSource mixture;
  GridSpec grid;
  ModelSpec model;
  SolverConfig solver;  // quadrature defaults follow model.p
  SimSpec sim;
  std::string output = ".";
  int jobs = 1;
  std::uint64_t seed = 0;
};

// Strict parse: unknown or ill-typed keys throw ConfigError naming the key.
RunSpec parse_run_spec(const std::string& json_text);
RunSpec load_run_spec(const std::string& path);  // IoError when unreadable

// Every invariant violation, one message each; empty means runnable.
std::vector<std::string> validate_spec(const RunSpec& spec);

// One output row of results.csv.  Absent optionals and NaN entries in the
// theta blocks print as empty cells.
struct ResultRow {
  double delta = 0.0;
  double alpha = 0.0;
  std::string variant;
  std::optional<double> b_hat, mse_theory, mse_circ, gap_per_d;
  std::vector<double> theta;  // p*K row-major, possibly empty
  std::optional<double> trq_per_p, train_error;
  std::optional<double> sim_mse, sim_mse_se;
  std::vector<double> sim_theta;
  std::optional<double> sim_b;
  std::string status = "ok";
};

struct PointDiagnostics {
  int index = 0;
  double alpha = 0.0, delta = 0.0;
  std::string status = "ok";
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  double wall_ms = 0.0;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 some grid points failed
  std::vector<ResultRow> rows;
  std::vector<PointDiagnostics> diagnostics;
  std::string csv_path, manifest_path;
};

// Executes the sweep in a pool of `jobs` workers and writes results.csv and
// manifest.json under spec.output.  Grid-point failures land in the status
// column without aborting the sweep.
RunResult run_spec(const RunSpec& spec);

std::string csv_header(int p, int K);
std::string csv_line(const ResultRow& row, int p, int K);
// Fully resolved config echo, bitwise re-runnable.
std::string manifest_json(const RunSpec& spec, const RunResult& result);

}  // namespace dae
