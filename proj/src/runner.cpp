#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dae_asym/baselines.hpp"
#include "dae_asym/errors.hpp"
#include "dae_asym/metrics.hpp"
#include "dae_asym/runner.hpp"

namespace dae {

using njson = nlohmann::json;

const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::theory: return "theory";
    case RunMode::simulate: return "simulate";
    case RunMode::baselines: return "baselines";
    case RunMode::compare: return "compare";
  }
  return "?";
}

RunMode parse_run_mode(const std::string& name) {
  if (name == "theory") return RunMode::theory;
  if (name == "simulate") return RunMode::simulate;
  if (name == "baselines") return RunMode::baselines;
  if (name == "compare") return RunMode::compare;
  throw ConfigError("config: unknown mode '" + name + "'");
}

const char* run_variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::dae: return "dae";
    case ModelVariant::bottleneck: return "bottleneck";
    case ModelVariant::rae: return "rae";
    case ModelVariant::rescaling: return "rescaling";
  }
  return "?";
}

ModelVariant parse_run_variant(const std::string& name) {
  if (name == "dae") return ModelVariant::dae;
  if (name == "bottleneck") return ModelVariant::bottleneck;
  if (name == "rae") return ModelVariant::rae;
  if (name == "rescaling") return ModelVariant::rescaling;
  throw ConfigError("config: unknown model.variant '" + name + "'");
}

namespace {

// ---- strict JSON access -------------------------------------------------

void check_keys(const njson& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("config: unknown key '" + where + "." + it.key() +
                        "'");
  }
}

const njson* find(const njson& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double as_num(const njson& v, const std::string& name) {
  if (!v.is_number())
    throw ConfigError("config: '" + name + "' must be a number");
  return v.get<double>();
}

int as_int(const njson& v, const std::string& name) {
  if (!v.is_number_integer())
    throw ConfigError("config: '" + name + "' must be an integer");
  return v.get<int>();
}

std::string as_str(const njson& v, const std::string& name) {
  if (!v.is_string())
    throw ConfigError("config: '" + name + "' must be a string");
  return v.get<std::string>();
}

std::uint64_t as_seed(const njson& v, const std::string& name) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ConfigError("config: '" + name + "' must be an integer");
  return v.get<std::uint64_t>();
}

bool as_bool(const njson& v, const std::string& name) {
  if (!v.is_boolean())
    throw ConfigError("config: '" + name + "' must be a boolean");
  return v.get<bool>();
}

std::vector<double> as_num_list(const njson& v, const std::string& name) {
  std::vector<double> out;
  if (v.is_number()) {
    out.push_back(v.get<double>());
    return out;
  }
  if (!v.is_array())
    throw ConfigError("config: '" + name + "' must be a number or list");
  for (const auto& e : v) out.push_back(as_num(e, name + "[]"));
  return out;
}

// ---- parsing ------------------------------------------------------------

MixtureSource parse_mixture(const njson& m) {
  if (!m.is_object())
    throw ConfigError("config: 'mixture' must be an object");
  const njson* type = find(m, "type");
  if (!type) throw ConfigError("config: missing key 'mixture.type'");
  MixtureSource src;
  const std::string kind = as_str(*type, "mixture.type");
  if (kind == "isotropic_binary") {
    check_keys(m, "mixture",
               {"type", "sigma2", "mu_norm2", "d", "direction_seed"});
    src.kind = MixtureSource::Kind::isotropic_binary;
    if (const njson* v = find(m, "sigma2"))
      src.sigma2 = as_num(*v, "mixture.sigma2");
    if (const njson* v = find(m, "mu_norm2"))
      src.mu_norm2 = as_num(*v, "mixture.mu_norm2");
    const njson* d = find(m, "d");
    if (!d) throw ConfigError("config: missing key 'mixture.d'");
    src.d = as_int(*d, "mixture.d");
    if (const njson* v = find(m, "direction_seed"))
      src.direction_seed = as_seed(*v, "mixture.direction_seed");
  } else if (kind == "atoms") {
    check_keys(m, "mixture", {"type", "d", "rho", "atoms"});
    src.kind = MixtureSource::Kind::atoms;
    const njson* d = find(m, "d");
    if (!d) throw ConfigError("config: missing key 'mixture.d'");
    src.d = as_int(*d, "mixture.d");
    const njson* rho = find(m, "rho");
    if (!rho || !rho->is_array())
      throw ConfigError("config: 'mixture.rho' must be a list");
    src.rho.resize(static_cast<Eigen::Index>(rho->size()));
    for (Eigen::Index k = 0; k < src.rho.size(); ++k)
      src.rho[k] = as_num((*rho)[static_cast<std::size_t>(k)], "mixture.rho[]");
    const njson* atoms = find(m, "atoms");
    if (!atoms || !atoms->is_array())
      throw ConfigError("config: 'mixture.atoms' must be a list");
    src.measure.d = src.d;
    for (const auto& a : *atoms) {
      if (!a.is_object())
        throw ConfigError("config: 'mixture.atoms[]' must be objects");
      check_keys(a, "mixture.atoms[]", {"weight", "gamma", "tau"});
      SpectralAtom atom;
      const njson* w = find(a, "weight");
      const njson* g = find(a, "gamma");
      const njson* t = find(a, "tau");
      if (!w || !g || !t)
        throw ConfigError(
            "config: each mixture atom needs weight, gamma, tau");
      atom.weight = as_num(*w, "mixture.atoms[].weight");
      std::vector<double> gv = as_num_list(*g, "mixture.atoms[].gamma");
      std::vector<double> tv = as_num_list(*t, "mixture.atoms[].tau");
      atom.gamma = Eigen::Map<Eigen::VectorXd>(gv.data(),
                                               static_cast<Eigen::Index>(gv.size()));
      atom.tau = Eigen::Map<Eigen::VectorXd>(tv.data(),
                                             static_cast<Eigen::Index>(tv.size()));
      src.measure.atoms.push_back(std::move(atom));
    }
  } else if (kind == "csv") {
    check_keys(m, "mixture", {"type", "path", "scale", "center"});
    src.kind = MixtureSource::Kind::csv;
    const njson* path = find(m, "path");
    if (!path) throw ConfigError("config: missing key 'mixture.path'");
    src.csv_path = as_str(*path, "mixture.path");
    if (const njson* v = find(m, "scale"))
      src.csv_scale = as_num(*v, "mixture.scale");
    if (const njson* v = find(m, "center"))
      src.csv_center = as_bool(*v, "mixture.center");
  } else {
    throw ConfigError("config: unknown mixture.type '" + kind + "'");
  }
  return src;
}

QuadratureSpec parse_quadrature(const njson& q, QuadratureSpec base) {
  if (!q.is_object())
    throw ConfigError("config: 'solver.quadrature' must be an object");
  check_keys(q, "solver.quadrature", {"kind", "nodes", "samples", "seed"});
  if (const njson* v = find(q, "kind")) {
    const std::string kind = as_str(*v, "solver.quadrature.kind");
    if (kind == "gh")
      base.kind = QuadratureSpec::Kind::gauss_hermite;
    else if (kind == "mc")
      base.kind = QuadratureSpec::Kind::monte_carlo;
    else
      throw ConfigError("config: solver.quadrature.kind must be 'gh' or 'mc'");
  }
  if (const njson* v = find(q, "nodes"))
    base.nodes = as_int(*v, "solver.quadrature.nodes");
  if (const njson* v = find(q, "samples"))
    base.samples = as_int(*v, "solver.quadrature.samples");
  if (const njson* v = find(q, "seed"))
    base.seed = as_seed(*v, "solver.quadrature.seed");
  return base;
}

}  // namespace

RunSpec parse_run_spec(const std::string& json_text) {
  njson root;
  try {
    root = njson::parse(json_text);
  } catch (const njson::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object())
    throw ConfigError("config: top level must be an object");
  check_keys(root, "spec",
             {"mode", "mixture", "grid", "model", "solver", "sim", "output",
              "jobs", "seed"});

  RunSpec spec;
  if (const njson* v = find(root, "mode"))
    spec.mode = parse_run_mode(as_str(*v, "mode"));

  const njson* mix = find(root, "mixture");
  if (!mix) throw ConfigError("config: missing key 'mixture'");
  spec.mixture = parse_mixture(*mix);

  const njson* grid = find(root, "grid");
  if (!grid) throw ConfigError("config: missing key 'grid'");
  if (!grid->is_object())
    throw ConfigError("config: 'grid' must be an object");
  check_keys(*grid, "grid", {"alpha", "delta"});
  if (const njson* v = find(*grid, "alpha"))
    spec.grid.alpha = as_num_list(*v, "grid.alpha");
  if (const njson* v = find(*grid, "delta"))
    spec.grid.delta = as_num_list(*v, "grid.delta");

  if (const njson* model = find(root, "model")) {
    if (!model->is_object())
      throw ConfigError("config: 'model' must be an object");
    check_keys(*model, "model", {"p", "activation", "lambda", "variant"});
    if (const njson* v = find(*model, "p"))
      spec.model.p = as_int(*v, "model.p");
    if (const njson* v = find(*model, "activation"))
      spec.model.act = Activation::parse(as_str(*v, "model.activation"));
    if (const njson* v = find(*model, "lambda"))
      spec.model.lambda = as_num(*v, "model.lambda");
    if (const njson* v = find(*model, "variant"))
      spec.model.variant = parse_run_variant(as_str(*v, "model.variant"));
  }

  spec.solver = SolverConfig::defaults_for(std::max(spec.model.p, 1));
  if (const njson* solver = find(root, "solver")) {
    if (!solver->is_object())
      throw ConfigError("config: 'solver' must be an object");
    check_keys(*solver, "solver",
               {"damping", "tol", "max_iter", "quadrature", "prox_tol",
                "prox_max_iter", "verbose"});
    if (const njson* v = find(*solver, "damping"))
      spec.solver.damping = as_num(*v, "solver.damping");
    if (const njson* v = find(*solver, "tol"))
      spec.solver.tol = as_num(*v, "solver.tol");
    if (const njson* v = find(*solver, "max_iter"))
      spec.solver.max_iter = as_int(*v, "solver.max_iter");
    if (const njson* v = find(*solver, "quadrature"))
      spec.solver.quadrature = parse_quadrature(*v, spec.solver.quadrature);
    if (const njson* v = find(*solver, "prox_tol"))
      spec.solver.prox_tol = as_num(*v, "solver.prox_tol");
    if (const njson* v = find(*solver, "prox_max_iter"))
      spec.solver.prox_max_iter = as_int(*v, "solver.prox_max_iter");
    if (const njson* v = find(*solver, "verbose"))
      spec.solver.verbose = as_bool(*v, "solver.verbose");
  }

  if (const njson* sim = find(root, "sim")) {
    if (!sim->is_object()) throw ConfigError("config: 'sim' must be an object");
    check_keys(*sim, "sim",
               {"n_seeds", "n_test", "lr", "epochs", "weight_decay", "beta1",
                "beta2", "eps"});
    if (const njson* v = find(*sim, "n_seeds"))
      spec.sim.n_seeds = as_int(*v, "sim.n_seeds");
    if (const njson* v = find(*sim, "n_test"))
      spec.sim.n_test = as_int(*v, "sim.n_test");
    if (const njson* v = find(*sim, "lr"))
      spec.sim.train.lr = as_num(*v, "sim.lr");
    if (const njson* v = find(*sim, "epochs"))
      spec.sim.train.epochs = as_int(*v, "sim.epochs");
    if (const njson* v = find(*sim, "weight_decay"))
      spec.sim.train.weight_decay = as_num(*v, "sim.weight_decay");
    if (const njson* v = find(*sim, "beta1"))
      spec.sim.train.beta1 = as_num(*v, "sim.beta1");
    if (const njson* v = find(*sim, "beta2"))
      spec.sim.train.beta2 = as_num(*v, "sim.beta2");
    if (const njson* v = find(*sim, "eps"))
      spec.sim.train.eps = as_num(*v, "sim.eps");
  }

  if (const njson* v = find(root, "output"))
    spec.output = as_str(*v, "output");
  if (const njson* v = find(root, "jobs")) spec.jobs = as_int(*v, "jobs");
  if (const njson* v = find(root, "seed")) spec.seed = as_seed(*v, "seed");
  spec.solver.p = spec.model.p;
  spec.sim.train.act = spec.model.act;
  return spec;
}

RunSpec load_run_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read spec file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_spec(ss.str());
}

std::vector<std::string> validate_spec(const RunSpec& spec) {
  std::vector<std::string> out;
  auto bad = [&](const std::string& msg) { out.push_back(msg); };

  const bool sims =
      spec.mode == RunMode::simulate || spec.mode == RunMode::compare;

  if (spec.grid.alpha.empty()) bad("grid.alpha must be nonempty");
  if (spec.grid.delta.empty()) bad("grid.delta must be nonempty");
  for (double a : spec.grid.alpha)
    if (!(a >= 0.0) || !std::isfinite(a))
      bad("grid.alpha values must be finite and >= 0");
  for (double dlt : spec.grid.delta) {
    if (!(dlt >= 0.0 && dlt <= 1.0)) {
      bad("grid.delta values must lie in [0,1]");
      break;
    }
  }
  if (spec.model.variant == ModelVariant::rae) {
    for (double dlt : spec.grid.delta)
      if (dlt != 0.0) {
        bad("variant 'rae' requires grid.delta = [0]");
        break;
      }
  } else if (spec.model.variant == ModelVariant::dae ||
             spec.model.variant == ModelVariant::bottleneck) {
    for (double dlt : spec.grid.delta)
      if (dlt == 0.0) {
        bad("variant '" + std::string(run_variant_name(spec.model.variant)) +
            "' requires grid.delta > 0 (use 'rae' for the noiseless case)");
        break;
      }
  }

  if (spec.model.p < 1) bad("model.p must be >= 1");
  if (!(spec.model.lambda > 0.0)) bad("model.lambda must be > 0");

  switch (spec.mixture.kind) {
    case MixtureSource::Kind::isotropic_binary:
      if (!(spec.mixture.sigma2 > 0.0)) bad("mixture.sigma2 must be > 0");
      if (spec.mixture.mu_norm2 < 0.0) bad("mixture.mu_norm2 must be >= 0");
      if (spec.mixture.d < 2) bad("mixture.d must be >= 2");
      break;
    case MixtureSource::Kind::atoms: {
      if (spec.mixture.d < 1) bad("mixture.d must be >= 1");
      if (spec.mixture.measure.atoms.empty()) {
        bad("mixture.atoms must be nonempty");
        break;
      }
      try {
        spec.mixture.measure.validate();
      } catch (const Error& e) {
        bad(std::string("mixture.atoms: ") + e.what());
      }
      const int K = spec.mixture.measure.K();
      if (spec.mixture.rho.size() != K) {
        bad("mixture.rho must have one weight per cluster");
      } else if (std::abs(spec.mixture.rho.sum() - 1.0) > 1e-10 ||
                 spec.mixture.rho.minCoeff() < 0.0) {
        bad("mixture.rho must be nonnegative and sum to 1");
      }
      break;
    }
    case MixtureSource::Kind::csv:
      if (spec.mixture.csv_path.empty()) bad("mixture.path must be nonempty");
      if (!(spec.mixture.csv_scale > 0.0)) bad("mixture.scale must be > 0");
      break;
  }

  if (spec.mode == RunMode::baselines) {
    if (spec.mixture.kind != MixtureSource::Kind::isotropic_binary)
      bad("baselines mode requires mixture.type = isotropic_binary");
    else if (spec.mixture.mu_norm2 != 1.0)
      bad("baselines mode requires mixture.mu_norm2 = 1");
  }

  if (!(spec.solver.damping > 0.0 && spec.solver.damping <= 1.0))
    bad("solver.damping must lie in (0,1]");
  if (!(spec.solver.tol > 0.0)) bad("solver.tol must be > 0");
  if (spec.solver.max_iter < 1) bad("solver.max_iter must be >= 1");
  if (!(spec.solver.prox_tol > 0.0)) bad("solver.prox_tol must be > 0");
  if (spec.solver.prox_max_iter < 1) bad("solver.prox_max_iter must be >= 1");
  if (spec.solver.quadrature.kind == QuadratureSpec::Kind::gauss_hermite &&
      spec.solver.quadrature.nodes < 1)
    bad("solver.quadrature.nodes must be >= 1");
  if (spec.solver.quadrature.kind == QuadratureSpec::Kind::monte_carlo &&
      spec.solver.quadrature.samples < 1)
    bad("solver.quadrature.samples must be >= 1");

  if (sims) {
    if (spec.sim.n_seeds < 1) bad("sim.n_seeds must be >= 1");
    if (spec.sim.n_test < 1) bad("sim.n_test must be >= 1");
    try {
      spec.sim.train.validate();
    } catch (const Error& e) {
      bad(std::string("sim: ") + e.what());
    }
    if (spec.mixture.kind != MixtureSource::Kind::csv) {
      for (double a : spec.grid.alpha)
        if (std::lround(a * spec.mixture.d) < 1) {
          bad("simulation needs alpha * d >= 1 training samples");
          break;
        }
    }
  }
  if (spec.jobs < 1) bad("jobs must be >= 1");
  return out;
}

// ---- execution ----------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// role 0: train sampling, 1: weight init, 2: test sampling
std::uint64_t derived_seed(std::uint64_t master, int point, int role, int s) {
  std::uint64_t x = splitmix(master ^ (0xD1B54A32D192ED03ULL *
                                       static_cast<std::uint64_t>(point + 1)));
  x = splitmix(x ^ (0x8CB92BA72F3D8DD7ULL * static_cast<std::uint64_t>(role + 1)));
  return splitmix(x ^ (0xA24BAED4963EE407ULL * static_cast<std::uint64_t>(s + 1)));
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',')
      c = ';';
    else if (c == '\n' || c == '\r')
      c = ' ';
  return s;
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// The mixture resolved into whatever the solvers need.
struct ResolvedMixture {
  int d = 0;
  Eigen::VectorXd rho;
  bool aniso = false;
  SpectralMeasure nu;           // commuting route
  Eigen::MatrixXd sigma_plus, sigma_minus;  // aniso route (K = 2, p = 1)
  Eigen::VectorXd mu;
  ClusterMoments moments;
  bool has_sample_spec = false;
  MixtureSpec sample_spec;      // concrete mixture for sampling / PCA
};

MixtureSpec mixture_from_atoms(const SpectralMeasure& nu,
                               const Eigen::VectorXd& rho) {
  const int d = nu.d, K = nu.K();
  std::vector<int> counts;
  int total = 0;
  for (const auto& a : nu.atoms) {
    double exact = a.weight * d;
    int c = static_cast<int>(std::lround(exact));
    if (std::abs(exact - c) > 1e-6)
      throw ConfigError(
          "mixture.atoms: weights must cover whole coordinate counts at d = " +
          std::to_string(d));
    counts.push_back(c);
    total += c;
  }
  if (total != d)
    throw ConfigError("mixture.atoms: weights must cover exactly d coordinates");
  MixtureSpec spec;
  spec.weights = rho;
  const double sq = std::sqrt(static_cast<double>(d));
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd mean(d), diag(d);
    int at = 0;
    for (std::size_t a = 0; a < counts.size(); ++a)
      for (int c = 0; c < counts[a]; ++c, ++at) {
        mean[at] = nu.atoms[a].tau[k] / sq;
        diag[at] = nu.atoms[a].gamma[k];
      }
    spec.means.push_back(mean);
    spec.covariances.push_back(diag.asDiagonal());
  }
  return spec;
}

ResolvedMixture resolve_mixture(const RunSpec& spec, bool need_samples) {
  ResolvedMixture rm;
  const MixtureSource& src = spec.mixture;
  switch (src.kind) {
    case MixtureSource::Kind::isotropic_binary: {
      rm.d = src.d;
      rm.rho = Eigen::VectorXd::Constant(2, 0.5);
      rm.nu = isotropic_binary_measure(src.sigma2, src.mu_norm2, src.d);
      if (need_samples) {
        rm.sample_spec = isotropic_binary_mixture(src.sigma2, src.mu_norm2,
                                                  src.d, src.direction_seed);
        rm.has_sample_spec = true;
      }
      break;
    }
    case MixtureSource::Kind::atoms: {
      rm.d = src.d;
      rm.rho = src.rho;
      rm.nu = src.measure;
      rm.nu.d = src.d;
      if (need_samples) {
        rm.sample_spec = mixture_from_atoms(rm.nu, rm.rho);
        rm.has_sample_spec = true;
      }
      break;
    }
    case MixtureSource::Kind::csv: {
      LabeledData data = read_labeled_csv(src.csv_path, src.csv_scale);
      if (src.csv_center)
        data.x.rowwise() -= data.x.colwise().mean();
      MixtureSpec emp = empirical_cluster_stats(data.x, data.labels);
      rm.d = emp.d();
      rm.rho = emp.weights;
      rm.sample_spec = emp;
      rm.has_sample_spec = true;
      try {
        rm.nu = build_spectral_measure(emp);
      } catch (const CommutativityViolation&) {
        if (emp.K() != 2 || spec.model.p != 1) throw;
        rm.aniso = true;
        rm.sigma_plus = emp.covariances[0];
        rm.sigma_minus = emp.covariances[1];
        rm.mu = 0.5 * (emp.means[0] - emp.means[1]);
      }
      break;
    }
  }
  rm.moments = rm.aniso || src.kind == MixtureSource::Kind::csv
                   ? moments_of(rm.sample_spec)
                   : moments_of(rm.nu);
  return rm;
}

struct PointWork {
  ResultRow row;          // baselines mode appends a second row
  ResultRow extra_row;
  bool has_extra = false;
  PointDiagnostics diag;
};

Variant theory_variant(ModelVariant v) {
  switch (v) {
    case ModelVariant::dae: return Variant::full_dae;
    case ModelVariant::bottleneck: return Variant::bottleneck;
    case ModelVariant::rae: return Variant::rae;
    default: throw ConfigError("rescaling has no saddle point to solve");
  }
}

SimVariant sim_variant(ModelVariant v) {
  switch (v) {
    case ModelVariant::dae: return SimVariant::full;
    case ModelVariant::bottleneck: return SimVariant::bottleneck;
    case ModelVariant::rae: return SimVariant::rae;
    case ModelVariant::rescaling: return SimVariant::rescaling;
  }
  return SimVariant::full;
}

std::vector<double> flatten(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) out.push_back(m(i, k));
  return out;
}

void run_theory_point(const RunSpec& spec, const ResolvedMixture& rm,
                      double alpha, double dlt, PointWork& work) {
  const ModelSpec& model = spec.model;
  ResultRow& row = work.row;
  if (model.variant == ModelVariant::rescaling) {
    double T = 0.0;
    for (int k = 0; k < rm.moments.K(); ++k)
      T += rm.rho[k] * rm.moments.gamma_mean[k];
    const double b = skip_strength_from_trace(T, dlt);
    const double circ = mse_rescaling(rm.moments, rm.rho, dlt, rm.d, b);
    row.b_hat = b;
    row.mse_theory = circ;
    row.mse_circ = circ;
    work.diag.converged = true;
    return;
  }
  ReplicaSolution sol;
  if (rm.aniso) {
    if (model.variant != ModelVariant::dae)
      throw ConfigError(
          "non-commuting covariances support only the full 'dae' variant");
    sol = solve_anisotropic_binary(rm.sigma_plus, rm.sigma_minus, rm.mu,
                                   rm.rho[0], alpha, dlt, model.lambda,
                                   model.act, spec.solver);
  } else if (model.variant == ModelVariant::rae) {
    sol = solve_rae(rm.nu, rm.rho, alpha, model.lambda, model.act, spec.solver);
  } else {
    sol = solve_fixed_point(rm.nu, rm.rho, alpha, dlt, model.lambda, model.act,
                            spec.solver, theory_variant(model.variant));
  }
  work.diag.converged = sol.converged;
  work.diag.iterations = sol.iterations;
  work.diag.residual = sol.residual;

  TheoryMetrics tm =
      theory_metrics(sol, rm.moments, rm.rho, dlt, rm.d, model.act,
                     spec.solver.quadrature, /*with_train_error=*/true);
  row.b_hat = tm.b_hat;
  row.mse_theory = tm.mse;
  row.mse_circ = tm.mse_circ;
  if (tm.gap_per_d) row.gap_per_d = *tm.gap_per_d;
  row.theta = flatten(tm.theta);
  row.trq_per_p = tm.weight_norm2_per_d / model.p;
  if (std::isfinite(tm.train_error)) row.train_error = tm.train_error;
}

void run_sim_point(const RunSpec& spec, const ResolvedMixture& rm,
                   int point_index, double alpha, double dlt, PointWork& work) {
  if (!rm.has_sample_spec)
    throw ConfigError("this mixture source cannot be sampled");
  const double data_delta = spec.model.variant == ModelVariant::rae ? 0.0 : dlt;
  const int n = std::max<long>(1, std::lround(alpha * rm.d));
  std::vector<EmpiricalMetrics> runs;
  for (int s = 0; s < spec.sim.n_seeds; ++s) {
    Dataset ds = sample_dataset(rm.sample_spec, n, data_delta,
                                derived_seed(spec.seed, point_index, 0, s));
    TrainConfig tc = spec.sim.train;
    tc.act = spec.model.act;
    tc.seed = derived_seed(spec.seed, point_index, 1, s);
    TrainResult tr =
        adam_train(ds, spec.model.p, sim_variant(spec.model.variant), tc);
    canonicalize_signs(tr.params, rm.sample_spec);
    EmpiricalMetrics em = empirical_metrics(
        tr.params, rm.sample_spec, data_delta, spec.sim.n_test, 1,
        derived_seed(spec.seed, point_index, 2, s), spec.model.act);
    em.train_mse = tr.loss_trace[tr.loss_trace.size() - 1];
    runs.push_back(std::move(em));
  }
  EmpiricalMetrics agg = aggregate_metrics(runs);
  work.row.sim_mse = agg.test_mse;
  work.row.sim_mse_se = agg.test_mse_se;
  work.row.sim_theta = flatten(agg.theta);
  work.row.sim_b = agg.b;
}

void run_baselines_point(const RunSpec& spec, const ResolvedMixture& rm,
                         double alpha, double dlt, PointWork& work) {
  const double sigma2 = spec.mixture.sigma2;
  OracleMse om = oracle_mse_theory(sigma2, dlt, spec.solver.quadrature);
  const double circ = mse_rescaling(rm.moments, rm.rho, dlt, rm.d, om.b);
  work.row.variant = "oracle";
  work.row.b_hat = om.b;
  work.row.mse_circ = circ;
  work.row.mse_theory = circ + om.minus_circ();

  BayesStats bs = bayes_fixed_point(alpha, sigma2);
  work.diag.converged = bs.converged;
  work.diag.iterations = bs.iterations;
  work.diag.residual = bs.residual;
  work.extra_row = work.row;
  work.extra_row.variant = "bayes";
  work.extra_row.mse_theory =
      circ + bayes_mse(bs, sigma2, dlt, spec.solver.quadrature);
  work.has_extra = true;
}

PointWork run_point(const RunSpec& spec, const ResolvedMixture& rm, int index,
                    double alpha, double dlt) {
  PointWork work;
  work.diag.index = index;
  work.diag.alpha = alpha;
  work.diag.delta = dlt;
  work.row.alpha = alpha;
  work.row.delta = dlt;
  work.row.variant = run_variant_name(spec.model.variant);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    switch (spec.mode) {
      case RunMode::theory:
        run_theory_point(spec, rm, alpha, dlt, work);
        break;
      case RunMode::simulate:
        run_sim_point(spec, rm, index, alpha, dlt, work);
        work.diag.converged = true;
        break;
      case RunMode::compare:
        run_theory_point(spec, rm, alpha, dlt, work);
        run_sim_point(spec, rm, index, alpha, dlt, work);
        break;
      case RunMode::baselines:
        run_baselines_point(spec, rm, alpha, dlt, work);
        break;
    }
  } catch (const std::exception& e) {
    work.row.status = sanitize(e.what());
    work.diag.status = work.row.status;
    if (work.has_extra) work.extra_row.status = work.row.status;
  }
  work.diag.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                t0)
          .count();
  return work;
}

int env_jobs(int fallback) {
  const char* env = std::getenv("DAE_ASYM_THREADS");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1)
    throw ConfigError("DAE_ASYM_THREADS must be a positive integer");
  return static_cast<int>(v);
}

}  // namespace

std::string csv_header(int p, int K) {
  std::string h = "delta,alpha,variant,b_hat,mse_theory,mse_circ,gap_per_d";
  for (int i = 1; i <= p; ++i)
    for (int k = 1; k <= K; ++k)
      h += ",theta_" + std::to_string(i) + std::to_string(k);
  h += ",trq_per_p,train_error,sim_mse,sim_mse_se";
  for (int i = 1; i <= p; ++i)
    for (int k = 1; k <= K; ++k)
      h += ",sim_theta_" + std::to_string(i) + std::to_string(k);
  h += ",sim_b,status";
  return h;
}

std::string csv_line(const ResultRow& row, int p, int K) {
  const std::size_t cells = static_cast<std::size_t>(p) * K;
  auto opt = [](const std::optional<double>& v) {
    return v && std::isfinite(*v) ? fmt_num(*v) : std::string();
  };
  auto block = [&](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < cells; ++i) {
      s += ',';
      if (i < v.size() && std::isfinite(v[i])) s += fmt_num(v[i]);
    }
    return s;
  };
  std::string line = fmt_num(row.delta) + "," + fmt_num(row.alpha) + "," +
                     row.variant + "," + opt(row.b_hat) + "," +
                     opt(row.mse_theory) + "," + opt(row.mse_circ) + "," +
                     opt(row.gap_per_d);
  line += block(row.theta);
  line += "," + opt(row.trq_per_p) + "," + opt(row.train_error) + "," +
          opt(row.sim_mse) + "," + opt(row.sim_mse_se);
  line += block(row.sim_theta);
  line += "," + opt(row.sim_b) + "," + row.status;
  return line;
}

namespace {

njson spec_to_json(const RunSpec& spec) {
  njson j;
  j["mode"] = run_mode_name(spec.mode);
  njson m;
  switch (spec.mixture.kind) {
    case MixtureSource::Kind::isotropic_binary:
      m["type"] = "isotropic_binary";
      m["sigma2"] = spec.mixture.sigma2;
      m["mu_norm2"] = spec.mixture.mu_norm2;
      m["d"] = spec.mixture.d;
      m["direction_seed"] = spec.mixture.direction_seed;
      break;
    case MixtureSource::Kind::atoms: {
      m["type"] = "atoms";
      m["d"] = spec.mixture.d;
      m["rho"] = std::vector<double>(spec.mixture.rho.begin(),
                                     spec.mixture.rho.end());
      njson atoms = njson::array();
      for (const auto& a : spec.mixture.measure.atoms) {
        njson ja;
        ja["weight"] = a.weight;
        ja["gamma"] = std::vector<double>(a.gamma.begin(), a.gamma.end());
        ja["tau"] = std::vector<double>(a.tau.begin(), a.tau.end());
        atoms.push_back(std::move(ja));
      }
      m["atoms"] = std::move(atoms);
      break;
    }
    case MixtureSource::Kind::csv:
      m["type"] = "csv";
      m["path"] = spec.mixture.csv_path;
      m["scale"] = spec.mixture.csv_scale;
      m["center"] = spec.mixture.csv_center;
      break;
  }
  j["mixture"] = std::move(m);
  j["grid"] = {{"alpha", spec.grid.alpha}, {"delta", spec.grid.delta}};
  j["model"] = {{"p", spec.model.p},
                {"activation", spec.model.act.name()},
                {"lambda", spec.model.lambda},
                {"variant", run_variant_name(spec.model.variant)}};
  j["solver"] = {
      {"damping", spec.solver.damping},
      {"tol", spec.solver.tol},
      {"max_iter", spec.solver.max_iter},
      {"quadrature",
       {{"kind", spec.solver.quadrature.kind ==
                         QuadratureSpec::Kind::gauss_hermite
                     ? "gh"
                     : "mc"},
        {"nodes", spec.solver.quadrature.nodes},
        {"samples", spec.solver.quadrature.samples},
        {"seed", spec.solver.quadrature.seed}}},
      {"prox_tol", spec.solver.prox_tol},
      {"prox_max_iter", spec.solver.prox_max_iter},
      {"verbose", spec.solver.verbose}};
  j["sim"] = {{"n_seeds", spec.sim.n_seeds},
              {"n_test", spec.sim.n_test},
              {"lr", spec.sim.train.lr},
              {"epochs", spec.sim.train.epochs},
              {"weight_decay", spec.sim.train.weight_decay},
              {"beta1", spec.sim.train.beta1},
              {"beta2", spec.sim.train.beta2},
              {"eps", spec.sim.train.eps}};
  j["output"] = spec.output;
  j["jobs"] = spec.jobs;
  j["seed"] = spec.seed;
  return j;
}

}  // namespace

std::string manifest_json(const RunSpec& spec, const RunResult& result) {
  njson j;
  j["tool_version"] = DAE_ASYM_VERSION;
  j["config"] = spec_to_json(spec);
  njson pts = njson::array();
  for (const auto& d : result.diagnostics) {
    njson p;
    p["index"] = d.index;
    p["alpha"] = d.alpha;
    p["delta"] = d.delta;
    p["status"] = d.status;
    p["converged"] = d.converged;
    p["iterations"] = d.iterations;
    p["residual"] = d.residual;
    p["wall_ms"] = d.wall_ms;
    pts.push_back(std::move(p));
  }
  j["points"] = std::move(pts);
  j["rows"] = result.rows.size();
  j["exit_code"] = result.exit_code;
  return j.dump(2);
}

RunResult run_spec(const RunSpec& spec_in) {
  RunSpec spec = spec_in;
  spec.jobs = env_jobs(spec.jobs);
  {
    std::vector<std::string> problems = validate_spec(spec);
    if (!problems.empty()) {
      std::string msg = "invalid run spec:";
      for (const auto& p : problems) msg += "\n  - " + p;
      throw ConfigError(msg);
    }
  }
  const bool sims =
      spec.mode == RunMode::simulate || spec.mode == RunMode::compare;
  ResolvedMixture rm = resolve_mixture(spec, sims);

  const int n_alpha = static_cast<int>(spec.grid.alpha.size());
  const int n_delta = static_cast<int>(spec.grid.delta.size());
  const int n_points = n_alpha * n_delta;
  std::vector<PointWork> work(static_cast<std::size_t>(n_points));

  const int workers = std::max(1, std::min(spec.jobs, n_points));
  std::atomic<int> next{0};
  auto body = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n_points) return;
      const double alpha = spec.grid.alpha[static_cast<std::size_t>(i / n_delta)];
      const double dlt = spec.grid.delta[static_cast<std::size_t>(i % n_delta)];
      work[static_cast<std::size_t>(i)] = run_point(spec, rm, i, alpha, dlt);
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }

  RunResult result;
  for (auto& w : work) {
    result.rows.push_back(std::move(w.row));
    if (w.has_extra) result.rows.push_back(std::move(w.extra_row));
    result.diagnostics.push_back(w.diag);
    if (w.diag.status != "ok") result.exit_code = 2;
  }

  const int p = spec.model.p;
  const int K = rm.rho.size() > 0 ? static_cast<int>(rm.rho.size()) : 2;
  namespace fs = std::filesystem;
  fs::create_directories(spec.output);
  result.csv_path = (fs::path(spec.output) / "results.csv").string();
  result.manifest_path = (fs::path(spec.output) / "manifest.json").string();
  {
    std::ofstream csv(result.csv_path);
    if (!csv) throw IoError("cannot write '" + result.csv_path + "'");
    csv << csv_header(p, K) << "\n";
    for (const auto& row : result.rows) csv << csv_line(row, p, K) << "\n";
  }
  {
    std::ofstream mf(result.manifest_path);
    if (!mf) throw IoError("cannot write '" + result.manifest_path + "'");
    mf << manifest_json(spec, result) << "\n";
  }
  return result;
}

}  // namespace dae
