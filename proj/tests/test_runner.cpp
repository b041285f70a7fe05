#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "dae_asym/errors.hpp"
#include "dae_asym/mixture.hpp"
#include "dae_asym/rng.hpp"
#include "dae_asym/runner.hpp"

using namespace dae;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("dae_runner_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kMinimal =
    R"({"mode":"theory",
        "mixture":{"type":"isotropic_binary","d":50},
        "grid":{"alpha":[1.0],"delta":[0.5]}})";

}  // namespace

TEST_CASE("parse fills documented defaults") {
  RunSpec spec = parse_run_spec(kMinimal);
  CHECK(spec.mode == RunMode::theory);
  CHECK(spec.mixture.kind == MixtureSource::Kind::isotropic_binary);
  CHECK(spec.mixture.sigma2 == 0.09);
  CHECK(spec.mixture.mu_norm2 == 1.0);
  CHECK(spec.mixture.d == 50);
  CHECK(spec.model.p == 1);
  CHECK(spec.model.lambda == 0.1);
  CHECK(spec.model.variant == ModelVariant::dae);
  CHECK(spec.sim.n_seeds == 5);
  CHECK(spec.sim.n_test == 1000);
  CHECK(spec.sim.train.lr == 0.05);
  CHECK(spec.sim.train.epochs == 2000);
  CHECK(spec.sim.train.weight_decay == 0.1);
  CHECK(spec.solver.tol == 1e-7);
  CHECK(spec.solver.max_iter == 2000);
  CHECK(spec.jobs == 1);
  CHECK(spec.seed == 0);
  CHECK(spec.output == ".");
  CHECK(validate_spec(spec).empty());
}

TEST_CASE("unknown and ill-typed keys are named") {
  std::string bad_key =
      R"({"mode":"theory",
          "mixture":{"type":"isotropic_binary","d":50},
          "grid":{"alpha":[1.0],"delta":[0.5]},
          "model":{"act":"tanh"}})";
  try {
    parse_run_spec(bad_key);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.act") != std::string::npos);
  }
  std::string bad_type =
      R"({"mode":"theory",
          "mixture":{"type":"isotropic_binary","d":50},
          "grid":{"alpha":"one","delta":[0.5]}})";
  try {
    parse_run_spec(bad_type);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grid.alpha") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_spec("{not json"), ConfigError);
}

TEST_CASE("validation reports every violation at once") {
  std::string text =
      R"({"mode":"theory",
          "mixture":{"type":"isotropic_binary","d":50},
          "grid":{"alpha":[-1.0],"delta":[1.2]},
          "model":{"lambda":-0.5}})";
  RunSpec spec = parse_run_spec(text);
  std::vector<std::string> problems = validate_spec(spec);
  CHECK(problems.size() >= 3);
  auto any = [&](const char* needle) {
    for (const auto& p : problems)
      if (p.find(needle) != std::string::npos) return true;
    return false;
  };
  CHECK(any("alpha"));
  CHECK(any("delta"));
  CHECK(any("lambda"));
}

TEST_CASE("specs load from disk") {
  fs::path dir = fresh_dir("load");
  fs::path cfg = dir / "run.json";
  {
    std::ofstream out(cfg);
    out << kMinimal;
  }
  RunSpec spec = load_run_spec(cfg.string());
  CHECK(spec.mixture.d == 50);
  CHECK_THROWS_AS(load_run_spec((dir / "missing.json").string()), IoError);
}

TEST_CASE("manifest reruns bitwise identically") {
  fs::path dir_a = fresh_dir("rerun_a");
  std::string text =
      R"({"mode":"theory",
          "mixture":{"type":"isotropic_binary","d":30},
          "grid":{"alpha":[1.0],"delta":[0.4,0.6]},
          "output":")" +
      dir_a.string() + R"("})";
  RunSpec spec = parse_run_spec(text);
  RunResult res = run_spec(spec);
  CHECK(res.exit_code == 0);
  CHECK(res.rows.size() == 2);

  nlohmann::json manifest =
      nlohmann::json::parse(slurp(res.manifest_path));
  CHECK(manifest["exit_code"] == 0);
  CHECK(manifest["points"].size() == 2);
  fs::path dir_b = fresh_dir("rerun_b");
  nlohmann::json cfg = manifest["config"];
  cfg["output"] = dir_b.string();
  RunResult res2 = run_spec(parse_run_spec(cfg.dump()));
  CHECK(slurp(res.csv_path) == slurp(res2.csv_path));
}

TEST_CASE("compare mode fills both column families") {
  fs::path dir = fresh_dir("compare");
  std::string text =
      R"({"mode":"compare",
          "mixture":{"type":"isotropic_binary","d":20},
          "grid":{"alpha":[1.0],"delta":[0.5]},
          "sim":{"n_seeds":2,"n_test":200,"epochs":150},
          "output":")" +
      dir.string() + R"("})";
  RunResult res = run_spec(parse_run_spec(text));
  CHECK(res.exit_code == 0);
  REQUIRE(res.rows.size() == 1);
  const ResultRow& row = res.rows[0];
  CHECK(row.status == "ok");
  CHECK(row.b_hat.has_value());
  CHECK(row.mse_theory.has_value());
  CHECK(row.sim_mse.has_value());
  REQUIRE(row.sim_mse_se.has_value());
  CHECK(*row.sim_mse_se > 0.0);
  CHECK(row.sim_b.has_value());
  CHECK(row.sim_theta.size() == 2);
  CHECK(row.train_error.has_value());
  std::string csv = slurp(res.csv_path);
  CHECK(csv.find("delta,alpha,variant,b_hat") == 0);
  CHECK(csv.find("sim_theta_11") != std::string::npos);
}

TEST_CASE("labeled csv input reaches the binary covariance path") {
  fs::path dir = fresh_dir("csvmix");
  const int d = 6, n = 150;
  Rng rng(55);
  Eigen::VectorXd mu = rng.normal_vec(d);
  mu /= mu.norm();
  Eigen::MatrixXd x(2 * n, d);
  Eigen::VectorXi labels(2 * n);
  for (int i = 0; i < n; ++i) {
    // cluster spikes along different axes: empirically non-commuting
    Eigen::VectorXd za = 0.4 * rng.normal_vec(d);
    za[0] += 0.5 * rng.normal();
    x.row(i) = (mu + za).transpose();
    labels[i] = 0;
    Eigen::VectorXd zb = 0.4 * rng.normal_vec(d);
    double t = rng.normal();
    zb[0] += 0.35 * t;
    zb[1] += 0.35 * t;
    x.row(n + i) = (-mu + zb).transpose();
    labels[n + i] = 1;
  }
  fs::path csv_in = dir / "mix.csv";
  write_labeled_csv(csv_in.string(), x, labels);

  std::string text =
      R"({"mode":"theory",
          "mixture":{"type":"csv","path":")" +
      csv_in.string() + R"("},
          "grid":{"alpha":[1.0],"delta":[0.5]},
          "output":")" +
      dir.string() + R"("})";
  RunResult res = run_spec(parse_run_spec(text));
  CHECK(res.exit_code == 0);
  REQUIRE(res.rows.size() == 1);
  CHECK(res.rows[0].status == "ok");
  CHECK(res.rows[0].b_hat.has_value());
  CHECK(res.rows[0].mse_theory.has_value());
}

TEST_CASE("atom weights must tile the coordinates before sampling") {
  auto spec_text = [](const std::string& mode, const fs::path& out) {
    return R"({"mode":")" + mode +
           R"(","mixture":{"type":"atoms","d":10,"rho":[0.5,0.5],
            "atoms":[{"weight":0.25,"gamma":[0.09,0.09],"tau":[2.0,-2.0]},
                     {"weight":0.75,"gamma":[0.09,0.09],"tau":[0.0,0.0]}]},
           "grid":{"alpha":[0.5],"delta":[0.5]},
           "sim":{"n_seeds":1,"n_test":50,"epochs":30},
           "output":")" +
           out.string() + R"("})";
  };
  fs::path dir = fresh_dir("atoms");
  RunResult res = run_spec(parse_run_spec(spec_text("theory", dir)));
  CHECK(res.exit_code == 0);  // spectral solve needs no concrete mixture
  CHECK(res.rows[0].status == "ok");
  // 0.25 * 10 coordinates is not a whole number
  CHECK_THROWS_AS(run_spec(parse_run_spec(spec_text("simulate", dir))),
                  ConfigError);
}

TEST_CASE("failed grid points keep the sweep alive and flag exit 2") {
  fs::path dir = fresh_dir("fail");
  std::string text =
      R"({"mode":"theory",
          "mixture":{"type":"isotropic_binary","d":30},
          "grid":{"alpha":[1.0],"delta":[0.4,0.6]},
          "solver":{"max_iter":2},
          "output":")" +
      dir.string() + R"("})";
  RunResult res = run_spec(parse_run_spec(text));
  CHECK(res.exit_code == 2);
  REQUIRE(res.rows.size() == 2);
  for (const auto& row : res.rows) {
    CHECK(row.status != "ok");
    CHECK_FALSE(row.mse_theory.has_value());
  }
  std::string csv = slurp(res.csv_path);
  CHECK(csv.find("ok") == std::string::npos);
}

TEST_CASE("csv cells: absent optionals and nan thetas print empty") {
  ResultRow row;
  row.delta = 0.5;
  row.alpha = 1.0;
  row.variant = "dae";
  row.b_hat = 0.25;
  row.theta = {std::numeric_limits<double>::quiet_NaN(), 0.5};
  std::string line = csv_line(row, 1, 2);
  CHECK(line.find("0.5,1,dae,0.25,,,") == 0);  // mse/circ/gap absent
  CHECK(line.find(",,0.5,") != std::string::npos);  // nan theta then value
  std::string header = csv_header(1, 2);
  CHECK(std::count(header.begin(), header.end(), ',') ==
        std::count(line.begin(), line.end(), ','));
}
