#include "dae_asym/mixture.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dae_asym/errors.hpp"
#include "dae_asym/linalg.hpp"
#include "dae_asym/rng.hpp"

namespace dae {

void MixtureSpec::validate() const {
  int k = K();
  if (k == 0) throw ConfigError("MixtureSpec: no components");
  if (static_cast<int>(means.size()) != k ||
      static_cast<int>(covariances.size()) != k)
    throw ConfigError("MixtureSpec: weights/means/covariances length mismatch");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw ConfigError("MixtureSpec: weights must sum to 1 (got " +
                      std::to_string(weights.sum()) + ")");
  if (weights.minCoeff() < 0.0)
    throw ConfigError("MixtureSpec: negative weight");
  int dim = d();
  if (dim == 0) throw ConfigError("MixtureSpec: empty mean vectors");
  double largest = 0.0;
  for (const auto& c : covariances)
    largest = std::max(largest, c.cwiseAbs().maxCoeff());
  for (int j = 0; j < k; ++j) {
    if (means[j].size() != dim || covariances[j].rows() != dim ||
        covariances[j].cols() != dim)
      throw ConfigError("MixtureSpec: component " + std::to_string(j) +
                        " has inconsistent dimension");
    if ((covariances[j] - covariances[j].transpose()).cwiseAbs().maxCoeff() >
        1e-10 * std::max(1.0, largest))
      throw NotPsd("MixtureSpec: covariance " + std::to_string(j) +
                   " is not symmetric");
    if (min_eig_sym(covariances[j]) < -1e-10 * std::max(largest, 1e-300))
      throw NotPsd("MixtureSpec: covariance " + std::to_string(j) +
                   " is not PSD");
  }
}

double SpectralMeasure::gamma_mean(int k) const {
  double s = 0.0;
  for (const auto& a : atoms) s += a.weight * a.gamma[k];
  return s;
}

double SpectralMeasure::tau_mean(int k) const {
  double s = 0.0;
  for (const auto& a : atoms) s += a.weight * a.tau[k];
  return s;
}

double SpectralMeasure::tau_sq_mean(int k) const {
  double s = 0.0;
  for (const auto& a : atoms) s += a.weight * a.tau[k] * a.tau[k];
  return s;
}

void SpectralMeasure::validate() const {
  if (atoms.empty()) throw ConfigError("SpectralMeasure: no atoms");
  if (d <= 0) throw ConfigError("SpectralMeasure: d must be positive");
  int k = K();
  double wsum = 0.0;
  for (const auto& a : atoms) {
    if (a.gamma.size() != k || a.tau.size() != k)
      throw ConfigError("SpectralMeasure: atom with inconsistent K");
    if (a.weight < 0.0) throw ConfigError("SpectralMeasure: negative atom weight");
    if (a.gamma.minCoeff() < 0.0)
      throw ConfigError("SpectralMeasure: negative gamma entry");
    wsum += a.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-10)
    throw ConfigError("SpectralMeasure: atom weights must sum to 1 (got " +
                      std::to_string(wsum) + ")");
}

SpectralMeasure build_spectral_measure(const MixtureSpec& spec,
                                       double commute_tol) {
  spec.validate();
  int K = spec.K(), d = spec.d();
  for (int j = 0; j < K; ++j)
    for (int l = j + 1; l < K; ++l) {
      const auto &a = spec.covariances[j], &b = spec.covariances[l];
      double scale = a.norm() * b.norm();
      if (scale == 0.0) continue;
      if ((a * b - b * a).norm() > commute_tol * scale)
        throw CommutativityViolation(
            "covariances " + std::to_string(j) + " and " + std::to_string(l) +
            " do not commute; no common eigenbasis");
    }

  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < K; ++j) avg += spec.weights[j] * spec.covariances[j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(avg));
  if (es.info() != Eigen::Success)
    throw Error("build_spectral_measure: eigendecomposition failed");

  // descending eigenvalues, sign fixed by the first nonzero component
  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = d - 1 - i;
  SpectralMeasure nu;
  nu.d = d;
  nu.atoms.reserve(d);
  double sqd = std::sqrt(static_cast<double>(d));
  for (int idx : order) {
    Eigen::VectorXd e = es.eigenvectors().col(idx);
    for (int i = 0; i < d; ++i) {
      if (std::abs(e[i]) > 1e-12) {
        if (e[i] < 0.0) e = -e;
        break;
      }
    }
    SpectralAtom atom;
    atom.weight = 1.0 / d;
    atom.gamma.resize(K);
    atom.tau.resize(K);
    for (int k = 0; k < K; ++k) {
      atom.gamma[k] = std::max(0.0, e.dot(spec.covariances[k] * e));
      atom.tau[k] = sqd * e.dot(spec.means[k]);
    }
    nu.atoms.push_back(std::move(atom));
  }
  nu.validate();
  return nu;
}

SpectralMeasure isotropic_binary_measure(double sigma2, double mu_norm2, int d) {
  if (d < 1) throw ConfigError("isotropic_binary_measure: d must be >= 1");
  if (sigma2 < 0.0 || mu_norm2 < 0.0)
    throw ConfigError("isotropic_binary_measure: sigma2/mu_norm2 must be >= 0");
  SpectralMeasure nu;
  nu.d = d;
  double t = std::sqrt(d * mu_norm2);
  SpectralAtom mean_atom{1.0 / d, Eigen::Vector2d(sigma2, sigma2),
                         Eigen::Vector2d(t, -t)};
  nu.atoms.push_back(mean_atom);
  if (d > 1) {
    SpectralAtom bulk{(d - 1.0) / d, Eigen::Vector2d(sigma2, sigma2),
                      Eigen::Vector2d(0.0, 0.0)};
    nu.atoms.push_back(bulk);
  }
  nu.validate();
  return nu;
}

MixtureSpec isotropic_binary_mixture(double sigma2, double mu_norm2, int d,
                                     std::uint64_t direction_seed) {
  Rng rng(direction_seed);
  Eigen::VectorXd mu = rng.normal_vec(d);
  mu *= std::sqrt(mu_norm2) / mu.norm();
  MixtureSpec spec;
  spec.weights = Eigen::Vector2d(0.5, 0.5);
  spec.means = {mu, -mu};
  spec.covariances = {sigma2 * Eigen::MatrixXd::Identity(d, d),
                      sigma2 * Eigen::MatrixXd::Identity(d, d)};
  spec.validate();
  return spec;
}

Dataset sample_dataset(const MixtureSpec& spec, int n, double delta,
                       std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("sample_dataset: n must be >= 1");
  if (delta < 0.0 || delta > 1.0)
    throw ConfigError("sample_dataset: delta must lie in [0,1]");
  int d = spec.d(), K = spec.K();
  std::vector<Eigen::MatrixXd> roots(K);
  for (int k = 0; k < K; ++k) roots[k] = sqrt_psd(spec.covariances[k]);
  Dataset ds;
  ds.clean.resize(n, d);
  ds.noisy.resize(n, d);
  ds.labels.resize(n);
  ds.delta = delta;
  ds.seed = seed;
  Rng rng(seed);
  double a = std::sqrt(1.0 - delta), b = std::sqrt(delta);
  for (int i = 0; i < n; ++i) {
    int k = rng.categorical(spec.weights);
    ds.labels[i] = k;
    Eigen::VectorXd x = spec.means[k] + roots[k] * rng.normal_vec(d);
    Eigen::VectorXd xi = rng.normal_vec(d);
    ds.clean.row(i) = x.transpose();
    ds.noisy.row(i) = (a * x + b * xi).transpose();
  }
  return ds;
}

MixtureSpec empirical_cluster_stats(const Eigen::MatrixXd& x,
                                    const Eigen::VectorXi& labels) {
  int n = static_cast<int>(x.rows()), d = static_cast<int>(x.cols());
  if (labels.size() != n)
    throw ConfigError("empirical_cluster_stats: labels/rows mismatch");
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  MixtureSpec spec;
  int K = static_cast<int>(groups.size());
  spec.weights.resize(K);
  int k = 0;
  for (const auto& [lab, idx] : groups) {
    if (idx.size() < 2)
      throw DegenerateCluster("label " + std::to_string(lab) +
                              " has fewer than 2 samples");
    int nk = static_cast<int>(idx.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int i : idx) mean += x.row(i).transpose();
    mean /= nk;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (int i : idx) {
      Eigen::VectorXd c = x.row(i).transpose() - mean;
      cov.noalias() += c * c.transpose();
    }
    cov /= (nk - 1.0);
    spec.weights[k] = static_cast<double>(nk) / n;
    spec.means.push_back(std::move(mean));
    spec.covariances.push_back(symmetrize(cov));
    ++k;
  }
  spec.validate();
  return spec;
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace

LabeledData read_labeled_csv(const std::string& path, double scale) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "': empty file");
  auto header = split_csv_line(line);
  int d = static_cast<int>(header.size()) - 1;
  if (d < 1 || header.back() != "label")
    throw IoError("'" + path + "': header must be f0,..,f{d-1},label");
  for (int j = 0; j < d; ++j)
    if (header[j] != "f" + std::to_string(j))
      throw IoError("'" + path + "': unexpected header column '" + header[j] + "'");

  std::vector<Eigen::VectorXd> rows;
  std::vector<int> labs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tok = split_csv_line(line);
    if (static_cast<int>(tok.size()) != d + 1)
      throw IoError("'" + path + "' line " + std::to_string(lineno) +
                    ": expected " + std::to_string(d + 1) + " fields");
    Eigen::VectorXd v(d);
    for (int j = 0; j <= d; ++j) {
      const std::string& s = tok[j];
      if (j < d) {
        double val;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), val);
        if (ec != std::errc() || p != s.data() + s.size())
          throw IoError("'" + path + "' line " + std::to_string(lineno) +
                        ": bad number '" + s + "'");
        v[j] = val * scale;
      } else {
        int lab;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), lab);
        if (ec != std::errc() || p != s.data() + s.size())
          throw IoError("'" + path + "' line " + std::to_string(lineno) +
                        ": bad label '" + s + "'");
        labs.push_back(lab);
      }
    }
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw IoError("'" + path + "': no data rows");
  LabeledData data;
  data.x.resize(static_cast<int>(rows.size()), d);
  data.labels.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    data.x.row(static_cast<int>(i)) = rows[i].transpose();
    data.labels[static_cast<int>(i)] = labs[i];
  }
  return data;
}

void write_labeled_csv(const std::string& path, const Eigen::MatrixXd& x,
                       const Eigen::VectorXi& labels) {
  if (x.rows() != labels.size())
    throw ConfigError("write_labeled_csv: rows/labels mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  int d = static_cast<int>(x.cols());
  for (int j = 0; j < d; ++j) out << "f" << j << ",";
  out << "label\n";
  char buf[40];
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < d; ++j) {
      snprintf(buf, sizeof buf, "%.17g", x(i, j));
      out << buf << ",";
    }
    out << labels[i] << "\n";
  }
}

}  // namespace dae
