#pragma once

// Slow reference implementations the tests compare against: dense grid
// minimizers, central finite differences, and mean / standard-error helpers.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

struct GridMin {
  Eigen::VectorXd z;
  double f = 0.0;
};

// Coarse scan of [lo,hi]^2 followed by `rounds` of 4x zoom around the best
// cell.  ~n^2 evaluations per round; independent of any Newton machinery.
inline GridMin grid_min_2d(const std::function<double(double, double)>& f,
                           double lo, double hi, int n = 81, int rounds = 5) {
  double x0 = lo, x1 = hi, y0 = lo, y1 = hi;
  GridMin best;
  best.z.resize(2);
  best.f = std::numeric_limits<double>::infinity();
  for (int r = 0; r < rounds; ++r) {
    double bx = x0, by = y0;
    for (int i = 0; i < n; ++i) {
      double x = x0 + (x1 - x0) * i / (n - 1);
      for (int j = 0; j < n; ++j) {
        double y = y0 + (y1 - y0) * j / (n - 1);
        double v = f(x, y);
        if (v < best.f) {
          best.f = v;
          bx = x;
          by = y;
        }
      }
    }
    double hx = (x1 - x0) / (n - 1), hy = (y1 - y0) / (n - 1);
    x0 = bx - 2 * hx;
    x1 = bx + 2 * hx;
    y0 = by - 2 * hy;
    y1 = by + 2 * hy;
    best.z << bx, by;
  }
  return best;
}

inline GridMin grid_min_1d(const std::function<double(double)>& f, double lo,
                           double hi, int n = 401, int rounds = 6) {
  double x0 = lo, x1 = hi;
  GridMin best;
  best.z.resize(1);
  best.f = std::numeric_limits<double>::infinity();
  for (int r = 0; r < rounds; ++r) {
    double bx = x0;
    for (int i = 0; i < n; ++i) {
      double x = x0 + (x1 - x0) * i / (n - 1);
      double v = f(x);
      if (v < best.f) {
        best.f = v;
        bx = x;
      }
    }
    double h = (x1 - x0) / (n - 1);
    x0 = bx - 2 * h;
    x1 = bx + 2 * h;
    best.z << bx;
  }
  return best;
}

inline Eigen::VectorXd fd_grad(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& z, double h = 1e-5) {
  Eigen::VectorXd g(z.size());
  for (int i = 0; i < z.size(); ++i) {
    Eigen::VectorXd zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    g[i] = (f(zp) - f(zm)) / (2 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_hess(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& z, double h = 1e-4) {
  const int n = static_cast<int>(z.size());
  Eigen::MatrixXd H(n, n);
  const double f0 = f(z);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      Eigen::VectorXd a = z, b = z, c = z, d = z;
      if (i == j) {
        a[i] += h;
        b[i] -= h;
        H(i, i) = (f(a) - 2 * f0 + f(b)) / (h * h);
      } else {
        a[i] += h;
        a[j] += h;
        b[i] += h;
        b[j] -= h;
        c[i] -= h;
        c[j] += h;
        d[i] -= h;
        d[j] -= h;
        H(i, j) = H(j, i) = (f(a) - f(b) - f(c) + f(d)) / (4 * h * h);
      }
    }
  }
  return H;
}

inline std::pair<double, double> mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  s2 = v.size() > 1 ? s2 / (n - 1) : 0.0;
  return {m, std::sqrt(s2 / n)};
}

}  // namespace oracle
