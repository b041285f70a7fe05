#include <cmath>
#include <cstdio>
#include <limits>

#include "dae_asym/errors.hpp"
#include "dae_asym/linalg.hpp"
#include "dae_asym/replica.hpp"

namespace dae {

ProxCtx make_prox_ctx(const SummaryStats& S, int cluster, double b_hat,
                      double delta, const Activation& act, bool rae) {
  if (cluster < 0 || cluster >= S.K())
    throw ConfigError("make_prox_ctx: cluster index out of range");
  ProxCtx c;
  c.p = S.p();
  c.rae = rae;
  c.act = act;
  c.delta = rae ? 0.0 : delta;
  c.b_hat = rae ? 0.0 : b_hat;
  c.sq1m = rae ? 1.0 : std::sqrt(1.0 - c.delta);
  c.Vk_inv = inv_spd(S.V_k[cluster], "V_k");
  c.qk_sqrt = sqrt_psd(S.q_k[cluster]);
  c.m_k = S.m_k[cluster];
  c.q = symmetrize(S.q);
  if (!rae) {
    if (!(delta > 0.0 && delta <= 1.0))
      throw DegenerateProblem("prox: delta must lie in (0,1]");
    c.V_inv = inv_spd(S.V, "V");
    c.q_sqrt = sqrt_psd(S.q);
  }
  return c;
}

namespace {

// Objective on z = [x; y] (or z = y for rae); fills grad/hess when non-null.
double eval_prox(const ProxCtx& c, const Eigen::VectorXd& xanchor,
                 const Eigen::VectorXd& yshift, const Eigen::VectorXd& z,
                 Eigen::VectorXd* g, Eigen::MatrixXd* H) {
  const int p = c.p;
  if (c.rae) {
    Eigen::VectorXd ry = z - yshift;
    Eigen::VectorXd s = c.act.f(z);
    Eigen::VectorXd qs = c.q * s;
    double f = ry.dot(c.Vk_inv * ry) + s.dot(qs) - 2.0 * s.dot(z);
    if (g) {
      Eigen::VectorXd d1 = c.act.df(z);
      *g = 2.0 * (c.Vk_inv * ry) + 2.0 * d1.cwiseProduct(qs) -
           2.0 * (d1.cwiseProduct(z) + s);
      if (H) {
        Eigen::VectorXd d2 = c.act.d2f(z);
        *H = 2.0 * c.Vk_inv;
        H->noalias() += 2.0 * d1.asDiagonal() * c.q * d1.asDiagonal();
        H->diagonal() += 2.0 * d2.cwiseProduct(qs - z) - 4.0 * d1;
      }
    }
    return f;
  }

  Eigen::VectorXd x = z.head(p), y = z.tail(p);
  Eigen::VectorXd rx = x - xanchor, ry = y - yshift;
  Eigen::VectorXd u = c.sq1m * y + x;
  Eigen::VectorXd s = c.act.f(u);
  Eigen::VectorXd qs = c.q * s;
  const double c1 = 1.0 - c.sq1m * c.b_hat;
  Eigen::VectorXd t = c1 * y - c.b_hat * x;
  double f = ry.dot(c.Vk_inv * ry) + rx.dot(c.V_inv * rx) / c.delta +
             s.dot(qs) - 2.0 * s.dot(t);
  if (g) {
    Eigen::VectorXd d1 = c.act.df(u);
    Eigen::VectorXd core = 2.0 * d1.cwiseProduct(qs - t);
    g->resize(2 * p);
    g->head(p) = (2.0 / c.delta) * (c.V_inv * rx) + core + 2.0 * c.b_hat * s;
    g->tail(p) = 2.0 * (c.Vk_inv * ry) + c.sq1m * core - 2.0 * c1 * s;
    if (H) {
      Eigen::VectorXd d2 = c.act.d2f(u);
      Eigen::MatrixXd C = 2.0 * d1.asDiagonal() * c.q * d1.asDiagonal();
      C.diagonal() += 2.0 * d2.cwiseProduct(qs - t);
      H->resize(2 * p, 2 * p);
      H->topLeftCorner(p, p) = (2.0 / c.delta) * c.V_inv + C;
      H->topLeftCorner(p, p).diagonal() += 4.0 * c.b_hat * d1;
      H->bottomRightCorner(p, p) = 2.0 * c.Vk_inv + (1.0 - c.delta) * C;
      H->bottomRightCorner(p, p).diagonal() -= 4.0 * c.sq1m * c1 * d1;
      Eigen::MatrixXd off = c.sq1m * C;
      off.diagonal() += (2.0 * c.sq1m * c.b_hat - 2.0 * c1) * d1;
      H->topRightCorner(p, p) = off;
      H->bottomLeftCorner(p, p) = off.transpose();
    }
  }
  return f;
}

struct Candidate {
  Eigen::VectorXd z;
  double obj = 0.0;
  double gnorm = 0.0;
  int iters = 0;
  bool ok = false;
};

Candidate newton_run(const ProxCtx& c, const Eigen::VectorXd& xanchor,
                     const Eigen::VectorXd& yshift, Eigen::VectorXd z,
                     const SolverConfig& cfg) {
  Eigen::VectorXd g, dz, ztrial;
  Eigen::MatrixXd H;
  double f = eval_prox(c, xanchor, yshift, z, &g, &H);
  double gnorm = g.norm();
  int it = 0;
  while (gnorm > cfg.prox_tol && it < cfg.prox_max_iter) {
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    bool gd = llt.info() != Eigen::Success;
    if (!gd) {
      dz = llt.solve(-g);
      if (g.dot(dz) >= 0.0) gd = true;  // numerical breakdown
    }
    if (gd) dz = -g;  // fallback for an indefinite Hessian
    const double gtd = g.dot(dz);
    const double fres =
        16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    if (!gd && -gtd <= fres) {
      // Endgame: the predicted decrease is below the rounding resolution of
      // f, so the Armijo test is meaningless (it can accept sub-ulp steps
      // that never move z).  Take full Newton steps while they shrink the
      // gradient; quadratic convergence finishes the job in 1-2 steps.
      ztrial = z + dz;
      Eigen::VectorXd gt;
      Eigen::MatrixXd Ht;
      double ft = eval_prox(c, xanchor, yshift, ztrial, &gt, &Ht);
      ++it;
      if (gt.norm() < gnorm) {
        z.swap(ztrial);
        f = ft;
        g.swap(gt);
        H.swap(Ht);
        gnorm = g.norm();
        continue;
      }
      break;  // no representable progress left
    }
    double step = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      if (step * dz.norm() <= 1e-16 * (1.0 + z.norm())) break;  // sub-ulp
      ztrial = z + step * dz;
      double ft = eval_prox(c, xanchor, yshift, ztrial, nullptr, nullptr);
      if (ft <= f + 1e-4 * step * gtd) {  // Armijo
        z.swap(ztrial);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    ++it;
    if (!moved) break;
    f = eval_prox(c, xanchor, yshift, z, &g, &H);
    gnorm = g.norm();
  }
  Candidate cand;
  cand.z = std::move(z);
  cand.obj = f;
  cand.gnorm = gnorm;
  cand.iters = it;
  cand.ok = gnorm <= cfg.prox_tol;
  return cand;
}

}  // namespace

double prox_objective(const ProxCtx& c, const Eigen::VectorXd& xi,
                      const Eigen::VectorXd& eta, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& y) {
  Eigen::VectorXd yshift = c.qk_sqrt * eta + c.m_k;
  Eigen::VectorXd z;
  Eigen::VectorXd xanchor;
  if (c.rae) {
    z = y;
  } else {
    xanchor = std::sqrt(c.delta) * (c.q_sqrt * xi);
    z.resize(2 * c.p);
    z << x, y;
  }
  return eval_prox(c, xanchor, yshift, z, nullptr, nullptr);
}

void prox_grad_hess(const ProxCtx& c, const Eigen::VectorXd& xi,
                    const Eigen::VectorXd& eta, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& y, Eigen::VectorXd* grad,
                    Eigen::MatrixXd* hess) {
  Eigen::VectorXd yshift = c.qk_sqrt * eta + c.m_k;
  Eigen::VectorXd z, xanchor;
  if (c.rae) {
    z = y;
  } else {
    xanchor = std::sqrt(c.delta) * (c.q_sqrt * xi);
    z.resize(2 * c.p);
    z << x, y;
  }
  eval_prox(c, xanchor, yshift, z, grad, hess);
}

ProxPoint prox_solve(const ProxCtx& c, const Eigen::VectorXd& xi,
                     const Eigen::VectorXd& eta, const SolverConfig& cfg,
                     const ProxPoint* warm) {
  const int p = c.p;
  Eigen::VectorXd yshift = c.qk_sqrt * eta + c.m_k;
  Eigen::VectorXd xanchor;
  std::vector<Eigen::VectorXd> starts;
  if (c.rae) {
    starts.push_back(yshift);                  // quadratic minimizer
    starts.push_back(Eigen::VectorXd::Zero(p));
    if (warm && warm->y.size() == p) starts.push_back(warm->y);
  } else {
    xanchor = std::sqrt(c.delta) * (c.q_sqrt * xi);
    Eigen::VectorXd z0(2 * p);
    z0 << xanchor, yshift;
    starts.push_back(z0);
    starts.push_back(Eigen::VectorXd::Zero(2 * p));
    if (warm && warm->x.size() == p && warm->y.size() == p) {
      Eigen::VectorXd zw(2 * p);
      zw << warm->x, warm->y;
      starts.push_back(zw);
    }
  }

  Candidate best;
  double best_resid = std::numeric_limits<double>::infinity();
  int total_iters = 0;
  for (const auto& z0 : starts) {
    Candidate cand = newton_run(c, xanchor, yshift, z0, cfg);
    total_iters += cand.iters;
    best_resid = std::min(best_resid, cand.gnorm);
    if (cand.ok && (!best.ok || cand.obj < best.obj)) best = std::move(cand);
  }
  if (!best.ok) {
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "prox_solve: no start reached the gradient tolerance "
                  "(best %.3e)",
                  best_resid);
    throw ProxNoConvergence(buf, best_resid);
  }
  ProxPoint out;
  if (c.rae) {
    out.x.resize(0);
    out.y = best.z;
  } else {
    out.x = best.z.head(p);
    out.y = best.z.tail(p);
  }
  out.objective = best.obj;
  out.grad_norm = best.gnorm;
  out.iterations = total_iters;
  return out;
}

ProxPoint prox_solve(const Eigen::VectorXd& xi, const Eigen::VectorXd& eta,
                     const SummaryStats& S, int cluster, double b_hat,
                     double delta, const Activation& act,
                     const SolverConfig& cfg) {
  ProxCtx c = make_prox_ctx(S, cluster, b_hat, delta, act, false);
  return prox_solve(c, xi, eta, cfg, nullptr);
}

ProxPoint prox_solve_rae(const Eigen::VectorXd& eta, const SummaryStats& S,
                         int cluster, const Activation& act,
                         const SolverConfig& cfg) {
  ProxCtx c = make_prox_ctx(S, cluster, 0.0, 0.0, act, true);
  return prox_solve(c, Eigen::VectorXd(), eta, cfg, nullptr);
}

}  // namespace dae
