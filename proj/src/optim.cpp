#include "ddc/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ddc {

namespace {

Eigen::VectorXd clamp_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

QnResult maximize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                       const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                       const QnOptions& opts) {
  const int d = static_cast<int>(x0.size());
  if (lo.size() != d || hi.size() != d)
    throw std::invalid_argument("maximize_bfgs: bound size mismatch");

  QnResult res;
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return f(x);
  };
  const Objective counted = eval;

  Eigen::VectorXd x = clamp_box(x0, lo, hi);
  double fx = eval(x);
  if (!std::isfinite(fx))
    throw std::runtime_error("maximize_bfgs: objective non-finite at start");

  Eigen::VectorXd g = gradient(counted, x, opts.diff);
  evals += 0;  // gradient already counted through `counted`
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(d, d);

  int stalled = 0;
  res.stop_reason = "eval budget";
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      res.stop_reason = "gradient tolerance";
      break;
    }
    if (evals >= opts.max_evals) break;

    // Ascent direction; deflect components that push against an active bound.
    Eigen::VectorXd dir = Hinv * g;
    bool deflected = false;
    for (int k = 0; k < d; ++k) {
      if ((x[k] >= hi[k] && dir[k] > 0.0) || (x[k] <= lo[k] && dir[k] < 0.0)) {
        dir[k] = 0.0;
        deflected = true;
      }
    }
    double slope = g.dot(dir);
    if (!(slope > 0.0)) {
      // Restart on a non-ascent direction (stale curvature).
      Hinv.setIdentity();
      dir = g;
      for (int k = 0; k < d; ++k)
        if ((x[k] >= hi[k] && dir[k] > 0.0) || (x[k] <= lo[k] && dir[k] < 0.0)) dir[k] = 0.0;
      slope = g.dot(dir);
      if (!(slope > 0.0)) {
        res.stop_reason = "no ascent direction";
        break;
      }
    }

    // Backtracking line search with one expansion attempt (Armijo, c1 = 1e-4).
    const double dir_norm = dir.norm();
    double alpha = 1.0;
    const double alpha_cap = 1e3 / std::max(1.0, dir_norm);
    alpha = std::min(alpha, alpha_cap);
    double f_new = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 30 && evals < opts.max_evals + 4; ++ls) {
      x_new = clamp_box(x + alpha * dir, lo, hi);
      f_new = eval(x_new);
      if (std::isfinite(f_new) && f_new >= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
      if (alpha * dir_norm < 1e-14 * (1.0 + x.norm())) break;
    }
    if (!accepted) {
      res.stop_reason = "line search failure";
      break;
    }
    // Try one expansion while it keeps improving.
    if (alpha == std::min(1.0, alpha_cap)) {
      const Eigen::VectorXd x_try = clamp_box(x + 2.0 * alpha * dir, lo, hi);
      if (evals < opts.max_evals + 4) {
        const double f_try = eval(x_try);
        if (std::isfinite(f_try) && f_try > f_new) {
          x_new = x_try;
          f_new = f_try;
          alpha *= 2.0;
        }
      }
    }

    const Eigen::VectorXd g_new = gradient(counted, x_new, opts.diff);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;  // gradient of f; BFGS below tracks -f
    const double sy = -s.dot(y);          // curvature for the minimization of -f

    const double rel_gain = (f_new - fx) / std::max(1.0, std::abs(fx));
    stalled = (rel_gain <= opts.stall_tol) ? stalled + 1 : 0;

    x = x_new;
    fx = f_new;
    g = g_new;

    if (sy > 1e-10 * s.norm() * y.norm()) {
      // Inverse-Hessian update for -f (so Hinv*g is an ascent direction for f).
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = Hinv * (-y);
      const double yHy = (-y).dot(Hy);
      Hinv += (sy + yHy) * rho * rho * (s * s.transpose());
      Hinv -= rho * (Hy * s.transpose() + s * Hy.transpose());
    }

    if (!deflected && stalled >= opts.stall_iters) {
      res.stop_reason = "objective stalled";
      break;
    }
  }
  if (it >= opts.max_iters) res.stop_reason = "iteration cap";

  res.x = x;
  res.f = fx;
  res.evals = evals;
  res.iters = it;
  return res;
}

}  // namespace ddc
