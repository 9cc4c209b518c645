#include "ddc/numdiff.hpp"

#include <cmath>
#include <stdexcept>

namespace ddc {

namespace {

// Evaluate f at x with coordinate k displaced by step; on a non-finite value
// shrink the step once (halve) and retry, then give up.
double stencil_eval(const Objective& f, Eigen::VectorXd& x, int k, double step,
                    double* used_step) {
  const double saved = x[k];
  x[k] = saved + step;
  double val = f(x);
  if (!std::isfinite(val)) {
    x[k] = saved + 0.5 * step;
    val = f(x);
    if (!std::isfinite(val)) {
      x[k] = saved;
      throw std::runtime_error("numdiff: objective non-finite at stencil point");
    }
    if (used_step != nullptr) *used_step = 0.5 * step;
  } else if (used_step != nullptr) {
    *used_step = step;
  }
  x[k] = saved;
  return val;
}

}  // namespace

Eigen::VectorXd gradient(const Objective& f, const Eigen::VectorXd& x,
                         const NumDiffOptions& opts) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd g(d);
  Eigen::VectorXd xs = x;
  for (int k = 0; k < d; ++k) {
    const double h = opts.grad_step * std::max(1.0, std::abs(x[k]));
    double h_plus = h, h_minus = h;
    const double f_plus = stencil_eval(f, xs, k, h, &h_plus);
    const double f_minus = stencil_eval(f, xs, k, -h, &h_minus);
    g[k] = (f_plus - f_minus) / (h_plus - h_minus);
  }
  return g;
}

Eigen::MatrixXd hessian(const Objective& f, const Eigen::VectorXd& x,
                        const NumDiffOptions& opts) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd h(d);
  for (int k = 0; k < d; ++k) h[k] = opts.hess_step * std::max(1.0, std::abs(x[k]));

  const double f0 = f(x);
  if (!std::isfinite(f0))
    throw std::runtime_error("numdiff: objective non-finite at center");

  Eigen::MatrixXd H(d, d);
  Eigen::VectorXd xs = x;
  for (int k = 0; k < d; ++k) {
    const double fp = stencil_eval(f, xs, k, h[k], nullptr);
    const double fm = stencil_eval(f, xs, k, -h[k], nullptr);
    H(k, k) = (fp - 2.0 * f0 + fm) / (h[k] * h[k]);
  }
  for (int k = 0; k < d; ++k) {
    for (int l = k + 1; l < d; ++l) {
      const double sk = xs[k], sl = xs[l];
      auto eval2 = [&](double dk, double dl) {
        xs[k] = sk + dk;
        xs[l] = sl + dl;
        const double val = f(xs);
        xs[k] = sk;
        xs[l] = sl;
        if (!std::isfinite(val))
          throw std::runtime_error("numdiff: objective non-finite at stencil point");
        return val;
      };
      const double fpp = eval2(h[k], h[l]);
      const double fpm = eval2(h[k], -h[l]);
      const double fmp = eval2(-h[k], h[l]);
      const double fmm = eval2(-h[k], -h[l]);
      H(k, l) = (fpp - fpm - fmp + fmm) / (4.0 * h[k] * h[l]);
      H(l, k) = H(k, l);
    }
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace ddc
