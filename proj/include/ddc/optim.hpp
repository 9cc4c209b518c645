#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "ddc/numdiff.hpp"

namespace ddc {

struct QnOptions {
  double grad_tol = 1e-8;      // stop on ||grad||_inf below this
  int max_evals = 2500;        // objective-evaluation budget (stencils included)
  int max_iters = 1000;
  double stall_tol = 1e-11;    // relative objective progress considered a stall
  int stall_iters = 3;         // consecutive stalled iterations before stopping
  NumDiffOptions diff;
};

struct QnResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evals = 0;
  int iters = 0;
  bool converged = false;      // gradient tolerance reached
  std::string stop_reason;
};

// Box-bounded BFGS maximization with central-difference gradients. Iterates
// are projected onto [lo, hi]; directions are deflected off active bounds.
QnResult maximize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                       const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                       const QnOptions& opts = {});

}  // namespace ddc
