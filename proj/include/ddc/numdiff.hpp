#pragma once

#include <Eigen/Dense>
#include <functional>

namespace ddc {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct NumDiffOptions {
  // Per-coordinate steps: grad_step * max(1, |x_k|) and hess_step * max(1, |x_k|).
  double grad_step = 6.0554544523933429e-06;  // cbrt(machine eps)
  double hess_step = 1.2207031250000000e-04;  // (machine eps)^(1/4)
};

// Central-difference gradient. A non-finite objective value at a stencil
// point shrinks that coordinate's step once, then throws.
Eigen::VectorXd gradient(const Objective& f, const Eigen::VectorXd& x,
                         const NumDiffOptions& opts = {});

// Central second differences, symmetrized as (H + H')/2.
Eigen::MatrixXd hessian(const Objective& f, const Eigen::VectorXd& x,
                        const NumDiffOptions& opts = {});

}  // namespace ddc
