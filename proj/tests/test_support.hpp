#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "ddc/rng.hpp"

// Shared test-only oracles. These re-derive expected values through routes
// independent of the library implementation paths they check.

namespace testsup {

// Finite-horizon backward induction for the entry problem on states
// 0..n_max with terminal value zero and reflecting upper boundary. Returns
// the period-0 choice probabilities.
inline Eigen::VectorXd backward_induction_ccp(double u, double theta_fc,
                                              double theta_ec, double beta,
                                              int n_max, int horizon) {
  auto phi = [](double a) { return std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI); };
  auto cdf = [](double a) { return 0.5 * std::erfc(-a / std::sqrt(2.0)); };
  auto clamp = [](double a) { return std::min(40.0, std::max(-40.0, a)); };

  Eigen::VectorXd v_next = Eigen::VectorXd::Zero(n_max + 1);
  Eigen::VectorXd v(n_max + 1);
  Eigen::VectorXd delta0(n_max + 1);
  for (int t = horizon - 1; t >= 0; --t) {
    for (int s = 0; s <= n_max; ++s) {
      const double flow = u - theta_fc * s - (s == 0 ? theta_ec : 0.0);
      const double up = (s == n_max) ? v_next[s] : v_next[s + 1];
      const double d = clamp(flow + beta * (up - v_next[s]));
      v[s] = beta * v_next[s] + d * cdf(d) + phi(d);
      if (t == 0) delta0[s] = d;
    }
    v_next = v;
  }
  Eigen::VectorXd ccp(n_max + 1);
  for (int s = 0; s <= n_max; ++s) ccp[s] = cdf(delta0[s]);
  return ccp;
}

}  // namespace testsup
