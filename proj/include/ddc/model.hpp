#pragma once

#include <Eigen/Dense>
#include <string>

namespace ddc {

// Structural parameters of the firm-entry model.
//
// Flow profit from opening a store at state (W, N) for a type-lambda market:
//   (lambda + theta_w' W) - (theta_fc * N + theta_ec * 1{N == 0} + eps),
// eps ~ N(0,1). Not opening pays 0. The full payoff-parameter vector is
// packed as theta = [theta_w, theta_fc, theta_ec] throughout.
struct EntryModelParams {
  Eigen::VectorXd theta_w;      // utility per unit of W, length d_w
  double theta_fc = 0.0;        // per-incumbent cost slope
  double theta_ec = 0.0;        // first-entry cost
  double beta = 0.0;            // discount factor, in [0, 1)
  Eigen::VectorXd type_support; // lambda support, strictly increasing
  Eigen::VectorXd type_probs;   // mixing weights, on the simplex

  int dim_w() const { return static_cast<int>(theta_w.size()); }
  int num_types() const { return static_cast<int>(type_support.size()); }

  // Packed payoff vector [theta_w, theta_fc, theta_ec].
  Eigen::VectorXd packed_theta() const;

  // Throws std::invalid_argument when an invariant fails.
  void validate() const;

  // The data-generating process of the Monte Carlo experiment:
  // d_w = 9, theta_w = (-.3,-.2,-.1,.1,.2,.3,.4,.5,-.6), theta_fc = theta_ec = .5,
  // beta = .95, lambda in {0.1, 1} with Pr(lambda = 1) = 0.63.
  static EntryModelParams mc_design();

  std::string to_json() const;
  static EntryModelParams from_json(const std::string& text);
};

// Splits a packed theta vector into (theta_w, theta_fc, theta_ec).
void unpack_theta(const Eigen::VectorXd& theta, Eigen::VectorXd& theta_w,
                  double& theta_fc, double& theta_ec);

}  // namespace ddc
