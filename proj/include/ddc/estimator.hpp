#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddc/constraints.hpp"
#include "ddc/likelihood.hpp"
#include "ddc/optim.hpp"

namespace ddc {

enum class Target { em, h };

std::string target_name(Target t);
Target target_from_name(const std::string& name);

struct EstimatorConfig {
  Target target = Target::h;
  int newton_steps = 20;       // L
  double delta_grid = 1.0;     // grid spacing around the start center
  int starts_multiplier = 2;   // starts = multiplier * D + 1
  double box_bound = 25.0;     // |theta_k|, |v_r| search box
  uint64_t seed = 1;
  double beta = 0.95;          // known discount factor

  FkrbGrid grid = FkrbGrid::default_grid();  // histogram-target support
  int em_types = 2;                          // R for the free-support target
  double em_stop_pct = 0.025;

  int pseudo_starts = 5;
  QnOptions qn;                 // per-start optimizer budget
  double inner_tol = 1e-10;     // profiled-objective inner tolerance
  double inner_tol_diff = 1e-12;  // tightened while differentiating
  int rank_deficiency = 2;      // fixed-rank truncation: rank = dim(Z) - this

  SolveOptions dp;              // hot-path engine settings

  std::string to_json() const;
  static EstimatorConfig from_json(const std::string& text);

  static EstimatorConfig defaults(int T);
};

struct PseudoMleResult {
  Eigen::VectorXd theta;  // packed, length d_w + 2
  double v = 0.0;
  double loglik = 0.0;
};

// Degenerate-type (R = 1) maximum likelihood over (theta, v): the grid center.
PseudoMleResult pseudo_mle(const Panel& panel, const EstimatorConfig& cfg,
                           DpCache& cache);

// Randomized start grid: vertices center_d + {-5..5} * delta per coordinate;
// 2D distinct non-center vertices drawn without replacement, center appended
// last. With a constraint the center is first projected into the reduced
// coordinates (eta = B' theta_w) and sampling happens there.
std::vector<Eigen::VectorXd> make_starts(const Eigen::VectorXd& center, int D,
                                         const EstimatorConfig& cfg,
                                         const ReparamMap* constraint,
                                         uint64_t seed);

// Per-initialization bookkeeping for the runtime tables.
struct MultiStartStats {
  std::vector<double> seconds;
  std::vector<int> evals;
  std::vector<double> criteria;
  int best = -1;
};

struct Step1Result {
  Eigen::VectorXd theta;  // full packed theta
  double criterion = 0.0;
  Eigen::VectorXd v;      // EM target support points (empty for H)
  Eigen::VectorXd mu;     // mixture weights at the optimum
};

Step1Result step1_constrained(const Panel& panel, const EstimatorConfig& cfg,
                              const ReparamMap& map,
                              const std::vector<Eigen::VectorXd>& starts,
                              DpCache& cache, MultiStartStats* stats = nullptr);

struct NewtonResult {
  Eigen::VectorXd x;
  std::vector<double> step_norms;
  int retries = 0;
  int damped = 0;
};

// L exact Newton-Raphson iterates x <- x - H(x)^{-1} g(x) on the target
// objective. Iterates leaving the admissible region restart from a perturbed
// start (up to 20 retries); ill-conditioned Hessians get a Levenberg ridge.
NewtonResult step2_newton(const Objective& objective, const Eigen::VectorXd& start,
                          int L, uint64_t seed,
                          const NumDiffOptions& diff = {});

struct TargetResult {
  Eigen::VectorXd theta;
  double criterion = 0.0;
  Eigen::VectorXd v;
  Eigen::VectorXd mu;
};

TargetResult target_unconstrained(const Panel& panel, const EstimatorConfig& cfg,
                                  const std::vector<Eigen::VectorXd>& starts,
                                  DpCache& cache, MultiStartStats* stats = nullptr);

struct EstimateResult {
  Target target = Target::h;
  uint64_t seed = 0;
  Eigen::VectorXd theta_tilde;
  Eigen::VectorXd theta_hat;
  std::optional<Eigen::VectorXd> theta_star;
  Eigen::VectorXd v_hat, mu_hat;    // nuisance at theta_hat (as applicable)
  Eigen::VectorXd v_star, mu_star;  // nuisance at theta_star
  double loglik_tilde = 0.0;
  double loglik_hat = 0.0;
  std::optional<double> loglik_star;
  int sigma_rank = 0;
  int reduced_dim = 0;              // constrained search dimension
  std::map<std::string, double> wall_seconds;  // per pipeline stage
  MultiStartStats step1_stats, star_stats;
  std::vector<double> newton_step_norms;
  int newton_retries = 0;
  int newton_damped = 0;

  std::string to_json() const;
  static EstimateResult from_json(const std::string& text);
};

// Full pipeline: CCPs -> bandwidth -> kernel matrix -> low rank -> nullspace
// reparameterization -> pseudo-MLE center -> randomized starts -> constrained
// step 1 -> Newton step 2, plus (optionally) the unconstrained target.
EstimateResult fast_estimate(const Panel& panel, const EstimatorConfig& cfg,
                             bool with_star = true);

}  // namespace ddc
