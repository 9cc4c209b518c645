#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "ddc/dp.hpp"
#include "ddc/optim.hpp"
#include "ddc/panel.hpp"

namespace ddc {

// log_l(i, r) = sum_t log of the model-implied probability of A(i,t) given
// state N(i,t) for a type-v_r market, evaluated at packed theta.
struct TypeLikelihoodMatrix {
  Eigen::MatrixXd log_l;  // n x R

  int n() const { return static_cast<int>(log_l.rows()); }
  int R() const { return static_cast<int>(log_l.cols()); }
};

struct MixtureWeights {
  Eigen::VectorXd mu;  // on the simplex

  void validate() const;
};

// Fixed support grid for the histogram-style mixture estimator.
struct FkrbGrid {
  Eigen::VectorXd support;

  // 21 uniformly spaced points from -0.5 to 1.5.
  static FkrbGrid default_grid();
  void validate() const;
};

TypeLikelihoodMatrix type_likelihood(const Panel& panel, const Eigen::VectorXd& theta,
                                     const Eigen::VectorXd& v, DpCache& cache);

// sum_i log sum_r mu_r exp(log_l(i,r)), accumulated in log space.
double mixture_loglik(const TypeLikelihoodMatrix& tlm, const MixtureWeights& mu);

struct EmOptions {
  double stop_pct = 0.025;   // average |percent change| stopping threshold
  int max_outer = 2000;
  QnOptions m_step;          // defaults set in em_run: 200 iters, grad tol 1e-8
  double box_bound = 25.0;   // |theta_k|, |v_r| bounds during the M-step
};

struct EmResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd v;
  MixtureWeights mu;
  double loglik = 0.0;
  int iterations = 0;
  bool stopped_by_rule = false;
  std::vector<double> loglik_trace;
};

// Expectation-maximization for the free-support mixture likelihood; v is kept
// ascending (label switching resolved by sorting each iteration).
EmResult em_run(const Panel& panel, const Eigen::VectorXd& theta_init,
                const Eigen::VectorXd& v_init, const Eigen::VectorXd& mu_init,
                DpCache& cache, const EmOptions& opts = {});

struct FkrbInnerResult {
  MixtureWeights mu;
  double loglik = 0.0;
  int iterations = 0;
};

// Simplex-constrained maximization of the mixture log-likelihood at fixed
// type likelihoods, by multiplicative (EM-type) updates from a uniform start.
FkrbInnerResult fkrb_inner(const TypeLikelihoodMatrix& tlm, double tol = 1e-10,
                           const Eigen::VectorXd* warm_start = nullptr,
                           long max_iter = 200000);

// Profile value sup_mu of the mixture log-likelihood at theta over the grid.
// warm_mu, when given, both seeds and receives the inner solution.
double fkrb_profiled_loglik(const Panel& panel, const Eigen::VectorXd& theta,
                            const FkrbGrid& grid, DpCache& cache,
                            double inner_tol = 1e-10,
                            Eigen::VectorXd* warm_mu = nullptr);

}  // namespace ddc
