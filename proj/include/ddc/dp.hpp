#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <unordered_map>

#include "ddc/model.hpp"
#include "ddc/panel.hpp"

namespace ddc {

// Single-market dynamic program at market-type index u = lambda + theta_w'W.
// value(N) is the ex-ante value, delta(N) the choice-value difference and
// ccp(N) = Phi(delta(N)) for N = 0..n_max.
struct DpSolution {
  double u = 0.0;
  int n_max = 0;
  Eigen::VectorXd value;  // length n_max + 1
  Eigen::VectorXd delta;  // length n_max + 1 (raw, clamped only inside Phi/g)
  Eigen::VectorXd ccp;    // length n_max + 1, strictly inside (0, 1)
  double residual = 0.0;  // final sup-norm change of the iteration
  int iterations = 0;

  double log_ccp(int state) const;    // log P(enter | N = state)
  double log_1m_ccp(int state) const; // log P(stay out | N = state)
};

enum class DpEngine {
  value_iteration,  // fixed-point iteration from v = 0 (reference engine)
  state_newton,     // per-state scalar Newton solve, top state downward
};

struct SolveOptions {
  int n_max = 40;           // truncation; reflecting boundary v(n_max+1) = v(n_max)
  double tol = 1e-10;       // sup-norm change tolerance (value_iteration)
  long max_iter = 100000;
  DpEngine engine = DpEngine::value_iteration;

  static SolveOptions for_panel_T(int T) {
    SolveOptions o;
    o.n_max = T + 32;
    return o;
  }
};

// Solves the entry DP: v(N) = beta v(N) + g(Delta(N)) with
// Delta(N) = u - theta_fc N - theta_ec 1{N=0} + beta (v(N+1) - v(N)) and
// g(a) = a Phi(a) + phi(a). Throws on non-convergence or non-finite iterates.
DpSolution solve_dp(double u, double theta_fc, double theta_ec, double beta,
                    const SolveOptions& opts);

// Mixture CCP at observables (w, n): sum_r mu_r * ccp_r(n) with
// ccp_r solved at u = v_r + theta_w'w.
class DpCache;
double ccp_mixture(const Eigen::VectorXd& w, int n, const EntryModelParams& params,
                   const SolveOptions& opts, DpCache* cache = nullptr);

// Simulates a panel from the model. One independent RNG stream per market;
// identical seeds reproduce identical panels bit-for-bit.
Panel simulate_panel(const EntryModelParams& params, int n, int T, uint64_t seed,
                     const SolveOptions& opts);

// Memoizes solve_dp on the full-precision key (u, theta_fc, theta_ec); the
// discount factor is a known constant fixed at construction. Safe for
// concurrent read/insert; bounded by generational eviction (current +
// previous generation).
class DpCache {
 public:
  DpCache(SolveOptions opts, double beta, std::size_t max_entries = 1u << 16)
      : opts_(opts), beta_(beta), max_entries_(max_entries) {}

  std::shared_ptr<const DpSolution> solve(double u, double theta_fc, double theta_ec);

  const SolveOptions& options() const { return opts_; }
  double beta() const { return beta_; }
  std::size_t size() const;
  void clear();

 private:
  struct Key {
    uint64_t u, fc, ec;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };
  using Map = std::unordered_map<Key, std::shared_ptr<const DpSolution>, KeyHash>;

  SolveOptions opts_;
  double beta_;
  std::size_t max_entries_;
  mutable std::shared_mutex mu_;
  Map current_, previous_;
};

}  // namespace ddc
