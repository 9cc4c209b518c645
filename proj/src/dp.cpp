#include "ddc/dp.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <stdexcept>

#include "ddc/math.hpp"
#include "ddc/rng.hpp"

namespace ddc {

namespace {

// Flow payoff from entering at state N, gross of the continuation terms.
inline double flow_index(double u, double theta_fc, double theta_ec, int state) {
  return u - theta_fc * state - (state == 0 ? theta_ec : 0.0);
}

double clamp_ccp(double p) {
  const double hi = std::nextafter(1.0, 0.0);
  const double lo = std::numeric_limits<double>::min();
  if (p > hi) return hi;
  if (p < lo) return lo;
  return p;
}

DpSolution finish_solution(double u, const SolveOptions& opts, Eigen::VectorXd&& v,
                           double theta_fc, double theta_ec, double beta,
                           double residual, int iterations) {
  const int m = opts.n_max;
  DpSolution sol;
  sol.u = u;
  sol.n_max = m;
  sol.value = std::move(v);
  sol.delta.resize(m + 1);
  sol.ccp.resize(m + 1);
  for (int s = 0; s <= m; ++s) {
    const double v_up = (s == m) ? sol.value[m] : sol.value[s + 1];
    const double d = flow_index(u, theta_fc, theta_ec, s) + beta * (v_up - sol.value[s]);
    sol.delta[s] = d;
    sol.ccp[s] = clamp_ccp(norm_cdf(clamp_delta(d)));
  }
  sol.residual = residual;
  sol.iterations = iterations;
  return sol;
}

DpSolution solve_value_iteration(double u, double theta_fc, double theta_ec,
                                 double beta, const SolveOptions& opts) {
  const int m = opts.n_max;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m + 1);
  Eigen::VectorXd v_next(m + 1);
  Eigen::VectorXd flow(m + 1);
  for (int s = 0; s <= m; ++s) flow[s] = flow_index(u, theta_fc, theta_ec, s);

  double change = std::numeric_limits<double>::infinity();
  long it = 0;
  while (it < opts.max_iter) {
    ++it;
    change = 0.0;
    for (int s = 0; s <= m; ++s) {
      const double v_up = (s == m) ? v[m] : v[s + 1];
      const double d = clamp_delta(flow[s] + beta * (v_up - v[s]));
      const double vn = beta * v[s] + expected_gain(d);
      change = std::max(change, std::abs(vn - v[s]));
      v_next[s] = vn;
    }
    if (!v_next.allFinite())
      throw std::runtime_error("solve_dp: non-finite value iterate");
    v.swap(v_next);
    if (change < opts.tol) break;
  }
  if (change >= opts.tol)
    throw std::runtime_error("solve_dp: no convergence after " +
                             std::to_string(opts.max_iter) +
                             " iterations, last residual " + std::to_string(change));
  return finish_solution(u, opts, std::move(v), theta_fc, theta_ec, beta, change,
                         static_cast<int>(it));
}

// Same fixed point, solved state by state from the top. With the reflecting
// boundary, delta(n_max) has no dependence on v, so v(n_max) is closed form;
// every lower state solves the scalar equation
//   x = beta x + g(flow + beta (v_up - x))
// whose left side minus right side is strictly decreasing in x.
DpSolution solve_state_newton(double u, double theta_fc, double theta_ec,
                              double beta, const SolveOptions& opts) {
  const int m = opts.n_max;
  Eigen::VectorXd v(m + 1);
  v[m] = expected_gain(clamp_delta(flow_index(u, theta_fc, theta_ec, m))) / (1.0 - beta);

  int total_newton = 0;
  for (int s = m - 1; s >= 0; --s) {
    const double flow = flow_index(u, theta_fc, theta_ec, s);
    const double v_up = v[s + 1];
    auto residual = [&](double x) {
      return beta * x + expected_gain(clamp_delta(flow + beta * (v_up - x))) - x;
    };

    // The residual is strictly decreasing with slope in [-1, beta - 1], so
    // f(x0) brackets the root within |f(x0)| / (1 - beta) of x0. Safeguarded
    // Newton: bisect whenever the Newton step leaves the bracket.
    double x = v_up;
    double f = residual(x);
    double lo, hi;
    if (f >= 0.0) {
      lo = x;
      hi = x + f / (1.0 - beta);
    } else {
      hi = x;
      lo = x + f / (1.0 - beta);
    }
    bool done = false;
    for (int k = 0; k < 200; ++k) {
      ++total_newton;
      if (std::abs(f) <= 1e-13 * (1.0 + std::abs(x))) {
        done = true;
        break;
      }
      const double d_raw = flow + beta * (v_up - x);
      const double slope = (std::abs(d_raw) < kDeltaClamp)
                               ? beta * (1.0 - norm_cdf(d_raw)) - 1.0
                               : beta - 1.0;
      double x_next = x - f / slope;
      if (!(x_next > lo && x_next < hi)) x_next = 0.5 * (lo + hi);
      x = x_next;
      f = residual(x);
      if (!std::isfinite(f))
        throw std::runtime_error("solve_dp: non-finite value iterate");
      if (f >= 0.0)
        lo = x;
      else
        hi = x;
      if (hi - lo <= 8.0 * std::numeric_limits<double>::epsilon() *
                         std::max(1.0, std::abs(x))) {
        done = true;
        break;
      }
    }
    if (!done) throw std::runtime_error("solve_dp: state solve did not converge");
    v[s] = x;
  }
  return finish_solution(u, opts, std::move(v), theta_fc, theta_ec, beta, 0.0,
                         total_newton);
}

}  // namespace

double DpSolution::log_ccp(int state) const {
  return norm_log_cdf(clamp_delta(delta[state]));
}

double DpSolution::log_1m_ccp(int state) const {
  return norm_log_cdf(-clamp_delta(delta[state]));
}

DpSolution solve_dp(double u, double theta_fc, double theta_ec, double beta,
                    const SolveOptions& opts) {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("solve_dp: beta must lie in [0, 1)");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("solve_dp: tol must be > 0");
  if (opts.n_max < 1) throw std::invalid_argument("solve_dp: n_max must be >= 1");
  if (!std::isfinite(u)) throw std::invalid_argument("solve_dp: u must be finite");

  switch (opts.engine) {
    case DpEngine::state_newton:
      return solve_state_newton(u, theta_fc, theta_ec, beta, opts);
    case DpEngine::value_iteration:
    default:
      return solve_value_iteration(u, theta_fc, theta_ec, beta, opts);
  }
}

double ccp_mixture(const Eigen::VectorXd& w, int n, const EntryModelParams& params,
                   const SolveOptions& opts, DpCache* cache) {
  if (n > opts.n_max) throw std::invalid_argument("ccp_mixture: n exceeds n_max");
  if (cache != nullptr && cache->beta() != params.beta)
    throw std::invalid_argument("ccp_mixture: cache discount factor mismatch");
  const double x = params.theta_w.dot(w);
  double p = 0.0;
  for (int r = 0; r < params.num_types(); ++r) {
    const double u = params.type_support[r] + x;
    if (cache != nullptr) {
      p += params.type_probs[r] * cache->solve(u, params.theta_fc, params.theta_ec)->ccp[n];
    } else {
      p += params.type_probs[r] *
           solve_dp(u, params.theta_fc, params.theta_ec, params.beta, opts).ccp[n];
    }
  }
  return p;
}

Panel simulate_panel(const EntryModelParams& params, int n, int T, uint64_t seed,
                     const SolveOptions& opts) {
  params.validate();
  if (n < 1 || T < 1) throw std::invalid_argument("simulate_panel: n, T must be >= 1");
  Panel panel;
  panel.W.resize(n, params.dim_w());
  panel.N.resize(n, T);
  panel.A.resize(n, T);

  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
    for (int j = 0; j < params.dim_w(); ++j) panel.W(i, j) = rng.uniform();

    const double pick = rng.uniform();
    double cum = 0.0;
    int type = params.num_types() - 1;
    for (int r = 0; r < params.num_types(); ++r) {
      cum += params.type_probs[r];
      if (pick < cum) {
        type = r;
        break;
      }
    }

    const double u = params.type_support[type] + params.theta_w.dot(panel.W.row(i));
    const DpSolution sol = solve_dp(u, params.theta_fc, params.theta_ec, params.beta, opts);

    int state = 0;
    for (int t = 0; t < T; ++t) {
      panel.N(i, t) = state;
      const int a = rng.uniform() < sol.ccp[state] ? 1 : 0;
      panel.A(i, t) = a;
      state += a;
    }
  }
  return panel;
}

std::size_t DpCache::KeyHash::operator()(const Key& k) const {
  uint64_t h = mix64(k.u);
  h = mix64(h ^ k.fc);
  h = mix64(h ^ k.ec);
  return static_cast<std::size_t>(h);
}

namespace {
inline uint64_t double_bits(double x) {
  uint64_t b;
  std::memcpy(&b, &x, sizeof b);
  return b;
}
}  // namespace

std::shared_ptr<const DpSolution> DpCache::solve(double u, double theta_fc,
                                                 double theta_ec) {
  const Key key{double_bits(u), double_bits(theta_fc), double_bits(theta_ec)};
  {
    std::shared_lock lock(mu_);
    if (auto it = current_.find(key); it != current_.end()) return it->second;
    if (auto it = previous_.find(key); it != previous_.end()) return it->second;
  }
  auto sol = std::make_shared<const DpSolution>(
      solve_dp(u, theta_fc, theta_ec, beta_, opts_));
  {
    std::unique_lock lock(mu_);
    if (current_.size() >= max_entries_) {
      previous_ = std::move(current_);
      current_ = Map{};
    }
    current_.emplace(key, sol);
  }
  return sol;
}

std::size_t DpCache::size() const {
  std::shared_lock lock(mu_);
  return current_.size() + previous_.size();
}

void DpCache::clear() {
  std::unique_lock lock(mu_);
  current_.clear();
  previous_.clear();
}

}  // namespace ddc
