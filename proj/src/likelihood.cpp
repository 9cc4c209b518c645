#include "ddc/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ddc/model.hpp"
#include "ddc/parallel.hpp"

namespace ddc {

void MixtureWeights::validate() const {
  double sum = 0.0;
  for (int r = 0; r < mu.size(); ++r) {
    if (mu[r] < 0.0) throw std::invalid_argument("MixtureWeights: negative weight");
    sum += mu[r];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("MixtureWeights: weights must sum to 1");
}

FkrbGrid FkrbGrid::default_grid() {
  FkrbGrid g;
  g.support = Eigen::VectorXd::LinSpaced(21, -0.5, 1.5);
  return g;
}

void FkrbGrid::validate() const {
  if (support.size() < 1) throw std::invalid_argument("FkrbGrid: empty support");
  for (int r = 1; r < support.size(); ++r)
    if (!(support[r - 1] < support[r]))
      throw std::invalid_argument("FkrbGrid: support must be strictly increasing");
}

TypeLikelihoodMatrix type_likelihood(const Panel& panel, const Eigen::VectorXd& theta,
                                     const Eigen::VectorXd& v, DpCache& cache) {
  if (!v.allFinite())
    throw std::invalid_argument("type_likelihood: non-finite support point");
  Eigen::VectorXd theta_w;
  double theta_fc = 0.0, theta_ec = 0.0;
  unpack_theta(theta, theta_w, theta_fc, theta_ec);
  if (theta_w.size() != panel.dim_w())
    throw std::invalid_argument("type_likelihood: theta/panel dimension mismatch");

  const int n = panel.n(), T = panel.T(), R = static_cast<int>(v.size());

  TypeLikelihoodMatrix tlm;
  tlm.log_l.resize(n, R);
  const Eigen::VectorXd x = panel.W * theta_w;  // per-market payoff index

  parallel_for(static_cast<std::size_t>(n) * R, [&](std::size_t idx) {
    const int i = static_cast<int>(idx / R);
    const int r = static_cast<int>(idx % R);
    const auto sol = cache.solve(v[r] + x[i], theta_fc, theta_ec);
    double ll = 0.0;
    for (int t = 0; t < T; ++t) {
      const int state = panel.N(i, t);
      ll += panel.A(i, t) ? sol->log_ccp(state) : sol->log_1m_ccp(state);
    }
    tlm.log_l(i, r) = ll;
  });
  return tlm;
}

double mixture_loglik(const TypeLikelihoodMatrix& tlm, const MixtureWeights& mu) {
  if (mu.mu.size() != tlm.R())
    throw std::invalid_argument("mixture_loglik: shape mismatch");
  const int n = tlm.n(), R = tlm.R();
  Eigen::VectorXd log_mu(R);
  for (int r = 0; r < R; ++r)
    log_mu[r] = mu.mu[r] > 0.0 ? std::log(mu.mu[r])
                               : -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < R; ++r) m = std::max(m, log_mu[r] + tlm.log_l(i, r));
    if (!std::isfinite(m)) return -std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (int r = 0; r < R; ++r) s += std::exp(log_mu[r] + tlm.log_l(i, r) - m);
    total += m + std::log(s);
  }
  return total;
}

namespace {

// Posterior type weights, rows normalized: w(i,r) ~ mu_r exp(log_l(i,r)).
Eigen::MatrixXd posterior_weights(const TypeLikelihoodMatrix& tlm,
                                  const Eigen::VectorXd& mu) {
  const int n = tlm.n(), R = tlm.R();
  Eigen::MatrixXd w(n, R);
  Eigen::VectorXd log_mu(R);
  for (int r = 0; r < R; ++r)
    log_mu[r] = mu[r] > 0.0 ? std::log(mu[r]) : -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < R; ++r) m = std::max(m, log_mu[r] + tlm.log_l(i, r));
    double s = 0.0;
    for (int r = 0; r < R; ++r) {
      w(i, r) = std::exp(log_mu[r] + tlm.log_l(i, r) - m);
      s += w(i, r);
    }
    w.row(i) /= s;
  }
  return w;
}

}  // namespace

EmResult em_run(const Panel& panel, const Eigen::VectorXd& theta_init,
                const Eigen::VectorXd& v_init, const Eigen::VectorXd& mu_init,
                DpCache& cache, const EmOptions& opts) {
  const int R = static_cast<int>(v_init.size());
  if (R < 1) throw std::invalid_argument("em_run: need at least one support point");
  MixtureWeights mu0{mu_init};
  mu0.validate();

  Eigen::VectorXd theta = theta_init, v = v_init, mu = mu_init;
  const int d_theta = static_cast<int>(theta.size());

  QnOptions m_opts = opts.m_step;
  if (m_opts.max_iters == QnOptions{}.max_iters) m_opts.max_iters = 200;
  m_opts.grad_tol = 1e-8;

  EmResult res;
  TypeLikelihoodMatrix tlm = type_likelihood(panel, theta, v, cache);
  double loglik = mixture_loglik(tlm, {mu});
  res.loglik_trace.push_back(loglik);

  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(d_theta + R, -opts.box_bound);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(d_theta + R, opts.box_bound);

  for (int outer = 1; outer <= opts.max_outer; ++outer) {
    const Eigen::VectorXd theta_old = theta, v_old = v, mu_old = mu;

    // E step.
    const Eigen::MatrixXd w = posterior_weights(tlm, mu);

    // M step: mixture weights in closed form, (theta, v) by quasi-Newton
    // started at the incumbent values.
    mu = w.colwise().mean();
    mu /= mu.sum();

    auto q_objective = [&](const Eigen::VectorXd& x) {
      const Eigen::VectorXd th = x.head(d_theta);
      const Eigen::VectorXd vv = x.tail(R);
      const TypeLikelihoodMatrix t = type_likelihood(panel, th, vv, cache);
      return (w.array() * t.log_l.array()).sum();
    };
    Eigen::VectorXd x0(d_theta + R);
    x0 << theta, v;
    QnResult m_res;
    try {
      m_res = maximize_bfgs(q_objective, x0, lo, hi, m_opts);
    } catch (const std::exception& e) {
      throw std::runtime_error("em_run: M-step failed at outer iteration " +
                               std::to_string(outer) + ": " + e.what());
    }
    theta = m_res.x.head(d_theta);
    v = m_res.x.tail(R);

    // Resolve label switching: keep v ascending, permute mu alongside.
    std::vector<int> order(R);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    Eigen::VectorXd v_sorted(R), mu_sorted(R);
    for (int r = 0; r < R; ++r) {
      v_sorted[r] = v[order[r]];
      mu_sorted[r] = mu[order[r]];
    }
    v = v_sorted;
    mu = mu_sorted;

    tlm = type_likelihood(panel, theta, v, cache);
    loglik = mixture_loglik(tlm, {mu});
    res.loglik_trace.push_back(loglik);
    res.iterations = outer;

    // Average percent change over (theta, v, mu_1..mu_{R-1}).
    double pct = 0.0;
    int count = 0;
    auto add_pct = [&](double now, double before) {
      pct += 100.0 * std::abs(now - before) / std::max(std::abs(before), 1e-8);
      ++count;
    };
    for (int k = 0; k < d_theta; ++k) add_pct(theta[k], theta_old[k]);
    for (int r = 0; r < R; ++r) add_pct(v[r], v_old[r]);
    for (int r = 0; r + 1 < R; ++r) add_pct(mu[r], mu_old[r]);
    if (pct / count < opts.stop_pct) {
      res.stopped_by_rule = true;
      break;
    }
  }

  res.theta = theta;
  res.v = v;
  res.mu = MixtureWeights{mu};
  res.loglik = loglik;
  return res;
}

FkrbInnerResult fkrb_inner(const TypeLikelihoodMatrix& tlm, double tol,
                           const Eigen::VectorXd* warm_start, long max_iter) {
  if (!tlm.log_l.allFinite())
    throw std::invalid_argument("fkrb_inner: non-finite type likelihoods");
  const int n = tlm.n(), R = tlm.R();

  // Row-shifted likelihood levels: e(i,r) = exp(log_l(i,r) - max_r log_l(i,r)).
  Eigen::MatrixXd e(n, R);
  for (int i = 0; i < n; ++i) {
    const double m = tlm.log_l.row(i).maxCoeff();
    e.row(i) = (tlm.log_l.row(i).array() - m).exp();
  }
  const Eigen::VectorXd row_max = tlm.log_l.rowwise().maxCoeff();

  Eigen::VectorXd mu = (warm_start != nullptr && warm_start->size() == R)
                           ? *warm_start
                           : Eigen::VectorXd::Constant(R, 1.0 / R);
  if (warm_start != nullptr && warm_start->size() == R) {
    mu = mu.cwiseMax(0.0);
    const double s = mu.sum();
    mu = (s > 0.0) ? Eigen::VectorXd(mu / s) : Eigen::VectorXd::Constant(R, 1.0 / R);
  }

  // One multiplicative (EM-type) update; also reports the objective and the
  // average posterior ratios at the input weights. Weights below 1e-12 are
  // pruned to exact zero (the update preserves zeros; the objective effect is
  // below the stopping tolerance).
  long evals = 0;
  Eigen::VectorXd den(n);
  auto update = [&](const Eigen::VectorXd& w, Eigen::VectorXd& next, double& obj_at,
                    Eigen::VectorXd& ratio_at) {
    ++evals;
    den.noalias() = e * w;
    obj_at = row_max.sum();
    for (int i = 0; i < n; ++i) obj_at += std::log(den[i]);
    ratio_at.noalias() = e.transpose() * den.cwiseInverse() / n;
    next = w.cwiseProduct(ratio_at);
    for (int r = 0; r < R; ++r)
      if (next[r] < 1e-12) next[r] = 0.0;
    next /= next.sum();
  };

  // Squared-extrapolation acceleration of the fixed-point iteration: the
  // plain update converges linearly with a factor that can sit very close to
  // one, so each cycle extrapolates through two update steps and falls back
  // to the unaccelerated point whenever the jump does not help.
  double obj_prev = -std::numeric_limits<double>::infinity();
  double obj = 0.0;
  Eigen::VectorXd mu1(R), mu2(R), mu_acc(R), mu3(R), ratio(R), scratch(R);
  while (evals < max_iter) {
    double obj0 = 0.0;
    update(mu, mu1, obj0, ratio);
    obj = obj0;

    double foc = 0.0;
    for (int r = 0; r < R; ++r)
      foc = std::max(foc, mu[r] >= 1e-8 ? std::abs(ratio[r] - 1.0)
                                        : std::max(0.0, ratio[r] - 1.0));
    if (std::isfinite(obj_prev) && obj0 - obj_prev < tol && obj0 >= obj_prev - 1e-9 &&
        foc <= 1e-6)
      break;
    obj_prev = obj0;

    double obj1 = 0.0;
    update(mu1, mu2, obj1, scratch);
    const Eigen::VectorXd r1 = mu1 - mu;
    const Eigen::VectorXd v = mu2 - mu1 - r1;
    const double vn = v.norm();
    if (vn < 1e-300) {
      mu = mu2;
      continue;
    }
    const double alpha = std::min(-1.0, -r1.norm() / vn);
    mu_acc = mu - 2.0 * alpha * r1 + (alpha * alpha) * v;
    mu_acc = mu_acc.cwiseMax(0.0);
    const double mass = mu_acc.sum();
    if (!(mass > 0.0) || !mu_acc.allFinite()) {
      mu = mu2;
      continue;
    }
    mu_acc /= mass;
    double obj_acc = 0.0;
    update(mu_acc, mu3, obj_acc, scratch);
    mu = (obj_acc >= obj1) ? mu3 : mu2;  // keep the ascent guarantee
  }

  FkrbInnerResult res;
  res.mu = MixtureWeights{mu};
  res.loglik = obj;
  res.iterations = static_cast<int>(evals);
  return res;
}

double fkrb_profiled_loglik(const Panel& panel, const Eigen::VectorXd& theta,
                            const FkrbGrid& grid, DpCache& cache, double inner_tol,
                            Eigen::VectorXd* warm_mu) {
  const TypeLikelihoodMatrix tlm = type_likelihood(panel, theta, grid.support, cache);
  const FkrbInnerResult inner = fkrb_inner(tlm, inner_tol, warm_mu);
  if (warm_mu != nullptr) *warm_mu = inner.mu.mu;
  return inner.loglik;
}

}  // namespace ddc
