#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ddc/likelihood.hpp"
#include "ddc/model.hpp"
#include "ddc/numdiff.hpp"
#include "ddc/rng.hpp"

using namespace ddc;

namespace {

DpCache make_cache(double beta, int T = 8) {
  SolveOptions opts = SolveOptions::for_panel_T(T);
  opts.engine = DpEngine::state_newton;
  return DpCache(opts, beta);
}

Panel tiny_panel(int n, int T, uint64_t seed, const EntryModelParams& p) {
  return simulate_panel(p, n, T, seed, SolveOptions::for_panel_T(T));
}

// Brute-force simplex maximizer of the mixture log-likelihood on a 0.001-step
// grid (independent oracle for the multiplicative-update inner solver).
double simplex_grid_best(const TypeLikelihoodMatrix& tlm, double step = 0.001) {
  double best = -std::numeric_limits<double>::infinity();
  const int K = static_cast<int>(std::round(1.0 / step));
  for (int a = 0; a <= K; ++a) {
    for (int b = 0; b <= K - a; ++b) {
      MixtureWeights mu;
      mu.mu.resize(3);
      mu.mu << a * step, b * step, 1.0 - (a + b) * step;
      best = std::max(best, mixture_loglik(tlm, mu));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("type_likelihood: a half-probability observation contributes log 1/2") {
  // beta = 0, v = 0.5, fc = ec = 0.5 and w = 0 puts the static probit at
  // Delta = 0 in state 0.
  Panel p;
  p.W = Eigen::MatrixXd::Zero(1, 1);
  p.N = Eigen::MatrixXi::Zero(1, 1);
  p.A = Eigen::MatrixXi::Zero(1, 1);
  DpCache cache = make_cache(0.0, 1);
  Eigen::VectorXd theta(3);
  theta << 1.0, 0.5, 0.5;
  Eigen::VectorXd v(1);
  v << 0.5;
  for (int a = 0; a <= 1; ++a) {
    p.A(0, 0) = a;
    const TypeLikelihoodMatrix tlm = type_likelihood(p, theta, v, cache);
    CHECK(tlm.log_l(0, 0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  }
}

TEST_CASE("type_likelihood: rows permute with markets and truth dominates") {
  const EntryModelParams dgp = EntryModelParams::mc_design();
  DpCache cache = make_cache(dgp.beta);
  const Panel panel = tiny_panel(2000, 8, 314, dgp);
  const Eigen::VectorXd theta = dgp.packed_theta();
  Eigen::VectorXd v = dgp.type_support;

  const TypeLikelihoodMatrix tlm = type_likelihood(panel, theta, v, cache);
  CHECK(tlm.log_l.allFinite());

  // Permuting markets permutes rows identically.
  Panel rev = panel;
  rev.W = panel.W.colwise().reverse().eval();
  rev.N = panel.N.colwise().reverse().eval();
  rev.A = panel.A.colwise().reverse().eval();
  const TypeLikelihoodMatrix tlm_rev = type_likelihood(rev, theta, v, cache);
  CHECK((tlm_rev.log_l - tlm.log_l.colwise().reverse()).lpNorm<Eigen::Infinity>() ==
        0.0);

  // Mean over markets of max_r log_l is larger at the truth than at a
  // distorted cost parameter.
  Eigen::VectorXd distorted = theta;
  distorted[9] += 1.0;  // theta_fc + 1
  const TypeLikelihoodMatrix bad = type_likelihood(panel, distorted, v, cache);
  CHECK(tlm.log_l.rowwise().maxCoeff().mean() > bad.log_l.rowwise().maxCoeff().mean());
}

TEST_CASE("mixture_loglik: degenerate weights and identical columns") {
  TypeLikelihoodMatrix tlm;
  tlm.log_l.resize(3, 2);
  tlm.log_l << -1.0, -2.0, -0.5, -0.25, -3.0, -1.5;

  MixtureWeights first;
  first.mu.resize(2);
  first.mu << 1.0, 0.0;
  CHECK(mixture_loglik(tlm, first) ==
        doctest::Approx(tlm.log_l.col(0).sum()).epsilon(1e-14));

  TypeLikelihoodMatrix same;
  same.log_l.resize(3, 2);
  same.log_l.col(0) = tlm.log_l.col(0);
  same.log_l.col(1) = tlm.log_l.col(0);
  MixtureWeights any;
  any.mu.resize(2);
  any.mu << 0.3, 0.7;
  CHECK(mixture_loglik(same, any) ==
        doctest::Approx(tlm.log_l.col(0).sum()).epsilon(1e-14));
}

TEST_CASE("mixture_loglik: stable under +-700 row shifts") {
  TypeLikelihoodMatrix tlm;
  tlm.log_l.resize(2, 3);
  tlm.log_l << -1.0, -2.0, -0.5, -3.0, -1.5, -2.5;
  MixtureWeights mu;
  mu.mu.resize(3);
  mu.mu << 0.2, 0.5, 0.3;
  const double base = mixture_loglik(tlm, mu);
  for (const double c : {700.0, -700.0}) {
    TypeLikelihoodMatrix shifted;
    shifted.log_l = tlm.log_l.array() + c;
    const double got = mixture_loglik(shifted, mu);
    CHECK(got - 2.0 * c == doctest::Approx(base).epsilon(1e-12));
    CHECK(std::isfinite(got));
  }
}

TEST_CASE("fkrb_inner: grid oracle, dominance, identical columns") {
  TypeLikelihoodMatrix tlm;
  tlm.log_l.resize(6, 3);
  tlm.log_l << -1.2, -0.8, -2.0,
               -0.4, -1.1, -0.6,
               -2.2, -0.3, -1.4,
               -0.9, -0.9, -0.2,
               -1.7, -0.5, -1.0,
               -0.3, -1.6, -0.8;
  const FkrbInnerResult inner = fkrb_inner(tlm);
  const double grid_best = simplex_grid_best(tlm);
  CHECK(inner.loglik >= grid_best - 1e-3);
  CHECK(std::abs(inner.loglik - grid_best) < 1e-3);
  inner.mu.validate();

  // First-order simplex conditions: average posterior ratio is 1 on the
  // support, at most 1 off it.
  {
    const int n = tlm.n(), R = tlm.R();
    for (int r = 0; r < R; ++r) {
      double mean_ratio = 0.0;
      for (int i = 0; i < n; ++i) {
        double den = 0.0;
        for (int s = 0; s < R; ++s)
          den += inner.mu.mu[s] * std::exp(tlm.log_l(i, s));
        mean_ratio += std::exp(tlm.log_l(i, r)) / den;
      }
      mean_ratio /= n;
      if (inner.mu.mu[r] >= 1e-8) {
        CHECK(std::abs(mean_ratio - 1.0) <= 1e-6);
      } else {
        CHECK(mean_ratio <= 1.0 + 1e-6);
      }
    }
  }

  // One column dominating row-wise: mu converges to that vertex.
  TypeLikelihoodMatrix dom;
  dom.log_l.resize(4, 3);
  dom.log_l << -0.1, -1.0, -2.0,
               -0.2, -1.1, -0.9,
               -0.3, -2.0, -1.5,
               -0.1, -0.8, -1.2;
  const FkrbInnerResult vert = fkrb_inner(dom);
  CHECK(vert.mu.mu[0] > 1.0 - 1e-6);

  // Identical columns: uniform weights attain the single-column value.
  TypeLikelihoodMatrix same;
  same.log_l.resize(4, 3);
  for (int r = 0; r < 3; ++r) same.log_l.col(r) = dom.log_l.col(0);
  const FkrbInnerResult u = fkrb_inner(same);
  CHECK(u.loglik == doctest::Approx(dom.log_l.col(0).sum()).epsilon(1e-12));
}

TEST_CASE("fkrb_profiled_loglik: profiling dominates any fixed weights") {
  const EntryModelParams dgp = EntryModelParams::mc_design();
  DpCache cache = make_cache(dgp.beta);
  const Panel panel = tiny_panel(60, 8, 9, dgp);
  const Eigen::VectorXd theta = dgp.packed_theta();

  FkrbGrid grid;
  grid.support.resize(2);
  grid.support << 0.1, 1.0;  // the true support
  const double prof = fkrb_profiled_loglik(panel, theta, grid, cache);

  MixtureWeights fixed;
  fixed.mu.resize(2);
  fixed.mu << 0.37, 0.63;
  const TypeLikelihoodMatrix tlm = type_likelihood(panel, theta, grid.support, cache);
  CHECK(prof >= mixture_loglik(tlm, fixed) - 1e-9);

  MixtureWeights skew;
  skew.mu.resize(2);
  skew.mu << 0.9, 0.1;
  CHECK(prof >= mixture_loglik(tlm, skew) - 1e-9);

  // R = 1 grid: the profile value is the single-type likelihood sum.
  FkrbGrid one;
  one.support = Eigen::VectorXd::Constant(1, 0.55);
  const double prof1 = fkrb_profiled_loglik(panel, theta, one, cache);
  const TypeLikelihoodMatrix t1 = type_likelihood(panel, theta, one.support, cache);
  CHECK(prof1 == doctest::Approx(t1.log_l.col(0).sum()).epsilon(1e-12));
}

TEST_CASE("fkrb_profiled_loglik: no translation invariance without a constant column") {
  const EntryModelParams dgp = EntryModelParams::mc_design();
  DpCache cache = make_cache(dgp.beta);
  const Panel panel = tiny_panel(40, 8, 21, dgp);
  const Eigen::VectorXd theta = dgp.packed_theta();
  const FkrbGrid grid = FkrbGrid::default_grid();

  const double base = fkrb_profiled_loglik(panel, theta, grid, cache);
  // Shift every grid point by c and pull c out of the first covariate
  // direction; with no constant column in W this cannot be a reparameterization.
  const double c = 0.25;
  FkrbGrid shifted;
  shifted.support = grid.support.array() + c;
  Eigen::VectorXd theta2 = theta;
  theta2[0] -= c;
  const double moved = fkrb_profiled_loglik(panel, theta2, shifted, cache);
  CHECK(std::abs(moved - base) > 1e-3);
}

TEST_CASE("em_run: R = 1 collapses to one M-step of full MLE") {
  EntryModelParams dgp = EntryModelParams::mc_design();
  dgp.type_support = Eigen::VectorXd::Constant(1, 0.5);
  dgp.type_probs = Eigen::VectorXd::Constant(1, 1.0);
  DpCache cache = make_cache(dgp.beta);
  const Panel panel = tiny_panel(80, 8, 3, dgp);

  Eigen::VectorXd theta0 = dgp.packed_theta();
  const EmResult em = em_run(panel, theta0, Eigen::VectorXd::Constant(1, 0.3),
                             Eigen::VectorXd::Constant(1, 1.0), cache);
  CHECK(em.mu.mu[0] == 1.0);
  CHECK(em.stopped_by_rule);
  CHECK(em.iterations <= 3);

  // Direct maximization of the same criterion reaches the same value.
  QnOptions qn;
  qn.max_evals = 4000;
  auto obj = [&](const Eigen::VectorXd& x) {
    const TypeLikelihoodMatrix t =
        type_likelihood(panel, x.head(11), x.tail(1), cache);
    return t.log_l.col(0).sum();
  };
  Eigen::VectorXd x0(12);
  x0 << theta0, 0.3;
  const QnResult direct = maximize_bfgs(
      obj, x0, Eigen::VectorXd::Constant(12, -25.0), Eigen::VectorXd::Constant(12, 25.0), qn);
  CHECK(em.loglik == doctest::Approx(direct.f).epsilon(1e-6));
}

TEST_CASE("em_run: ascent and concentration on degenerate data") {
  // Two declared types but only the high one is active in the data. The
  // boundary solution mu -> (0, 1) makes the percent-change rule slow, so the
  // run is capped; concentration appears long before that.
  EntryModelParams dgp;
  dgp.theta_w = Eigen::Vector2d(0.4, -0.6);
  dgp.theta_fc = 0.5;
  dgp.theta_ec = 0.5;
  dgp.beta = 0.95;
  dgp.type_support = Eigen::VectorXd::LinSpaced(2, 0.1, 1.0);
  dgp.type_probs.resize(2);
  dgp.type_probs << 0.0, 1.0;  // only the high type is active
  DpCache cache = make_cache(dgp.beta);
  const Panel panel = tiny_panel(2000, 8, 41, dgp);

  Eigen::VectorXd v0(2);
  v0 << 0.6, 1.2;
  Eigen::VectorXd mu0(2);
  mu0 << 0.5, 0.5;
  EmOptions opts;
  opts.max_outer = 40;
  const EmResult em = em_run(panel, dgp.packed_theta(), v0, mu0, cache, opts);

  for (std::size_t k = 1; k < em.loglik_trace.size(); ++k)
    CHECK(em.loglik_trace[k] >=
          em.loglik_trace[k - 1] - 1e-8 * std::abs(em.loglik_trace[k - 1]));

  // Mass concentrates near the active lambda = 1, whether the mixture
  // degenerates in the weights or the support points merge there.
  double mass_near_active = 0.0;
  for (int r = 0; r < 2; ++r)
    if (std::abs(em.v[r] - 1.0) <= 0.25) mass_near_active += em.mu.mu[r];
  CHECK(mass_near_active >= 0.95);
  // v is kept ascending.
  CHECK(em.v[0] <= em.v[1]);
}

TEST_CASE("em_run: stopping rule fires on mixed data") {
  EntryModelParams dgp;
  dgp.theta_w = Eigen::Vector2d(0.4, -0.6);
  dgp.theta_fc = 0.5;
  dgp.theta_ec = 0.5;
  dgp.beta = 0.95;
  dgp.type_support = Eigen::VectorXd::LinSpaced(2, 0.1, 1.0);
  dgp.type_probs.resize(2);
  dgp.type_probs << 0.37, 0.63;
  DpCache cache = make_cache(dgp.beta);
  const Panel panel = tiny_panel(400, 8, 43, dgp);

  Eigen::VectorXd v0(2);
  v0 << 0.0, 1.2;
  Eigen::VectorXd mu0(2);
  mu0 << 0.5, 0.5;
  const EmResult em = em_run(panel, dgp.packed_theta(), v0, mu0, cache);
  CHECK(em.stopped_by_rule);
  CHECK(em.iterations < EmOptions{}.max_outer);
  for (std::size_t k = 1; k < em.loglik_trace.size(); ++k)
    CHECK(em.loglik_trace[k] >=
          em.loglik_trace[k - 1] - 1e-8 * std::abs(em.loglik_trace[k - 1]));
}

TEST_CASE("numdiff: quadratic oracle") {
  Eigen::MatrixXd M(4, 4);
  M << 4.0, 1.0, 0.5, 0.0,
       1.0, 3.0, 0.2, 0.1,
       0.5, 0.2, 2.0, 0.3,
       0.0, 0.1, 0.3, 1.5;
  Eigen::VectorXd a(4);
  a << 0.3, -0.7, 1.1, 0.2;
  auto f = [&](const Eigen::VectorXd& x) -> double {
    return -((x - a).transpose() * M * (x - a))(0, 0);
  };
  Eigen::VectorXd x(4);
  x << 1.0, 0.5, -0.4, 0.8;

  const Eigen::VectorXd g = gradient(f, x);
  const Eigen::VectorXd g_exact = -2.0 * M * (x - a);
  CHECK((g - g_exact).norm() / g_exact.norm() < 1e-6);

  const Eigen::MatrixXd H = hessian(f, x);
  const Eigen::MatrixXd H_exact = -2.0 * M;
  CHECK((H - H_exact).norm() / H_exact.norm() < 1e-4);
  CHECK((H - H.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("numdiff: agrees with a Richardson-extrapolated oracle on the mixture") {
  const EntryModelParams dgp = EntryModelParams::mc_design();
  DpCache cache = make_cache(dgp.beta);
  const Panel panel = tiny_panel(50, 8, 6, dgp);
  MixtureWeights mu;
  mu.mu = dgp.type_probs;
  auto obj = [&](const Eigen::VectorXd& th) {
    return mixture_loglik(type_likelihood(panel, th, dgp.type_support, cache), mu);
  };
  const Eigen::VectorXd theta = dgp.packed_theta();
  const Eigen::VectorXd g = gradient(obj, theta);

  // Richardson extrapolation of central differences at two step sizes.
  Eigen::VectorXd g_rich(theta.size());
  for (int k = 0; k < theta.size(); ++k) {
    const double h = 1e-4 * std::max(1.0, std::abs(theta[k]));
    auto central = [&](double step) {
      Eigen::VectorXd xp = theta, xm = theta;
      xp[k] += step;
      xm[k] -= step;
      return (obj(xp) - obj(xm)) / (2.0 * step);
    };
    g_rich[k] = (4.0 * central(h / 2.0) - central(h)) / 3.0;
  }
  CHECK((g - g_rich).norm() / g_rich.norm() < 1e-4);
}

TEST_CASE("numdiff: shrinks once then reports a bad stencil") {
  auto f = [](const Eigen::VectorXd& x) -> double {
    if (x[0] > 1.0) return std::numeric_limits<double>::quiet_NaN();
    return -x[0] * x[0];
  };
  Eigen::VectorXd ok = Eigen::VectorXd::Constant(1, 0.5);
  CHECK(std::isfinite(gradient(f, ok)[0]));
  // At the edge the +h stencil lands in the NaN region even after shrinking.
  Eigen::VectorXd edge = Eigen::VectorXd::Constant(1, 1.0 - 1e-9);
  CHECK_THROWS(gradient(f, edge));
}
