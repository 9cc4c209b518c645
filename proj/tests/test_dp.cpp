#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <thread>

#include "ddc/dp.hpp"
#include "ddc/math.hpp"
#include "ddc/model.hpp"
#include "ddc/rng.hpp"
#include "test_support.hpp"

using namespace ddc;

TEST_CASE("normal helpers: tails, seam continuity, expected gain") {
  CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(norm_log_cdf(0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  // Continuity across the asymptotic-branch seam at a = -26.
  const double left = norm_log_cdf(-26.0 - 1e-9);
  const double right = norm_log_cdf(-26.0 + 1e-9);
  CHECK(std::abs(left - right) < 1e-6);
  // Deep tail stays finite at the clamp boundary.
  CHECK(std::isfinite(norm_log_cdf(-kDeltaClamp)));
  // g(a) -> a for large positive a, -> 0 for large negative a.
  CHECK(expected_gain(12.0) == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(expected_gain(-12.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("solve_dp: beta = 0 reduces to a static probit") {
  SolveOptions opts;
  opts.n_max = 5;
  const DpSolution sol = solve_dp(0.5, 0.5, 0.5, 0.0, opts);
  // Delta(0) = 0.5 - 0 - 0.5 = 0, Delta(1) = 0.5 - 0.5 = 0.
  CHECK(sol.ccp[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sol.ccp[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("solve_dp: infinite-horizon fixed point matches backward induction") {
  const EntryModelParams p = EntryModelParams::mc_design();
  SolveOptions opts = SolveOptions::for_panel_T(8);
  opts.tol = 1e-12;

  Rng rng(20240517);
  Eigen::VectorXd w(9);
  for (int j = 0; j < 9; ++j) w[j] = rng.uniform();
  const double u = 1.1 + p.theta_w.dot(w);
  const DpSolution sol = solve_dp(u, p.theta_fc, p.theta_ec, p.beta, opts);
  const Eigen::VectorXd oracle =
      testsup::backward_induction_ccp(u, p.theta_fc, p.theta_ec, p.beta, opts.n_max, 500);
  CHECK((sol.ccp - oracle).lpNorm<Eigen::Infinity>() < 1e-6);

  // A handful of random draws over the parameter box.
  for (int k = 0; k < 10; ++k) {
    const double uu = rng.uniform(-2.0, 3.0);
    const double fc = rng.uniform(0.1, 1.0);
    const double ec = rng.uniform(0.0, 1.0);
    const double beta = rng.uniform(0.0, 0.97);
    const DpSolution s = solve_dp(uu, fc, ec, beta, opts);
    const Eigen::VectorXd bi =
        testsup::backward_induction_ccp(uu, fc, ec, beta, opts.n_max, 500);
    CHECK((s.ccp - bi).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("solve_dp: both engines find the same fixed point") {
  SolveOptions vi = SolveOptions::for_panel_T(8);
  vi.tol = 1e-12;
  SolveOptions sn = vi;
  sn.engine = DpEngine::state_newton;
  Rng rng(7);
  for (int k = 0; k < 25; ++k) {
    const double u = rng.uniform(-30.0, 30.0);
    const double fc = rng.uniform(0.0, 2.0);
    const double ec = rng.uniform(0.0, 2.0);
    const double beta = rng.uniform(0.0, 0.96);
    const DpSolution a = solve_dp(u, fc, ec, beta, vi);
    const DpSolution b = solve_dp(u, fc, ec, beta, sn);
    CHECK((a.value - b.value).lpNorm<Eigen::Infinity>() < 5e-9);
    CHECK((a.ccp - b.ccp).lpNorm<Eigen::Infinity>() < 5e-9);
  }
}

TEST_CASE("solve_dp: ccp tends to one as u grows and stays interior") {
  SolveOptions opts;
  opts.n_max = 10;
  const DpSolution sol = solve_dp(1e6, 0.5, 0.5, 0.95, opts);
  for (int s = 0; s <= 10; ++s) {
    CHECK(sol.ccp[s] > 1.0 - 1e-12);
    CHECK(sol.ccp[s] < 1.0);  // stored ccp stays strictly inside (0, 1)
  }
  const DpSolution low = solve_dp(-1e6, 0.5, 0.5, 0.95, opts);
  for (int s = 0; s <= 10; ++s) CHECK(low.ccp[s] > 0.0);
}

TEST_CASE("solve_dp: ccp strictly increasing in u, residual within tolerance") {
  SolveOptions opts = SolveOptions::for_panel_T(8);
  double prev[9];
  bool first = true;
  for (int k = 0; k <= 100; ++k) {
    const double u = -2.0 + 5.0 * k / 100.0;
    const DpSolution sol = solve_dp(u, 0.5, 0.5, 0.95, opts);
    CHECK(sol.residual <= opts.tol);
    for (int s = 0; s <= 8; ++s) {
      if (!first) CHECK(sol.ccp[s] > prev[s]);
      prev[s] = sol.ccp[s];
    }
    first = false;
  }
}

TEST_CASE("solve_dp: doubling the state truncation does not move observed ccps") {
  SolveOptions a = SolveOptions::for_panel_T(8);
  SolveOptions b = a;
  b.n_max = 2 * a.n_max;
  const DpSolution sa = solve_dp(2.0, 0.5, 0.5, 0.95, a);
  const DpSolution sb = solve_dp(2.0, 0.5, 0.5, 0.95, b);
  CHECK((sa.ccp.head(9) - sb.ccp.head(9)).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("solve_dp: rejects bad arguments") {
  SolveOptions opts;
  CHECK_THROWS(solve_dp(0.0, 0.5, 0.5, 1.0, opts));
  opts.tol = -1.0;
  CHECK_THROWS(solve_dp(0.0, 0.5, 0.5, 0.9, opts));
  opts = SolveOptions{};
  opts.max_iter = 3;
  CHECK_THROWS(solve_dp(0.0, 0.5, 0.5, 0.95, opts));
}

TEST_CASE("ccp_mixture: degenerate and two-type cases") {
  SolveOptions opts = SolveOptions::for_panel_T(8);
  EntryModelParams p = EntryModelParams::mc_design();
  Rng rng(11);
  Eigen::VectorXd w(9);
  for (int j = 0; j < 9; ++j) w[j] = rng.uniform();

  // R = 1: mixture equals the single-type ccp.
  EntryModelParams p1 = p;
  p1.type_support = Eigen::VectorXd::Constant(1, 0.42);
  p1.type_probs = Eigen::VectorXd::Constant(1, 1.0);
  const double mix1 = ccp_mixture(w, 2, p1, opts);
  const double direct =
      solve_dp(0.42 + p.theta_w.dot(w), p.theta_fc, p.theta_ec, p.beta, opts).ccp[2];
  CHECK(mix1 == doctest::Approx(direct).epsilon(1e-15));

  // R = 2: value lies strictly between the type-specific ccps.
  EntryModelParams p2 = p;
  p2.type_support.resize(2);
  p2.type_support << 0.1, 1.0;
  p2.type_probs.resize(2);
  p2.type_probs << 0.37, 0.63;
  const double lo =
      solve_dp(0.1 + p.theta_w.dot(w), p.theta_fc, p.theta_ec, p.beta, opts).ccp[1];
  const double hi =
      solve_dp(1.0 + p.theta_w.dot(w), p.theta_fc, p.theta_ec, p.beta, opts).ccp[1];
  const double mid = ccp_mixture(w, 1, p2, opts);
  CHECK(mid > lo);
  CHECK(mid < hi);
}

TEST_CASE("ccp_mixture: depends on w only through the payoff index") {
  SolveOptions opts = SolveOptions::for_panel_T(8);
  const EntryModelParams p = EntryModelParams::mc_design();
  // Two distinct w with identical theta_w'w: move along directions that the
  // index does not see.
  Eigen::VectorXd w1 = Eigen::VectorXd::Constant(9, 0.5);
  Eigen::VectorXd w2 = w1;
  // theta_w = (-.3,-.2,...). Shift coordinates 0 and 1 so the index is unchanged:
  // -0.3 * a + -0.2 * b = 0 with a = 0.2, b = -0.3.
  w2[0] += 0.2;
  w2[1] -= 0.3;
  CHECK(std::abs(p.theta_w.dot(w1) - p.theta_w.dot(w2)) < 1e-15);
  for (int n = 0; n <= 3; ++n) {
    const double a = ccp_mixture(w1, n, p, opts);
    const double b = ccp_mixture(w2, n, p, opts);
    CHECK(std::abs(a - b) <= 1e-12);
  }
}

TEST_CASE("simulate_panel: deterministic, valid transitions, paper design") {
  const EntryModelParams p = EntryModelParams::mc_design();
  const SolveOptions opts = SolveOptions::for_panel_T(8);
  const Panel a = simulate_panel(p, 40, 8, 123, opts);
  const Panel b = simulate_panel(p, 40, 8, 123, opts);
  a.validate();
  CHECK(a.W == b.W);
  CHECK(a.N == b.N);
  CHECK(a.A == b.A);
  const Panel c = simulate_panel(p, 40, 8, 124, opts);
  CHECK(a.A != c.A);

  // W lives on the unit cube.
  CHECK(a.W.minCoeff() >= 0.0);
  CHECK(a.W.maxCoeff() < 1.0);
}

TEST_CASE("simulate_panel: degenerate type matches solve_dp entry rates") {
  EntryModelParams p = EntryModelParams::mc_design();
  p.type_support = Eigen::VectorXd::Constant(1, 0.1);
  p.type_probs = Eigen::VectorXd::Constant(1, 1.0);
  const SolveOptions opts = SolveOptions::for_panel_T(8);
  const int n = 10000;
  const Panel panel = simulate_panel(p, n, 8, 5150, opts);

  // Empirical entry frequency at t = 1 (all markets have N = 0) against the
  // model ccp averaged over the drawn W, within 3 binomial standard errors.
  double model_mean = 0.0;
  int entries = 0;
  for (int i = 0; i < n; ++i) {
    const double u = 0.1 + p.theta_w.dot(panel.W.row(i));
    model_mean += solve_dp(u, p.theta_fc, p.theta_ec, p.beta, opts).ccp[0];
    entries += panel.A(i, 0);
  }
  model_mean /= n;
  const double se = std::sqrt(model_mean * (1.0 - model_mean) / n);
  CHECK(std::abs(static_cast<double>(entries) / n - model_mean) <= 3.0 * se);
}

TEST_CASE("DpCache: memoizes, bounded, concurrent access") {
  SolveOptions opts = SolveOptions::for_panel_T(8);
  opts.engine = DpEngine::state_newton;
  DpCache cache(opts, 0.95, 64);
  const auto a = cache.solve(1.0, 0.5, 0.5);
  const auto b = cache.solve(1.0, 0.5, 0.5);
  CHECK(a.get() == b.get());  // second call returns the memoized object

  // Eviction keeps the cache bounded near its cap (two generations).
  for (int k = 0; k < 1000; ++k) cache.solve(0.001 * k, 0.5, 0.5);
  CHECK(cache.size() <= 2 * 64);

  // Concurrent read/insert returns identical values.
  DpCache shared(opts, 0.95);
  std::vector<std::thread> pool;
  std::vector<double> got(8);
  for (int w = 0; w < 8; ++w)
    pool.emplace_back([&, w] { got[w] = shared.solve(1.25, 0.5, 0.5)->ccp[0]; });
  for (auto& t : pool) t.join();
  for (int w = 1; w < 8; ++w) CHECK(got[w] == got[0]);
}

TEST_CASE("Panel: CSV round trip and validation") {
  const EntryModelParams p = EntryModelParams::mc_design();
  const Panel panel = simulate_panel(p, 12, 8, 77, SolveOptions::for_panel_T(8));
  const std::string path = (std::filesystem::temp_directory_path() / "ddc_panel_test.csv").string();
  panel.save_csv(path);
  const Panel back = Panel::load_csv(path);
  CHECK(back.W == panel.W);
  CHECK(back.N == panel.N);
  CHECK(back.A == panel.A);
  std::filesystem::remove(path);

  Panel bad = panel;
  bad.N(3, 0) = 1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("EntryModelParams: JSON round trip and invariants") {
  const EntryModelParams p = EntryModelParams::mc_design();
  const EntryModelParams q = EntryModelParams::from_json(p.to_json());
  CHECK(q.theta_w == p.theta_w);
  CHECK(q.beta == p.beta);
  CHECK(q.type_probs == p.type_probs);

  EntryModelParams bad = p;
  bad.beta = 1.0;
  CHECK_THROWS(bad.validate());
  bad = p;
  bad.type_probs[0] = 0.5;  // no longer sums to one
  CHECK_THROWS(bad.validate());
  bad = p;
  bad.type_support[1] = bad.type_support[0];  // ties forbidden
  CHECK_THROWS(bad.validate());
}
