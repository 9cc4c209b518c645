#include "ddc/estimator.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "ddc/model.hpp"
#include "ddc/numdiff.hpp"
#include "ddc/parallel.hpp"
#include "ddc/rng.hpp"

namespace ddc {

using nlohmann::json;

std::string target_name(Target t) { return t == Target::em ? "em" : "h"; }

Target target_from_name(const std::string& name) {
  if (name == "em") return Target::em;
  if (name == "h") return Target::h;
  throw std::invalid_argument("unknown target '" + name + "' (expected em or h)");
}

EstimatorConfig EstimatorConfig::defaults(int T) {
  EstimatorConfig cfg;
  cfg.dp = SolveOptions::for_panel_T(T);
  cfg.dp.engine = DpEngine::state_newton;
  return cfg;
}

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.begin(), v.end());
}

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

// Mixture weights from free log-ratios (last weight is the reference).
Eigen::VectorXd softmax_mu(const Eigen::VectorXd& s) {
  const int R = static_cast<int>(s.size()) + 1;
  Eigen::VectorXd z(R);
  z.head(R - 1) = s;
  z[R - 1] = 0.0;
  const double m = z.maxCoeff();
  Eigen::VectorXd mu = (z.array() - m).exp();
  return mu / mu.sum();
}

Eigen::VectorXd logits_from_mu(const Eigen::VectorXd& mu) {
  const int R = static_cast<int>(mu.size());
  Eigen::VectorXd s(R - 1);
  const double ref = std::max(mu[R - 1], 1e-12);
  for (int r = 0; r < R - 1; ++r)
    s[r] = std::clamp(std::log(std::max(mu[r], 1e-12) / ref), -30.0, 30.0);
  return s;
}

// Full free-support mixture objective over x = [theta, v, logits].
double em_full_objective(const Panel& panel, const Eigen::VectorXd& x, int d_theta,
                         int R, DpCache& cache) {
  const Eigen::VectorXd theta = x.head(d_theta);
  const Eigen::VectorXd v = x.segment(d_theta, R);
  const MixtureWeights mu{softmax_mu(x.tail(R - 1))};
  return mixture_loglik(type_likelihood(panel, theta, v, cache), mu);
}

}  // namespace

std::string EstimatorConfig::to_json() const {
  json j;
  j["target"] = target_name(target);
  j["newton_steps"] = newton_steps;
  j["delta_grid"] = delta_grid;
  j["starts_multiplier"] = starts_multiplier;
  j["box_bound"] = box_bound;
  j["seed"] = seed;
  j["beta"] = beta;
  j["grid_support"] = to_std(grid.support);
  j["em_types"] = em_types;
  j["em_stop_pct"] = em_stop_pct;
  j["pseudo_starts"] = pseudo_starts;
  j["max_evals"] = qn.max_evals;
  j["grad_tol"] = qn.grad_tol;
  j["inner_tol"] = inner_tol;
  j["inner_tol_diff"] = inner_tol_diff;
  j["rank_deficiency"] = rank_deficiency;
  j["dp_n_max"] = dp.n_max;
  j["dp_tol"] = dp.tol;
  j["dp_engine"] = dp.engine == DpEngine::state_newton ? "state_newton" : "value_iteration";
  return j.dump(2);
}

EstimatorConfig EstimatorConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  EstimatorConfig cfg;
  if (j.contains("target")) cfg.target = target_from_name(j["target"].get<std::string>());
  if (j.contains("newton_steps")) cfg.newton_steps = j["newton_steps"].get<int>();
  if (j.contains("delta_grid")) cfg.delta_grid = j["delta_grid"].get<double>();
  if (j.contains("starts_multiplier"))
    cfg.starts_multiplier = j["starts_multiplier"].get<int>();
  if (j.contains("box_bound")) cfg.box_bound = j["box_bound"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("beta")) cfg.beta = j["beta"].get<double>();
  if (j.contains("grid_support"))
    cfg.grid.support = from_std(j["grid_support"].get<std::vector<double>>());
  if (j.contains("em_types")) cfg.em_types = j["em_types"].get<int>();
  if (j.contains("em_stop_pct")) cfg.em_stop_pct = j["em_stop_pct"].get<double>();
  if (j.contains("pseudo_starts")) cfg.pseudo_starts = j["pseudo_starts"].get<int>();
  if (j.contains("max_evals")) cfg.qn.max_evals = j["max_evals"].get<int>();
  if (j.contains("grad_tol")) cfg.qn.grad_tol = j["grad_tol"].get<double>();
  if (j.contains("inner_tol")) cfg.inner_tol = j["inner_tol"].get<double>();
  if (j.contains("inner_tol_diff")) cfg.inner_tol_diff = j["inner_tol_diff"].get<double>();
  if (j.contains("rank_deficiency")) cfg.rank_deficiency = j["rank_deficiency"].get<int>();
  if (j.contains("dp_n_max")) cfg.dp.n_max = j["dp_n_max"].get<int>();
  if (j.contains("dp_tol")) cfg.dp.tol = j["dp_tol"].get<double>();
  if (j.contains("dp_engine"))
    cfg.dp.engine = j["dp_engine"].get<std::string>() == "value_iteration"
                        ? DpEngine::value_iteration
                        : DpEngine::state_newton;
  return cfg;
}

PseudoMleResult pseudo_mle(const Panel& panel, const EstimatorConfig& cfg,
                           DpCache& cache) {
  const int dt = panel.dim_w() + 2;
  const int dim = dt + 1;  // (theta, v)
  auto objective = [&](const Eigen::VectorXd& x) {
    const TypeLikelihoodMatrix tlm =
        type_likelihood(panel, x.head(dt), x.tail(1), cache);
    return tlm.log_l.col(0).sum();
  };
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, -cfg.box_bound);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, cfg.box_bound);

  Rng rng(derive_seed(cfg.seed, 101));
  PseudoMleResult best;
  best.loglik = -std::numeric_limits<double>::infinity();
  std::string last_error = "no starts attempted";
  for (int s = 0; s < cfg.pseudo_starts; ++s) {
    Eigen::VectorXd x0(dim);
    for (int k = 0; k < dim; ++k) x0[k] = rng.uniform(-cfg.box_bound, cfg.box_bound);
    try {
      const QnResult res = maximize_bfgs(objective, x0, lo, hi, cfg.qn);
      if (res.f > best.loglik) {
        best.loglik = res.f;
        best.theta = res.x.head(dt);
        best.v = res.x[dt];
      }
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  if (!std::isfinite(best.loglik))
    throw std::runtime_error("pseudo_mle: every start failed; last error: " + last_error);
  return best;
}

std::vector<Eigen::VectorXd> make_starts(const Eigen::VectorXd& center, int D,
                                         const EstimatorConfig& cfg,
                                         const ReparamMap* constraint,
                                         uint64_t seed) {
  Eigen::VectorXd c;
  if (constraint != nullptr) {
    const int d_w = static_cast<int>(constraint->basis.rows());
    if (center.size() != d_w + 2)
      throw std::invalid_argument("make_starts: center must be a packed theta");
    c.resize(constraint->free_dim() + 2);
    c.head(constraint->free_dim()) = constraint->project(center.head(d_w));
    c.tail(2) = center.tail(2);
  } else {
    c = center;
  }
  if (D != c.size())
    throw std::invalid_argument("make_starts: D does not match the search dimension");

  const int want = cfg.starts_multiplier * D;
  Rng rng(seed);
  std::set<std::vector<int>> seen;
  seen.insert(std::vector<int>(D, 0));  // the center; appended separately
  std::vector<Eigen::VectorXd> starts;
  starts.reserve(want + 1);
  while (static_cast<int>(starts.size()) < want) {
    std::vector<int> offset(D);
    for (int k = 0; k < D; ++k)
      offset[k] = static_cast<int>(rng.uniform_int(11)) - 5;
    if (!seen.insert(offset).second) continue;
    Eigen::VectorXd x = c;
    for (int k = 0; k < D; ++k) x[k] += cfg.delta_grid * offset[k];
    starts.push_back(std::move(x));
  }
  starts.push_back(c);
  return starts;
}

namespace {

// Runs one quasi-Newton start and records its clock/evaluation count.
struct StartOutcome {
  Eigen::VectorXd x;
  double criterion = -std::numeric_limits<double>::infinity();
  double seconds = 0.0;
  int evals = 0;
  bool ok = false;
  std::string error;
};

int pick_best(const std::vector<StartOutcome>& runs, MultiStartStats* stats) {
  int best = -1;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    if (!runs[s].ok) continue;
    if (best < 0 || runs[s].criterion > runs[best].criterion)
      best = static_cast<int>(s);
  }
  if (stats != nullptr) {
    stats->seconds.clear();
    stats->evals.clear();
    stats->criteria.clear();
    for (const auto& r : runs) {
      stats->seconds.push_back(r.seconds);
      stats->evals.push_back(r.evals);
      stats->criteria.push_back(r.criterion);
    }
    stats->best = best;
  }
  return best;
}

[[noreturn]] void all_starts_failed(const char* where,
                                    const std::vector<StartOutcome>& runs) {
  std::string msg = std::string(where) + ": every initialization failed;";
  for (std::size_t s = 0; s < runs.size(); ++s)
    if (!runs[s].error.empty())
      msg += " [start " + std::to_string(s) + ": " + runs[s].error + "]";
  throw std::runtime_error(msg);
}

}  // namespace

Step1Result step1_constrained(const Panel& panel, const EstimatorConfig& cfg,
                              const ReparamMap& map,
                              const std::vector<Eigen::VectorXd>& starts,
                              DpCache& cache, MultiStartStats* stats) {
  const int q = map.free_dim();
  const int d_w = static_cast<int>(map.basis.rows());
  const int R = cfg.em_types;
  const int dim = (cfg.target == Target::h) ? q + 2 : q + 2 + R + (R - 1);

  auto theta_of = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd theta(d_w + 2);
    theta.head(d_w) = map.embed(x.head(q));
    theta[d_w] = x[q];
    theta[d_w + 1] = x[q + 1];
    return theta;
  };

  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, -cfg.box_bound);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, cfg.box_bound);

  std::vector<StartOutcome> runs(starts.size());
  parallel_for(starts.size(), [&](std::size_t s) {
    if (starts[s].size() != dim)
      throw std::invalid_argument("step1_constrained: start dimension mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    StartOutcome& out = runs[s];
    try {
      Eigen::VectorXd warm;  // per-start inner warm start
      Objective obj;
      if (cfg.target == Target::h) {
        obj = [&, wm = std::make_shared<Eigen::VectorXd>()](const Eigen::VectorXd& x) {
          return fkrb_profiled_loglik(panel, theta_of(x), cfg.grid, cache,
                                      cfg.inner_tol, wm.get());
        };
      } else {
        obj = [&](const Eigen::VectorXd& x) {
          const Eigen::VectorXd theta = theta_of(x);
          const Eigen::VectorXd v = x.segment(q + 2, R);
          const MixtureWeights mu{softmax_mu(x.tail(R - 1))};
          return mixture_loglik(type_likelihood(panel, theta, v, cache), mu);
        };
      }
      const QnResult res = maximize_bfgs(obj, starts[s], lo, hi, cfg.qn);
      out.x = res.x;
      out.criterion = res.f;
      out.evals = res.evals;
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    out.seconds = seconds_since(t0);
  });

  const int best = pick_best(runs, stats);
  if (best < 0) all_starts_failed("step1_constrained", runs);

  Step1Result res;
  res.theta = theta_of(runs[best].x);
  res.criterion = runs[best].criterion;
  if (cfg.target == Target::em) {
    res.v = runs[best].x.segment(q + 2, R);
    res.mu = softmax_mu(runs[best].x.tail(R - 1));
  } else {
    const TypeLikelihoodMatrix tlm =
        type_likelihood(panel, res.theta, cfg.grid.support, cache);
    res.mu = fkrb_inner(tlm, cfg.inner_tol).mu.mu;
  }
  return res;
}

NewtonResult step2_newton(const Objective& objective, const Eigen::VectorXd& start,
                          int L, uint64_t seed, const NumDiffOptions& diff) {
  if (L < 1) throw std::invalid_argument("step2_newton: L must be >= 1");
  const int dim = static_cast<int>(start.size());

  NewtonResult res;
  for (int retry = 0; retry <= 20; ++retry) {
    Eigen::VectorXd x = start;
    if (retry > 0) {
      Rng rng(derive_seed(seed, 7000 + retry));
      for (int k = 0; k < dim; ++k) x[k] += rng.uniform(-0.01, 0.01);
    }
    res.step_norms.clear();
    res.damped = 0;
    res.retries = retry;
    bool ok = true;
    for (int l = 0; l < L; ++l) {
      Eigen::VectorXd g;
      Eigen::MatrixXd H;
      try {
        g = gradient(objective, x, diff);
        H = hessian(objective, x, diff);
      } catch (const std::exception&) {
        ok = false;
        break;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
      Eigen::VectorXd lam = es.eigenvalues();
      const double lam_max = lam.cwiseAbs().maxCoeff();
      if (lam_max == 0.0) {
        ok = false;
        break;
      }
      if (lam.cwiseAbs().minCoeff() < 1e-10 * lam_max) {
        lam.array() -= 1e-8 * lam_max;  // Levenberg ridge
        ++res.damped;
      }
      const Eigen::VectorXd step =
          es.eigenvectors() *
          (es.eigenvectors().transpose() * g).cwiseQuotient(lam);
      const Eigen::VectorXd x_new = x - step;
      if (!x_new.allFinite() || x_new.lpNorm<Eigen::Infinity>() > 1e3 ||
          !std::isfinite(objective(x_new))) {
        ok = false;
        break;
      }
      res.step_norms.push_back(step.norm());
      x = x_new;
    }
    if (ok) {
      res.x = x;
      return res;
    }
  }
  throw std::runtime_error("step2_newton: retry budget exhausted");
}

TargetResult target_unconstrained(const Panel& panel, const EstimatorConfig& cfg,
                                  const std::vector<Eigen::VectorXd>& starts,
                                  DpCache& cache, MultiStartStats* stats) {
  const int dt = panel.dim_w() + 2;
  const int R = cfg.em_types;
  std::vector<StartOutcome> runs(starts.size());
  std::vector<Eigen::VectorXd> vs(starts.size()), mus(starts.size());

  parallel_for(starts.size(), [&](std::size_t s) {
    const auto t0 = std::chrono::steady_clock::now();
    StartOutcome& out = runs[s];
    try {
      if (cfg.target == Target::h) {
        if (starts[s].size() != dt)
          throw std::invalid_argument("target_unconstrained: start must be packed theta");
        auto wm = std::make_shared<Eigen::VectorXd>();
        Objective obj = [&, wm](const Eigen::VectorXd& x) {
          return fkrb_profiled_loglik(panel, x, cfg.grid, cache, cfg.inner_tol,
                                      wm.get());
        };
        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(dt, -cfg.box_bound);
        const Eigen::VectorXd hi = Eigen::VectorXd::Constant(dt, cfg.box_bound);
        const QnResult res = maximize_bfgs(obj, starts[s], lo, hi, cfg.qn);
        out.x = res.x;
        out.criterion = res.f;
        out.evals = res.evals;
      } else {
        // Start vector layout: [theta, v, mu].
        if (starts[s].size() != dt + 2 * R)
          throw std::invalid_argument("target_unconstrained: start must be [theta, v, mu]");
        EmOptions em_opts;
        em_opts.stop_pct = cfg.em_stop_pct;
        em_opts.box_bound = cfg.box_bound;
        const EmResult em =
            em_run(panel, starts[s].head(dt), starts[s].segment(dt, R),
                   starts[s].tail(R), cache, em_opts);
        out.x = em.theta;
        out.criterion = em.loglik;
        out.evals = em.iterations;
        vs[s] = em.v;
        mus[s] = em.mu.mu;
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    out.seconds = seconds_since(t0);
  });

  const int best = pick_best(runs, stats);
  if (best < 0) all_starts_failed("target_unconstrained", runs);

  TargetResult res;
  res.criterion = runs[best].criterion;
  if (cfg.target == Target::h) {
    res.theta = runs[best].x;
    const TypeLikelihoodMatrix tlm =
        type_likelihood(panel, res.theta, cfg.grid.support, cache);
    res.mu = fkrb_inner(tlm, cfg.inner_tol).mu.mu;
  } else {
    res.theta = runs[best].x;
    res.v = vs[best];
    res.mu = mus[best];
  }
  return res;
}

EstimateResult fast_estimate(const Panel& panel, const EstimatorConfig& cfg,
                             bool with_star) {
  panel.validate();
  const int d_w = panel.dim_w();
  const int dt = d_w + 2;
  const int R = cfg.em_types;
  DpCache cache(cfg.dp, cfg.beta);

  EstimateResult out;
  out.target = cfg.target;
  out.seed = cfg.seed;

  // Constraint pipeline: estimated CCPs, kernel matrix, low-rank truncation,
  // nullspace reparameterization.
  auto t0 = std::chrono::steady_clock::now();
  const CcpEstimate ccp = knn_ccp(panel);
  out.wall_seconds["ccp"] = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const double h = rot_bandwidth(panel.n(), panel.T());
  const SigmaMatrix tilde = sigma_tilde(panel, ccp, h);
  const SigmaMatrix hat =
      low_rank(tilde, LowRankMode::fixed_rank(tilde.dim() - cfg.rank_deficiency));
  const ReparamMap map = reparam(hat, GammaLayout::w_block(d_w));
  out.wall_seconds["sigma"] = seconds_since(t0);
  out.sigma_rank = hat.rank;
  out.reduced_dim = map.free_dim() + 2;

  t0 = std::chrono::steady_clock::now();
  const PseudoMleResult center = pseudo_mle(panel, cfg, cache);
  out.wall_seconds["pseudo_mle"] = seconds_since(t0);

  // Step 1: constrained multi-start.
  t0 = std::chrono::steady_clock::now();
  std::vector<Eigen::VectorXd> starts1 = make_starts(
      center.theta, map.free_dim() + 2, cfg, &map, derive_seed(cfg.seed, 202));
  if (cfg.target == Target::em) {
    for (auto& x : starts1) {
      Eigen::VectorXd full(x.size() + R + (R - 1));
      full.head(x.size()) = x;
      full.segment(x.size(), R) =
          Eigen::VectorXd::LinSpaced(R, center.v - 0.5, center.v + 0.5);
      full.tail(R - 1).setZero();  // uniform mixture weights
      x = full;
    }
  }
  const Step1Result step1 = step1_constrained(panel, cfg, map, starts1, cache,
                                              &out.step1_stats);
  out.wall_seconds["step1"] = seconds_since(t0);
  out.theta_tilde = step1.theta;
  out.loglik_tilde = step1.criterion;

  // Step 2: Newton-Raphson polishing on the unconstrained target objective.
  t0 = std::chrono::steady_clock::now();
  NumDiffOptions diff;
  if (cfg.target == Target::h) {
    auto warm = std::make_shared<Eigen::VectorXd>();
    Objective obj = [&, warm](const Eigen::VectorXd& x) {
      return fkrb_profiled_loglik(panel, x, cfg.grid, cache, cfg.inner_tol_diff,
                                  warm.get());
    };
    const NewtonResult newton =
        step2_newton(obj, step1.theta, cfg.newton_steps, cfg.seed, diff);
    out.theta_hat = newton.x;
    out.newton_step_norms = newton.step_norms;
    out.newton_retries = newton.retries;
    out.newton_damped = newton.damped;
    const TypeLikelihoodMatrix tlm =
        type_likelihood(panel, out.theta_hat, cfg.grid.support, cache);
    const FkrbInnerResult inner = fkrb_inner(tlm, cfg.inner_tol);
    out.mu_hat = inner.mu.mu;
    out.loglik_hat = inner.loglik;
  } else {
    Objective obj = [&](const Eigen::VectorXd& x) {
      return em_full_objective(panel, x, dt, R, cache);
    };
    Eigen::VectorXd x0(dt + R + (R - 1));
    x0 << step1.theta, step1.v, logits_from_mu(step1.mu);
    const NewtonResult newton =
        step2_newton(obj, x0, cfg.newton_steps, cfg.seed, diff);
    out.theta_hat = newton.x.head(dt);
    out.v_hat = newton.x.segment(dt, R);
    out.mu_hat = softmax_mu(newton.x.tail(R - 1));
    out.newton_step_norms = newton.step_norms;
    out.newton_retries = newton.retries;
    out.newton_damped = newton.damped;
    out.loglik_hat = obj(newton.x);
  }
  out.wall_seconds["step2"] = seconds_since(t0);

  // The computationally heavy unconstrained target, for comparison.
  if (with_star) {
    t0 = std::chrono::steady_clock::now();
    std::vector<Eigen::VectorXd> starts_star =
        make_starts(center.theta, dt, cfg, nullptr, derive_seed(cfg.seed, 303));
    if (cfg.target == Target::em) {
      for (auto& x : starts_star) {
        Eigen::VectorXd full(dt + 2 * R);
        full.head(dt) = x;
        full.segment(dt, R) =
            Eigen::VectorXd::LinSpaced(R, center.v - 0.5, center.v + 0.5);
        full.tail(R) = Eigen::VectorXd::Constant(R, 1.0 / R);
        x = full;
      }
    }
    const TargetResult star = target_unconstrained(panel, cfg, starts_star, cache,
                                                   &out.star_stats);
    out.theta_star = star.theta;
    out.v_star = star.v;
    out.mu_star = star.mu;
    out.loglik_star = star.criterion;
    out.wall_seconds["target_star"] = seconds_since(t0);
  }
  return out;
}

std::string EstimateResult::to_json() const {
  json j;
  j["target"] = target_name(target);
  j["seed"] = seed;
  j["theta_tilde"] = to_std(theta_tilde);
  j["theta_hat"] = to_std(theta_hat);
  if (theta_star) j["theta_star"] = to_std(*theta_star);
  j["v_hat"] = to_std(v_hat);
  j["mu_hat"] = to_std(mu_hat);
  j["v_star"] = to_std(v_star);
  j["mu_star"] = to_std(mu_star);
  j["loglik_tilde"] = loglik_tilde;
  j["loglik_hat"] = loglik_hat;
  if (loglik_star) j["loglik_star"] = *loglik_star;
  j["sigma_rank"] = sigma_rank;
  j["reduced_dim"] = reduced_dim;
  j["wall_seconds"] = wall_seconds;
  j["step1_init_seconds"] = step1_stats.seconds;
  j["step1_init_evals"] = step1_stats.evals;
  j["step1_init_criteria"] = step1_stats.criteria;
  j["step1_best"] = step1_stats.best;
  j["star_init_seconds"] = star_stats.seconds;
  j["star_init_evals"] = star_stats.evals;
  j["star_init_criteria"] = star_stats.criteria;
  j["star_best"] = star_stats.best;
  j["newton_step_norms"] = newton_step_norms;
  j["newton_retries"] = newton_retries;
  j["newton_damped"] = newton_damped;
  return j.dump(2);
}

EstimateResult EstimateResult::from_json(const std::string& text) {
  const json j = json::parse(text);
  EstimateResult r;
  r.target = target_from_name(j.at("target").get<std::string>());
  r.seed = j.at("seed").get<uint64_t>();
  r.theta_tilde = from_std(j.at("theta_tilde").get<std::vector<double>>());
  r.theta_hat = from_std(j.at("theta_hat").get<std::vector<double>>());
  if (j.contains("theta_star"))
    r.theta_star = from_std(j["theta_star"].get<std::vector<double>>());
  r.v_hat = from_std(j.at("v_hat").get<std::vector<double>>());
  r.mu_hat = from_std(j.at("mu_hat").get<std::vector<double>>());
  r.v_star = from_std(j.at("v_star").get<std::vector<double>>());
  r.mu_star = from_std(j.at("mu_star").get<std::vector<double>>());
  r.loglik_tilde = j.at("loglik_tilde").get<double>();
  r.loglik_hat = j.at("loglik_hat").get<double>();
  if (j.contains("loglik_star")) r.loglik_star = j["loglik_star"].get<double>();
  r.sigma_rank = j.at("sigma_rank").get<int>();
  r.reduced_dim = j.at("reduced_dim").get<int>();
  r.wall_seconds = j.at("wall_seconds").get<std::map<std::string, double>>();
  r.step1_stats.seconds = j.at("step1_init_seconds").get<std::vector<double>>();
  r.step1_stats.evals = j.at("step1_init_evals").get<std::vector<int>>();
  r.step1_stats.criteria = j.at("step1_init_criteria").get<std::vector<double>>();
  r.step1_stats.best = j.at("step1_best").get<int>();
  r.star_stats.seconds = j.at("star_init_seconds").get<std::vector<double>>();
  r.star_stats.evals = j.at("star_init_evals").get<std::vector<int>>();
  r.star_stats.criteria = j.at("star_init_criteria").get<std::vector<double>>();
  r.star_stats.best = j.at("star_best").get<int>();
  r.newton_step_norms = j.at("newton_step_norms").get<std::vector<double>>();
  r.newton_retries = j.at("newton_retries").get<int>();
  r.newton_damped = j.at("newton_damped").get<int>();
  return r;
}

}  // namespace ddc
