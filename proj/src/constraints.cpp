#include "ddc/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "ddc/rng.hpp"

namespace ddc {

using nlohmann::json;

namespace {

// Biweight kernel (15/16)(1 - u^2)^2 on |u| <= 1.
inline double biweight(double u) {
  if (u < -1.0 || u > 1.0) return 0.0;
  const double t = 1.0 - u * u;
  return (15.0 / 16.0) * t * t;
}

struct KnnData {
  // Per stratum (exact N value): member W rows and outcomes.
  struct Stratum {
    Eigen::MatrixXd W;
    Eigen::VectorXd A;
  };
  std::map<int, Stratum> strata;
  int k = 1;

  double predict(const Eigen::VectorXd& w, int n) const {
    const auto it = strata.find(n);
    if (it == strata.end())
      throw std::runtime_error("knn_ccp: no observations in stratum N = " +
                               std::to_string(n));
    const Stratum& s = it->second;
    const int m = static_cast<int>(s.A.size());
    const int k_eff = std::min(k, m);
    std::vector<std::pair<double, int>> d(m);
    for (int j = 0; j < m; ++j)
      d[j] = {(s.W.row(j).transpose() - w).squaredNorm(), j};
    std::nth_element(d.begin(), d.begin() + (k_eff - 1), d.end());
    std::sort(d.begin(), d.begin() + k_eff);
    double mean = 0.0;
    for (int j = 0; j < k_eff; ++j) mean += s.A[d[j].second];
    return mean / k_eff;
  }
};

}  // namespace

void CcpEstimate::save_fitted_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("CcpEstimate: cannot open " + path);
  out << "pooled_index,fitted\n";
  char buf[64];
  for (int p = 0; p < fitted.size(); ++p) {
    std::snprintf(buf, sizeof buf, "%.17g", fitted[p]);
    out << p << ',' << buf << '\n';
  }
}

CcpEstimate knn_ccp(const Panel& panel, std::vector<int> k_grid) {
  const int n = panel.n(), T = panel.T();
  const int pooled = n * T;

  if (k_grid.empty())
    for (int k = 1; k <= std::max(1, pooled / 4); k *= 2) k_grid.push_back(k);
  std::sort(k_grid.begin(), k_grid.end());
  k_grid.erase(std::unique(k_grid.begin(), k_grid.end()), k_grid.end());
  if (k_grid.front() < 1) throw std::invalid_argument("knn_ccp: k must be >= 1");
  if (pooled < k_grid.back() + 1)
    throw std::invalid_argument("knn_ccp: pooled sample smaller than max k + 1");

  auto data = std::make_shared<KnnData>();
  std::map<int, std::vector<std::pair<int, int>>> members;  // N -> (i, t)
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t) members[panel.N(i, t)].push_back({i, t});
  for (const auto& [nn, obs] : members) {
    KnnData::Stratum s;
    s.W.resize(obs.size(), panel.dim_w());
    s.A.resize(obs.size());
    for (std::size_t j = 0; j < obs.size(); ++j) {
      s.W.row(j) = panel.W.row(obs[j].first);
      s.A[j] = panel.A(obs[j].first, obs[j].second);
    }
    data->strata.emplace(nn, std::move(s));
  }

  // Leave-one-out squared error per candidate k, accumulated over the pooled
  // sample. Neighbors are ordered by (distance, index); prefix means give all
  // candidate k in one sorted pass per observation.
  const int K = static_cast<int>(k_grid.size());
  std::vector<double> sse(K, 0.0);
  for (const auto& [nn, s] : data->strata) {
    const int m = static_cast<int>(s.A.size());
    if (m < 2) continue;  // cannot leave one out
    std::vector<std::pair<double, int>> d(m);
    for (int j = 0; j < m; ++j) {
      for (int q = 0; q < m; ++q)
        d[q] = {(s.W.row(q) - s.W.row(j)).squaredNorm(), q};
      d[j].first = std::numeric_limits<double>::infinity();  // exclude self
      std::sort(d.begin(), d.end());
      double run = 0.0;
      int taken = 0, gi = 0;
      for (int q = 0; q < m - 1 && gi < K; ++q) {
        run += s.A[d[q].second];
        ++taken;
        while (gi < K && std::min(k_grid[gi], m - 1) == taken) {
          const double pred = run / taken;
          const double err = s.A[j] - pred;
          sse[gi] += err * err;
          ++gi;
        }
      }
    }
  }
  const int best =
      static_cast<int>(std::min_element(sse.begin(), sse.end()) - sse.begin());
  data->k = k_grid[best];

  CcpEstimate est;
  est.k = data->k;
  est.predict = [data](const Eigen::VectorXd& w, int nn) {
    return data->predict(w, nn);
  };
  est.fitted.resize(pooled);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t)
      est.fitted[i * T + t] = data->predict(panel.W.row(i), panel.N(i, t));
  return est;
}

double rot_bandwidth(int n, int T) {
  if (n < 2 || T < 2) throw std::invalid_argument("rot_bandwidth: need n, T >= 2");
  const double pairs = static_cast<double>(n) * (n - 1) * T * (T - 1);
  return 1.06 * std::pow(pairs, -0.2);
}

SigmaMatrix make_sigma(const Eigen::MatrixXd& m, SigmaKind kind, int rank) {
  if (m.rows() != m.cols()) throw std::invalid_argument("make_sigma: not square");
  if ((m - m.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * (1.0 + m.norm()))
    throw std::invalid_argument("make_sigma: not symmetric");
  SigmaMatrix s;
  s.m = 0.5 * (m + m.transpose());
  s.kind = kind;
  s.rank = rank;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.m);
  const int d = s.dim();
  s.eigenvalues.resize(d);
  s.eigenvectors.resize(d, d);
  for (int j = 0; j < d; ++j) {  // store descending
    s.eigenvalues[j] = eig.eigenvalues()[d - 1 - j];
    s.eigenvectors.col(j) = eig.eigenvectors().col(d - 1 - j);
  }
  return s;
}

std::string SigmaMatrix::to_json() const {
  json j;
  j["kind"] = (kind == SigmaKind::hat) ? "hat" : "tilde";
  if (kind == SigmaKind::hat) j["rank"] = rank;
  j["dim"] = dim();
  std::vector<double> flat(m.size());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) flat[r * m.cols() + c] = m(r, c);
  j["m"] = flat;
  j["eigenvalues"] = std::vector<double>(eigenvalues.begin(), eigenvalues.end());
  return j.dump(2);
}

SigmaMatrix SigmaMatrix::from_json(const std::string& text) {
  const json j = json::parse(text);
  const int d = j.at("dim").get<int>();
  const auto flat = j.at("m").get<std::vector<double>>();
  if (static_cast<int>(flat.size()) != d * d)
    throw std::runtime_error("SigmaMatrix: bad matrix payload");
  Eigen::MatrixXd m(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = flat[r * d + c];
  const bool hat = j.at("kind").get<std::string>() == "hat";
  return make_sigma(m, hat ? SigmaKind::hat : SigmaKind::tilde,
                    hat ? j.at("rank").get<int>() : -1);
}

SigmaMatrix sigma_tilde(const Panel& panel, const CcpEstimate& ccp, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("sigma_tilde: bandwidth must be > 0");
  const int n = panel.n(), T = panel.T(), d_w = panel.dim_w();
  const int pooled = n * T;
  if (ccp.fitted.size() != pooled)
    throw std::invalid_argument("sigma_tilde: fitted values misaligned with panel");
  const int d = d_w + 1;

  // Pooled views; pooled index p = i*T + t.
  std::vector<int> market(pooled), state(pooled);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t) {
      market[i * T + t] = i;
      state[i * T + t] = panel.N(i, t);
    }

  // Pass 1: scale of CCP differences over exactly the matched pair universe.
  // Differences are symmetric around zero, so the standard deviation is the
  // root mean square.
  double sum_d2 = 0.0;
  long matched = 0;
  for (int p = 0; p < pooled; ++p) {
    for (int q = p + 1; q < pooled; ++q) {
      if (market[p] == market[q] || state[p] != state[q]) continue;
      const double diff = ccp.fitted[p] - ccp.fitted[q];
      sum_d2 += diff * diff;
      ++matched;
    }
  }
  if (matched == 0)
    throw std::runtime_error("sigma_tilde: no cross-market pairs share an N value");
  const double s = std::sqrt(sum_d2 / matched);

  // Pass 2: kernel-weighted accumulation of difference outer products.
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(d, d);
  double wsum = 0.0;
  Eigen::VectorXd dz(d);
  for (int p = 0; p < pooled; ++p) {
    const int ip = market[p];
    for (int q = p + 1; q < pooled; ++q) {
      if (market[q] == ip || state[p] != state[q]) continue;
      const double diff = ccp.fitted[p] - ccp.fitted[q];
      const double scaled = (s > 0.0) ? (diff / s) / h : 0.0;
      const double wt = biweight(scaled);
      if (wt == 0.0) continue;
      dz.head(d_w) = panel.W.row(ip) - panel.W.row(market[q]);
      dz[d_w] = 0.0;  // N matched exactly
      for (int r = 0; r < d; ++r)
        for (int c = r; c < d; ++c) sums(r, c) += wt * (dz[r] * dz[c]);
      wsum += wt;
    }
  }
  if (wsum <= 0.0)
    throw std::runtime_error(
        "sigma_tilde: zero total kernel mass; increase the bandwidth h");
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < r; ++c) sums(r, c) = sums(c, r);
  return make_sigma(sums / wsum, SigmaKind::tilde);
}

LowRankMode LowRankMode::threshold(double kappa) {
  LowRankMode m;
  m.kind = Kind::threshold;
  m.kappa = kappa;
  return m;
}

LowRankMode LowRankMode::fixed_rank(int r) {
  LowRankMode m;
  m.kind = Kind::fixed_rank;
  m.r = r;
  return m;
}

SigmaMatrix low_rank(const SigmaMatrix& sigma, const LowRankMode& mode) {
  const int d = sigma.dim();
  int keep = 0;
  if (mode.kind == LowRankMode::Kind::fixed_rank) {
    if (mode.r > d) throw std::invalid_argument("low_rank: requested rank exceeds dim");
    if (mode.r < 0) throw std::invalid_argument("low_rank: negative rank");
    keep = mode.r;
  } else {
    while (keep < d && sigma.eigenvalues[keep] > mode.kappa) ++keep;
  }

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(d);
  int nonzero = 0;
  for (int k = 0; k < keep; ++k) {
    const double l = sigma.eigenvalues[k];
    if (l == 0.0) continue;
    m += l * sigma.eigenvectors.col(k) * sigma.eigenvectors.col(k).transpose();
    lam[k] = l;
    ++nonzero;
  }
  SigmaMatrix out;
  out.m = 0.5 * (m + m.transpose());
  out.kind = SigmaKind::hat;
  out.rank = nonzero;
  out.eigenvalues = lam;                  // zeroed tail is exact by construction
  out.eigenvectors = sigma.eigenvectors;  // same principal axes
  return out;
}

GammaLayout GammaLayout::w_block(int d_w) {
  GammaLayout g;
  g.dim = d_w + 1;
  g.free_coords.resize(d_w);
  std::iota(g.free_coords.begin(), g.free_coords.end(), 0);
  return g;
}

GammaLayout GammaLayout::full(int d) {
  GammaLayout g;
  g.dim = d;
  g.free_coords.resize(d);
  std::iota(g.free_coords.begin(), g.free_coords.end(), 0);
  return g;
}

Eigen::VectorXd ReparamMap::embed(const Eigen::VectorXd& eta) const {
  return basis * eta;
}

Eigen::VectorXd ReparamMap::embed_full(const Eigen::VectorXd& eta) const {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(layout.dim);
  const Eigen::VectorXd sub = basis * eta;
  for (std::size_t j = 0; j < layout.free_coords.size(); ++j)
    full[layout.free_coords[j]] = sub[j];
  return full;
}

Eigen::VectorXd ReparamMap::project(const Eigen::VectorXd& gamma_free) const {
  return basis.transpose() * gamma_free;
}

ReparamMap reparam(const SigmaMatrix& sigma_hat, const GammaLayout& layout) {
  if (layout.dim != sigma_hat.dim())
    throw std::invalid_argument("reparam: layout/sigma dimension mismatch");
  const int nb = static_cast<int>(layout.free_coords.size());
  Eigen::MatrixXd block(nb, nb);
  for (int r = 0; r < nb; ++r)
    for (int c = 0; c < nb; ++c)
      block(r, c) = sigma_hat.m(layout.free_coords[r], layout.free_coords[c]);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block);
  const double lam_max = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double tol = (lam_max > 0.0) ? 1e-8 * lam_max : 0.0;

  int q = 0;
  for (int j = 0; j < nb; ++j)
    if (std::abs(eig.eigenvalues()[j]) <= tol) ++q;
  if (q == 0)
    throw std::runtime_error("reparam: estimated nullspace is zero-dimensional");

  ReparamMap map;
  map.layout = layout;
  map.basis.resize(nb, q);
  {
    int col = 0;  // ascending eigenvalues: the near-zero ones come first
    for (int j = 0; j < nb && col < q; ++j)
      if (std::abs(eig.eigenvalues()[j]) <= tol) map.basis.col(col++) = eig.eigenvectors().col(j);
  }

  // Column-pivoted QR construction: with A P = Q R and rank r, the permuted
  // solution stacks gamma_fixed = -R11^{-1} R12 gamma_free over the identity.
  const int r = nb - q;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(block);
  Eigen::MatrixXd stacked(nb, q);
  if (r > 0) {
    const Eigen::MatrixXd R = qr.matrixR().template triangularView<Eigen::Upper>();
    const Eigen::MatrixXd R11 = R.topLeftCorner(r, r);
    const Eigen::MatrixXd R12 = R.topRightCorner(r, q);
    stacked.topRows(r) = -R11.triangularView<Eigen::Upper>().solve(R12);
    stacked.bottomRows(q).setIdentity();
  } else {
    stacked.setIdentity();
  }
  const Eigen::MatrixXd permuted = qr.colsPermutation() * stacked;
  Eigen::HouseholderQR<Eigen::MatrixXd> thin(permuted);
  map.qr_basis =
      thin.householderQ() * Eigen::MatrixXd::Identity(nb, q);
  return map;
}

double max_principal_angle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.cols() != B.cols() || A.rows() != B.rows())
    throw std::invalid_argument("max_principal_angle: shape mismatch");
  auto orth = [](const Eigen::MatrixXd& M) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    return Eigen::MatrixXd(qr.householderQ() *
                           Eigen::MatrixXd::Identity(M.rows(), M.cols()));
  };
  const Eigen::MatrixXd Qa = orth(A), Qb = orth(B);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Qa.transpose() * Qb);
  const double c = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  return std::acos(c);
}

OracleSigmaResult oracle_sigma(const EntryModelParams& params, long m_pairs,
                               double eps_pi, uint64_t seed, int T,
                               const SolveOptions& opts) {
  params.validate();
  if (!(eps_pi > 0.0)) throw std::invalid_argument("oracle_sigma: eps_pi must be > 0");
  if (T < 1) throw std::invalid_argument("oracle_sigma: T must be >= 1");
  const int d_w = params.dim_w();
  const int d = d_w + 1;
  const int R = params.num_types();

  DpCache cache(opts, params.beta);
  Rng rng(derive_seed(seed, 0x5157u));

  struct Draw {
    Eigen::VectorXd w;
    double index;  // theta_w'w
    int state;
  };
  auto draw_z = [&]() {
    Draw z;
    z.w.resize(d_w);
    for (int j = 0; j < d_w; ++j) z.w[j] = rng.uniform();
    const double pick = rng.uniform();
    double cum = 0.0;
    int type = R - 1;
    for (int r = 0; r < R; ++r) {
      cum += params.type_probs[r];
      if (pick < cum) {
        type = r;
        break;
      }
    }
    z.index = params.theta_w.dot(z.w);
    const auto sol = cache.solve(params.type_support[type] + z.index,
                                 params.theta_fc, params.theta_ec);
    // Simulate the incumbent path and pool over periods: the observable law
    // of N is its distribution at a uniformly drawn period.
    std::vector<int> states(T);
    int state = 0;
    for (int t = 0; t < T; ++t) {
      states[t] = state;
      if (rng.uniform() < sol->ccp[state]) ++state;
    }
    z.state = states[rng.uniform_int(static_cast<uint64_t>(T))];
    return z;
  };

  auto mixture_pi = [&](const Draw& z) {
    double p = 0.0;
    for (int r = 0; r < R; ++r)
      p += params.type_probs[r] *
           cache.solve(params.type_support[r] + z.index, params.theta_fc,
                       params.theta_ec)->ccp[z.state];
    return p;
  };

  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(d, d);
  long accepted = 0;
  Eigen::VectorXd dz(d);
  for (long j = 0; j < m_pairs; ++j) {
    const Draw z1 = draw_z();
    const Draw z2 = draw_z();
    if (z1.state != z2.state) continue;
    if (std::abs(mixture_pi(z1) - mixture_pi(z2)) > eps_pi) continue;
    dz.head(d_w) = z1.w - z2.w;
    dz[d_w] = 0.0;
    sums.selfadjointView<Eigen::Upper>().rankUpdate(dz, 1.0);
    ++accepted;
  }
  if (accepted < 100)
    throw std::runtime_error(
        "oracle_sigma: fewer than 100 accepted pairs; increase m_pairs");

  Eigen::MatrixXd m = sums.selfadjointView<Eigen::Upper>();
  OracleSigmaResult res;
  res.sigma = make_sigma(m / static_cast<double>(accepted), SigmaKind::tilde);
  res.accepted = accepted;
  return res;
}

}  // namespace ddc
