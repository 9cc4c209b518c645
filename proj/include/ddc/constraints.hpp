#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ddc/dp.hpp"
#include "ddc/model.hpp"
#include "ddc/panel.hpp"

namespace ddc {

// Nearest-neighbor estimate of the mixture CCP as a function of (w, N).
struct CcpEstimate {
  Eigen::VectorXd fitted;  // one value per pooled observation, row-major (i, t)
  int k = 1;               // neighbor count chosen by leave-one-out CV
  std::function<double(const Eigen::VectorXd&, int)> predict;

  void save_fitted_csv(const std::string& path) const;
};

// Pooled k-nearest-neighbor regression of A on W within exact-N strata;
// k selected from k_grid by leave-one-out squared error. An empty k_grid
// selects the default geometric grid {1, 2, 4, ..., pooled/4}.
CcpEstimate knn_ccp(const Panel& panel, std::vector<int> k_grid = {});

// Rule-of-thumb pairwise-difference bandwidth 1.06 (n(n-1)T(T-1))^(-1/5).
double rot_bandwidth(int n, int T);

enum class SigmaKind { tilde, hat };

// Symmetric PSD constraint matrix over Z = (W, N), with its spectrum.
struct SigmaMatrix {
  Eigen::MatrixXd m;
  SigmaKind kind = SigmaKind::tilde;
  int rank = -1;                 // declared rank (kind == hat only)
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // columns aligned with eigenvalues

  int dim() const { return static_cast<int>(m.rows()); }
  std::string to_json() const;
  static SigmaMatrix from_json(const std::string& text);
};

// Recomputes and stores the spectral decomposition of a symmetric matrix.
SigmaMatrix make_sigma(const Eigen::MatrixXd& m, SigmaKind kind, int rank = -1);

// Kernel-weighted second moment of pooled cross-market observation
// differences, matched exactly on N and smoothed over standardized CCP
// differences with the biweight kernel at bandwidth h.
SigmaMatrix sigma_tilde(const Panel& panel, const CcpEstimate& ccp, double h);

struct LowRankMode {
  enum class Kind { threshold, fixed_rank } kind = Kind::fixed_rank;
  double kappa = 0.0;
  int r = 0;

  static LowRankMode threshold(double kappa);
  static LowRankMode fixed_rank(int r);
};

// Rank-consistent reconstruction: zero the trailing eigenvalues (below kappa,
// or all but the r largest) and rebuild from the kept eigenpairs.
SigmaMatrix low_rank(const SigmaMatrix& sigma, const LowRankMode& mode);

// Which gamma coordinates are driven by free parameters; the remaining
// coordinates of gamma are structural zeros. The experiment's layout maps
// theta_w onto the W block and zeroes the N coordinate.
struct GammaLayout {
  std::vector<int> free_coords;
  int dim = 0;

  static GammaLayout w_block(int d_w);  // free = {0..d_w-1}, dim = d_w + 1
  static GammaLayout full(int d);       // free = {0..d-1}
};

// Linear reparameterization imposing sigma_hat * gamma = 0 on the free block:
// gamma_free = basis * eta with orthonormal basis columns. qr_basis spans the
// same subspace through the column-pivoted QR construction.
struct ReparamMap {
  Eigen::MatrixXd basis;     // |free| x q, orthonormal
  Eigen::MatrixXd qr_basis;  // |free| x q, orthonormal
  GammaLayout layout;

  int free_dim() const { return static_cast<int>(basis.cols()); }
  Eigen::VectorXd embed(const Eigen::VectorXd& eta) const;       // length |free|
  Eigen::VectorXd embed_full(const Eigen::VectorXd& eta) const;  // length dim
  Eigen::VectorXd project(const Eigen::VectorXd& gamma_free) const;
};

ReparamMap reparam(const SigmaMatrix& sigma_hat, const GammaLayout& layout);

// Largest principal angle (radians) between the column spans of A and B.
double max_principal_angle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

struct OracleSigmaResult {
  SigmaMatrix sigma;
  long accepted = 0;
};

// Monte Carlo realization of the population constraint matrix: draw
// independent Z pairs from the model's pooled observable distribution over
// T periods, keep pairs with equal N and |Pi(Z1) - Pi(Z2)| <= eps_pi using
// exact model CCPs, and average the outer products of the differences.
OracleSigmaResult oracle_sigma(const EntryModelParams& params, long m_pairs,
                               double eps_pi, uint64_t seed, int T,
                               const SolveOptions& opts);

}  // namespace ddc
