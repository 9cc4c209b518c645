#pragma once

#include <Eigen/Dense>
#include <string>

namespace ddc {

// Observed data: n markets over T periods. W is fixed per market; N counts
// incumbents before the entry decision A realizes, so N(i,0) = 0 and
// N(i,t+1) = N(i,t) + A(i,t).
struct Panel {
  Eigen::MatrixXd W;   // n x d_w
  Eigen::MatrixXi N;   // n x T
  Eigen::MatrixXi A;   // n x T

  int n() const { return static_cast<int>(W.rows()); }
  int T() const { return static_cast<int>(N.cols()); }
  int dim_w() const { return static_cast<int>(W.cols()); }

  void validate() const;

  // CSV with header market_id,t,w_1..w_dw,N,A; market_id and t are 1-based.
  void save_csv(const std::string& path) const;
  static Panel load_csv(const std::string& path);
};

}  // namespace ddc
