#include "ddc/panel.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ddc {

void Panel::validate() const {
  if (N.rows() != W.rows() || A.rows() != W.rows() || N.cols() != A.cols())
    throw std::invalid_argument("Panel: shape mismatch");
  for (int i = 0; i < n(); ++i) {
    if (N(i, 0) != 0) throw std::invalid_argument("Panel: N(i,1) must be 0");
    for (int t = 0; t < T(); ++t) {
      if (A(i, t) != 0 && A(i, t) != 1)
        throw std::invalid_argument("Panel: A must be binary");
      if (t + 1 < T() && N(i, t + 1) != N(i, t) + A(i, t))
        throw std::invalid_argument("Panel: N transition must be deterministic");
    }
  }
}

void Panel::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Panel: cannot open " + path + " for writing");
  out << "market_id,t";
  for (int j = 0; j < dim_w(); ++j) out << ",w_" << (j + 1);
  out << ",N,A\n";
  char buf[64];
  for (int i = 0; i < n(); ++i) {
    for (int t = 0; t < T(); ++t) {
      out << (i + 1) << ',' << (t + 1);
      for (int j = 0; j < dim_w(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", W(i, j));
        out << ',' << buf;
      }
      out << ',' << N(i, t) << ',' << A(i, t) << '\n';
    }
  }
}

Panel Panel::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Panel: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("Panel: empty file " + path);

  int d_w = 0;
  {
    std::stringstream header(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(header, col, ',')) cols.push_back(col);
    if (cols.size() < 4 || cols[0] != "market_id" || cols[1] != "t" ||
        cols[cols.size() - 2] != "N" || cols.back() != "A")
      throw std::runtime_error("Panel: unexpected header in " + path);
    d_w = static_cast<int>(cols.size()) - 4;
  }

  struct Row {
    int market, t, N, A;
    std::vector<double> w;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    Row r;
    std::getline(ss, tok, ',');
    r.market = std::stoi(tok);
    std::getline(ss, tok, ',');
    r.t = std::stoi(tok);
    r.w.resize(d_w);
    for (int j = 0; j < d_w; ++j) {
      std::getline(ss, tok, ',');
      r.w[j] = std::stod(tok);
    }
    std::getline(ss, tok, ',');
    r.N = std::stoi(tok);
    std::getline(ss, tok, ',');
    r.A = std::stoi(tok);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::runtime_error("Panel: no data rows in " + path);

  int n = 0, T = 0;
  for (const auto& r : rows) {
    n = std::max(n, r.market);
    T = std::max(T, r.t);
  }
  Panel panel;
  panel.W = Eigen::MatrixXd::Zero(n, d_w);
  panel.N = Eigen::MatrixXi::Zero(n, T);
  panel.A = Eigen::MatrixXi::Zero(n, T);
  for (const auto& r : rows) {
    const int i = r.market - 1, t = r.t - 1;
    for (int j = 0; j < d_w; ++j) panel.W(i, j) = r.w[j];
    panel.N(i, t) = r.N;
    panel.A(i, t) = r.A;
  }
  panel.validate();
  return panel;
}

}  // namespace ddc
