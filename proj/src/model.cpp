#include "ddc/model.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace ddc {

using nlohmann::json;

Eigen::VectorXd EntryModelParams::packed_theta() const {
  Eigen::VectorXd theta(dim_w() + 2);
  theta.head(dim_w()) = theta_w;
  theta[dim_w()] = theta_fc;
  theta[dim_w() + 1] = theta_ec;
  return theta;
}

void EntryModelParams::validate() const {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("EntryModelParams: beta must lie in [0, 1)");
  if (type_support.size() != type_probs.size() || type_support.size() < 1)
    throw std::invalid_argument("EntryModelParams: type support/probs size mismatch");
  double sum = 0.0;
  for (int r = 0; r < type_probs.size(); ++r) {
    if (type_probs[r] < 0.0)
      throw std::invalid_argument("EntryModelParams: negative type probability");
    sum += type_probs[r];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("EntryModelParams: type probabilities must sum to 1");
  for (int r = 1; r < type_support.size(); ++r)
    if (!(type_support[r - 1] < type_support[r]))
      throw std::invalid_argument("EntryModelParams: type support must be strictly increasing");
  if (!theta_w.allFinite() || !std::isfinite(theta_fc) || !std::isfinite(theta_ec))
    throw std::invalid_argument("EntryModelParams: non-finite parameter");
}

EntryModelParams EntryModelParams::mc_design() {
  EntryModelParams p;
  p.theta_w.resize(9);
  p.theta_w << -0.3, -0.2, -0.1, 0.1, 0.2, 0.3, 0.4, 0.5, -0.6;
  p.theta_fc = 0.5;
  p.theta_ec = 0.5;
  p.beta = 0.95;
  p.type_support.resize(2);
  p.type_support << 0.1, 1.0;
  p.type_probs.resize(2);
  p.type_probs << 0.37, 0.63;
  return p;
}

std::string EntryModelParams::to_json() const {
  json j;
  j["theta_w"] = std::vector<double>(theta_w.begin(), theta_w.end());
  j["theta_fc"] = theta_fc;
  j["theta_ec"] = theta_ec;
  j["beta"] = beta;
  j["type_support"] = std::vector<double>(type_support.begin(), type_support.end());
  j["type_probs"] = std::vector<double>(type_probs.begin(), type_probs.end());
  return j.dump(2);
}

EntryModelParams EntryModelParams::from_json(const std::string& text) {
  const json j = json::parse(text);
  EntryModelParams p;
  const auto tw = j.at("theta_w").get<std::vector<double>>();
  p.theta_w = Eigen::Map<const Eigen::VectorXd>(tw.data(), tw.size());
  p.theta_fc = j.at("theta_fc").get<double>();
  p.theta_ec = j.at("theta_ec").get<double>();
  p.beta = j.at("beta").get<double>();
  const auto ts = j.at("type_support").get<std::vector<double>>();
  p.type_support = Eigen::Map<const Eigen::VectorXd>(ts.data(), ts.size());
  const auto tp = j.at("type_probs").get<std::vector<double>>();
  p.type_probs = Eigen::Map<const Eigen::VectorXd>(tp.data(), tp.size());
  p.validate();
  return p;
}

void unpack_theta(const Eigen::VectorXd& theta, Eigen::VectorXd& theta_w,
                  double& theta_fc, double& theta_ec) {
  const int d_w = static_cast<int>(theta.size()) - 2;
  if (d_w < 0) throw std::invalid_argument("unpack_theta: theta too short");
  theta_w = theta.head(d_w);
  theta_fc = theta[d_w];
  theta_ec = theta[d_w + 1];
}

}  // namespace ddc
