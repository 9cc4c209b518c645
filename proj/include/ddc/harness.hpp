#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddc/estimator.hpp"
#include "ddc/model.hpp"

namespace ddc {

struct McConfig {
  std::vector<int> sample_sizes{100, 200};
  int replications = 10;
  int T = 8;
  EntryModelParams dgp = EntryModelParams::mc_design();
  std::vector<Target> targets{Target::h, Target::em};
  EstimatorConfig est = EstimatorConfig::defaults(8);
  uint64_t master_seed = 20240101;
  std::string output_dir = "mc_out";
  int jobs = 1;
  bool with_star = true;

  void validate() const;
  std::string to_json() const;
  static McConfig from_json(const std::string& text);
};

struct RunRecord {
  int replication = 0;
  int n = 0;
  Target target = Target::h;
  uint64_t child_seed = 0;
  EstimateResult result;

  std::string to_json() const;
  static RunRecord from_json(const std::string& text);
  std::string filename() const;
};

// Deterministic per-replication seed; any cell can be re-run in isolation.
uint64_t child_seed_for(uint64_t master_seed, int n, int replication);

// Simulates and estimates one (n, replication, target) cell.
RunRecord run_single(const McConfig& cfg, int n, int replication, Target target);

// Runs the whole design, persisting one JSON record per cell into
// output_dir (plus an index CSV). Existing records are kept, making an
// interrupted run resumable. Failures are recorded and reported, not fatal.
std::vector<RunRecord> run_experiment(const McConfig& cfg);

std::vector<RunRecord> load_records(const std::string& dir);

// Table 1 analogue: mean wall minutes of theta_tilde / theta_hat / theta_star
// by (n, target). Timing puts the constraint pipeline and the pseudo-MLE
// center inside theta_tilde; theta_star includes the center too.
std::string report_runtime_total(const std::vector<RunRecord>& records);

// Table 2 analogue: mean wall minutes per initialization.
std::string report_runtime_per_init(const std::vector<RunRecord>& records);

// Table 3 / 4 analogues: per-component sqrt of mean of n * (difference)^2,
// for theta_hat - theta_star and theta_tilde - theta_star.
std::string report_rmse_hat(const std::vector<RunRecord>& records);
std::string report_rmse_tilde(const std::vector<RunRecord>& records);

// Writes the four tables into dir.
void write_reports(const std::vector<RunRecord>& records, const std::string& dir);

// Stage-time accessors used by the tables.
double tilde_seconds(const EstimateResult& r);
double hat_seconds(const EstimateResult& r);
double star_seconds(const EstimateResult& r);

int cli(int argc, const char* const* argv);

}  // namespace ddc
