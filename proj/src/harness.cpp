#include "ddc/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddc/dp.hpp"
#include "ddc/panel.hpp"
#include "ddc/parallel.hpp"
#include "ddc/rng.hpp"

namespace ddc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << text;
  }
  fs::rename(tmp, path);
}

}  // namespace

void McConfig::validate() const {
  if (replications < 1) throw std::invalid_argument("McConfig: replications must be >= 1");
  for (const int n : sample_sizes)
    if (n < 2) throw std::invalid_argument("McConfig: sample sizes must be >= 2");
  if (sample_sizes.empty()) throw std::invalid_argument("McConfig: no sample sizes");
  if (targets.empty()) throw std::invalid_argument("McConfig: no targets");
  if (T < 2) throw std::invalid_argument("McConfig: T must be >= 2");
  dgp.validate();
}

std::string McConfig::to_json() const {
  json j;
  j["sample_sizes"] = sample_sizes;
  j["replications"] = replications;
  j["T"] = T;
  j["dgp"] = json::parse(dgp.to_json());
  std::vector<std::string> names;
  for (const Target t : targets) names.push_back(target_name(t));
  j["targets"] = names;
  j["estimator"] = json::parse(est.to_json());
  j["master_seed"] = master_seed;
  j["output_dir"] = output_dir;
  j["jobs"] = jobs;
  j["with_star"] = with_star;
  return j.dump(2);
}

McConfig McConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  McConfig cfg;
  if (j.contains("sample_sizes")) cfg.sample_sizes = j["sample_sizes"].get<std::vector<int>>();
  if (j.contains("replications")) cfg.replications = j["replications"].get<int>();
  if (j.contains("T")) cfg.T = j["T"].get<int>();
  if (j.contains("dgp")) cfg.dgp = EntryModelParams::from_json(j["dgp"].dump());
  if (j.contains("targets")) {
    cfg.targets.clear();
    for (const auto& name : j["targets"]) cfg.targets.push_back(target_from_name(name));
  }
  cfg.est = EstimatorConfig::defaults(cfg.T);
  if (j.contains("estimator")) {
    cfg.est = EstimatorConfig::from_json(j["estimator"].dump());
    if (!j["estimator"].contains("dp_n_max")) cfg.est.dp.n_max = cfg.T + 32;
    if (!j["estimator"].contains("dp_engine")) cfg.est.dp.engine = DpEngine::state_newton;
  }
  if (j.contains("master_seed")) cfg.master_seed = j["master_seed"].get<uint64_t>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
  if (j.contains("with_star")) cfg.with_star = j["with_star"].get<bool>();
  cfg.validate();
  return cfg;
}

std::string RunRecord::to_json() const {
  json j;
  j["replication"] = replication;
  j["n"] = n;
  j["target"] = target_name(target);
  j["child_seed"] = child_seed;
  j["estimate"] = json::parse(result.to_json());
  return j.dump(2);
}

RunRecord RunRecord::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunRecord r;
  r.replication = j.at("replication").get<int>();
  r.n = j.at("n").get<int>();
  r.target = target_from_name(j.at("target").get<std::string>());
  r.child_seed = j.at("child_seed").get<uint64_t>();
  r.result = EstimateResult::from_json(j.at("estimate").dump());
  return r;
}

std::string RunRecord::filename() const {
  return "rec_n" + std::to_string(n) + "_r" + std::to_string(replication) + "_" +
         target_name(target) + ".json";
}

uint64_t child_seed_for(uint64_t master_seed, int n, int replication) {
  return derive_seed(master_seed,
                     static_cast<uint64_t>(n) * 1000003ULL + replication);
}

RunRecord run_single(const McConfig& cfg, int n, int replication, Target target) {
  RunRecord rec;
  rec.replication = replication;
  rec.n = n;
  rec.target = target;
  rec.child_seed = child_seed_for(cfg.master_seed, n, replication);

  const SolveOptions sim_opts = SolveOptions::for_panel_T(cfg.T);
  const Panel panel = simulate_panel(cfg.dgp, n, cfg.T, rec.child_seed, sim_opts);

  EstimatorConfig est = cfg.est;
  est.target = target;
  est.seed = rec.child_seed;
  est.beta = cfg.dgp.beta;
  est.dp.n_max = cfg.T + 32;
  rec.result = fast_estimate(panel, est, cfg.with_star);
  return rec;
}

std::vector<RunRecord> run_experiment(const McConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  struct Cell {
    int n, rep;
    Target target;
  };
  std::vector<Cell> cells;
  for (const int n : cfg.sample_sizes)
    for (int rep = 0; rep < cfg.replications; ++rep)
      for (const Target t : cfg.targets) cells.push_back({n, rep, t});

  std::vector<RunRecord> records(cells.size());
  std::vector<std::string> failures(cells.size());
  std::vector<char> have(cells.size(), 0);

  parallel_for(cells.size(), [&](std::size_t k) {
    const Cell& cell = cells[k];
    RunRecord probe;
    probe.n = cell.n;
    probe.replication = cell.rep;
    probe.target = cell.target;
    const fs::path path = fs::path(cfg.output_dir) / probe.filename();
    if (fs::exists(path)) {
      try {
        records[k] = RunRecord::from_json(read_file(path.string()));
        have[k] = 1;
        return;
      } catch (const std::exception&) {
        // fall through and recompute a corrupt record
      }
    }
    try {
      records[k] = run_single(cfg, cell.n, cell.rep, cell.target);
      write_file_atomic(path.string(), records[k].to_json());
      have[k] = 1;
    } catch (const std::exception& e) {
      failures[k] = e.what();
    }
  }, cfg.jobs);

  // Index of finished cells, plus a summary of any failures.
  std::ofstream index(fs::path(cfg.output_dir) / "records_index.csv");
  index << "n,replication,target,child_seed,file\n";
  std::vector<RunRecord> out;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (!have[k]) continue;
    const RunRecord& r = records[k];
    index << r.n << ',' << r.replication << ',' << target_name(r.target) << ','
          << r.child_seed << ',' << r.filename() << '\n';
    out.push_back(r);
  }
  for (std::size_t k = 0; k < cells.size(); ++k)
    if (!have[k])
      std::cerr << "replication failed (n=" << cells[k].n << ", rep=" << cells[k].rep
                << ", target=" << target_name(cells[k].target) << "): " << failures[k]
                << "\n";
  return out;
}

std::vector<RunRecord> load_records(const std::string& dir) {
  std::vector<RunRecord> out;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("rec_", 0) == 0 && entry.path().extension() == ".json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(RunRecord::from_json(read_file(f.string())));
  return out;
}

double tilde_seconds(const EstimateResult& r) {
  double s = 0.0;
  for (const char* stage : {"ccp", "sigma", "pseudo_mle", "step1"}) {
    const auto it = r.wall_seconds.find(stage);
    if (it != r.wall_seconds.end()) s += it->second;
  }
  return s;
}

double hat_seconds(const EstimateResult& r) {
  double s = tilde_seconds(r);
  const auto it = r.wall_seconds.find("step2");
  if (it != r.wall_seconds.end()) s += it->second;
  return s;
}

double star_seconds(const EstimateResult& r) {
  double s = 0.0;
  for (const char* stage : {"pseudo_mle", "target_star"}) {
    const auto it = r.wall_seconds.find(stage);
    if (it != r.wall_seconds.end()) s += it->second;
  }
  return s;
}

namespace {

using Cell = std::pair<int, Target>;

std::map<Cell, std::vector<const RunRecord*>> group_records(
    const std::vector<RunRecord>& records) {
  std::map<Cell, std::vector<const RunRecord*>> cells;
  for (const auto& r : records) cells[{r.n, r.target}].push_back(&r);
  return cells;
}

std::vector<std::string> component_names(int d_w) {
  std::vector<std::string> names;
  for (int k = 0; k < d_w; ++k) names.push_back("theta_w_" + std::to_string(k + 1));
  names.push_back("theta_fc");
  names.push_back("theta_ec");
  return names;
}

std::string rmse_table(const std::vector<RunRecord>& records, bool against_tilde) {
  std::ostringstream out;
  out << "n,target,component,value\n";
  for (const auto& [cell, recs] : group_records(records)) {
    std::vector<const RunRecord*> usable;
    for (const auto* r : recs)
      if (r->result.theta_star.has_value()) usable.push_back(r);
    if (usable.size() < 2) {
      std::cerr << "report: skipping rmse cell n=" << cell.first << " target="
                << target_name(cell.second) << " (needs >= 2 records with theta_star)\n";
      continue;
    }
    const int dim = static_cast<int>(usable.front()->result.theta_hat.size());
    const auto names = component_names(dim - 2);
    for (int k = 0; k < dim; ++k) {
      double mean_sq = 0.0;
      for (const auto* r : usable) {
        const Eigen::VectorXd& base =
            against_tilde ? r->result.theta_tilde : r->result.theta_hat;
        const double diff = base[k] - (*r->result.theta_star)[k];
        mean_sq += static_cast<double>(r->n) * diff * diff;
      }
      mean_sq /= usable.size();
      out << cell.first << ',' << target_name(cell.second) << ',' << names[k] << ','
          << fmt17(std::sqrt(mean_sq)) << '\n';
    }
  }
  return out.str();
}

}  // namespace

std::string report_runtime_total(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("report: no records");
  std::ostringstream out;
  out << "n,target,component,value\n";
  for (const auto& [cell, recs] : group_records(records)) {
    double tilde = 0.0, hat = 0.0, star = 0.0;
    int star_count = 0;
    for (const auto* r : recs) {
      tilde += tilde_seconds(r->result);
      hat += hat_seconds(r->result);
      if (r->result.theta_star.has_value()) {
        star += star_seconds(r->result);
        ++star_count;
      }
    }
    const double denom = static_cast<double>(recs.size());
    out << cell.first << ',' << target_name(cell.second) << ",theta_tilde,"
        << fmt17(tilde / denom / 60.0) << '\n';
    out << cell.first << ',' << target_name(cell.second) << ",theta_hat,"
        << fmt17(hat / denom / 60.0) << '\n';
    if (star_count > 0)
      out << cell.first << ',' << target_name(cell.second) << ",theta_star,"
          << fmt17(star / star_count / 60.0) << '\n';
  }
  return out.str();
}

std::string report_runtime_per_init(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("report: no records");
  std::ostringstream out;
  out << "n,target,component,value\n";
  for (const auto& [cell, recs] : group_records(records)) {
    double tilde = 0.0, star = 0.0;
    long tilde_count = 0, star_count = 0;
    for (const auto* r : recs) {
      for (const double s : r->result.step1_stats.seconds) {
        tilde += s;
        ++tilde_count;
      }
      for (const double s : r->result.star_stats.seconds) {
        star += s;
        ++star_count;
      }
    }
    if (tilde_count > 0)
      out << cell.first << ',' << target_name(cell.second) << ",theta_tilde_init,"
          << fmt17(tilde / tilde_count / 60.0) << '\n';
    if (star_count > 0)
      out << cell.first << ',' << target_name(cell.second) << ",theta_star_init,"
          << fmt17(star / star_count / 60.0) << '\n';
  }
  return out.str();
}

std::string report_rmse_hat(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("report: no records");
  return rmse_table(records, false);
}

std::string report_rmse_tilde(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("report: no records");
  return rmse_table(records, true);
}

void write_reports(const std::vector<RunRecord>& records, const std::string& dir) {
  fs::create_directories(dir);
  write_file_atomic((fs::path(dir) / "table1_runtime.csv").string(),
                    report_runtime_total(records));
  write_file_atomic((fs::path(dir) / "table2_runtime_per_init.csv").string(),
                    report_runtime_per_init(records));
  write_file_atomic((fs::path(dir) / "table3_rmse_hat.csv").string(),
                    report_rmse_hat(records));
  write_file_atomic((fs::path(dir) / "table4_rmse_tilde.csv").string(),
                    report_rmse_tilde(records));
}

namespace {

std::vector<Target> targets_from_flag(const std::string& flag) {
  if (flag == "both") return {Target::h, Target::em};
  return {target_from_name(flag)};
}

int cli_impl(int argc, const char* const* argv) {
  CLI::App app{"index-invertibility-accelerated estimation of dynamic entry models"};
  app.require_subcommand(1);

  std::string config_path, out_path, target_flag = "h";
  uint64_t seed = 0;
  bool seed_set = false, no_star = false;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub, bool with_target) {
    sub->add_option("--config", config_path, "configuration JSON path");
    sub->add_option("--out", out_path, "output path (file or directory)");
    sub->add_option("--seed", seed, "RNG seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--jobs", jobs, "parallel worker count");
    if (with_target)
      sub->add_option("--target", target_flag, "estimation target: em, h or both")
          ->check(CLI::IsMember({"em", "h", "both"}));
    sub->add_flag("--no-target-star", no_star, "skip the unconstrained target");
  };

  auto* sim = app.add_subcommand("simulate", "simulate a panel CSV from a DGP JSON");
  add_common(sim, false);

  auto* est = app.add_subcommand("estimate", "run the full pipeline on one panel");
  std::string panel_path;
  est->add_option("panel", panel_path, "panel CSV path")->required();
  add_common(est, true);

  auto* mc = app.add_subcommand("mc", "run the replication experiment");
  add_common(mc, true);

  auto* rep = app.add_subcommand("report", "emit the runtime and RMSE tables");
  std::string records_dir;
  rep->add_option("records", records_dir, "records directory")->required();
  add_common(rep, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  set_jobs(jobs);

  if (sim->parsed()) {
    if (config_path.empty() || out_path.empty()) {
      std::cerr << "simulate requires --config and --out\n";
      return 1;
    }
    const json j = json::parse(read_file(config_path));
    const EntryModelParams dgp = EntryModelParams::from_json(j.at("dgp").dump());
    const int n = j.at("n").get<int>();
    const int T = j.at("T").get<int>();
    const uint64_t s = seed_set ? seed : j.value("seed", 1ULL);
    const Panel panel = simulate_panel(dgp, n, T, s, SolveOptions::for_panel_T(T));
    panel.save_csv(out_path);
    std::cout << "wrote " << out_path << " (n=" << n << ", T=" << T << ")\n";
    return 0;
  }

  if (est->parsed()) {
    const Panel panel = Panel::load_csv(panel_path);
    EstimatorConfig cfg = EstimatorConfig::defaults(panel.T());
    if (!config_path.empty()) cfg = EstimatorConfig::from_json(read_file(config_path));
    cfg.dp.n_max = panel.T() + 32;
    if (seed_set) cfg.seed = seed;
    json out = json::object();
    for (const Target t : targets_from_flag(target_flag)) {
      cfg.target = t;
      const EstimateResult res = fast_estimate(panel, cfg, !no_star);
      out[target_name(t)] = json::parse(res.to_json());
    }
    const std::string text = out.dump(2);
    if (out_path.empty()) {
      std::cout << text << "\n";
    } else {
      write_file_atomic(out_path, text);
      std::cout << "wrote " << out_path << "\n";
    }
    return 0;
  }

  if (mc->parsed()) {
    if (config_path.empty()) {
      std::cerr << "mc requires --config\n";
      return 1;
    }
    McConfig cfg = McConfig::from_json(read_file(config_path));
    if (!out_path.empty()) cfg.output_dir = out_path;
    if (seed_set) cfg.master_seed = seed;
    if (mc->count("--target") > 0) cfg.targets = targets_from_flag(target_flag);
    if (no_star) cfg.with_star = false;
    cfg.jobs = jobs;
    const std::vector<RunRecord> records = run_experiment(cfg);
    std::cout << "finished " << records.size() << " records in " << cfg.output_dir
              << "\n";
    return 0;
  }

  if (rep->parsed()) {
    const std::vector<RunRecord> records = load_records(records_dir);
    const std::string dir = out_path.empty() ? records_dir : out_path;
    write_reports(records, dir);
    std::cout << "wrote tables to " << dir << "\n";
    return 0;
  }

  return 1;
}

}  // namespace

int cli(int argc, const char* const* argv) {
  try {
    return cli_impl(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ddc
