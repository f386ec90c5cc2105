#include "ipr/report.hpp"

#include <filesystem>
#include <sstream>

#include "ipr/common.hpp"
#include "ipr/driver.hpp"

namespace fs = std::filesystem;

namespace ipr {
namespace {

std::string na_or(double value, bool present) {
  return present ? format_double(value) : "NA";
}

// Reports indexed 1..cap; missing slots stay null.
struct RunView {
  std::string dir;
  bool has_config = false;
  RunConfig config;
  bool has_baseline = false;
  SftBaseline baseline;
  std::vector<IterationReport> reports;
  const IterationReport* at(int k) const {
    for (const auto& r : reports)
      if (r.iteration == k) return &r;
    return nullptr;
  }
};

RunView view_run(const std::string& run_dir) {
  RunView v;
  v.dir = run_dir;
  std::string config_path = run_dir + "/config.json";
  if (fs::exists(config_path)) {
    v.config = parse_config(config_path);
    v.has_config = true;
  }
  if (fs::exists(run_dir + "/reports/sft.json")) {
    v.baseline = read_sft_baseline(run_dir);
    v.has_baseline = true;
  }
  if (fs::exists(run_dir + "/reports/iterations.jsonl"))
    v.reports = read_iteration_reports(run_dir);
  return v;
}

int cap_of(const RunView& v) {
  int cap = v.has_config ? v.config.iterations : 0;
  for (const auto& r : v.reports) cap = std::max(cap, r.iteration);
  return cap;
}

}  // namespace

std::string arm_label(const RunConfig& config) {
  std::string label;
  if (!config.ablation.use_odpo) label += (label.empty() ? "" : "+") + std::string("no-odpo");
  if (!config.ablation.use_sdpo) label += (label.empty() ? "" : "+") + std::string("no-sdpo");
  if (!config.ablation.use_sft) label += (label.empty() ? "" : "+") + std::string("no-sft");
  if (label.empty()) label = "full";
  if (config.scorer_mode != "mc") label = config.scorer_mode + ":" + label;
  return label;
}

void write_run_tables(const std::string& run_dir, const std::string& out_dir) {
  RunView v = view_run(run_dir);
  int cap = cap_of(v);
  fs::create_directories(out_dir);

  std::ostringstream iterations;
  iterations << "iteration,test_avg_reward,train_avg_reward,avg_reward_per_step,"
                "n_step_pairs,n_traj_pairs,checkpoint\n";
  iterations << "0," << na_or(v.baseline.test_avg_reward, v.has_baseline) << ","
             << na_or(v.baseline.train_avg_reward, v.has_baseline) << ","
             << na_or(v.baseline.avg_reward_per_step, v.has_baseline)
             << ",NA,NA,"
             << (v.has_baseline ? v.baseline.checkpoint_path : "NA") << "\n";
  for (int k = 1; k <= cap; ++k) {
    const IterationReport* r = v.at(k);
    if (!r) {
      iterations << k << ",NA,NA,NA,NA,NA,NA\n";
      continue;
    }
    iterations << k << "," << format_double(r->test_avg_reward) << ","
               << format_double(r->train_avg_reward) << ","
               << format_double(r->avg_reward_per_step) << "," << r->n_step_pairs
               << "," << r->n_traj_pairs << "," << r->checkpoint_path << "\n";
  }
  if (!v.reports.empty()) {
    const IterationReport& last = v.reports.back();
    const IterationReport* best = v.at(last.best_iteration);
    std::string best_ckpt = last.best_iteration == 0
                                ? (v.has_baseline ? v.baseline.checkpoint_path
                                                  : std::string("NA"))
                                : (best ? best->checkpoint_path : "NA");
    iterations << "best," << format_double(last.best_test_avg_reward)
               << ",NA,NA,NA,NA," << best_ckpt << "\n";
  } else {
    iterations << "best,NA,NA,NA,NA,NA,NA\n";
  }
  write_text_file(out_dir + "/iterations.csv", iterations.str());

  std::ostringstream bars;
  bars << "checkpoint,avg_reward_per_step\n";
  bars << "sft," << na_or(v.baseline.avg_reward_per_step, v.has_baseline) << "\n";
  for (int k = 1; k <= cap; ++k) {
    const IterationReport* r = v.at(k);
    bars << "iter-" << k << ","
         << (r ? format_double(r->avg_reward_per_step) : "NA") << "\n";
  }
  write_text_file(out_dir + "/step_reward.csv", bars.str());

  std::string sweep_path = run_dir + "/analysis/step_accuracy.csv";
  write_text_file(out_dir + "/accuracy_vs_n.csv",
                  fs::exists(sweep_path) ? read_text_file(sweep_path)
                                         : "n_samples,accuracy\nNA,NA\n");
}

void write_ablation_table(const std::vector<std::string>& run_dirs,
                          const std::string& out_path) {
  std::vector<RunView> views;
  int cap = 0;
  for (const auto& dir : run_dirs) {
    views.push_back(view_run(dir));
    cap = std::max(cap, cap_of(views.back()));
  }
  std::ostringstream out;
  out << "arm,run_dir";
  for (int k = 1; k <= cap; ++k) out << ",iter" << k;
  out << ",best,best_iteration\n";
  for (const auto& v : views) {
    out << (v.has_config ? arm_label(v.config) : "NA") << "," << v.dir;
    for (int k = 1; k <= cap; ++k) {
      const IterationReport* r = v.at(k);
      out << "," << (r ? format_double(r->test_avg_reward) : "NA");
    }
    if (!v.reports.empty())
      out << "," << format_double(v.reports.back().best_test_avg_reward) << ","
          << v.reports.back().best_iteration;
    else
      out << ",NA,NA";
    out << "\n";
  }
  write_text_file(out_path, out.str());
}

void write_report_tables(const std::vector<std::string>& run_dirs,
                         const std::string& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report: no run directories given");
  fs::create_directories(out_dir);
  write_run_tables(run_dirs.front(), out_dir);
  write_ablation_table(run_dirs, out_dir + "/ablation.csv");
}

}  // namespace ipr
