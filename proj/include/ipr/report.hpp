#pragma once

#include <string>
#include <vector>

#include "ipr/config.hpp"

namespace ipr {

// Short name of the experiment arm a config describes: "full", "no-odpo",
// "no-sdpo", "no-sft" (joined with "+" when several terms are off), prefixed
// with the scorer mode when it is not "mc".
std::string arm_label(const RunConfig& config);

// Per-run tables under out_dir: iterations.csv (one row per iteration plus
// the SFT row and a best-of row) and step_reward.csv (per-checkpoint average
// reward per step). Iterations not yet completed appear as NA rows.
void write_run_tables(const std::string& run_dir, const std::string& out_dir);

// Cross-run grid: one row per run in the given order, per-iteration test
// rewards plus the best-of column; absent metrics render as NA.
void write_ablation_table(const std::vector<std::string>& run_dirs,
                          const std::string& out_path);

// Everything above for the first run dir, plus ablation.csv and a copy of the
// scoring-accuracy sweep when the analysis file exists. Rerunning over the
// same inputs is byte-identical.
void write_report_tables(const std::vector<std::string>& run_dirs,
                         const std::string& out_dir);

}  // namespace ipr
