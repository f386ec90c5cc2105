#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ipr/config.hpp"
#include "ipr/env.hpp"

namespace ipr {

// Everything a run reads, materialized from dataset files: the environment
// with every task registered, the splits, and the train experts.
struct LoadedRun {
  std::unique_ptr<Environment> env;
  std::vector<Instruction> train;
  std::vector<Instruction> test;
  std::vector<Instruction> unseen;  // gridhouse only
  std::vector<Trajectory> experts;  // oracle solutions for the train split
};

// Writes catalog/train/test(/unseen) files for the configured environment,
// generated deterministically from the run seed.
void generate_datasets(const RunConfig& config, const std::string& data_dir);
LoadedRun load_run_inputs(const RunConfig& config, const std::string& data_dir);

// Metrics of one completed explore -> score -> pair -> optimize -> evaluate
// cycle. Paths are relative to the run directory.
struct IterationReport {
  int iteration = 0;  // 1-based
  int n_step_pairs = 0;
  int n_traj_pairs = 0;
  double train_avg_reward = 0.0;
  double test_avg_reward = 0.0;
  double avg_reward_per_step = 0.0;
  double final_loss = 0.0;  // mixture loss at the accepted parameters
  std::string loss_curve_path;
  std::string checkpoint_path;
  std::string checkpoint_hash;
  std::string scorer_hash;  // identical in every report of a run
  uint64_t params_version = 0;
  double best_test_avg_reward = 0.0;  // running best including the SFT baseline
  int best_iteration = 0;             // 0 means the SFT agent
};

Json iteration_report_to_json(const IterationReport& report);
IterationReport iteration_report_from_json(const Json& j);

struct SftBaseline {
  double train_avg_reward = 0.0;
  double test_avg_reward = 0.0;
  double avg_reward_per_step = 0.0;
  std::string checkpoint_path;
  std::string checkpoint_hash;
  uint64_t params_version = 0;
};

struct RunOutcome {
  std::string run_dir;
  SftBaseline sft;
  std::vector<IterationReport> reports;  // iterations 1..cap in order
};

// Called before each stage starts; tests throw from here to simulate a crash.
// Stages: "sft", "pairs", "optimize", "evaluate", "checkpoint", "report";
// iteration is 0 for the SFT stage.
using StageHook = std::function<void(const std::string& stage, int iteration)>;

// The outer IPR loop. Resumable: a second call with the same config picks up
// after the last completed iteration and produces byte-identical artifacts.
// Any failure leaves partial state plus a record in <out_dir>/failures.jsonl.
RunOutcome run_ipr(const RunConfig& config, const StageHook& hook = nullptr);

std::vector<IterationReport> read_iteration_reports(const std::string& run_dir);
SftBaseline read_sft_baseline(const std::string& run_dir);

}  // namespace ipr
