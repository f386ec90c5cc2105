#pragma once

#include "ipr/scorer.hpp"

namespace ipr {

// Step-level preference: at prefix e_{t-1} the expert continuation beats the
// agent's divergent one by more than the admission threshold.
struct ContrastiveStepPair {
  HistoryPrefix prefix;
  TrajectorySuffix win_suffix;   // expert steps t..n
  TrajectorySuffix lose_suffix;  // agent exploration from t
  StepRewardEstimate win_step_reward;
  StepRewardEstimate lose_step_reward;
};

// Trajectory-level preference: expert rollout beats the agent's full greedy
// rollout on outcome reward.
struct ContrastiveTrajPair {
  Instruction instruction;
  Trajectory win_traj;
  Trajectory lose_traj;
};

// Greedy agent continuation from the first t-1 expert steps; the suffix
// starts with the agent's own choice at step t. Deterministic.
TrajectorySuffix explore_from_expert(const Environment& env,
                                     const PolicyParams& agent_params,
                                     const Trajectory& expert, size_t t);

struct PairBuildStats {
  int n_tasks = 0;
  int n_steps = 0;            // expert steps scanned
  int n_divergences = 0;      // steps where the agent chose differently
  int n_step_pairs = 0;       // divergences passing both admission tests
  int n_traj_pairs = 0;
};

struct PairBuildResult {
  std::vector<ContrastiveStepPair> step_pairs;
  std::vector<ContrastiveTrajPair> traj_pairs;
  PairBuildStats stats;
};

// Scan every step of every expert trajectory. Where the greedy agent
// diverges, score both actions and admit a step pair iff the expert's step
// reward exceeds the agent's by more than tau AND the agent's continuation
// ends with a strictly worse outcome than the expert. Tasks whose full
// greedy rollout underperforms the expert outcome also yield a trajectory
// pair. Pure function of its inputs (the scorer owns all randomness).
PairBuildResult build_pairs(const Environment& env,
                            const PolicyParams& agent_params,
                            StepScorer& scorer,
                            const std::vector<Trajectory>& experts,
                            double tau);

// --- persistence (line-delimited JSON) ---
// Records reference the expert trajectory by content hash; suffixes and the
// agent's lose trajectory are inlined. Loading therefore needs the expert
// set to resolve hashes and rebuild prefixes.
void save_pairs(const std::string& path, const PairBuildResult& pairs,
                const std::vector<Trajectory>& experts);
PairBuildResult load_pairs(const std::string& path,
                           const std::vector<Trajectory>& experts);

}  // namespace ipr
