#pragma once

#include <unordered_map>

#include "ipr/policy.hpp"

namespace ipr {

enum class RewardMethod { MC, Exact, Terminal, RewardModel };

std::string reward_method_name(RewardMethod m);
RewardMethod reward_method_from(const std::string& s);

// Estimated expected outcome reward of continuing past a scored step.
// std_error is zero whenever the value is exact (Exact, Terminal).
struct StepRewardEstimate {
  double value = 0.0;  // in [0, 1]
  int n_samples = 1;
  double std_error = 0.0;
  RewardMethod method = RewardMethod::MC;
};

// Content hash of (instruction, steps); cache and dump key for a prefix.
std::string prefix_content_hash(const HistoryPrefix& prefix);

// Keyed by (prefix hash, n_samples, root seed); see mc_step_reward.
struct ScorerCache {
  std::unordered_map<std::string, StepRewardEstimate> entries;
};

// Monte-Carlo estimate of the step reward for the last step of `prefix`
// (the prefix includes the scored action and its observation). Terminal
// prefixes return the exact outcome reward. Rollout RNG streams are keyed
// (root_seed, task_id, step index, sample index), so estimates are
// independent of evaluation order.
StepRewardEstimate mc_step_reward(const Environment& env,
                                  const PolicyParams& scorer_params,
                                  const HistoryPrefix& prefix_through_t,
                                  int n_samples, uint64_t root_seed,
                                  double temperature = 1.0,
                                  ScorerCache* cache = nullptr);

// Exact expectation over all continuations weighted by policy probability.
// Counts one node per expanded edge; throws BudgetExceeded past the budget.
// Only tractable on toy-scale state spaces.
StepRewardEstimate exact_step_reward(const Environment& env,
                                     const PolicyParams& scorer_params,
                                     const HistoryPrefix& prefix_through_t,
                                     double temperature = 1.0,
                                     int64_t node_budget = 1000000);

// One estimate per step of `traj`, each computed independently.
std::vector<StepRewardEstimate> score_trajectory_steps(
    const Environment& env, const PolicyParams& scorer_params,
    const Trajectory& traj, int n_samples, uint64_t root_seed,
    double temperature = 1.0, ScorerCache* cache = nullptr);

// Pluggable step-reward source so pair building and accuracy analyses can
// swap the MC estimator for the exact oracle or a learned model.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual StepRewardEstimate score(const HistoryPrefix& prefix_through_t) = 0;
};

class McStepScorer : public StepScorer {
 public:
  McStepScorer(const Environment& env, PolicyParams scorer_params,
               int n_samples, uint64_t root_seed, double temperature = 1.0)
      : env_(env), params_(std::move(scorer_params)), n_(n_samples),
        root_(root_seed), temperature_(temperature) {}
  StepRewardEstimate score(const HistoryPrefix& prefix) override {
    return mc_step_reward(env_, params_, prefix, n_, root_, temperature_,
                          &cache_);
  }

 private:
  const Environment& env_;
  PolicyParams params_;
  int n_;
  uint64_t root_;
  double temperature_;
  ScorerCache cache_;
};

class ExactStepScorer : public StepScorer {
 public:
  ExactStepScorer(const Environment& env, PolicyParams scorer_params,
                  double temperature = 1.0, int64_t node_budget = 1000000)
      : env_(env), params_(std::move(scorer_params)),
        temperature_(temperature), budget_(node_budget) {}
  StepRewardEstimate score(const HistoryPrefix& prefix) override {
    return exact_step_reward(env_, params_, prefix, temperature_, budget_);
  }

 private:
  const Environment& env_;
  PolicyParams params_;
  double temperature_;
  int64_t budget_;
};

// --- scored-step dump (line-delimited JSON) ---
// One record per scored step; this file is the reward model's training set,
// so each record carries the prefix features alongside the estimate.
struct ScoredStepRecord {
  std::string task_id;
  std::string prefix_hash;
  int step_index = 0;  // 1-based position of the scored step
  std::string action_text;
  StepRewardEstimate estimate;
  std::vector<double> features;
};

Json scored_step_to_json(const ScoredStepRecord& rec);
ScoredStepRecord scored_step_from_json(const Json& j);

void save_scored_steps(const std::string& path,
                       const std::vector<ScoredStepRecord>& recs);
std::vector<ScoredStepRecord> load_scored_steps(const std::string& path);

// Score every step of every trajectory and assemble dump records.
std::vector<ScoredStepRecord> build_scored_step_dump(
    const Environment& env, const PolicyParams& scorer_params,
    const std::vector<Trajectory>& trajs, int n_samples, uint64_t root_seed,
    double temperature = 1.0);

}  // namespace ipr
