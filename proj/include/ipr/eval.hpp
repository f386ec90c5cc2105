#pragma once

#include <functional>
#include <optional>

#include "ipr/pair_builder.hpp"

namespace ipr {

struct EvalRecord {
  std::string task_id;
  double reward = 0.0;
  int steps = 0;
  Termination terminated = Termination::Completed;
};

struct EvalResult {
  double mean_reward = 0.0;
  std::vector<EvalRecord> records;  // task order as given
};

// Greedy rollout from the empty prefix on every task.
EvalResult evaluate(const Environment& env, const PolicyParams& params,
                    const std::vector<Instruction>& tasks);

// CSV with columns task_id,reward,steps,terminated plus a trailing mean row.
std::string eval_csv(const EvalResult& result);

// Mean over tasks of the within-trajectory mean step reward of the agent's
// greedy rollout, scored by the frozen scorer.
double avg_reward_per_step(const Environment& env,
                           const PolicyParams& agent_params,
                           const PolicyParams& scorer_params,
                           const std::vector<Instruction>& tasks,
                           int n_samples, uint64_t root_seed);

// Ground-truth value of a prefix for scoring-accuracy analysis (e.g. the
// heuristic page score of the reached state, or an exact-oracle value).
using GroundTruthFn = std::function<double(const HistoryPrefix&)>;

// Fraction of scorer-ordered divergence pairs whose order agrees with the
// ground truth. At every step where the greedy agent departs from the
// expert, both actions are scored; the scorer imposes an order when the
// margin exceeds tau (either direction), and the pair counts when the
// ground truth also has a strict order. nullopt when nothing qualifies.
std::optional<double> step_reward_accuracy(
    const Environment& env, const PolicyParams& agent_params,
    StepScorer& scorer, const std::vector<Trajectory>& experts, double tau,
    const GroundTruthFn& truth);

struct AccuracyPoint {
  int n_samples = 0;
  std::optional<double> accuracy;  // empty = undefined (no pairs)
};

// The n-sweep mirroring the sampling-count analysis; one MC scorer per N,
// streams keyed off root_seed.
std::vector<AccuracyPoint> step_reward_accuracy_sweep(
    const Environment& env, const PolicyParams& agent_params,
    const PolicyParams& scorer_params, const std::vector<Trajectory>& experts,
    double tau, const GroundTruthFn& truth, uint64_t root_seed,
    const std::vector<int>& n_values = {1, 3, 5, 10});

// CSV with columns n_samples,accuracy; undefined points render as "NA".
std::string accuracy_sweep_csv(const std::vector<AccuracyPoint>& sweep);

// Uniform labels keyed by (root seed, prefix hash); the null model for
// accuracy baselines.
class RandomStepScorer : public StepScorer {
 public:
  explicit RandomStepScorer(uint64_t root_seed) : root_(root_seed) {}
  StepRewardEstimate score(const HistoryPrefix& prefix) override;

 private:
  uint64_t root_;
};

}  // namespace ipr
