#include "ipr/eval.hpp"

#include <cmath>
#include <limits>

namespace ipr {

EvalResult evaluate(const Environment& env, const PolicyParams& params,
                    const std::vector<Instruction>& tasks) {
  LinearPolicy policy(params);
  std::mt19937_64 rng(0);  // greedy selection never draws
  EvalResult out;
  for (const auto& ins : tasks) {
    Trajectory traj = rollout(env, policy, HistoryPrefix{ins, {}}, 0.0, rng);
    EvalRecord rec;
    rec.task_id = ins.task_id;
    rec.reward = traj.outcome_reward;
    rec.steps = static_cast<int>(traj.steps.size());
    rec.terminated = traj.terminated;
    out.mean_reward += rec.reward;
    out.records.push_back(std::move(rec));
  }
  if (!out.records.empty()) out.mean_reward /= out.records.size();
  return out;
}

std::string eval_csv(const EvalResult& result) {
  std::string csv = "task_id,reward,steps,terminated\n";
  for (const auto& r : result.records)
    csv += r.task_id + "," + format_double(r.reward) + "," +
           std::to_string(r.steps) + "," + termination_name(r.terminated) +
           "\n";
  csv += "mean," + format_double(result.mean_reward) + ",,\n";
  return csv;
}

double avg_reward_per_step(const Environment& env,
                           const PolicyParams& agent_params,
                           const PolicyParams& scorer_params,
                           const std::vector<Instruction>& tasks,
                           int n_samples, uint64_t root_seed) {
  if (tasks.empty()) throw ContractViolation("avg_reward_per_step: no tasks");
  LinearPolicy agent(agent_params);
  std::mt19937_64 rng(0);
  ScorerCache cache;
  double task_sum = 0.0;
  for (const auto& ins : tasks) {
    Trajectory traj = rollout(env, agent, HistoryPrefix{ins, {}}, 0.0, rng);
    auto estimates = score_trajectory_steps(env, scorer_params, traj,
                                            n_samples, root_seed, 1.0, &cache);
    double step_sum = 0.0;
    for (const auto& e : estimates) step_sum += e.value;
    task_sum += step_sum / estimates.size();
  }
  return task_sum / tasks.size();
}

std::optional<double> step_reward_accuracy(
    const Environment& env, const PolicyParams& agent_params,
    StepScorer& scorer, const std::vector<Trajectory>& experts, double tau,
    const GroundTruthFn& truth) {
  if (tau < 0.0) throw ContractViolation("tau must be >= 0");
  int agree = 0, counted = 0;
  for (const auto& expert : experts) {
    for (size_t t = 1; t <= expert.steps.size(); ++t) {
      HistoryPrefix prefix = prefix_of(expert, t - 1);
      EnvState state = replay_prefix(env, prefix);
      std::vector<int> legal = env.legal_actions(state);
      std::map<int, double> lp = action_logprobs(agent_params, prefix, legal);
      int chosen = -1;
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& [a, v] : lp)
        if (v > best) {
          best = v;
          chosen = a;
        }
      const int expert_action = expert.steps[t - 1].action.index;
      if (chosen == expert_action) continue;

      HistoryPrefix expert_side = prefix_of(expert, t);
      StepResult r = env.step(state, chosen);
      HistoryPrefix agent_side = prefix;
      agent_side.steps.push_back(
          {Action{chosen, env.action_text(chosen, state)}, r.obs});

      double v_e = scorer.score(expert_side).value;
      double v_a = scorer.score(agent_side).value;
      if (std::fabs(v_e - v_a) <= tau) continue;  // no imposed order
      double t_e = truth(expert_side);
      double t_a = truth(agent_side);
      if (t_e == t_a) continue;  // no ground-truth order
      ++counted;
      if ((v_e > v_a) == (t_e > t_a)) ++agree;
    }
  }
  if (counted == 0) return std::nullopt;
  return static_cast<double>(agree) / counted;
}

std::vector<AccuracyPoint> step_reward_accuracy_sweep(
    const Environment& env, const PolicyParams& agent_params,
    const PolicyParams& scorer_params, const std::vector<Trajectory>& experts,
    double tau, const GroundTruthFn& truth, uint64_t root_seed,
    const std::vector<int>& n_values) {
  std::vector<AccuracyPoint> out;
  for (int n : n_values) {
    McStepScorer scorer(env, scorer_params, n,
                        SeedKey(root_seed).with("acc").with(uint64_t(n)).seed());
    AccuracyPoint p;
    p.n_samples = n;
    p.accuracy = step_reward_accuracy(env, agent_params, scorer, experts, tau,
                                      truth);
    out.push_back(p);
  }
  return out;
}

std::string accuracy_sweep_csv(const std::vector<AccuracyPoint>& sweep) {
  std::string csv = "n_samples,accuracy\n";
  for (const auto& p : sweep)
    csv += std::to_string(p.n_samples) + "," +
           (p.accuracy ? format_double(*p.accuracy) : std::string("NA")) + "\n";
  return csv;
}

StepRewardEstimate RandomStepScorer::score(const HistoryPrefix& prefix) {
  auto rng = SeedKey(root_).with(prefix_content_hash(prefix)).rng();
  StepRewardEstimate est;
  est.value = uniform01(rng);
  est.n_samples = 1;
  est.std_error = 0.0;
  est.method = RewardMethod::MC;
  return est;
}

}  // namespace ipr
