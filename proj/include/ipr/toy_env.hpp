#pragma once

#include "ipr/env.hpp"

namespace ipr {

// Fixed-depth, fixed-branching decision tree. Every action is always legal;
// the episode ends at depth `depth` with a reward looked up by the action
// path. Rewards come from an explicit table in the goal or, absent that,
// from a per-task hash. Small enough to enumerate exhaustively, which is the
// whole point: it is the ground-truth fixture for the step-reward estimators.
class ToyEnv : public Environment {
 public:
  ToyEnv(int depth, int branching);

  const EnvSpec& spec() const override { return spec_; }
  int action_count() const override { return branching_; }
  std::string action_text(int index, const EnvState& state) const override;
  EnvState reset(const Instruction& instruction) const override;
  StepResult step(const EnvState& state, int action_index) const override;
  std::vector<int> legal_actions(const EnvState& state) const override;
  double score_outcome(const EnvState& state) const override;

  // Reward of the full action path (for test oracles).
  double leaf_reward(const Instruction& instruction, const std::string& path) const;

 private:
  EnvSpec spec_;
  int depth_;
  int branching_;
};

// Hash-derived reward table variant.
Instruction make_toy_instruction(const std::string& task_id, int depth,
                                 int branching, const std::string& salt);

// Explicit reward table: path string (action digits) -> reward in [0,1].
Instruction make_toy_instruction(const std::string& task_id, int depth,
                                 int branching,
                                 const std::map<std::string, double>& rewards);

}  // namespace ipr
