#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ipr/common.hpp"
#include "json.hpp"

namespace ipr {

using Json = nlohmann::ordered_json;

// One task: environment id, unique task key, canonical text shown to the
// policy, and the environment-specific goal record (layout, targets, etc.).
struct Instruction {
  std::string env_id;
  std::string task_id;
  std::string text;
  Json goal;
};

// Discrete action: index into the environment's global action catalog plus
// the canonical rendering materialized for the state it was taken in.
struct Action {
  int index = -1;
  std::string text;
};

struct Observation {
  std::string text;
};

struct Step {
  Action action;
  Observation obs;
};

enum class Termination { Completed, MaxTurns };

struct Trajectory {
  Instruction instruction;
  std::vector<Step> steps;
  double outcome_reward = 0.0;
  Termination terminated = Termination::Completed;
};

// First t-1 steps of some trajectory; the conditioning context everywhere.
struct HistoryPrefix {
  Instruction instruction;
  std::vector<Step> steps;
};

// Steps from t onward plus the outcome reward of the completed trajectory.
struct TrajectorySuffix {
  std::vector<Step> steps;
  double outcome_reward = 0.0;
  Termination terminated = Termination::Completed;
};

HistoryPrefix prefix_of(const Trajectory& traj, size_t n_steps);
TrajectorySuffix suffix_of(const Trajectory& traj, size_t from_step);
Trajectory glue(const HistoryPrefix& prefix, const TrajectorySuffix& suffix);

// Environment-specific state payload. Immutable once built; EnvState copies
// share it, so states stay value-like and cheap to fork.
struct StatePayload {
  virtual ~StatePayload() = default;
};

struct EnvState {
  Instruction instruction;
  int step_counter = 0;
  bool terminal = false;
  Termination termination = Termination::Completed;
  std::shared_ptr<const StatePayload> payload;
};

struct EnvSpec {
  std::string env_id;
  int max_turns = 0;
};

struct StepResult {
  EnvState state;
  Observation obs;
  bool terminal = false;
};

// Deterministic POMDP: transitions and observations are pure functions of
// (state, action); the only stochasticity anywhere is policy sampling.
// Invalid actions consume a turn and observe the literal "Nothing happens".
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual int action_count() const = 0;

  // Canonical rendering of catalog action `index` in the given state.
  virtual std::string action_text(int index, const EnvState& state) const = 0;

  virtual EnvState reset(const Instruction& instruction) const = 0;
  virtual StepResult step(const EnvState& state, int action_index) const = 0;
  virtual std::vector<int> legal_actions(const EnvState& state) const = 0;

  // Outcome reward in [0,1]; state must be terminal.
  virtual double score_outcome(const EnvState& state) const = 0;

  // Tasks this environment instance can run - reset() refuses unknown ids.
  void register_task(const Instruction& instruction);
  bool has_task(const std::string& task_id) const;
  const Instruction& task(const std::string& task_id) const;
  std::vector<std::string> task_ids() const;

 protected:
  void require_known(const Instruction& instruction) const;
  std::map<std::string, Instruction> tasks_;
};

// Anything that can score the full action catalog given a history.
// The caller applies legality masking and temperature.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::vector<double> logits(const HistoryPrefix& prefix) const = 0;
};

class UniformPolicy : public Policy {
 public:
  explicit UniformPolicy(int n_actions) : n_(n_actions) {}
  std::vector<double> logits(const HistoryPrefix&) const override {
    return std::vector<double>(n_, 0.0);
  }

 private:
  int n_;
};

// Replays a fixed action sequence starting at a given prefix length.
class ScriptedPolicy : public Policy {
 public:
  ScriptedPolicy(int n_actions, size_t start_step, std::vector<int> actions)
      : n_(n_actions), start_(start_step), actions_(std::move(actions)) {}
  std::vector<double> logits(const HistoryPrefix& prefix) const override;

 private:
  int n_;
  size_t start_;
  std::vector<int> actions_;
};

// Select an action among `legal` at the given temperature. Temperature 0 is
// argmax with lowest-index tie-breaking; otherwise softmax(logit/T) sampling.
int select_action(const std::vector<double>& logits, const std::vector<int>& legal,
                  double temperature, std::mt19937_64& rng);

// Replay a stored prefix from reset, verifying every observation matches.
// Throws DataCorruptionError on any mismatch.
EnvState replay_prefix(const Environment& env, const HistoryPrefix& prefix);

// Replay the prefix, then sample from `policy` at `temperature` until
// terminal. Deterministic given (policy, prefix, temperature, rng state).
Trajectory rollout(const Environment& env, const Policy& policy,
                   const HistoryPrefix& prefix, double temperature,
                   std::mt19937_64& rng);

// Continue an episode from a known state (the replayed prefix endpoint).
// Same sampling loop as rollout without the replay cost.
Trajectory continue_rollout(const Environment& env, const Policy& policy,
                            const HistoryPrefix& prefix, const EnvState& state,
                            double temperature, std::mt19937_64& rng);

// --- Trajectory store (line-delimited, schema_version 1, stable ordering) ---

std::string termination_name(Termination t);
Termination termination_from(const std::string& s);

Json instruction_to_json(const Instruction& ins);
Instruction instruction_from_json(const Json& j);
Json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const Json& j);

std::string trajectory_line(const Trajectory& traj);
// Content hash of a trajectory's serialized record; pair files reference
// expert trajectories by this.
std::string trajectory_content_hash(const Trajectory& traj);

void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> load_trajectories(const std::string& path);

void save_instructions(const std::string& path, const std::vector<Instruction>& ins);
std::vector<Instruction> load_instructions(const std::string& path);

}  // namespace ipr
