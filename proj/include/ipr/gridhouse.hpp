#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ipr/env.hpp"

namespace ipr {

enum class Temp { None, Hot, Cold };

std::string temp_name(Temp t);
Temp temp_from_name(const std::string& name);

struct HouseGoal {
  int object = -1;      // index into object vocab
  int dest = -1;        // index into receptacle vocab
  Temp temp = Temp::None;
  int src = -1;         // where the object starts
  int start = -1;       // agent's initial receptacle
  std::vector<std::pair<int, int>> distractors;  // (object, receptacle)
};

struct HousePayload : StatePayload {
  int agent_loc = 0;
  int inventory = -1;                // object index, -1 when empty
  std::array<bool, 8> open{};       // non-closable receptacles stay true
  std::map<int, int> object_loc;    // object -> receptacle; held objects absent
  std::map<int, Temp> object_temp;  // every episode object has an entry
};

class HouseEnv : public Environment {
 public:
  static constexpr int kReceptacles = 8;
  static constexpr int kObjects = 10;

  HouseEnv();

  const EnvSpec& spec() const override { return spec_; }
  int action_count() const override;
  std::string action_text(int index, const EnvState& state) const override;
  EnvState reset(const Instruction& instruction) const override;
  StepResult step(const EnvState& state, int action_index) const override;
  std::vector<int> legal_actions(const EnvState& state) const override;
  double score_outcome(const EnvState& state) const override;

  static const std::vector<std::string>& receptacle_names();
  static const std::vector<std::string>& object_names();
  static bool closable(int recep);
  static int receptacle_index(const std::string& name);
  static int object_index(const std::string& name);
  static int microwave_index();
  static int fridge_index();

  bool check_goal(const HousePayload& state, const HouseGoal& goal) const;

  int go_action(int recep) const;
  int open_action(int recep) const;
  int close_action(int recep) const;
  int take_action(int object, int recep) const;
  int put_action(int object, int recep) const;
  int heat_action(int object) const;
  int cool_action(int object) const;

 private:
  const HousePayload& payload(const EnvState& state) const;
  std::string render(const HousePayload& p, const HouseGoal& goal,
                     bool acted) const;

  EnvSpec spec_;
};

HouseGoal house_goal_from_instruction(const Instruction& instruction);

// Shortest plan by breadth-first search over the symbolic state space,
// ties broken by action-catalog order; replayed through the env.
Trajectory house_expert(const HouseEnv& env, const Instruction& instruction);
std::vector<int> house_plan(const HouseEnv& env, const Instruction& instruction);

Instruction make_house_instruction(const std::string& task_id,
                                   const HouseGoal& goal);

struct HouseDatasetConfig {
  int n_train = 300;
  int n_seen = 60;
  int n_unseen = 60;
  int n_unseen_combos = 48;  // (object, dest, template) triples held out
  int n_distractors = 4;
};

struct HouseDataset {
  std::vector<Instruction> train;
  std::vector<Instruction> test_seen;
  std::vector<Instruction> test_unseen;
};

HouseDataset generate_house_dataset(const HouseDatasetConfig& config,
                                    uint64_t seed);

}  // namespace ipr
