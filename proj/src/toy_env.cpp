#include "ipr/toy_env.hpp"

namespace ipr {

namespace {

struct ToyPayload : StatePayload {
  std::string path;  // concatenated action digits from the root
};

const ToyPayload& payload(const EnvState& s) {
  return static_cast<const ToyPayload&>(*s.payload);
}

}  // namespace

ToyEnv::ToyEnv(int depth, int branching) : depth_(depth), branching_(branching) {
  if (depth < 1 || depth > 8 || branching < 2 || branching > 9)
    throw ConfigError("toy env: depth must be 1..8 and branching 2..9");
  spec_ = EnvSpec{"toy", depth};
}

std::string ToyEnv::action_text(int index, const EnvState&) const {
  if (index < 0 || index >= branching_)
    throw ContractViolation("toy action index out of range");
  return "act[" + std::to_string(index) + "]";
}

EnvState ToyEnv::reset(const Instruction& instruction) const {
  require_known(instruction);
  if (instruction.goal.at("depth").get<int>() != depth_ ||
      instruction.goal.at("branching").get<int>() != branching_)
    throw ConfigError("toy task shape does not match environment: " +
                      instruction.task_id);
  EnvState s;
  s.instruction = instruction;
  s.step_counter = 0;
  s.terminal = false;
  s.payload = std::make_shared<ToyPayload>();
  return s;
}

StepResult ToyEnv::step(const EnvState& state, int action_index) const {
  if (state.terminal) throw ContractViolation("toy step on terminal state");
  auto next_payload = std::make_shared<ToyPayload>();
  next_payload->path = payload(state).path;

  EnvState next = state;
  next.step_counter = state.step_counter + 1;

  Observation obs;
  if (action_index < 0 || action_index >= branching_) {
    obs.text = "Nothing happens";
  } else {
    next_payload->path += static_cast<char>('0' + action_index);
    obs.text = "at:" + (next_payload->path.empty() ? std::string("root")
                                                   : next_payload->path);
  }
  next.payload = next_payload;
  if (static_cast<int>(next_payload->path.size()) >= depth_) {
    next.terminal = true;
    next.termination = Termination::Completed;
  } else if (next.step_counter >= depth_) {
    // possible only via invalid actions eating turns
    next.terminal = true;
    next.termination = Termination::MaxTurns;
  }
  return StepResult{next, obs, next.terminal};
}

std::vector<int> ToyEnv::legal_actions(const EnvState& state) const {
  if (state.terminal) return {};
  std::vector<int> legal(branching_);
  for (int i = 0; i < branching_; ++i) legal[i] = i;
  return legal;
}

double ToyEnv::score_outcome(const EnvState& state) const {
  if (!state.terminal)
    throw ContractViolation("score_outcome on non-terminal toy state");
  if (state.termination == Termination::MaxTurns &&
      static_cast<int>(payload(state).path.size()) < depth_)
    return 0.0;
  return leaf_reward(state.instruction, payload(state).path);
}

double ToyEnv::leaf_reward(const Instruction& instruction,
                           const std::string& path) const {
  const Json& goal = instruction.goal;
  if (goal.contains("rewards")) {
    const Json& table = goal.at("rewards");
    auto it = table.find(path);
    if (it == table.end())
      throw ConfigError("toy reward table missing path '" + path + "' in task " +
                        instruction.task_id);
    return it->get<double>();
  }
  std::string salt = goal.value("salt", std::string());
  uint64_t h = fnv1a(instruction.task_id + "|" + salt + "|" + path);
  return static_cast<double>(h % 10001u) / 10000.0;
}

static std::string toy_text(const std::string& task_id, int depth, int branching) {
  return "toy task:" + task_id + " depth:" + std::to_string(depth) +
         " branching:" + std::to_string(branching);
}

Instruction make_toy_instruction(const std::string& task_id, int depth,
                                 int branching, const std::string& salt) {
  Instruction ins;
  ins.env_id = "toy";
  ins.task_id = task_id;
  ins.text = toy_text(task_id, depth, branching);
  ins.goal["depth"] = depth;
  ins.goal["branching"] = branching;
  ins.goal["salt"] = salt;
  return ins;
}

Instruction make_toy_instruction(const std::string& task_id, int depth,
                                 int branching,
                                 const std::map<std::string, double>& rewards) {
  Instruction ins;
  ins.env_id = "toy";
  ins.task_id = task_id;
  ins.text = toy_text(task_id, depth, branching);
  ins.goal["depth"] = depth;
  ins.goal["branching"] = branching;
  Json table = Json::object();
  for (const auto& [path, r] : rewards) table[path] = r;
  ins.goal["rewards"] = table;
  return ins;
}

}  // namespace ipr
