#include "ipr/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ipr {

HistoryPrefix prefix_of(const Trajectory& traj, size_t n_steps) {
  if (n_steps > traj.steps.size())
    throw ContractViolation("prefix_of: n_steps exceeds trajectory length");
  HistoryPrefix p;
  p.instruction = traj.instruction;
  p.steps.assign(traj.steps.begin(), traj.steps.begin() + n_steps);
  return p;
}

TrajectorySuffix suffix_of(const Trajectory& traj, size_t from_step) {
  if (from_step > traj.steps.size())
    throw ContractViolation("suffix_of: from_step exceeds trajectory length");
  TrajectorySuffix s;
  s.steps.assign(traj.steps.begin() + from_step, traj.steps.end());
  s.outcome_reward = traj.outcome_reward;
  s.terminated = traj.terminated;
  return s;
}

Trajectory glue(const HistoryPrefix& prefix, const TrajectorySuffix& suffix) {
  Trajectory t;
  t.instruction = prefix.instruction;
  t.steps = prefix.steps;
  t.steps.insert(t.steps.end(), suffix.steps.begin(), suffix.steps.end());
  t.outcome_reward = suffix.outcome_reward;
  t.terminated = suffix.terminated;
  return t;
}

void Environment::register_task(const Instruction& instruction) {
  tasks_[instruction.task_id] = instruction;
}

bool Environment::has_task(const std::string& task_id) const {
  return tasks_.count(task_id) > 0;
}

const Instruction& Environment::task(const std::string& task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end())
    throw ConfigError("unknown task_id: " + task_id);
  return it->second;
}

std::vector<std::string> Environment::task_ids() const {
  std::vector<std::string> ids;
  ids.reserve(tasks_.size());
  for (const auto& [id, _] : tasks_) ids.push_back(id);
  return ids;
}

void Environment::require_known(const Instruction& instruction) const {
  if (instruction.env_id != spec().env_id)
    throw ConfigError("instruction env_id '" + instruction.env_id +
                      "' does not match environment '" + spec().env_id + "'");
  if (!has_task(instruction.task_id))
    throw ConfigError("unknown task_id: " + instruction.task_id);
}

std::vector<double> ScriptedPolicy::logits(const HistoryPrefix& prefix) const {
  size_t pos = prefix.steps.size();
  if (pos < start_ || pos - start_ >= actions_.size())
    throw ContractViolation("ScriptedPolicy: no scripted action at step " +
                            std::to_string(pos));
  std::vector<double> z(n_, 0.0);
  z[actions_[pos - start_]] = 1e6;
  return z;
}

int select_action(const std::vector<double>& logits, const std::vector<int>& legal,
                  double temperature, std::mt19937_64& rng) {
  if (legal.empty()) throw ContractViolation("select_action: empty legal set");
  if (temperature <= 0.0) {
    int best = legal[0];
    double best_z = logits[legal[0]];
    for (int a : legal) {
      if (logits[a] > best_z) {
        best_z = logits[a];
        best = a;
      }
    }
    return best;
  }
  // softmax(logit / T) over the legal set, sampled by CDF walk
  double maxz = -1e300;
  for (int a : legal) maxz = std::max(maxz, logits[a] / temperature);
  double total = 0.0;
  std::vector<double> w(legal.size());
  for (size_t i = 0; i < legal.size(); ++i) {
    w[i] = std::exp(logits[legal[i]] / temperature - maxz);
    total += w[i];
  }
  double u = uniform01(rng) * total;
  double acc = 0.0;
  for (size_t i = 0; i < legal.size(); ++i) {
    acc += w[i];
    if (u < acc) return legal[i];
  }
  return legal.back();
}

EnvState replay_prefix(const Environment& env, const HistoryPrefix& prefix) {
  EnvState state = env.reset(prefix.instruction);
  for (size_t t = 0; t < prefix.steps.size(); ++t) {
    const Step& s = prefix.steps[t];
    if (state.terminal)
      throw DataCorruptionError("replay: stored step " + std::to_string(t + 1) +
                                " after terminal state in task " +
                                prefix.instruction.task_id);
    StepResult r = env.step(state, s.action.index);
    if (r.obs.text != s.obs.text)
      throw DataCorruptionError(
          "replay mismatch at step " + std::to_string(t + 1) + " of task " +
          prefix.instruction.task_id + ": stored '" + s.obs.text +
          "' vs replayed '" + r.obs.text + "'");
    state = r.state;
  }
  return state;
}

Trajectory continue_rollout(const Environment& env, const Policy& policy,
                            const HistoryPrefix& prefix, const EnvState& start,
                            double temperature, std::mt19937_64& rng) {
  Trajectory traj;
  traj.instruction = prefix.instruction;
  traj.steps = prefix.steps;

  HistoryPrefix ctx = prefix;
  EnvState state = start;
  while (!state.terminal) {
    std::vector<int> legal = env.legal_actions(state);
    std::vector<double> z = policy.logits(ctx);
    int a = select_action(z, legal, temperature, rng);
    Action act{a, env.action_text(a, state)};
    StepResult r = env.step(state, a);
    Step step{act, r.obs};
    traj.steps.push_back(step);
    ctx.steps.push_back(step);
    state = r.state;
  }
  traj.outcome_reward = env.score_outcome(state);
  traj.terminated = state.termination;
  return traj;
}

Trajectory rollout(const Environment& env, const Policy& policy,
                   const HistoryPrefix& prefix, double temperature,
                   std::mt19937_64& rng) {
  EnvState state = replay_prefix(env, prefix);
  return continue_rollout(env, policy, prefix, state, temperature, rng);
}

Json instruction_to_json(const Instruction& ins) {
  Json j;
  j["env_id"] = ins.env_id;
  j["task_id"] = ins.task_id;
  j["text"] = ins.text;
  j["goal"] = ins.goal;
  return j;
}

Instruction instruction_from_json(const Json& j) {
  Instruction ins;
  ins.env_id = j.at("env_id").get<std::string>();
  ins.task_id = j.at("task_id").get<std::string>();
  ins.text = j.at("text").get<std::string>();
  ins.goal = j.at("goal");
  return ins;
}

std::string termination_name(Termination t) {
  return t == Termination::Completed ? "completed" : "max_turns";
}

Termination termination_from(const std::string& s) {
  if (s == "completed") return Termination::Completed;
  if (s == "max_turns") return Termination::MaxTurns;
  throw DataCorruptionError("bad termination value: " + s);
}

Json trajectory_to_json(const Trajectory& traj) {
  Json j;
  j["schema_version"] = 1;
  j["instruction"] = instruction_to_json(traj.instruction);
  Json steps = Json::array();
  for (const Step& s : traj.steps) {
    Json js;
    js["a"] = s.action.index;
    js["a_text"] = s.action.text;
    js["o"] = s.obs.text;
    steps.push_back(js);
  }
  j["steps"] = steps;
  j["outcome_reward"] = traj.outcome_reward;
  j["terminated"] = termination_name(traj.terminated);
  return j;
}

Trajectory trajectory_from_json(const Json& j) {
  Trajectory t;
  t.instruction = instruction_from_json(j.at("instruction"));
  for (const Json& js : j.at("steps")) {
    Step s;
    s.action.index = js.at("a").get<int>();
    s.action.text = js.at("a_text").get<std::string>();
    s.obs.text = js.at("o").get<std::string>();
    t.steps.push_back(s);
  }
  t.outcome_reward = j.at("outcome_reward").get<double>();
  t.terminated = termination_from(j.at("terminated").get<std::string>());
  return t;
}

std::string trajectory_line(const Trajectory& traj) {
  return trajectory_to_json(traj).dump();
}

std::string trajectory_content_hash(const Trajectory& traj) {
  return sha256_hex(trajectory_line(traj));
}

void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::ostringstream out;
  for (const Trajectory& t : trajs) out << trajectory_line(t) << "\n";
  write_text_file(path, out.str());
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory file: " + path);
  std::vector<Trajectory> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataCorruptionError(path + ":" + std::to_string(lineno) +
                                ": invalid JSON record");
    out.push_back(trajectory_from_json(j));
  }
  return out;
}

void save_instructions(const std::string& path, const std::vector<Instruction>& ins) {
  std::ostringstream out;
  for (const Instruction& i : ins) {
    Json j;
    j["schema_version"] = 1;
    j.update(instruction_to_json(i));
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<Instruction> load_instructions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open instruction file: " + path);
  std::vector<Instruction> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataCorruptionError(path + ":" + std::to_string(lineno) +
                                ": invalid JSON record");
    out.push_back(instruction_from_json(j));
  }
  return out;
}

}  // namespace ipr
