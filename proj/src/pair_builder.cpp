#include "ipr/pair_builder.hpp"

#include <map>

namespace ipr {

TrajectorySuffix explore_from_expert(const Environment& env,
                                     const PolicyParams& agent_params,
                                     const Trajectory& expert, size_t t) {
  if (t < 1 || t > expert.steps.size())
    throw ContractViolation("explore_from_expert: step index " +
                            std::to_string(t) + " outside 1.." +
                            std::to_string(expert.steps.size()));
  HistoryPrefix hp = prefix_of(expert, t - 1);
  EnvState state = replay_prefix(env, hp);
  LinearPolicy agent(agent_params);
  std::mt19937_64 rng(0);  // unused: greedy selection never draws
  Trajectory traj = continue_rollout(env, agent, hp, state, 0.0, rng);
  return suffix_of(traj, t - 1);
}

PairBuildResult build_pairs(const Environment& env,
                            const PolicyParams& agent_params,
                            StepScorer& scorer,
                            const std::vector<Trajectory>& experts,
                            double tau) {
  if (tau < 0.0) throw ContractViolation("tau must be >= 0");
  PairBuildResult out;
  for (const auto& expert : experts) {
    ++out.stats.n_tasks;

    TrajectorySuffix full = explore_from_expert(env, agent_params, expert, 1);
    Trajectory agent_traj = glue(prefix_of(expert, 0), full);
    if (agent_traj.outcome_reward < expert.outcome_reward) {
      out.traj_pairs.push_back({expert.instruction, expert, agent_traj});
      ++out.stats.n_traj_pairs;
    }

    for (size_t t = 1; t <= expert.steps.size(); ++t) {
      ++out.stats.n_steps;
      TrajectorySuffix agent_sfx =
          t == 1 ? full : explore_from_expert(env, agent_params, expert, t);
      const int expert_action = expert.steps[t - 1].action.index;
      if (agent_sfx.steps.front().action.index == expert_action) continue;
      ++out.stats.n_divergences;

      StepRewardEstimate win_est = scorer.score(prefix_of(expert, t));
      HistoryPrefix lose_hp = prefix_of(expert, t - 1);
      lose_hp.steps.push_back(agent_sfx.steps.front());
      StepRewardEstimate lose_est = scorer.score(lose_hp);

      if (win_est.value - lose_est.value > tau &&
          agent_sfx.outcome_reward < expert.outcome_reward) {
        ContrastiveStepPair p;
        p.prefix = prefix_of(expert, t - 1);
        p.win_suffix = suffix_of(expert, t - 1);
        p.lose_suffix = std::move(agent_sfx);
        p.win_step_reward = win_est;
        p.lose_step_reward = lose_est;
        out.step_pairs.push_back(std::move(p));
        ++out.stats.n_step_pairs;
      }
    }
  }
  return out;
}

// --- persistence ---

static Json suffix_to_json(const TrajectorySuffix& s) {
  Json j;
  Json steps = Json::array();
  for (const auto& st : s.steps) {
    Json js;
    js["a"] = st.action.index;
    js["a_text"] = st.action.text;
    js["o"] = st.obs.text;
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  j["outcome_reward"] = s.outcome_reward;
  j["terminated"] = termination_name(s.terminated);
  return j;
}

static TrajectorySuffix suffix_from_json(const Json& j) {
  TrajectorySuffix s;
  for (const auto& js : j.at("steps")) {
    Step st;
    st.action.index = js.at("a").get<int>();
    st.action.text = js.at("a_text").get<std::string>();
    st.obs.text = js.at("o").get<std::string>();
    s.steps.push_back(std::move(st));
  }
  s.outcome_reward = j.at("outcome_reward").get<double>();
  s.terminated = termination_from(j.at("terminated").get<std::string>());
  return s;
}

static Json estimate_to_json(const StepRewardEstimate& e) {
  Json j;
  j["value"] = e.value;
  j["n_samples"] = e.n_samples;
  j["std_error"] = e.std_error;
  j["method"] = reward_method_name(e.method);
  return j;
}

static StepRewardEstimate estimate_from_json(const Json& j) {
  StepRewardEstimate e;
  e.value = j.at("value").get<double>();
  e.n_samples = j.at("n_samples").get<int>();
  e.std_error = j.at("std_error").get<double>();
  e.method = reward_method_from(j.at("method").get<std::string>());
  return e;
}

void save_pairs(const std::string& path, const PairBuildResult& pairs,
                const std::vector<Trajectory>& experts) {
  std::map<std::string, std::string> hash_by_task;
  for (const auto& e : experts)
    hash_by_task[e.instruction.task_id] = trajectory_content_hash(e);
  auto expert_hash = [&](const std::string& task_id) {
    auto it = hash_by_task.find(task_id);
    if (it == hash_by_task.end())
      throw ContractViolation("save_pairs: pair references task " + task_id +
                              " absent from the expert set");
    return it->second;
  };

  std::string out;
  for (const auto& p : pairs.step_pairs) {
    Json j;
    j["type"] = "step";
    j["task_id"] = p.prefix.instruction.task_id;
    j["expert_hash"] = expert_hash(p.prefix.instruction.task_id);
    j["t"] = p.prefix.steps.size() + 1;
    j["win_suffix"] = suffix_to_json(p.win_suffix);
    j["lose_suffix"] = suffix_to_json(p.lose_suffix);
    j["win_reward"] = estimate_to_json(p.win_step_reward);
    j["lose_reward"] = estimate_to_json(p.lose_step_reward);
    out += j.dump();
    out += '\n';
  }
  for (const auto& p : pairs.traj_pairs) {
    Json j;
    j["type"] = "traj";
    j["task_id"] = p.instruction.task_id;
    j["win_hash"] = expert_hash(p.instruction.task_id);
    j["lose_traj"] = trajectory_to_json(p.lose_traj);
    out += j.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

PairBuildResult load_pairs(const std::string& path,
                           const std::vector<Trajectory>& experts) {
  std::map<std::string, const Trajectory*> by_hash;
  for (const auto& e : experts) by_hash[trajectory_content_hash(e)] = &e;
  auto resolve = [&](const std::string& h) -> const Trajectory& {
    auto it = by_hash.find(h);
    if (it == by_hash.end())
      throw DataCorruptionError("pair file " + path +
                                " references unknown expert hash " + h);
    return *it->second;
  };

  PairBuildResult out;
  std::string text = read_text_file(path);
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw DataCorruptionError("bad pair record in " + path + ": " + e.what());
    }
    const std::string type = j.at("type").get<std::string>();
    if (type == "step") {
      const Trajectory& expert = resolve(j.at("expert_hash").get<std::string>());
      const size_t t = j.at("t").get<size_t>();
      if (t < 1 || t > expert.steps.size())
        throw DataCorruptionError("pair record step index out of range in " +
                                  path);
      ContrastiveStepPair p;
      p.prefix = prefix_of(expert, t - 1);
      p.win_suffix = suffix_from_json(j.at("win_suffix"));
      p.lose_suffix = suffix_from_json(j.at("lose_suffix"));
      p.win_step_reward = estimate_from_json(j.at("win_reward"));
      p.lose_step_reward = estimate_from_json(j.at("lose_reward"));
      if (p.win_suffix.steps.empty() || p.lose_suffix.steps.empty() ||
          p.win_suffix.steps.front().action.index ==
              p.lose_suffix.steps.front().action.index)
        throw DataCorruptionError(
            "step pair with matching or missing first actions in " + path);
      out.step_pairs.push_back(std::move(p));
      ++out.stats.n_step_pairs;
    } else if (type == "traj") {
      ContrastiveTrajPair p;
      p.win_traj = resolve(j.at("win_hash").get<std::string>());
      p.lose_traj = trajectory_from_json(j.at("lose_traj"));
      p.instruction = p.win_traj.instruction;
      out.traj_pairs.push_back(std::move(p));
      ++out.stats.n_traj_pairs;
    } else {
      throw DataCorruptionError("unknown pair record type '" + type + "' in " +
                                path);
    }
  }
  return out;
}

}  // namespace ipr
