#include "ipr/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace ipr {

std::string reward_method_name(RewardMethod m) {
  switch (m) {
    case RewardMethod::MC: return "mc";
    case RewardMethod::Exact: return "exact";
    case RewardMethod::Terminal: return "terminal";
    case RewardMethod::RewardModel: return "reward_model";
  }
  throw ContractViolation("unhandled reward method");
}

RewardMethod reward_method_from(const std::string& s) {
  if (s == "mc") return RewardMethod::MC;
  if (s == "exact") return RewardMethod::Exact;
  if (s == "terminal") return RewardMethod::Terminal;
  if (s == "reward_model") return RewardMethod::RewardModel;
  throw DataCorruptionError("bad reward method: " + s);
}

std::string prefix_content_hash(const HistoryPrefix& prefix) {
  Json j;
  j["instruction"] = instruction_to_json(prefix.instruction);
  Json steps = Json::array();
  for (const auto& s : prefix.steps) {
    Json js;
    js["a"] = s.action.index;
    js["a_text"] = s.action.text;
    js["o"] = s.obs.text;
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  return sha256_hex(j.dump());
}

static std::string cache_key(const std::string& prefix_hash, int n_samples,
                             uint64_t root_seed) {
  return prefix_hash + "|" + std::to_string(n_samples) + "|" +
         std::to_string(root_seed);
}

StepRewardEstimate mc_step_reward(const Environment& env,
                                  const PolicyParams& scorer_params,
                                  const HistoryPrefix& prefix_through_t,
                                  int n_samples, uint64_t root_seed,
                                  double temperature, ScorerCache* cache) {
  if (n_samples < 1)
    throw ContractViolation("mc_step_reward needs n_samples >= 1");
  std::string key;
  if (cache) {
    key = cache_key(prefix_content_hash(prefix_through_t), n_samples, root_seed);
    auto it = cache->entries.find(key);
    if (it != cache->entries.end()) return it->second;
  }

  EnvState state = replay_prefix(env, prefix_through_t);
  StepRewardEstimate est;
  if (state.terminal) {
    est.value = env.score_outcome(state);
    est.n_samples = 1;
    est.std_error = 0.0;
    est.method = RewardMethod::Terminal;
  } else {
    LinearPolicy scorer(scorer_params);
    const uint64_t t = prefix_through_t.steps.size();
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n_samples; ++i) {
      auto rng = SeedKey(root_seed)
                     .with(prefix_through_t.instruction.task_id)
                     .with(t)
                     .with(static_cast<uint64_t>(i))
                     .rng();
      Trajectory traj = continue_rollout(env, scorer, prefix_through_t, state,
                                         temperature, rng);
      sum += traj.outcome_reward;
      sumsq += traj.outcome_reward * traj.outcome_reward;
    }
    est.value = sum / n_samples;
    est.n_samples = n_samples;
    if (n_samples > 1) {
      // unbiased sample variance, floored at zero against rounding
      double var = (sumsq - sum * sum / n_samples) / (n_samples - 1);
      est.std_error = std::sqrt(std::max(0.0, var) / n_samples);
    }
    est.method = RewardMethod::MC;
  }
  if (cache) cache->entries.emplace(std::move(key), est);
  return est;
}

StepRewardEstimate exact_step_reward(const Environment& env,
                                     const PolicyParams& scorer_params,
                                     const HistoryPrefix& prefix_through_t,
                                     double temperature, int64_t node_budget) {
  EnvState start = replay_prefix(env, prefix_through_t);
  if (start.terminal) {
    StepRewardEstimate est;
    est.value = env.score_outcome(start);
    est.n_samples = 1;
    est.std_error = 0.0;
    est.method = RewardMethod::Terminal;
    return est;
  }

  LinearPolicy scorer(scorer_params);
  int64_t nodes = 0;
  HistoryPrefix hp = prefix_through_t;

  // Expand the continuation tree depth-first, weighting each branch by the
  // policy's probability at the branching state.
  std::function<double(const EnvState&)> expected = [&](const EnvState& s) {
    if (s.terminal) return env.score_outcome(s);
    std::vector<int> legal = env.legal_actions(s);
    if (legal.empty())
      throw ContractViolation("non-terminal state with no legal actions");

    std::vector<double> logits = scorer.logits(hp);
    std::vector<double> probs(legal.size(), 0.0);
    if (temperature <= 0.0) {
      size_t best = 0;
      for (size_t i = 1; i < legal.size(); ++i)
        if (logits[legal[i]] > logits[legal[best]]) best = i;
      probs[best] = 1.0;
    } else {
      double mx = -std::numeric_limits<double>::infinity();
      for (int a : legal) mx = std::max(mx, logits[a] / temperature);
      double z = 0.0;
      for (size_t i = 0; i < legal.size(); ++i) {
        probs[i] = std::exp(logits[legal[i]] / temperature - mx);
        z += probs[i];
      }
      for (auto& p : probs) p /= z;
    }

    double acc = 0.0;
    for (size_t i = 0; i < legal.size(); ++i) {
      if (probs[i] == 0.0) continue;
      if (++nodes > node_budget)
        throw BudgetExceeded("exact_step_reward exceeded node budget of " +
                             std::to_string(node_budget));
      StepResult r = env.step(s, legal[i]);
      hp.steps.push_back({Action{legal[i], env.action_text(legal[i], s)}, r.obs});
      acc += probs[i] * expected(r.state);
      hp.steps.pop_back();
    }
    return acc;
  };

  StepRewardEstimate est;
  est.value = expected(start);
  est.n_samples = 1;
  est.std_error = 0.0;
  est.method = RewardMethod::Exact;
  return est;
}

std::vector<StepRewardEstimate> score_trajectory_steps(
    const Environment& env, const PolicyParams& scorer_params,
    const Trajectory& traj, int n_samples, uint64_t root_seed,
    double temperature, ScorerCache* cache) {
  std::vector<StepRewardEstimate> out;
  out.reserve(traj.steps.size());
  for (size_t t = 1; t <= traj.steps.size(); ++t)
    out.push_back(mc_step_reward(env, scorer_params, prefix_of(traj, t),
                                 n_samples, root_seed, temperature, cache));
  return out;
}

Json scored_step_to_json(const ScoredStepRecord& rec) {
  Json j;
  j["task_id"] = rec.task_id;
  j["prefix_hash"] = rec.prefix_hash;
  j["step_index"] = rec.step_index;
  j["action_text"] = rec.action_text;
  j["value"] = rec.estimate.value;
  j["n_samples"] = rec.estimate.n_samples;
  j["std_error"] = rec.estimate.std_error;
  j["method"] = reward_method_name(rec.estimate.method);
  j["features"] = rec.features;
  return j;
}

ScoredStepRecord scored_step_from_json(const Json& j) {
  ScoredStepRecord rec;
  rec.task_id = j.at("task_id").get<std::string>();
  rec.prefix_hash = j.at("prefix_hash").get<std::string>();
  rec.step_index = j.at("step_index").get<int>();
  rec.action_text = j.at("action_text").get<std::string>();
  rec.estimate.value = j.at("value").get<double>();
  rec.estimate.n_samples = j.at("n_samples").get<int>();
  rec.estimate.std_error = j.at("std_error").get<double>();
  rec.estimate.method = reward_method_from(j.at("method").get<std::string>());
  rec.features = j.at("features").get<std::vector<double>>();
  return rec;
}

void save_scored_steps(const std::string& path,
                       const std::vector<ScoredStepRecord>& recs) {
  std::string out;
  for (const auto& r : recs) {
    out += scored_step_to_json(r).dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<ScoredStepRecord> load_scored_steps(const std::string& path) {
  std::vector<ScoredStepRecord> recs;
  std::string text = read_text_file(path);
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      recs.push_back(scored_step_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw DataCorruptionError("bad scored-step record in " + path + ": " +
                                e.what());
    }
  }
  return recs;
}

std::vector<ScoredStepRecord> build_scored_step_dump(
    const Environment& env, const PolicyParams& scorer_params,
    const std::vector<Trajectory>& trajs, int n_samples, uint64_t root_seed,
    double temperature) {
  std::vector<ScoredStepRecord> recs;
  ScorerCache cache;
  for (const auto& traj : trajs) {
    for (size_t t = 1; t <= traj.steps.size(); ++t) {
      HistoryPrefix hp = prefix_of(traj, t);
      ScoredStepRecord rec;
      rec.task_id = traj.instruction.task_id;
      rec.prefix_hash = prefix_content_hash(hp);
      rec.step_index = static_cast<int>(t);
      rec.action_text = traj.steps[t - 1].action.text;
      rec.estimate = mc_step_reward(env, scorer_params, hp, n_samples,
                                    root_seed, temperature, &cache);
      rec.features = featurize(hp, scorer_params.dim);
      recs.push_back(std::move(rec));
    }
  }
  return recs;
}

}  // namespace ipr
