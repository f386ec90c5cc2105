#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ipr/common.hpp"
#include "ipr/env.hpp"
#include "ipr/pair_builder.hpp"
#include "ipr/policy.hpp"
#include "ipr/toy_env.hpp"

namespace ipr::test {

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = (std::filesystem::temp_directory_path() /
             ("ipr-test-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter++)))
                .string();
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& rel) const { return path_ + "/" + rel; }

 private:
  std::string path_;
};

inline PolicyParams random_params(int n_actions, uint64_t seed, double scale) {
  PolicyParams p = zero_params(n_actions);
  auto rng = SeedKey(seed).with("w").rng();
  for (auto& w : p.w) w = scale * (uniform01(rng) - 0.5);
  return p;
}

// Max relative error between an analytic gradient and central finite
// differences (step 1e-5), probing the largest-magnitude coordinates plus an
// even stride across the rest.
inline double max_fd_error(const std::function<double(const PolicyParams&)>& f,
                           const PolicyParams& params,
                           const std::vector<double>& grad, int n_probe,
                           double step = 1e-5) {
  std::vector<size_t> order(grad.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::fabs(grad[a]) > std::fabs(grad[b]);
  });
  std::vector<size_t> probes;
  for (size_t i = 0; i < order.size() && i < static_cast<size_t>(n_probe) / 2; ++i)
    probes.push_back(order[i]);
  size_t stride =
      std::max<size_t>(1, grad.size() / std::max(1, n_probe - n_probe / 2));
  for (size_t i = 0; i < grad.size() && probes.size() < static_cast<size_t>(n_probe);
       i += stride)
    probes.push_back(i);

  double worst = 0.0;
  for (size_t i : probes) {
    PolicyParams hi = params, lo = params;
    hi.w[i] += step;
    lo.w[i] -= step;
    double fd = (f(hi) - f(lo)) / (2.0 * step);
    double denom = std::max({1e-6, std::fabs(fd), std::fabs(grad[i])});
    worst = std::max(worst, std::fabs(fd - grad[i]) / denom);
  }
  return worst;
}

// Highest-reward leaf path by exhaustive enumeration, lowest action order on
// ties; the toy environment's oracle planner.
inline Trajectory toy_best_expert(const ToyEnv& env, const Instruction& ins,
                                  int depth, int branching) {
  std::vector<int> path(depth, 0), best(depth, 0);
  double best_reward = -1.0;
  while (true) {
    std::string key;
    for (int d : path) key += static_cast<char>('0' + d);
    double r = env.leaf_reward(ins, key);
    if (r > best_reward) {
      best_reward = r;
      best = path;
    }
    int i = depth - 1;
    while (i >= 0 && ++path[i] == branching) path[i--] = 0;
    if (i < 0) break;
  }
  ScriptedPolicy script(branching, 0, best);
  std::mt19937_64 rng(0);
  return rollout(env, script, HistoryPrefix{ins, {}}, 0.0, rng);
}

struct ToyFixture {
  std::unique_ptr<ToyEnv> env;
  int depth = 0;
  int branching = 0;
  std::vector<Instruction> tasks;
  std::vector<Trajectory> experts;
};

inline ToyFixture make_toy_fixture(int depth, int branching, int n_tasks,
                                   const std::string& salt = "salt") {
  ToyFixture f;
  f.env = std::make_unique<ToyEnv>(depth, branching);
  f.depth = depth;
  f.branching = branching;
  for (int i = 0; i < n_tasks; ++i) {
    Instruction ins =
        make_toy_instruction("toy-" + std::to_string(i), depth, branching,
                             salt + "-" + std::to_string(i));
    f.env->register_task(ins);
    f.tasks.push_back(ins);
    f.experts.push_back(toy_best_expert(*f.env, ins, depth, branching));
  }
  return f;
}

struct PairSets {
  std::vector<ContrastiveStepPair> step_pairs;
  std::vector<ContrastiveTrajPair> traj_pairs;
};

// Contrastive pairs for loss-identity tests: expert suffixes versus a random
// probe policy's divergences, plus one crafted divergence per fixture so the
// sets are never empty. No admission filtering — the losses accept any pair.
inline PairSets make_random_pairs(const ToyFixture& fx, uint64_t seed) {
  PairSets out;
  PolicyParams probe = random_params(fx.branching, seed, 1.5);
  for (const auto& expert : fx.experts) {
    for (size_t t = 1; t <= expert.steps.size(); ++t) {
      TrajectorySuffix agent = explore_from_expert(*fx.env, probe, expert, t);
      if (agent.steps.front().action.index ==
          expert.steps[t - 1].action.index)
        continue;
      ContrastiveStepPair p;
      p.prefix = prefix_of(expert, t - 1);
      p.win_suffix = suffix_of(expert, t - 1);
      p.lose_suffix = std::move(agent);
      out.step_pairs.push_back(std::move(p));
    }
    TrajectorySuffix full = explore_from_expert(*fx.env, probe, expert, 1);
    Trajectory agent_traj = glue(prefix_of(expert, 0), full);
    if (agent_traj.outcome_reward < expert.outcome_reward)
      out.traj_pairs.push_back({expert.instruction, expert, agent_traj});
  }

  const Trajectory& anchor = fx.experts[0];
  int alt = (anchor.steps[0].action.index + 1) % fx.branching;
  std::vector<int> alt_path(anchor.steps.size(), 0);
  alt_path[0] = alt;
  ScriptedPolicy alt_start(fx.branching, 0, alt_path);
  std::mt19937_64 rng(0);
  Trajectory crafted = rollout(*fx.env, alt_start,
                               HistoryPrefix{anchor.instruction, {}}, 0.0, rng);
  ContrastiveStepPair p;
  p.prefix = prefix_of(anchor, 0);
  p.win_suffix = suffix_of(anchor, 0);
  p.lose_suffix = suffix_of(crafted, 0);
  out.step_pairs.push_back(std::move(p));
  out.traj_pairs.push_back({anchor.instruction, anchor, crafted});
  return out;
}

}  // namespace ipr::test
