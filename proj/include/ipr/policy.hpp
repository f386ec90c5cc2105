#pragma once

#include <map>
#include <string>
#include <vector>

#include "ipr/env.hpp"

namespace ipr {

constexpr int kFeatureDim = 256;
constexpr double kFeatureClip = 8.0;

// hashed token counts; sorted by bucket, values in (0, kFeatureClip]
struct SparseFeatures {
  std::vector<std::pair<int, double>> entries;
};

SparseFeatures sparse_featurize(const HistoryPrefix& prefix,
                                int dim = kFeatureDim);
std::vector<double> featurize(const HistoryPrefix& prefix,
                              int dim = kFeatureDim);

struct PolicyParams {
  int dim = kFeatureDim;
  int n_actions = 0;
  std::vector<double> w;  // row-major, w[bucket * n_actions + action]
  int64_t version = 0;

  double at(int bucket, int action) const { return w[bucket * n_actions + action]; }
  double& at(int bucket, int action) { return w[bucket * n_actions + action]; }
};

PolicyParams zero_params(int n_actions, int dim = kFeatureDim);

class LinearPolicy : public Policy {
 public:
  explicit LinearPolicy(PolicyParams params) : params_(std::move(params)) {}
  std::vector<double> logits(const HistoryPrefix& prefix) const override;
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
};

std::map<int, double> action_logprobs(const PolicyParams& params,
                                      const HistoryPrefix& prefix,
                                      const std::vector<int>& legal);

double trajectory_logprob(const Environment& env, const PolicyParams& params,
                          const HistoryPrefix& prefix,
                          const TrajectorySuffix& suffix);

// d(trajectory_logprob)/d(w), dense dim × n_actions buffer
std::vector<double> logprob_gradient(const Environment& env,
                                     const PolicyParams& params,
                                     const HistoryPrefix& prefix,
                                     const TrajectorySuffix& suffix);

// teacher-forced replay flattened for repeated loss/gradient evaluation
struct CompiledStep {
  SparseFeatures features;
  std::vector<int> legal;
  int chosen = -1;
};

struct CompiledTrajectory {
  std::vector<CompiledStep> steps;
  double outcome_reward = 0.0;
};

CompiledTrajectory compile_trajectory(const Environment& env,
                                      const Trajectory& traj);
// compile only steps t0.. of the glued trajectory (prefix left implicit)
CompiledTrajectory compile_suffix(const Environment& env,
                                  const HistoryPrefix& prefix,
                                  const TrajectorySuffix& suffix);

double compiled_step_logprob(const PolicyParams& params, const CompiledStep& s);
double compiled_logprob(const PolicyParams& params,
                        const CompiledTrajectory& traj);
// accumulates scale * d(log π(chosen))/dw into grad
void accumulate_step_gradient(const PolicyParams& params, const CompiledStep& s,
                              double scale, std::vector<double>& grad);
int compiled_argmax(const PolicyParams& params, const CompiledStep& s);

void save_policy(const std::string& path, const PolicyParams& params,
                 const std::string& config_hash);
struct LoadedPolicy {
  PolicyParams params;
  std::string config_hash;
};
LoadedPolicy load_policy(const std::string& path);

}  // namespace ipr
