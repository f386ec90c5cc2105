#include "ipr/reward_model.hpp"

#include <algorithm>
#include <set>

namespace ipr {

PolicyParams zero_reward_model(int feature_dim) {
  // one bucket per feature plus a bias bucket fed by a constant 1
  return zero_params(1, feature_dim + 1);
}

double rm_predict(const PolicyParams& rm, const std::vector<double>& features) {
  if (static_cast<int>(features.size()) + 1 != rm.dim)
    throw ContractViolation("reward model expects " +
                            std::to_string(rm.dim - 1) + " features, got " +
                            std::to_string(features.size()));
  double y = rm.w[rm.dim - 1];
  for (size_t i = 0; i < features.size(); ++i)
    if (features[i] != 0.0) y += rm.w[i] * features[i];
  return y;
}

double rm_mse_loss(const PolicyParams& rm,
                   const std::vector<ScoredStepRecord>& recs,
                   std::vector<double>* grad) {
  if (recs.empty()) throw ContractViolation("MSE over an empty record set");
  if (grad) grad->assign(rm.w.size(), 0.0);
  double sum = 0.0;
  const double inv = 1.0 / recs.size();
  for (const auto& r : recs) {
    double err = rm_predict(rm, r.features) - r.estimate.value;
    sum += err * err;
    if (grad) {
      const double c = 2.0 * err * inv;
      for (size_t i = 0; i < r.features.size(); ++i)
        if (r.features[i] != 0.0) (*grad)[i] += c * r.features[i];
      (*grad)[rm.dim - 1] += c;
    }
  }
  return sum * inv;
}

static double label_variance(const std::vector<ScoredStepRecord>& recs) {
  double mean = 0.0;
  for (const auto& r : recs) mean += r.estimate.value;
  mean /= recs.size();
  double var = 0.0;
  for (const auto& r : recs) {
    double d = r.estimate.value - mean;
    var += d * d;
  }
  return var / recs.size();
}

TrainedRewardModel train_reward_model(
    const std::vector<ScoredStepRecord>& dump,
    const RewardModelConfig& config) {
  if (dump.empty()) throw ConfigError("reward model: empty scored-step dump");
  for (const auto& r : dump)
    if (r.estimate.value < 0.0 || r.estimate.value > 1.0)
      throw DataCorruptionError("reward model label outside [0,1] for task " +
                                r.task_id);

  std::set<std::string> distinct;
  for (const auto& r : dump) distinct.insert(r.task_id);
  if (distinct.size() < 10)
    throw ConfigError("reward model: need >= 10 distinct tasks for the "
                      "by-task split, got " +
                      std::to_string(distinct.size()));

  std::vector<std::string> ids(distinct.begin(), distinct.end());
  auto rng = SeedKey(config.descent.seed).with("rm-split").rng();
  deterministic_shuffle(ids, rng);
  size_t n_heldout = std::max<size_t>(
      1, static_cast<size_t>(ids.size() * config.heldout_frac));
  std::set<std::string> heldout_ids(ids.begin(), ids.begin() + n_heldout);

  std::vector<ScoredStepRecord> train, heldout;
  for (const auto& r : dump)
    (heldout_ids.count(r.task_id) ? heldout : train).push_back(r);
  if (train.empty() || heldout.empty())
    throw ConfigError("reward model: degenerate task split");

  const int feature_dim = static_cast<int>(dump.front().features.size());
  PolicyParams init = zero_reward_model(feature_dim);

  auto batch_grad = [&](const PolicyParams& p, const std::vector<int>& chunk,
                        std::vector<double>& grad) {
    const double inv = 1.0 / chunk.size();
    for (int i : chunk) {
      double err = rm_predict(p, train[i].features) - train[i].estimate.value;
      const double c = 2.0 * err * inv;
      for (size_t k = 0; k < train[i].features.size(); ++k)
        if (train[i].features[k] != 0.0) grad[k] += c * train[i].features[k];
      grad[p.dim - 1] += c;
    }
  };
  auto full_loss = [&](const PolicyParams& p) {
    return rm_mse_loss(p, train);
  };

  TrainedRewardModel out;
  out.params = minibatch_descent(std::move(init),
                                 static_cast<int>(train.size()),
                                 config.descent, batch_grad, full_loss,
                                 EpochFn{});
  out.train_mse = rm_mse_loss(out.params, train);
  out.heldout_mse = rm_mse_loss(out.params, heldout);
  out.heldout_label_variance = label_variance(heldout);
  out.n_train_steps = static_cast<int>(train.size());
  out.n_heldout_steps = static_cast<int>(heldout.size());
  return out;
}

StepRewardEstimate rm_step_reward(const PolicyParams& rm,
                                  const HistoryPrefix& prefix_through_t) {
  StepRewardEstimate est;
  est.value = std::clamp(rm_predict(rm, featurize(prefix_through_t, rm.dim - 1)),
                         0.0, 1.0);
  est.n_samples = 1;
  est.std_error = 0.0;
  est.method = RewardMethod::RewardModel;
  return est;
}

}  // namespace ipr
