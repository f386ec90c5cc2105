#pragma once

#include "ipr/scorer.hpp"
#include "ipr/training.hpp"

namespace ipr {

// Linear regressor from prefix features to step reward. Reuses PolicyParams
// with n_actions = 1 and one extra bucket holding the bias, so the policy
// checkpoint format and descent loop apply unchanged.
PolicyParams zero_reward_model(int feature_dim = kFeatureDim);

// Prediction on an already-densified feature vector; unclamped.
double rm_predict(const PolicyParams& rm, const std::vector<double>& features);

// Mean squared error against dump labels; when grad is non-null it is
// resized and filled with the loss gradient.
double rm_mse_loss(const PolicyParams& rm,
                   const std::vector<ScoredStepRecord>& recs,
                   std::vector<double>* grad = nullptr);

struct RewardModelConfig {
  DescentConfig descent{.lr = 0.05, .epochs = 40, .batch = 32, .tol = 1e-6};
  double heldout_frac = 0.1;  // fraction of tasks held out, at least one
};

struct TrainedRewardModel {
  PolicyParams params;
  double train_mse = 0.0;
  double heldout_mse = 0.0;
  double heldout_label_variance = 0.0;
  int n_train_steps = 0;
  int n_heldout_steps = 0;
};

// MSE regression on the scored-step dump with a by-task 90/10 split.
// Refuses dumps with fewer than 10 distinct tasks.
TrainedRewardModel train_reward_model(
    const std::vector<ScoredStepRecord>& dump, const RewardModelConfig& config);

// Clamped prediction packaged as an estimate; drop-in for pair building.
StepRewardEstimate rm_step_reward(const PolicyParams& rm,
                                  const HistoryPrefix& prefix_through_t);

class RmStepScorer : public StepScorer {
 public:
  explicit RmStepScorer(PolicyParams rm) : rm_(std::move(rm)) {}
  StepRewardEstimate score(const HistoryPrefix& prefix) override {
    return rm_step_reward(rm_, prefix);
  }

 private:
  PolicyParams rm_;
};

}  // namespace ipr
