#pragma once

#include <string>
#include <vector>

#include "ipr/training.hpp"

namespace ipr {

double sft_loss(const Environment& env, const PolicyParams& params,
                const std::vector<Trajectory>& dataset);
double compiled_sft_loss(const PolicyParams& params,
                         const std::vector<CompiledTrajectory>& dataset);
// fraction of teacher-forced steps where the greedy action matches the expert
double action_agreement(const PolicyParams& params,
                        const std::vector<CompiledTrajectory>& dataset);

// mini-batch gradient descent on L_SFT; metrics CSV columns are
// (epoch, loss, train_action_agreement), empty path skips the file
PolicyParams train_sft(const Environment& env, const PolicyParams& init,
                       const std::vector<Trajectory>& dataset,
                       const DescentConfig& config,
                       const std::string& metrics_path = "");

}  // namespace ipr
