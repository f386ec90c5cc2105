#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ipr/policy.hpp"

namespace ipr {

struct DescentConfig {
  double lr = 0.1;
  int epochs = 40;
  int batch = 32;
  double tol = 1e-4;  // stop once the epoch loss moves less than this
  uint64_t seed = 0;
};

// fills grad with the mean loss gradient over the given unit indices
using BatchGradFn = std::function<void(
    const PolicyParams&, const std::vector<int>&, std::vector<double>&)>;
using LossFn = std::function<double(const PolicyParams&)>;
// called with epoch 0 before training, then once per attempted epoch with the
// accepted loss (reverted epochs report the prior loss, keeping it monotone)
using EpochFn = std::function<void(int, const PolicyParams&, double)>;

PolicyParams minibatch_descent(PolicyParams params, int n_units,
                               const DescentConfig& config,
                               const BatchGradFn& batch_grad,
                               const LossFn& full_loss,
                               const EpochFn& on_epoch);

}  // namespace ipr
