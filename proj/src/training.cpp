#include "ipr/training.hpp"

#include <cmath>

namespace ipr {

PolicyParams minibatch_descent(PolicyParams params, int n_units,
                               const DescentConfig& config,
                               const BatchGradFn& batch_grad,
                               const LossFn& full_loss,
                               const EpochFn& on_epoch) {
  if (n_units < 1) throw ContractViolation("descent needs at least one unit");
  if (config.lr <= 0 || config.batch < 1 || config.epochs < 0)
    throw ConfigError("bad descent configuration");

  auto check = [](double loss, int epoch) {
    if (!std::isfinite(loss))
      throw NumericError("loss became non-finite at epoch " +
                         std::to_string(epoch));
    return loss;
  };

  double prev = check(full_loss(params), 0);
  if (on_epoch) on_epoch(0, params, prev);

  std::vector<int> order(n_units);
  for (int i = 0; i < n_units; ++i) order[i] = i;
  std::vector<double> grad(params.w.size());
  double lr = config.lr;
  SeedKey key(config.seed);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    PolicyParams snapshot = params;
    auto rng = key.with("shuffle").with(static_cast<uint64_t>(epoch)).rng();
    deterministic_shuffle(order, rng);

    for (int begin = 0; begin < n_units; begin += config.batch) {
      int end = std::min(begin + config.batch, n_units);
      std::vector<int> chunk(order.begin() + begin, order.begin() + end);
      grad.assign(grad.size(), 0.0);
      batch_grad(params, chunk, grad);
      for (size_t i = 0; i < params.w.size(); ++i) params.w[i] -= lr * grad[i];
      params.version += 1;
    }

    double cur = check(full_loss(params), epoch);
    if (cur > prev + 1e-6) {
      params = std::move(snapshot);
      lr /= 2;
      if (on_epoch) on_epoch(epoch, params, prev);
      continue;
    }
    bool converged = std::fabs(prev - cur) < config.tol;
    prev = cur;
    if (on_epoch) on_epoch(epoch, params, cur);
    if (converged) break;
  }
  return params;
}

}  // namespace ipr
