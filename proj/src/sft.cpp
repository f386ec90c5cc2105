#include "ipr/sft.hpp"

namespace ipr {

double compiled_sft_loss(const PolicyParams& params,
                         const std::vector<CompiledTrajectory>& dataset) {
  if (dataset.empty()) throw ContractViolation("sft loss over empty dataset");
  double total = 0.0;
  for (const auto& traj : dataset) total -= compiled_logprob(params, traj);
  return total / static_cast<double>(dataset.size());
}

double sft_loss(const Environment& env, const PolicyParams& params,
                const std::vector<Trajectory>& dataset) {
  std::vector<CompiledTrajectory> compiled;
  compiled.reserve(dataset.size());
  for (const auto& t : dataset) compiled.push_back(compile_trajectory(env, t));
  return compiled_sft_loss(params, compiled);
}

double action_agreement(const PolicyParams& params,
                        const std::vector<CompiledTrajectory>& dataset) {
  int64_t hits = 0, steps = 0;
  for (const auto& traj : dataset) {
    for (const auto& s : traj.steps) {
      hits += compiled_argmax(params, s) == s.chosen ? 1 : 0;
      steps += 1;
    }
  }
  if (steps == 0) throw ContractViolation("agreement over empty dataset");
  return static_cast<double>(hits) / static_cast<double>(steps);
}

PolicyParams train_sft(const Environment& env, const PolicyParams& init,
                       const std::vector<Trajectory>& dataset,
                       const DescentConfig& config,
                       const std::string& metrics_path) {
  std::vector<CompiledTrajectory> compiled;
  compiled.reserve(dataset.size());
  for (const auto& t : dataset) compiled.push_back(compile_trajectory(env, t));

  std::string metrics = "epoch,loss,train_action_agreement\n";
  auto on_epoch = [&](int epoch, const PolicyParams& p, double loss) {
    metrics += std::to_string(epoch) + "," + format_double(loss) + "," +
               format_double(action_agreement(p, compiled)) + "\n";
  };

  auto batch_grad = [&](const PolicyParams& p, const std::vector<int>& chunk,
                        std::vector<double>& grad) {
    double scale = -1.0 / static_cast<double>(chunk.size());
    for (int idx : chunk)
      for (const auto& s : compiled[idx].steps)
        accumulate_step_gradient(p, s, scale, grad);
  };
  auto full_loss = [&](const PolicyParams& p) {
    return compiled_sft_loss(p, compiled);
  };

  PolicyParams out =
      minibatch_descent(init, static_cast<int>(compiled.size()), config,
                        batch_grad, full_loss, on_epoch);
  if (!metrics_path.empty()) write_text_file(metrics_path, metrics);
  return out;
}

}  // namespace ipr
