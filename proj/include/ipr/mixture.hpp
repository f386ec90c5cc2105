#pragma once

#include "ipr/pair_builder.hpp"
#include "ipr/training.hpp"

namespace ipr {

// Zeroing a flag removes that term from the mixture (the ablation arms).
struct AblationFlags {
  bool use_odpo = true;
  bool use_sdpo = true;
  bool use_sft = true;
  bool operator==(const AblationFlags&) const = default;
};

// Preference loss over full trajectories: -mean log sigmoid(beta * (margin
// under params minus margin under ref)). Empty datasets contribute 0.
double odpo_loss(const Environment& env, const PolicyParams& params,
                 const PolicyParams& ref_params,
                 const std::vector<ContrastiveTrajPair>& traj_pairs,
                 double beta);

// Same form over suffix pairs conditioned on the shared prefix.
double sdpo_loss(const Environment& env, const PolicyParams& params,
                 const PolicyParams& ref_params,
                 const std::vector<ContrastiveStepPair>& step_pairs,
                 double beta);

// Likelihood term on the win trajectories only.
double mixture_sft_loss(const Environment& env, const PolicyParams& params,
                        const std::vector<ContrastiveTrajPair>& traj_pairs);

struct LossBreakdown {
  double odpo = 0.0;
  double sdpo = 0.0;
  double sft = 0.0;
  double total = 0.0;
};

// Full-data mixture loss; terms outside the flags stay zero. When `grad` is
// non-null it is resized to params.w.size() and filled with d(total)/dw.
LossBreakdown total_loss(const Environment& env, const PolicyParams& params,
                         const PolicyParams& ref_params,
                         const std::vector<ContrastiveStepPair>& step_pairs,
                         const std::vector<ContrastiveTrajPair>& traj_pairs,
                         double beta, const AblationFlags& flags,
                         std::vector<double>* grad = nullptr);

struct OptimizeConfig {
  DescentConfig descent{.lr = 0.05, .epochs = 20, .batch = 32};
  double beta = 0.2;
  AblationFlags flags;
};

// One mixture-optimization pass against the frozen reference. Returns the
// input unchanged (with a warning) when the enabled terms have no data.
// A non-finite loss aborts the descent and yields the last finite epoch.
// When metrics_path is set, writes per-epoch CSV rows
// (epoch, L_odpo, L_sdpo, L_sft, L_total).
PolicyParams optimize_iteration(const Environment& env, PolicyParams params,
                                const PolicyParams& ref_params,
                                const std::vector<ContrastiveStepPair>& step_pairs,
                                const std::vector<ContrastiveTrajPair>& traj_pairs,
                                const OptimizeConfig& config,
                                const std::string& metrics_path = "");

}  // namespace ipr
