#include "ipr/mixture.hpp"

#include <cmath>
#include <cstdio>

namespace ipr {

namespace {

// A preference pair flattened for repeated evaluation. ref_margin is the
// frozen reference's log-prob margin, a constant during optimization.
struct CompiledPair {
  CompiledTrajectory win;
  CompiledTrajectory lose;
  double ref_margin = 0.0;
};

CompiledPair compile_traj_pair(const Environment& env,
                               const PolicyParams& ref,
                               const ContrastiveTrajPair& p) {
  CompiledPair cp;
  cp.win = compile_trajectory(env, p.win_traj);
  cp.lose = compile_trajectory(env, p.lose_traj);
  cp.ref_margin =
      compiled_logprob(ref, cp.win) - compiled_logprob(ref, cp.lose);
  return cp;
}

CompiledPair compile_step_pair(const Environment& env,
                               const PolicyParams& ref,
                               const ContrastiveStepPair& p) {
  CompiledPair cp;
  cp.win = compile_suffix(env, p.prefix, p.win_suffix);
  cp.lose = compile_suffix(env, p.prefix, p.lose_suffix);
  cp.ref_margin =
      compiled_logprob(ref, cp.win) - compiled_logprob(ref, cp.lose);
  return cp;
}

double pair_loss(const PolicyParams& params, const CompiledPair& cp,
                 double beta) {
  double margin = compiled_logprob(params, cp.win) -
                  compiled_logprob(params, cp.lose);
  return -log_sigmoid(beta * (margin - cp.ref_margin));
}

// Adds scale * d(pair_loss)/dw into grad.
void pair_gradient(const PolicyParams& params, const CompiledPair& cp,
                   double beta, double scale, std::vector<double>& grad) {
  double margin = compiled_logprob(params, cp.win) -
                  compiled_logprob(params, cp.lose);
  double arg = beta * (margin - cp.ref_margin);
  double coef = scale * beta * -sigmoid(-arg);
  for (const auto& s : cp.win.steps)
    accumulate_step_gradient(params, s, coef, grad);
  for (const auto& s : cp.lose.steps)
    accumulate_step_gradient(params, s, -coef, grad);
}

double win_nll(const PolicyParams& params, const CompiledTrajectory& win) {
  return -compiled_logprob(params, win);
}

void win_nll_gradient(const PolicyParams& params,
                      const CompiledTrajectory& win, double scale,
                      std::vector<double>& grad) {
  for (const auto& s : win.steps)
    accumulate_step_gradient(params, s, -scale, grad);
}

struct CompiledMixture {
  std::vector<CompiledPair> odpo;
  std::vector<CompiledPair> sdpo;
  std::vector<CompiledTrajectory> sft;  // win trajectories of the traj pairs
};

CompiledMixture compile_mixture(const Environment& env,
                                const PolicyParams& ref,
                                const std::vector<ContrastiveStepPair>& D_s,
                                const std::vector<ContrastiveTrajPair>& D_t,
                                const AblationFlags& flags) {
  CompiledMixture m;
  if (flags.use_odpo)
    for (const auto& p : D_t) m.odpo.push_back(compile_traj_pair(env, ref, p));
  if (flags.use_sdpo)
    for (const auto& p : D_s) m.sdpo.push_back(compile_step_pair(env, ref, p));
  if (flags.use_sft)
    for (const auto& p : D_t)
      m.sft.push_back(compile_trajectory(env, p.win_traj));
  return m;
}

LossBreakdown mixture_breakdown(const PolicyParams& params,
                                const CompiledMixture& m, double beta,
                                std::vector<double>* grad) {
  if (grad) grad->assign(params.w.size(), 0.0);
  LossBreakdown out;
  if (!m.odpo.empty()) {
    double inv = 1.0 / m.odpo.size();
    for (const auto& cp : m.odpo) {
      out.odpo += inv * pair_loss(params, cp, beta);
      if (grad) pair_gradient(params, cp, beta, inv, *grad);
    }
  }
  if (!m.sdpo.empty()) {
    double inv = 1.0 / m.sdpo.size();
    for (const auto& cp : m.sdpo) {
      out.sdpo += inv * pair_loss(params, cp, beta);
      if (grad) pair_gradient(params, cp, beta, inv, *grad);
    }
  }
  if (!m.sft.empty()) {
    double inv = 1.0 / m.sft.size();
    for (const auto& ct : m.sft) {
      out.sft += inv * win_nll(params, ct);
      if (grad) win_nll_gradient(params, ct, inv, *grad);
    }
  }
  out.total = out.odpo + out.sdpo + out.sft;
  return out;
}

}  // namespace

double odpo_loss(const Environment& env, const PolicyParams& params,
                 const PolicyParams& ref_params,
                 const std::vector<ContrastiveTrajPair>& traj_pairs,
                 double beta) {
  if (beta <= 0) throw ContractViolation("beta must be positive");
  if (traj_pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : traj_pairs)
    sum += pair_loss(params, compile_traj_pair(env, ref_params, p), beta);
  return sum / traj_pairs.size();
}

double sdpo_loss(const Environment& env, const PolicyParams& params,
                 const PolicyParams& ref_params,
                 const std::vector<ContrastiveStepPair>& step_pairs,
                 double beta) {
  if (beta <= 0) throw ContractViolation("beta must be positive");
  if (step_pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : step_pairs)
    sum += pair_loss(params, compile_step_pair(env, ref_params, p), beta);
  return sum / step_pairs.size();
}

double mixture_sft_loss(const Environment& env, const PolicyParams& params,
                        const std::vector<ContrastiveTrajPair>& traj_pairs) {
  if (traj_pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : traj_pairs)
    sum += win_nll(params, compile_trajectory(env, p.win_traj));
  return sum / traj_pairs.size();
}

LossBreakdown total_loss(const Environment& env, const PolicyParams& params,
                         const PolicyParams& ref_params,
                         const std::vector<ContrastiveStepPair>& step_pairs,
                         const std::vector<ContrastiveTrajPair>& traj_pairs,
                         double beta, const AblationFlags& flags,
                         std::vector<double>* grad) {
  if (beta <= 0) throw ContractViolation("beta must be positive");
  CompiledMixture m =
      compile_mixture(env, ref_params, step_pairs, traj_pairs, flags);
  return mixture_breakdown(params, m, beta, grad);
}

PolicyParams optimize_iteration(const Environment& env, PolicyParams params,
                                const PolicyParams& ref_params,
                                const std::vector<ContrastiveStepPair>& step_pairs,
                                const std::vector<ContrastiveTrajPair>& traj_pairs,
                                const OptimizeConfig& config,
                                const std::string& metrics_path) {
  CompiledMixture m = compile_mixture(env, ref_params, step_pairs, traj_pairs,
                                      config.flags);

  // One unit per pair / win trajectory; each unit's gradient is scaled so a
  // uniform batch mean estimates the full mixture gradient.
  enum class Kind { Odpo, Sdpo, Sft };
  struct Unit {
    Kind kind;
    size_t idx;
    double weight;
  };
  std::vector<Unit> units;
  for (size_t i = 0; i < m.odpo.size(); ++i)
    units.push_back({Kind::Odpo, i, 0.0});
  for (size_t i = 0; i < m.sdpo.size(); ++i)
    units.push_back({Kind::Sdpo, i, 0.0});
  for (size_t i = 0; i < m.sft.size(); ++i)
    units.push_back({Kind::Sft, i, 0.0});
  if (units.empty()) {
    std::fprintf(stderr,
                 "optimize_iteration: no data for the enabled loss terms; "
                 "params returned unchanged\n");
    return params;
  }
  const double n = static_cast<double>(units.size());
  for (auto& u : units) {
    size_t set = u.kind == Kind::Odpo   ? m.odpo.size()
                 : u.kind == Kind::Sdpo ? m.sdpo.size()
                                        : m.sft.size();
    u.weight = n / static_cast<double>(set);
  }

  std::string csv = "epoch,L_odpo,L_sdpo,L_sft,L_total\n";
  PolicyParams last_good = params;

  auto batch_grad = [&](const PolicyParams& p, const std::vector<int>& chunk,
                        std::vector<double>& grad) {
    const double inv = 1.0 / static_cast<double>(chunk.size());
    for (int ui : chunk) {
      const Unit& u = units[ui];
      const double s = u.weight * inv;
      switch (u.kind) {
        case Kind::Odpo:
          pair_gradient(p, m.odpo[u.idx], config.beta, s, grad);
          break;
        case Kind::Sdpo:
          pair_gradient(p, m.sdpo[u.idx], config.beta, s, grad);
          break;
        case Kind::Sft:
          win_nll_gradient(p, m.sft[u.idx], s, grad);
          break;
      }
    }
  };
  auto full_loss = [&](const PolicyParams& p) {
    return mixture_breakdown(p, m, config.beta, nullptr).total;
  };
  auto on_epoch = [&](int epoch, const PolicyParams& p, double) {
    LossBreakdown b = mixture_breakdown(p, m, config.beta, nullptr);
    csv += std::to_string(epoch) + "," + format_double(b.odpo) + "," +
           format_double(b.sdpo) + "," + format_double(b.sft) + "," +
           format_double(b.total) + "\n";
    last_good = p;
  };

  PolicyParams result = params;
  try {
    result = minibatch_descent(std::move(params), static_cast<int>(units.size()),
                               config.descent, batch_grad, full_loss, on_epoch);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "optimize_iteration: %s; keeping last finite epoch\n",
                 e.what());
    result = last_good;
  }
  if (!metrics_path.empty()) write_text_file(metrics_path, csv);
  return result;
}

}  // namespace ipr
