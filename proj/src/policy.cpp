#include "ipr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace ipr {

namespace {

void add_tokens(std::map<int, double>& counts, const std::string& text,
                const char* ns, int dim) {
  for (const auto& tok : split_tokens(text)) {
    uint64_t h = fnv1a(tok, fnv1a(ns));
    counts[static_cast<int>(h % static_cast<uint64_t>(dim))] += 1.0;
  }
}

}  // namespace

SparseFeatures sparse_featurize(const HistoryPrefix& prefix, int dim) {
  std::map<int, double> counts;
  add_tokens(counts, prefix.instruction.text, "u|", dim);
  size_t n = prefix.steps.size();
  if (n >= 1) add_tokens(counts, prefix.steps[n - 1].obs.text, "o0|", dim);
  if (n >= 2) add_tokens(counts, prefix.steps[n - 2].obs.text, "o1|", dim);
  int bucket = std::min<int>(static_cast<int>(n), 5);
  add_tokens(counts, bucket == 5 ? "5+" : std::to_string(bucket), "t|", dim);

  SparseFeatures out;
  out.entries.reserve(counts.size());
  for (const auto& [b, c] : counts)
    out.entries.emplace_back(b, std::min(c, kFeatureClip));
  return out;
}

std::vector<double> featurize(const HistoryPrefix& prefix, int dim) {
  std::vector<double> dense(dim, 0.0);
  for (const auto& [b, v] : sparse_featurize(prefix, dim).entries) dense[b] = v;
  return dense;
}

PolicyParams zero_params(int n_actions, int dim) {
  PolicyParams p;
  p.dim = dim;
  p.n_actions = n_actions;
  p.w.assign(static_cast<size_t>(dim) * n_actions, 0.0);
  return p;
}

std::vector<double> LinearPolicy::logits(const HistoryPrefix& prefix) const {
  SparseFeatures f = sparse_featurize(prefix, params_.dim);
  std::vector<double> out(params_.n_actions, 0.0);
  for (const auto& [b, v] : f.entries) {
    const double* row = params_.w.data() +
                        static_cast<size_t>(b) * params_.n_actions;
    for (int a = 0; a < params_.n_actions; ++a) out[a] += v * row[a];
  }
  return out;
}

namespace {

std::vector<double> legal_logprobs(const PolicyParams& params,
                                   const SparseFeatures& f,
                                   const std::vector<int>& legal) {
  if (legal.empty()) throw ContractViolation("empty legal action set");
  std::vector<double> logits(legal.size(), 0.0);
  for (const auto& [b, v] : f.entries) {
    const double* row =
        params.w.data() + static_cast<size_t>(b) * params.n_actions;
    for (size_t i = 0; i < legal.size(); ++i) logits[i] += v * row[legal[i]];
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - mx);
  double log_denom = mx + std::log(denom);
  for (double& l : logits) l -= log_denom;
  return logits;
}

}  // namespace

std::map<int, double> action_logprobs(const PolicyParams& params,
                                      const HistoryPrefix& prefix,
                                      const std::vector<int>& legal) {
  SparseFeatures f = sparse_featurize(prefix, params.dim);
  std::vector<double> lp = legal_logprobs(params, f, legal);
  std::map<int, double> out;
  for (size_t i = 0; i < legal.size(); ++i) out[legal[i]] = lp[i];
  return out;
}

CompiledTrajectory compile_suffix(const Environment& env,
                                  const HistoryPrefix& prefix,
                                  const TrajectorySuffix& suffix) {
  EnvState state = replay_prefix(env, prefix);
  HistoryPrefix ctx = prefix;
  CompiledTrajectory out;
  out.outcome_reward = suffix.outcome_reward;
  for (size_t t = 0; t < suffix.steps.size(); ++t) {
    const Step& step = suffix.steps[t];
    CompiledStep cs;
    cs.features = sparse_featurize(ctx);
    cs.legal = env.legal_actions(state);
    if (std::find(cs.legal.begin(), cs.legal.end(), step.action.index) ==
        cs.legal.end())
      throw DataCorruptionError(
          "stored action illegal during replay at step " + std::to_string(t) +
          " of task " + prefix.instruction.task_id);
    cs.chosen = step.action.index;
    StepResult r = env.step(state, step.action.index);
    if (r.obs.text != step.obs.text)
      throw DataCorruptionError("stored observation mismatch at step " +
                                std::to_string(t) + " of task " +
                                prefix.instruction.task_id);
    state = r.state;
    ctx.steps.push_back(step);
    out.steps.push_back(std::move(cs));
  }
  return out;
}

CompiledTrajectory compile_trajectory(const Environment& env,
                                      const Trajectory& traj) {
  return compile_suffix(env, HistoryPrefix{traj.instruction, {}},
                        suffix_of(traj, 0));
}

double compiled_step_logprob(const PolicyParams& params,
                             const CompiledStep& s) {
  std::vector<double> lp = legal_logprobs(params, s.features, s.legal);
  for (size_t i = 0; i < s.legal.size(); ++i)
    if (s.legal[i] == s.chosen) return lp[i];
  throw ContractViolation("chosen action missing from legal set");
}

double compiled_logprob(const PolicyParams& params,
                        const CompiledTrajectory& traj) {
  double total = 0.0;
  for (const auto& s : traj.steps) total += compiled_step_logprob(params, s);
  return total;
}

void accumulate_step_gradient(const PolicyParams& params,
                              const CompiledStep& s, double scale,
                              std::vector<double>& grad) {
  std::vector<double> lp = legal_logprobs(params, s.features, s.legal);
  for (const auto& [b, v] : s.features.entries) {
    double* row = grad.data() + static_cast<size_t>(b) * params.n_actions;
    for (size_t i = 0; i < s.legal.size(); ++i) {
      double indicator = s.legal[i] == s.chosen ? 1.0 : 0.0;
      row[s.legal[i]] += scale * v * (indicator - std::exp(lp[i]));
    }
  }
}

int compiled_argmax(const PolicyParams& params, const CompiledStep& s) {
  std::vector<double> lp = legal_logprobs(params, s.features, s.legal);
  size_t best = 0;
  for (size_t i = 1; i < s.legal.size(); ++i)
    if (lp[i] > lp[best]) best = i;
  return s.legal[best];
}

double trajectory_logprob(const Environment& env, const PolicyParams& params,
                          const HistoryPrefix& prefix,
                          const TrajectorySuffix& suffix) {
  return compiled_logprob(params, compile_suffix(env, prefix, suffix));
}

std::vector<double> logprob_gradient(const Environment& env,
                                     const PolicyParams& params,
                                     const HistoryPrefix& prefix,
                                     const TrajectorySuffix& suffix) {
  std::vector<double> grad(params.w.size(), 0.0);
  CompiledTrajectory c = compile_suffix(env, prefix, suffix);
  for (const auto& s : c.steps) accumulate_step_gradient(params, s, 1.0, grad);
  return grad;
}

void save_policy(const std::string& path, const PolicyParams& params,
                 const std::string& config_hash) {
  std::string out = "ipr-policy v1\n";
  char line[128];
  std::snprintf(line, sizeof line, "dim %d actions %d version %lld\n",
                params.dim, params.n_actions,
                static_cast<long long>(params.version));
  out += line;
  out += "config " + config_hash + "\n";
  for (int b = 0; b < params.dim; ++b) {
    std::string row = "w";
    for (int a = 0; a < params.n_actions; ++a) {
      uint64_t bits;
      double v = params.at(b, a);
      static_assert(sizeof bits == sizeof v);
      std::memcpy(&bits, &v, sizeof bits);
      std::snprintf(line, sizeof line, " %016llx",
                    static_cast<unsigned long long>(bits));
      row += line;
    }
    out += row + "\n";
  }
  write_text_file(path, out);
}

LoadedPolicy load_policy(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "ipr-policy v1")
    throw DataCorruptionError("bad policy header in " + path);

  LoadedPolicy out;
  long long version = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "dim %d actions %d version %lld",
                  &out.params.dim, &out.params.n_actions, &version) != 3)
    throw DataCorruptionError("bad policy shape line in " + path);
  out.params.version = version;
  if (out.params.dim < 1 || out.params.n_actions < 1)
    throw DataCorruptionError("non-positive policy shape in " + path);

  if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
    throw DataCorruptionError("missing config hash in " + path);
  out.config_hash = line.substr(7);

  out.params.w.reserve(static_cast<size_t>(out.params.dim) *
                       out.params.n_actions);
  for (int b = 0; b < out.params.dim; ++b) {
    if (!std::getline(in, line) || line.rfind("w", 0) != 0)
      throw DataCorruptionError("truncated policy weights in " + path);
    std::istringstream row(line.substr(1));
    std::string hex;
    for (int a = 0; a < out.params.n_actions; ++a) {
      if (!(row >> hex))
        throw DataCorruptionError("short weight row in " + path);
      uint64_t bits = std::stoull(hex, nullptr, 16);
      double v;
      std::memcpy(&v, &bits, sizeof v);
      if (!std::isfinite(v))
        throw DataCorruptionError("non-finite weight in " + path);
      out.params.w.push_back(v);
    }
  }
  return out;
}

}  // namespace ipr
