#pragma once

#include <string>

#include "ipr/env.hpp"
#include "ipr/mixture.hpp"

namespace ipr {

struct SftStageConfig {
  bool enabled = true;
  std::string checkpoint;  // load this instead of training when non-empty
  double lr = 0.1;
  int epochs = 40;
  int batch = 32;
  double tol = 1e-4;
  bool operator==(const SftStageConfig&) const = default;
};

struct OptimizeStageConfig {
  double lr = 0.05;
  int epochs = 20;
  int batch = 32;
  double tol = 1e-4;
  bool operator==(const OptimizeStageConfig&) const = default;
};

struct RmStageConfig {
  std::string checkpoint;  // trained from the scorer dump when empty
  double lr = 0.05;
  int epochs = 40;
  int batch = 32;
  double tol = 1e-6;
  bool operator==(const RmStageConfig&) const = default;
};

// Full run description. Everything a run reads is in here; the run directory
// plus this config reproduces every artifact bit for bit.
struct RunConfig {
  std::string env;  // "shopsim" | "gridhouse"
  uint64_t seed = 0;
  std::string out_dir;   // default runs/<env>-<seed>
  std::string data_dir;  // datasets generated under <out_dir>/data when empty
  int n_samples = 5;     // MC rollouts per scored step
  double tau = 0.0;      // admission margin; defaulted per env when absent
  double beta = 0.2;
  int iterations = 4;
  std::string scorer_mode = "mc";  // "mc" | "exact" | "rm"
  AblationFlags ablation;
  SftStageConfig sft;
  OptimizeStageConfig optimize;
  RmStageConfig rm;
  bool operator==(const RunConfig&) const = default;
};

double default_tau_for(const std::string& env_name);
RunConfig default_run_config(const std::string& env_name, uint64_t seed);

// Strict parse: unknown keys are errors (with a nearest-key suggestion),
// out-of-range values name the offending key path. Missing optional keys take
// defaults; `env` and `seed` are required.
RunConfig parse_config_json(const Json& doc);
RunConfig parse_config(const std::string& path);

// Full rendering with every default explicit; parse(render(c)) == c.
Json render_config(const RunConfig& config);
void save_config(const std::string& path, const RunConfig& config);

// Hash of the experiment identity: everything except where artifacts live.
// Runs differing only in out_dir/data_dir produce byte-identical checkpoints.
std::string config_identity_hash(const RunConfig& config);

}  // namespace ipr
