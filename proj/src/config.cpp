#include "ipr/config.hpp"

#include <algorithm>
#include <fstream>
#include <vector>

#include "ipr/common.hpp"

namespace ipr {
namespace {

// Reads scalars out of one object section, enforcing type and range as it
// goes. Error messages always carry the dotted key path.
class SectionReader {
 public:
  SectionReader(const Json& section, std::string prefix,
                std::vector<std::string> known)
      : section_(section), prefix_(std::move(prefix)), known_(std::move(known)) {
    if (!section_.is_object())
      throw ConfigError(label("") + ": expected an object section");
  }

  void reject_unknown_keys() const {
    for (const auto& item : section_.items()) {
      if (std::find(known_.begin(), known_.end(), item.key()) != known_.end())
        continue;
      std::string message = "unknown key \"" + label(item.key()) + "\"";
      std::string best;
      size_t best_distance = 3;  // suggest only near misses
      for (const auto& candidate : known_) {
        size_t d = edit_distance(item.key(), candidate);
        if (d < best_distance) {
          best_distance = d;
          best = candidate;
        }
      }
      if (!best.empty())
        message += "; did you mean \"" + label(best) + "\"?";
      throw ConfigError(message);
    }
  }

  bool has(const std::string& key) const { return section_.contains(key); }
  const Json& raw(const std::string& key) const { return section_.at(key); }

  void read_string(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    const Json& v = section_.at(key);
    if (!v.is_string())
      throw ConfigError(label(key) + ": expected a string");
    out = v.get<std::string>();
  }

  void read_bool(const std::string& key, bool& out) const {
    if (!has(key)) return;
    const Json& v = section_.at(key);
    if (!v.is_boolean())
      throw ConfigError(label(key) + ": expected true or false");
    out = v.get<bool>();
  }

  void read_uint(const std::string& key, uint64_t& out) const {
    if (!has(key)) return;
    const Json& v = section_.at(key);
    // JSON has no signedness; accept any integer value >= 0 regardless of
    // how the document was built.
    if (v.is_number_unsigned()) {
      out = v.get<uint64_t>();
      return;
    }
    if (v.is_number_integer() && v.get<int64_t>() >= 0) {
      out = static_cast<uint64_t>(v.get<int64_t>());
      return;
    }
    throw ConfigError(label(key) + ": expected a non-negative integer");
  }

  void read_int(const std::string& key, int& out, int min_value) const {
    if (!has(key)) return;
    const Json& v = section_.at(key);
    if (!v.is_number_integer())
      throw ConfigError(label(key) + ": expected an integer");
    int64_t value = v.get<int64_t>();
    if (value < min_value)
      throw ConfigError(label(key) + ": must be >= " + std::to_string(min_value) +
                        " (got " + std::to_string(value) + ")");
    out = static_cast<int>(value);
  }

  void read_double(const std::string& key, double& out, double min_value,
                   bool strict) const {
    if (!has(key)) return;
    const Json& v = section_.at(key);
    if (!v.is_number())
      throw ConfigError(label(key) + ": expected a number");
    double value = v.get<double>();
    bool ok = strict ? value > min_value : value >= min_value;
    if (!ok)
      throw ConfigError(label(key) + ": must be " + (strict ? "> " : ">= ") +
                        format_double(min_value) + " (got " +
                        format_double(value) + ")");
    out = value;
  }

  std::string label(const std::string& key) const {
    if (prefix_.empty()) return key;
    if (key.empty()) return prefix_;
    return prefix_ + "." + key;
  }

 private:
  const Json& section_;
  std::string prefix_;
  std::vector<std::string> known_;
};

void read_descent_like(const SectionReader& r, double& lr, int& epochs,
                       int& batch, double& tol) {
  r.read_double("lr", lr, 0.0, /*strict=*/true);
  r.read_int("epochs", epochs, 1);
  r.read_int("batch", batch, 1);
  r.read_double("tol", tol, 0.0, /*strict=*/false);
}

}  // namespace

double default_tau_for(const std::string& env_name) {
  if (env_name == "shopsim") return 0.01;
  if (env_name == "gridhouse") return 0.5;
  throw ConfigError("env: expected \"shopsim\" or \"gridhouse\" (got \"" +
                    env_name + "\")");
}

RunConfig default_run_config(const std::string& env_name, uint64_t seed) {
  RunConfig config;
  config.env = env_name;
  config.seed = seed;
  config.tau = default_tau_for(env_name);
  config.out_dir = "runs/" + env_name + "-" + std::to_string(seed);
  return config;
}

RunConfig parse_config_json(const Json& doc) {
  SectionReader root(doc, "",
                     {"env", "seed", "out_dir", "data_dir", "n_samples", "tau",
                      "beta", "iterations", "scorer_mode", "ablation", "sft",
                      "optimize", "rm"});
  root.reject_unknown_keys();
  if (!root.has("env")) throw ConfigError("env: required key missing");
  if (!root.has("seed")) throw ConfigError("seed: required key missing");

  RunConfig config;
  root.read_string("env", config.env);
  config.tau = default_tau_for(config.env);  // also validates env
  root.read_uint("seed", config.seed);
  config.out_dir = "runs/" + config.env + "-" + std::to_string(config.seed);
  root.read_string("out_dir", config.out_dir);
  root.read_string("data_dir", config.data_dir);
  root.read_int("n_samples", config.n_samples, 1);
  root.read_double("tau", config.tau, 0.0, /*strict=*/false);
  root.read_double("beta", config.beta, 0.0, /*strict=*/true);
  root.read_int("iterations", config.iterations, 1);
  root.read_string("scorer_mode", config.scorer_mode);
  if (config.scorer_mode != "mc" && config.scorer_mode != "exact" &&
      config.scorer_mode != "rm")
    throw ConfigError("scorer_mode: expected \"mc\", \"exact\" or \"rm\" (got \"" +
                      config.scorer_mode + "\")");

  if (root.has("ablation")) {
    SectionReader r(root.raw("ablation"), "ablation", {"odpo", "sdpo", "sft"});
    r.reject_unknown_keys();
    r.read_bool("odpo", config.ablation.use_odpo);
    r.read_bool("sdpo", config.ablation.use_sdpo);
    r.read_bool("sft", config.ablation.use_sft);
  }
  if (root.has("sft")) {
    SectionReader r(root.raw("sft"), "sft",
                    {"enabled", "checkpoint", "lr", "epochs", "batch", "tol"});
    r.reject_unknown_keys();
    r.read_bool("enabled", config.sft.enabled);
    r.read_string("checkpoint", config.sft.checkpoint);
    read_descent_like(r, config.sft.lr, config.sft.epochs, config.sft.batch,
                      config.sft.tol);
  }
  if (root.has("optimize")) {
    SectionReader r(root.raw("optimize"), "optimize",
                    {"lr", "epochs", "batch", "tol"});
    r.reject_unknown_keys();
    read_descent_like(r, config.optimize.lr, config.optimize.epochs,
                      config.optimize.batch, config.optimize.tol);
  }
  if (root.has("rm")) {
    SectionReader r(root.raw("rm"), "rm",
                    {"checkpoint", "lr", "epochs", "batch", "tol"});
    r.reject_unknown_keys();
    r.read_string("checkpoint", config.rm.checkpoint);
    read_descent_like(r, config.rm.lr, config.rm.epochs, config.rm.batch,
                      config.rm.tol);
  }
  return config;
}

RunConfig parse_config(const std::string& path) {
  Json doc;
  try {
    doc = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config_json(doc);
}

Json render_config(const RunConfig& config) {
  Json doc;
  doc["env"] = config.env;
  doc["seed"] = config.seed;
  doc["out_dir"] = config.out_dir;
  doc["data_dir"] = config.data_dir;
  doc["n_samples"] = config.n_samples;
  doc["tau"] = config.tau;
  doc["beta"] = config.beta;
  doc["iterations"] = config.iterations;
  doc["scorer_mode"] = config.scorer_mode;
  doc["ablation"] = {{"odpo", config.ablation.use_odpo},
                     {"sdpo", config.ablation.use_sdpo},
                     {"sft", config.ablation.use_sft}};
  doc["sft"] = {{"enabled", config.sft.enabled},
                {"checkpoint", config.sft.checkpoint},
                {"lr", config.sft.lr},
                {"epochs", config.sft.epochs},
                {"batch", config.sft.batch},
                {"tol", config.sft.tol}};
  doc["optimize"] = {{"lr", config.optimize.lr},
                     {"epochs", config.optimize.epochs},
                     {"batch", config.optimize.batch},
                     {"tol", config.optimize.tol}};
  doc["rm"] = {{"checkpoint", config.rm.checkpoint},
               {"lr", config.rm.lr},
               {"epochs", config.rm.epochs},
               {"batch", config.rm.batch},
               {"tol", config.rm.tol}};
  return doc;
}

void save_config(const std::string& path, const RunConfig& config) {
  write_text_file(path, render_config(config).dump(2) + "\n");
}

std::string config_identity_hash(const RunConfig& config) {
  Json j = render_config(config);
  j.erase("out_dir");
  j.erase("data_dir");
  return sha256_hex(j.dump());
}

}  // namespace ipr
