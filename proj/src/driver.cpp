#include "ipr/driver.hpp"

#include <filesystem>
#include <fstream>

#include "ipr/common.hpp"
#include "ipr/eval.hpp"
#include "ipr/gridhouse.hpp"
#include "ipr/manifest.hpp"
#include "ipr/mixture.hpp"
#include "ipr/pair_builder.hpp"
#include "ipr/reward_model.hpp"
#include "ipr/scorer.hpp"
#include "ipr/sft.hpp"
#include "ipr/shopsim.hpp"

namespace fs = std::filesystem;

namespace ipr {
namespace {

std::string join(const std::string& dir, const std::string& rel) {
  if (!rel.empty() && rel.front() == '/') return rel;
  return dir + "/" + rel;
}

void record_failure(const std::string& run_dir, const std::string& stage,
                    int iteration, const std::exception& e) {
  Json j;
  j["stage"] = stage;
  j["iteration"] = iteration;
  j["message"] = e.what();
  std::ofstream out(run_dir + "/failures.jsonl", std::ios::app);
  if (out) out << j.dump() << "\n";
}

void append_jsonl(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append to " + path);
  out << j.dump() << "\n";
}

struct DriverState {
  RunConfig config;
  std::string run_dir;
  std::string data_dir;
  std::string config_hash;  // tags every checkpoint written by this run
  std::vector<ManifestEntry> manifest;
  LoadedRun inputs;

  bool covered(const std::string& rel) const {
    return manifest_covers(manifest, run_dir, rel);
  }
  void add_manifest(const std::string& kind, const std::string& name,
                    const std::string& rel) {
    ManifestEntry entry;
    entry.kind = kind;
    entry.name = name;
    entry.path = rel;
    entry.sha256 = sha256_file_hex(join(run_dir, rel));
    append_manifest(run_dir, entry);
    manifest.push_back(entry);
  }
};

void ensure_config(DriverState& st) {
  std::string path = st.run_dir + "/config.json";
  if (fs::exists(path)) {
    RunConfig existing = parse_config(path);
    if (!(existing == st.config))
      throw ConfigError(st.run_dir +
                        " already belongs to a different config; use a fresh "
                        "out_dir or restore the original settings");
  } else {
    save_config(path, st.config);
  }
  st.config_hash = config_identity_hash(st.config);
  if (st.manifest.empty()) {
    ManifestEntry tool;
    tool.kind = "tool";
    tool.name = kToolVersion;
    tool.sha256 = sha256_hex(kToolVersion);
    append_manifest(st.run_dir, tool);
    st.manifest.push_back(tool);
    st.add_manifest("config", "config", "config.json");
  }
}

std::vector<std::string> dataset_files(const RunConfig& config) {
  if (config.env == "shopsim")
    return {"catalog.json", "train.jsonl", "test.jsonl"};
  return {"train.jsonl", "test.jsonl", "unseen.jsonl"};
}

void ensure_datasets(DriverState& st) {
  bool managed = st.config.data_dir.empty();
  bool all_present = true;
  for (const auto& f : dataset_files(st.config)) {
    std::string full = join(st.data_dir, f);
    if (managed ? !st.covered("data/" + f) : !fs::exists(full))
      all_present = false;
  }
  if (!all_present) {
    if (!managed)
      throw ConfigError("data_dir " + st.data_dir +
                        " is missing dataset files; run gen-data first");
    generate_datasets(st.config, st.data_dir);
    for (const auto& f : dataset_files(st.config))
      st.add_manifest("dataset", f, "data/" + f);
  } else if (!managed) {
    // External datasets are pinned by hash on first use.
    for (const auto& f : dataset_files(st.config)) {
      std::string rel = st.data_dir + "/" + f;
      if (!st.covered(rel)) st.add_manifest("dataset", f, rel);
    }
  }
  st.inputs = load_run_inputs(st.config, st.data_dir);
}

PolicyParams ensure_sft(DriverState& st, const StageHook& hook) {
  std::string rel = "checkpoints/sft.json";
  std::string full = join(st.run_dir, rel);
  if (st.covered(rel)) return load_policy(full).params;
  if (hook) hook("sft", 0);
  PolicyParams params;
  if (!st.config.sft.checkpoint.empty()) {
    params = load_policy(st.config.sft.checkpoint).params;
  } else if (st.config.sft.enabled) {
    DescentConfig dc;
    dc.lr = st.config.sft.lr;
    dc.epochs = st.config.sft.epochs;
    dc.batch = st.config.sft.batch;
    dc.tol = st.config.sft.tol;
    dc.seed = SeedKey(st.config.seed).with("sft").seed();
    params = train_sft(*st.inputs.env, zero_params(st.inputs.env->action_count()),
                       st.inputs.experts, dc, st.run_dir + "/metrics/sft.csv");
  } else {
    throw ConfigError(
        "sft.enabled is false and sft.checkpoint is empty: nothing to start from");
  }
  save_policy(full, params, st.config_hash);
  st.add_manifest("checkpoint", "sft", rel);
  return params;
}

PolicyParams ensure_reward_model(DriverState& st, const PolicyParams& sft) {
  std::string rel = "checkpoints/rm.json";
  std::string full = join(st.run_dir, rel);
  if (st.covered(rel)) return load_policy(full).params;
  PolicyParams rm;
  if (!st.config.rm.checkpoint.empty()) {
    rm = load_policy(st.config.rm.checkpoint).params;
  } else {
    // Distill the MC scorer: label every expert step, then regress.
    auto dump = build_scored_step_dump(
        *st.inputs.env, sft, st.inputs.experts, st.config.n_samples,
        SeedKey(st.config.seed).with("scorer").seed());
    std::string dump_rel = "checkpoints/rm-train-steps.jsonl";
    save_scored_steps(join(st.run_dir, dump_rel), dump);
    st.add_manifest("metrics", "rm-train-steps", dump_rel);
    RewardModelConfig rc;
    rc.descent.lr = st.config.rm.lr;
    rc.descent.epochs = st.config.rm.epochs;
    rc.descent.batch = st.config.rm.batch;
    rc.descent.tol = st.config.rm.tol;
    rc.descent.seed = SeedKey(st.config.seed).with("rm").seed();
    rm = train_reward_model(dump, rc).params;
  }
  save_policy(full, rm, st.config_hash);
  st.add_manifest("checkpoint", "rm", rel);
  return rm;
}

SftBaseline ensure_sft_baseline(DriverState& st, const PolicyParams& sft) {
  std::string path = st.run_dir + "/reports/sft.json";
  if (fs::exists(path)) return read_sft_baseline(st.run_dir);
  SftBaseline base;
  base.train_avg_reward =
      evaluate(*st.inputs.env, sft, st.inputs.train).mean_reward;
  base.test_avg_reward = evaluate(*st.inputs.env, sft, st.inputs.test).mean_reward;
  base.avg_reward_per_step = avg_reward_per_step(
      *st.inputs.env, sft, sft, st.inputs.test, st.config.n_samples,
      SeedKey(st.config.seed).with("scorer").seed());
  base.checkpoint_path = "checkpoints/sft.json";
  base.checkpoint_hash = sha256_file_hex(join(st.run_dir, base.checkpoint_path));
  base.params_version = sft.version;
  Json j;
  j["train_avg_reward"] = base.train_avg_reward;
  j["test_avg_reward"] = base.test_avg_reward;
  j["avg_reward_per_step"] = base.avg_reward_per_step;
  j["checkpoint"] = base.checkpoint_path;
  j["checkpoint_hash"] = base.checkpoint_hash;
  j["params_version"] = base.params_version;
  write_text_file(path, j.dump(2) + "\n");
  return base;
}

}  // namespace

void generate_datasets(const RunConfig& config, const std::string& data_dir) {
  fs::create_directories(data_dir);
  if (config.env == "shopsim") {
    ShopDataset ds = generate_shop_dataset(ShopDatasetConfig{}, config.seed);
    save_catalog(data_dir + "/catalog.json", ds.catalog);
    save_instructions(data_dir + "/train.jsonl", ds.train);
    save_instructions(data_dir + "/test.jsonl", ds.test);
  } else if (config.env == "gridhouse") {
    HouseDataset ds = generate_house_dataset(HouseDatasetConfig{}, config.seed);
    save_instructions(data_dir + "/train.jsonl", ds.train);
    save_instructions(data_dir + "/test.jsonl", ds.test_seen);
    save_instructions(data_dir + "/unseen.jsonl", ds.test_unseen);
  } else {
    throw ConfigError("env: expected \"shopsim\" or \"gridhouse\" (got \"" +
                      config.env + "\")");
  }
}

LoadedRun load_run_inputs(const RunConfig& config, const std::string& data_dir) {
  LoadedRun run;
  run.train = load_instructions(data_dir + "/train.jsonl");
  run.test = load_instructions(data_dir + "/test.jsonl");
  if (config.env == "shopsim") {
    auto catalog = load_catalog(data_dir + "/catalog.json");
    run.env = std::make_unique<ShopEnv>(catalog);
  } else if (config.env == "gridhouse") {
    run.unseen = load_instructions(data_dir + "/unseen.jsonl");
    run.env = std::make_unique<HouseEnv>();
  } else {
    throw ConfigError("env: expected \"shopsim\" or \"gridhouse\" (got \"" +
                      config.env + "\")");
  }
  for (const auto& ins : run.train) run.env->register_task(ins);
  for (const auto& ins : run.test) run.env->register_task(ins);
  for (const auto& ins : run.unseen) run.env->register_task(ins);
  run.experts.reserve(run.train.size());
  for (const auto& ins : run.train) {
    if (config.env == "shopsim")
      run.experts.push_back(
          shop_expert(static_cast<const ShopEnv&>(*run.env), ins));
    else
      run.experts.push_back(
          house_expert(static_cast<const HouseEnv&>(*run.env), ins));
  }
  return run;
}

Json iteration_report_to_json(const IterationReport& r) {
  Json j;
  j["iteration"] = r.iteration;
  j["n_step_pairs"] = r.n_step_pairs;
  j["n_traj_pairs"] = r.n_traj_pairs;
  j["train_avg_reward"] = r.train_avg_reward;
  j["test_avg_reward"] = r.test_avg_reward;
  j["avg_reward_per_step"] = r.avg_reward_per_step;
  j["final_loss"] = r.final_loss;
  j["loss_curve"] = r.loss_curve_path;
  j["checkpoint"] = r.checkpoint_path;
  j["checkpoint_hash"] = r.checkpoint_hash;
  j["scorer_hash"] = r.scorer_hash;
  j["params_version"] = r.params_version;
  j["best_test_avg_reward"] = r.best_test_avg_reward;
  j["best_iteration"] = r.best_iteration;
  return j;
}

IterationReport iteration_report_from_json(const Json& j) {
  IterationReport r;
  r.iteration = j.at("iteration").get<int>();
  r.n_step_pairs = j.at("n_step_pairs").get<int>();
  r.n_traj_pairs = j.at("n_traj_pairs").get<int>();
  r.train_avg_reward = j.at("train_avg_reward").get<double>();
  r.test_avg_reward = j.at("test_avg_reward").get<double>();
  r.avg_reward_per_step = j.at("avg_reward_per_step").get<double>();
  r.final_loss = j.at("final_loss").get<double>();
  r.loss_curve_path = j.at("loss_curve").get<std::string>();
  r.checkpoint_path = j.at("checkpoint").get<std::string>();
  r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  r.scorer_hash = j.at("scorer_hash").get<std::string>();
  r.params_version = j.at("params_version").get<uint64_t>();
  r.best_test_avg_reward = j.at("best_test_avg_reward").get<double>();
  r.best_iteration = j.at("best_iteration").get<int>();
  return r;
}

std::vector<IterationReport> read_iteration_reports(const std::string& run_dir) {
  std::vector<IterationReport> reports;
  std::ifstream in(run_dir + "/reports/iterations.jsonl");
  if (!in) return reports;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    reports.push_back(iteration_report_from_json(Json::parse(line)));
  }
  for (size_t i = 0; i < reports.size(); ++i)
    if (reports[i].iteration != static_cast<int>(i) + 1)
      throw DataCorruptionError(run_dir +
                                "/reports/iterations.jsonl is not a contiguous "
                                "iteration sequence");
  return reports;
}

SftBaseline read_sft_baseline(const std::string& run_dir) {
  Json j = Json::parse(read_text_file(run_dir + "/reports/sft.json"));
  SftBaseline base;
  base.train_avg_reward = j.at("train_avg_reward").get<double>();
  base.test_avg_reward = j.at("test_avg_reward").get<double>();
  base.avg_reward_per_step = j.at("avg_reward_per_step").get<double>();
  base.checkpoint_path = j.at("checkpoint").get<std::string>();
  base.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  base.params_version = j.at("params_version").get<uint64_t>();
  return base;
}

RunOutcome run_ipr(const RunConfig& config, const StageHook& hook) {
  DriverState st;
  st.config = config;
  st.run_dir = config.out_dir;
  if (st.run_dir.empty()) throw ConfigError("out_dir: must not be empty");
  st.data_dir =
      config.data_dir.empty() ? st.run_dir + "/data" : config.data_dir;
  for (const char* sub : {"", "/checkpoints", "/pairs", "/metrics", "/reports"})
    fs::create_directories(st.run_dir + sub);

  RunLock lock(st.run_dir);
  std::string stage = "setup";
  int iteration = 0;
  try {
    st.manifest = read_manifest(st.run_dir);
    ensure_config(st);
    verify_manifest(st.run_dir);
    ensure_datasets(st);

    stage = "sft";
    PolicyParams sft = ensure_sft(st, hook);
    std::string sft_hash = sha256_file_hex(join(st.run_dir, "checkpoints/sft.json"));
    SftBaseline baseline = ensure_sft_baseline(st, sft);

    // The scorer is frozen at the SFT snapshot for the whole run; in rm mode
    // the regressor distilled from that snapshot stands in for it.
    std::unique_ptr<StepScorer> scorer;
    std::string scorer_hash = sft_hash;
    uint64_t scorer_seed = SeedKey(config.seed).with("scorer").seed();
    if (config.scorer_mode == "mc") {
      scorer = std::make_unique<McStepScorer>(*st.inputs.env, sft,
                                              config.n_samples, scorer_seed);
    } else if (config.scorer_mode == "exact") {
      scorer = std::make_unique<ExactStepScorer>(*st.inputs.env, sft);
    } else {
      PolicyParams rm = ensure_reward_model(st, sft);
      scorer_hash = sha256_file_hex(join(st.run_dir, "checkpoints/rm.json"));
      scorer = std::make_unique<RmStepScorer>(rm);
    }

    RunOutcome outcome;
    outcome.run_dir = st.run_dir;
    outcome.sft = baseline;
    outcome.reports = read_iteration_reports(st.run_dir);
    for (const auto& r : outcome.reports)
      if (r.scorer_hash != scorer_hash)
        throw DataCorruptionError(
            "iteration " + std::to_string(r.iteration) +
            " was produced with a different scorer; refusing to resume");

    double best_reward = baseline.test_avg_reward;
    int best_iteration = 0;
    for (const auto& r : outcome.reports)
      if (r.test_avg_reward > best_reward) {
        best_reward = r.test_avg_reward;
        best_iteration = r.iteration;
      }

    PolicyParams params =
        outcome.reports.empty()
            ? sft
            : load_policy(join(st.run_dir, outcome.reports.back().checkpoint_path))
                  .params;

    for (int k = static_cast<int>(outcome.reports.size()) + 1;
         k <= config.iterations; ++k) {
      iteration = k;
      IterationReport report;
      report.iteration = k;
      report.scorer_hash = scorer_hash;

      stage = "pairs";
      if (hook) hook(stage, k);
      std::string pairs_rel = "pairs/iter-" + std::to_string(k) + ".jsonl";
      PairBuildResult pairs;
      if (st.covered(pairs_rel)) {
        pairs = load_pairs(join(st.run_dir, pairs_rel), st.inputs.experts);
      } else {
        pairs = build_pairs(*st.inputs.env, params, *scorer, st.inputs.experts,
                            config.tau);
        save_pairs(join(st.run_dir, pairs_rel), pairs, st.inputs.experts);
        st.add_manifest("pairs", "iter-" + std::to_string(k), pairs_rel);
      }
      report.n_step_pairs = static_cast<int>(pairs.step_pairs.size());
      report.n_traj_pairs = static_cast<int>(pairs.traj_pairs.size());

      stage = "optimize";
      if (hook) hook(stage, k);
      OptimizeConfig oc;
      oc.descent.lr = config.optimize.lr;
      oc.descent.epochs = config.optimize.epochs;
      oc.descent.batch = config.optimize.batch;
      oc.descent.tol = config.optimize.tol;
      oc.descent.seed =
          SeedKey(config.seed).with("opt").with(static_cast<uint64_t>(k)).seed();
      oc.beta = config.beta;
      oc.flags = config.ablation;
      report.loss_curve_path = "metrics/iter-" + std::to_string(k) + ".csv";
      PolicyParams ref = params;
      params = optimize_iteration(*st.inputs.env, params, ref, pairs.step_pairs,
                                  pairs.traj_pairs, oc,
                                  join(st.run_dir, report.loss_curve_path));
      report.final_loss = total_loss(*st.inputs.env, params, ref,
                                     pairs.step_pairs, pairs.traj_pairs,
                                     config.beta, config.ablation)
                              .total;

      stage = "evaluate";
      if (hook) hook(stage, k);
      report.train_avg_reward =
          evaluate(*st.inputs.env, params, st.inputs.train).mean_reward;
      report.test_avg_reward =
          evaluate(*st.inputs.env, params, st.inputs.test).mean_reward;
      report.avg_reward_per_step =
          avg_reward_per_step(*st.inputs.env, params, sft, st.inputs.test,
                              config.n_samples, scorer_seed);

      stage = "checkpoint";
      if (hook) hook(stage, k);
      report.checkpoint_path = "checkpoints/iter-" + std::to_string(k) + ".json";
      save_policy(join(st.run_dir, report.checkpoint_path), params,
                  st.config_hash);
      st.add_manifest("checkpoint", "iter-" + std::to_string(k),
                      report.checkpoint_path);
      report.checkpoint_hash =
          sha256_file_hex(join(st.run_dir, report.checkpoint_path));
      report.params_version = params.version;

      stage = "report";
      if (hook) hook(stage, k);
      if (report.test_avg_reward > best_reward) {
        best_reward = report.test_avg_reward;
        best_iteration = k;
      }
      report.best_test_avg_reward = best_reward;
      report.best_iteration = best_iteration;
      append_jsonl(st.run_dir + "/reports/iterations.jsonl",
                   iteration_report_to_json(report));
      outcome.reports.push_back(report);
    }
    return outcome;
  } catch (const std::exception& e) {
    record_failure(st.run_dir, stage, iteration, e);
    throw;
  }
}

}  // namespace ipr
