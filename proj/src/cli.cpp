#include "ipr/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ipr/common.hpp"
#include "ipr/driver.hpp"
#include "ipr/eval.hpp"
#include "ipr/manifest.hpp"
#include "ipr/mixture.hpp"
#include "ipr/pair_builder.hpp"
#include "ipr/report.hpp"
#include "ipr/reward_model.hpp"
#include "ipr/scorer.hpp"
#include "ipr/sft.hpp"
#include "ipr/shopsim.hpp"
#include "ipr/toy_env.hpp"

namespace fs = std::filesystem;

namespace ipr {
namespace {

LoadedRun load_inputs(const std::string& env_name, const std::string& data_dir) {
  RunConfig rc = default_run_config(env_name, 0);
  return load_run_inputs(rc, data_dir);
}

// Ties a standalone checkpoint to the exact flags that produced it.
std::string flags_hash(const std::string& description) {
  return sha256_hex(description);
}

std::unique_ptr<StepScorer> make_scorer(const Environment& env,
                                        const std::string& mode,
                                        const PolicyParams& scorer_params,
                                        const std::string& rm_path,
                                        int n_samples, uint64_t seed) {
  if (mode == "mc")
    return std::make_unique<McStepScorer>(env, scorer_params, n_samples,
                                          SeedKey(seed).with("scorer").seed());
  if (mode == "exact")
    return std::make_unique<ExactStepScorer>(env, scorer_params);
  if (mode == "rm") {
    if (rm_path.empty())
      throw ConfigError("--scorer-mode rm requires --rm CKPT");
    return std::make_unique<RmStepScorer>(load_policy(rm_path).params);
  }
  throw ConfigError("--scorer-mode: expected mc, exact or rm (got \"" + mode +
                    "\")");
}

// Highest-reward leaf path, first in action order on ties.
Trajectory toy_expert(const ToyEnv& env, const Instruction& ins, int depth,
                      int branching) {
  std::vector<int> path(depth, 0), best(depth, 0);
  double best_reward = -1.0;
  while (true) {
    std::string key;
    for (int d : path) key += static_cast<char>('0' + d);
    double r = env.leaf_reward(ins, key);
    if (r > best_reward) {
      best_reward = r;
      best = path;
    }
    int i = depth - 1;
    while (i >= 0 && ++path[i] == branching) path[i--] = 0;
    if (i < 0) break;
  }
  ScriptedPolicy script(branching, 0, best);
  std::mt19937_64 rng(0);
  return rollout(env, script, HistoryPrefix{ins, {}}, 0.0, rng);
}

int run_command(const RunConfig& config) {
  RunOutcome outcome = run_ipr(config);
  std::printf("sft: test_avg_reward=%s\n",
              format_double(outcome.sft.test_avg_reward).c_str());
  for (const auto& r : outcome.reports)
    std::printf("iter %d: step_pairs=%d traj_pairs=%d test=%s best=%s@%d\n",
                r.iteration, r.n_step_pairs, r.n_traj_pairs,
                format_double(r.test_avg_reward).c_str(),
                format_double(r.best_test_avg_reward).c_str(),
                r.best_iteration);
  if (!outcome.reports.empty()) {
    const auto& last = outcome.reports.back();
    std::printf("best: iteration %d test_avg_reward=%s\n", last.best_iteration,
                format_double(last.best_test_avg_reward).c_str());
  }
  return 0;
}

}  // namespace

int ipr_main(int argc, char** argv) {
  CLI::App app{"Iterative step-level process refinement for text agents"};
  app.require_subcommand(1);

  // --- gen-data ---
  auto* gen = app.add_subcommand("gen-data", "Generate a dataset directory");
  std::string gen_env, gen_out;
  uint64_t gen_seed = 0;
  gen->add_option("--env", gen_env, "shopsim or gridhouse")->required();
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->callback([&] {
    RunConfig rc = default_run_config(gen_env, gen_seed);
    generate_datasets(rc, gen_out);
    LoadedRun run = load_inputs(gen_env, gen_out);
    std::printf("%s: %zu train, %zu test%s tasks -> %s\n", gen_env.c_str(),
                run.train.size(), run.test.size(),
                run.unseen.empty()
                    ? ""
                    : (" (+" + std::to_string(run.unseen.size()) + " unseen)")
                          .c_str(),
                gen_out.c_str());
  });

  // --- sft ---
  auto* sft = app.add_subcommand("sft", "Train the base agent on the experts");
  std::string sft_env, sft_data, sft_out, sft_metrics;
  uint64_t sft_seed = 0;
  SftStageConfig sft_cfg;
  sft->add_option("--env", sft_env)->required();
  sft->add_option("--data", sft_data, "dataset directory")->required();
  sft->add_option("--seed", sft_seed)->required();
  sft->add_option("--out", sft_out, "checkpoint path")->required();
  sft->add_option("--lr", sft_cfg.lr);
  sft->add_option("--epochs", sft_cfg.epochs);
  sft->add_option("--batch", sft_cfg.batch);
  sft->add_option("--tol", sft_cfg.tol);
  sft->add_option("--metrics", sft_metrics, "per-epoch CSV path");
  sft->callback([&] {
    LoadedRun run = load_inputs(sft_env, sft_data);
    DescentConfig dc{.lr = sft_cfg.lr, .epochs = sft_cfg.epochs,
                     .batch = sft_cfg.batch, .tol = sft_cfg.tol,
                     .seed = SeedKey(sft_seed).with("sft").seed()};
    PolicyParams params =
        train_sft(*run.env, zero_params(run.env->action_count()), run.experts,
                  dc, sft_metrics);
    save_policy(sft_out, params,
                flags_hash("sft env=" + sft_env + " seed=" +
                           std::to_string(sft_seed)));
    double train = evaluate(*run.env, params, run.train).mean_reward;
    double test = evaluate(*run.env, params, run.test).mean_reward;
    std::printf("sft: train=%s test=%s -> %s\n", format_double(train).c_str(),
                format_double(test).c_str(), sft_out.c_str());
  });

  // --- build-pairs ---
  auto* bp = app.add_subcommand("build-pairs",
                                "Scan expert steps and admit contrastive pairs");
  std::string bp_env, bp_data, bp_agent, bp_scorer, bp_rm, bp_out;
  std::string bp_mode = "mc";
  double bp_tau = -1.0;
  int bp_n = 5;
  uint64_t bp_seed = 0;
  bp->add_option("--env", bp_env)->required();
  bp->add_option("--data", bp_data)->required();
  bp->add_option("--agent", bp_agent, "agent checkpoint")->required();
  bp->add_option("--scorer", bp_scorer, "frozen scorer checkpoint")->required();
  bp->add_option("--tau", bp_tau, "admission margin (default per env)");
  bp->add_option("--n-samples", bp_n, "MC rollouts per scored step");
  bp->add_option("--seed", bp_seed);
  bp->add_option("--scorer-mode", bp_mode, "mc, exact or rm");
  bp->add_option("--rm", bp_rm, "reward model checkpoint for --scorer-mode rm");
  bp->add_option("--out", bp_out, "pair file")->required();
  bp->callback([&] {
    LoadedRun run = load_inputs(bp_env, bp_data);
    if (bp_tau < 0) bp_tau = default_tau_for(bp_env);
    PolicyParams agent = load_policy(bp_agent).params;
    PolicyParams scorer_params = load_policy(bp_scorer).params;
    auto scorer =
        make_scorer(*run.env, bp_mode, scorer_params, bp_rm, bp_n, bp_seed);
    PairBuildResult pairs =
        build_pairs(*run.env, agent, *scorer, run.experts, bp_tau);
    save_pairs(bp_out, pairs, run.experts);
    std::printf(
        "scanned %d steps on %d tasks: %d divergences, %d step pairs, %d "
        "trajectory pairs -> %s\n",
        pairs.stats.n_steps, pairs.stats.n_tasks, pairs.stats.n_divergences,
        pairs.stats.n_step_pairs, pairs.stats.n_traj_pairs, bp_out.c_str());
  });

  // --- optimize ---
  auto* opt = app.add_subcommand("optimize",
                                 "One mixture-objective pass over a pair set");
  std::string opt_env, opt_data, opt_agent, opt_ref, opt_pairs, opt_out,
      opt_metrics;
  OptimizeStageConfig opt_cfg;
  double opt_beta = 0.2;
  uint64_t opt_seed = 0;
  bool no_odpo = false, no_sdpo = false, no_sft = false;
  opt->add_option("--env", opt_env)->required();
  opt->add_option("--data", opt_data)->required();
  opt->add_option("--agent", opt_agent, "starting checkpoint")->required();
  opt->add_option("--ref", opt_ref, "reference checkpoint")->required();
  opt->add_option("--pairs", opt_pairs, "pair file")->required();
  opt->add_option("--out", opt_out, "output checkpoint")->required();
  opt->add_option("--beta", opt_beta);
  opt->add_option("--lr", opt_cfg.lr);
  opt->add_option("--epochs", opt_cfg.epochs);
  opt->add_option("--batch", opt_cfg.batch);
  opt->add_option("--tol", opt_cfg.tol);
  opt->add_option("--seed", opt_seed);
  opt->add_option("--metrics", opt_metrics, "per-epoch CSV path");
  opt->add_flag("--no-odpo", no_odpo, "drop the outcome-preference term");
  opt->add_flag("--no-sdpo", no_sdpo, "drop the step-preference term");
  opt->add_flag("--no-sft", no_sft, "drop the win-trajectory SFT term");
  opt->callback([&] {
    LoadedRun run = load_inputs(opt_env, opt_data);
    PolicyParams agent = load_policy(opt_agent).params;
    PolicyParams ref = load_policy(opt_ref).params;
    PairBuildResult pairs = load_pairs(opt_pairs, run.experts);
    OptimizeConfig oc;
    oc.descent.lr = opt_cfg.lr;
    oc.descent.epochs = opt_cfg.epochs;
    oc.descent.batch = opt_cfg.batch;
    oc.descent.tol = opt_cfg.tol;
    oc.descent.seed = SeedKey(opt_seed).with("opt").with(uint64_t{1}).seed();
    oc.beta = opt_beta;
    oc.flags = AblationFlags{!no_odpo, !no_sdpo, !no_sft};
    PolicyParams tuned =
        optimize_iteration(*run.env, agent, ref, pairs.step_pairs,
                           pairs.traj_pairs, oc, opt_metrics);
    save_policy(opt_out, tuned,
                flags_hash("optimize beta=" + format_double(opt_beta)));
    LossBreakdown loss =
        total_loss(*run.env, tuned, ref, pairs.step_pairs, pairs.traj_pairs,
                   opt_beta, oc.flags);
    std::printf("optimize: L_odpo=%s L_sdpo=%s L_sft=%s total=%s -> %s\n",
                format_double(loss.odpo).c_str(),
                format_double(loss.sdpo).c_str(),
                format_double(loss.sft).c_str(),
                format_double(loss.total).c_str(), opt_out.c_str());
  });

  // --- run ---
  auto* runc = app.add_subcommand("run", "Full iterative refinement loop");
  std::string run_config_path;
  runc->add_option("--config", run_config_path, "run config file")->required();
  runc->callback([&] { run_command(parse_config(run_config_path)); });

  // --- eval ---
  auto* ev = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  std::string ev_env, ev_data, ev_ckpt, ev_out;
  std::string ev_split = "test";
  ev->add_option("--env", ev_env)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--ckpt", ev_ckpt)->required();
  ev->add_option("--split", ev_split, "train, test or unseen");
  ev->add_option("--out", ev_out, "per-task CSV path");
  ev->callback([&] {
    LoadedRun run = load_inputs(ev_env, ev_data);
    const std::vector<Instruction>* tasks = &run.test;
    if (ev_split == "train") tasks = &run.train;
    else if (ev_split == "unseen") tasks = &run.unseen;
    else if (ev_split != "test")
      throw ConfigError("--split: expected train, test or unseen (got \"" +
                        ev_split + "\")");
    if (tasks->empty())
      throw ConfigError("--split " + ev_split + ": split is empty");
    EvalResult result =
        evaluate(*run.env, load_policy(ev_ckpt).params, *tasks);
    if (!ev_out.empty()) write_text_file(ev_out, eval_csv(result));
    std::printf("%s %s: mean reward %s over %zu tasks\n", ev_env.c_str(),
                ev_split.c_str(), format_double(result.mean_reward).c_str(),
                result.records.size());
  });

  // --- analyze ---
  auto* an = app.add_subcommand("analyze", "Scoring and step-reward analysis");
  an->require_subcommand(1);

  auto* acc = an->add_subcommand(
      "step-accuracy", "Scorer-vs-ground-truth agreement across sample counts");
  std::string acc_env = "shopsim", acc_data, acc_agent, acc_scorer, acc_out;
  double acc_tau = 0.0;
  uint64_t acc_seed = 0;
  int acc_depth = 3, acc_branching = 3, acc_tasks = 20;
  acc->add_option("--env", acc_env, "shopsim or toy");
  acc->add_option("--data", acc_data, "dataset directory (shopsim)");
  acc->add_option("--agent", acc_agent, "agent checkpoint")->required();
  acc->add_option("--scorer", acc_scorer, "scorer checkpoint")->required();
  acc->add_option("--tau", acc_tau, "minimum imposed-order margin");
  acc->add_option("--seed", acc_seed);
  acc->add_option("--depth", acc_depth, "toy tree depth");
  acc->add_option("--branching", acc_branching, "toy branching factor");
  acc->add_option("--n-tasks", acc_tasks, "toy task count");
  acc->add_option("--out", acc_out, "CSV path")->required();
  acc->callback([&] {
    PolicyParams agent = load_policy(acc_agent).params;
    PolicyParams scorer_params = load_policy(acc_scorer).params;
    std::vector<AccuracyPoint> sweep;
    if (acc_env == "shopsim") {
      if (acc_data.empty()) throw ConfigError("--data: required for shopsim");
      LoadedRun run = load_inputs(acc_env, acc_data);
      const auto& shop = static_cast<const ShopEnv&>(*run.env);
      GroundTruthFn truth = [&](const HistoryPrefix& hp) {
        EnvState s = replay_prefix(shop, hp);
        return shop.heuristic_page_score(shop_goal_from_instruction(hp.instruction), s);
      };
      sweep = step_reward_accuracy_sweep(*run.env, agent, scorer_params,
                                         run.experts, acc_tau, truth, acc_seed);
    } else if (acc_env == "toy") {
      ToyEnv toy(acc_depth, acc_branching);
      std::vector<Trajectory> experts;
      for (int i = 0; i < acc_tasks; ++i) {
        Instruction ins =
            make_toy_instruction("toy-" + std::to_string(i), acc_depth,
                                 acc_branching, "salt-" + std::to_string(i));
        toy.register_task(ins);
        experts.push_back(toy_expert(toy, ins, acc_depth, acc_branching));
      }
      GroundTruthFn truth = [&](const HistoryPrefix& hp) {
        return exact_step_reward(toy, scorer_params, hp).value;
      };
      sweep = step_reward_accuracy_sweep(toy, agent, scorer_params, experts,
                                         acc_tau, truth, acc_seed);
    } else {
      throw ConfigError("--env: expected shopsim or toy (got \"" + acc_env +
                        "\")");
    }
    write_text_file(acc_out, accuracy_sweep_csv(sweep));
    std::printf("accuracy sweep -> %s\n", acc_out.c_str());
  });

  auto* bars = an->add_subcommand(
      "step-reward", "Per-checkpoint average reward per step of a run");
  std::string bars_run, bars_out;
  bars->add_option("--run", bars_run, "run directory")->required();
  bars->add_option("--out", bars_out, "CSV path (default under the run)");
  bars->callback([&] {
    if (bars_out.empty()) {
      fs::create_directories(bars_run + "/analysis");
      bars_out = bars_run + "/analysis/step_reward.csv";
    }
    write_run_tables(bars_run, bars_run + "/analysis/.tables-tmp");
    fs::copy_file(bars_run + "/analysis/.tables-tmp/step_reward.csv", bars_out,
                  fs::copy_options::overwrite_existing);
    fs::remove_all(bars_run + "/analysis/.tables-tmp");
    std::printf("step-reward series -> %s\n", bars_out.c_str());
  });

  auto* dump = an->add_subcommand(
      "score-dump", "Score every expert step and dump the labeled records");
  std::string dump_env, dump_data, dump_scorer, dump_out;
  int dump_n = 5;
  uint64_t dump_seed = 0;
  dump->add_option("--env", dump_env)->required();
  dump->add_option("--data", dump_data)->required();
  dump->add_option("--scorer", dump_scorer, "scorer checkpoint")->required();
  dump->add_option("--n-samples", dump_n);
  dump->add_option("--seed", dump_seed);
  dump->add_option("--out", dump_out, "JSONL path")->required();
  dump->callback([&] {
    LoadedRun run = load_inputs(dump_env, dump_data);
    auto records = build_scored_step_dump(
        *run.env, load_policy(dump_scorer).params, run.experts, dump_n,
        SeedKey(dump_seed).with("scorer").seed());
    save_scored_steps(dump_out, records);
    std::printf("%zu scored steps -> %s\n", records.size(), dump_out.c_str());
  });

  // --- train-rm ---
  auto* rm = app.add_subcommand("train-rm",
                                "Regress step rewards from a scored-step dump");
  std::string rm_steps, rm_out;
  uint64_t rm_seed = 0;
  RmStageConfig rm_cfg;
  rm->add_option("--steps", rm_steps, "scored-step dump")->required();
  rm->add_option("--out", rm_out, "checkpoint path")->required();
  rm->add_option("--seed", rm_seed);
  rm->add_option("--lr", rm_cfg.lr);
  rm->add_option("--epochs", rm_cfg.epochs);
  rm->add_option("--batch", rm_cfg.batch);
  rm->add_option("--tol", rm_cfg.tol);
  rm->callback([&] {
    auto dump_records = load_scored_steps(rm_steps);
    RewardModelConfig rc;
    rc.descent.lr = rm_cfg.lr;
    rc.descent.epochs = rm_cfg.epochs;
    rc.descent.batch = rm_cfg.batch;
    rc.descent.tol = rm_cfg.tol;
    rc.descent.seed = SeedKey(rm_seed).with("rm").seed();
    TrainedRewardModel model = train_reward_model(dump_records, rc);
    save_policy(rm_out, model.params,
                flags_hash("train-rm seed=" + std::to_string(rm_seed)));
    std::printf(
        "rm: train_mse=%s heldout_mse=%s heldout_label_variance=%s "
        "(%d train / %d heldout steps) -> %s\n",
        format_double(model.train_mse).c_str(),
        format_double(model.heldout_mse).c_str(),
        format_double(model.heldout_label_variance).c_str(),
        model.n_train_steps, model.n_heldout_steps, rm_out.c_str());
  });

  // --- report ---
  auto* rep = app.add_subcommand("report", "Emit iteration and ablation tables");
  std::vector<std::string> rep_dirs;
  std::string rep_out;
  rep->add_option("dirs", rep_dirs, "run directories")->required();
  rep->add_option("--out", rep_out, "table directory (default <first>/tables)");
  rep->callback([&] {
    if (rep_out.empty()) rep_out = rep_dirs.front() + "/tables";
    write_report_tables(rep_dirs, rep_out);
    std::printf("tables -> %s\n", rep_out.c_str());
  });

  // --- policy inspect ---
  auto* pol = app.add_subcommand("policy", "Checkpoint utilities");
  pol->require_subcommand(1);
  auto* inspect = pol->add_subcommand("inspect", "Print checkpoint facts");
  std::string inspect_path;
  inspect->add_option("ckpt", inspect_path, "checkpoint path")->required();
  inspect->callback([&] {
    LoadedPolicy loaded = load_policy(inspect_path);
    const PolicyParams& p = loaded.params;
    double l2 = 0.0, max_abs = 0.0;
    size_t nonzero = 0;
    for (double w : p.w) {
      l2 += w * w;
      max_abs = std::max(max_abs, std::fabs(w));
      if (w != 0.0) ++nonzero;
    }
    std::printf("path: %s\n", inspect_path.c_str());
    std::printf("actions: %d\n", p.n_actions);
    std::printf("dim: %d\n", p.dim);
    std::printf("version: %llu\n", static_cast<unsigned long long>(p.version));
    std::printf("config_hash: %s\n", loaded.config_hash.c_str());
    std::printf("l2_norm: %s\n", format_double(std::sqrt(l2)).c_str());
    std::printf("max_abs: %s\n", format_double(max_abs).c_str());
    std::printf("nonzero: %zu/%zu\n", nonzero, p.w.size());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace ipr
