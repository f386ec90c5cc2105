#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ipr/sft.hpp"
#include "ipr/shopsim.hpp"
#include "ipr/toy_env.hpp"
#include "test_util.hpp"

using namespace ipr;

namespace {

HistoryPrefix fabricated_prefix(int n_steps) {
  Instruction ins{"toy", "t0", "reach the best leaf", Json::object()};
  HistoryPrefix p{ins, {}};
  for (int t = 0; t < n_steps; ++t)
    p.steps.push_back(Step{Action{0, "a"}, Observation{"obs " + std::to_string(t)}});
  return p;
}

double entry_value(const SparseFeatures& f, int bucket) {
  for (const auto& [b, v] : f.entries)
    if (b == bucket) return v;
  return 0.0;
}

}  // namespace

TEST_CASE("features hash the instruction and the last two observations") {
  HistoryPrefix p = fabricated_prefix(3);
  SparseFeatures a = sparse_featurize(p);
  SparseFeatures b = sparse_featurize(p);
  CHECK(a.entries == b.entries);
  CHECK(std::is_sorted(a.entries.begin(), a.entries.end()));

  // Observations outside the last-two window do not contribute.
  HistoryPrefix old_changed = p;
  old_changed.steps[0].obs.text = "something entirely different";
  CHECK(sparse_featurize(old_changed).entries == a.entries);
  HistoryPrefix last_changed = p;
  last_changed.steps[2].obs.text = "something entirely different";
  CHECK(sparse_featurize(last_changed).entries != a.entries);

  // Empty prefix depends only on the instruction text.
  HistoryPrefix e1{Instruction{"toy", "t1", "same text", Json{{"k", 1}}}, {}};
  HistoryPrefix e2{Instruction{"toy", "t2", "same text", Json{{"k", 2}}}, {}};
  CHECK(sparse_featurize(e1).entries == sparse_featurize(e2).entries);

  // Token counts are clipped.
  HistoryPrefix rep{Instruction{"toy", "t3",
                                "a a a a a a a a a a", Json::object()}, {}};
  SparseFeatures f = sparse_featurize(rep);
  double mx = 0.0;
  for (const auto& [bkt, v] : f.entries) {
    CHECK(v > 0.0);
    CHECK(v <= kFeatureClip);
    mx = std::max(mx, v);
  }
  CHECK(mx == kFeatureClip);
}

TEST_CASE("action log-probs form a masked softmax") {
  HistoryPrefix p = fabricated_prefix(1);
  PolicyParams zero = zero_params(6);
  auto lp = action_logprobs(zero, p, {0, 2, 5});
  CHECK(lp.size() == 3);
  for (int a : {0, 2, 5})
    CHECK(lp.at(a) == doctest::Approx(-std::log(3.0)).epsilon(1e-12));

  PolicyParams rand = test::random_params(6, 3, 2.0);
  auto lp2 = action_logprobs(rand, p, {0, 1, 2, 3, 4, 5});
  double mass = 0.0;
  for (const auto& [a, v] : lp2) mass += std::exp(v);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  // Shifting every action's logit by a constant changes nothing.
  PolicyParams shifted = rand;
  for (int b = 0; b < shifted.dim; ++b)
    for (int a = 0; a < shifted.n_actions; ++a) shifted.at(b, a) += 0.37;
  auto lp3 = action_logprobs(shifted, p, {0, 1, 2, 3, 4, 5});
  for (const auto& [a, v] : lp2)
    CHECK(lp3.at(a) == doctest::Approx(v).epsilon(1e-9));

  // A dominant logit takes nearly all the probability.
  PolicyParams big = zero_params(6);
  for (int b = 0; b < big.dim; ++b) big.at(b, 4) = 100.0;
  auto lp4 = action_logprobs(big, p, {0, 4});
  CHECK(std::exp(lp4.at(4)) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(action_logprobs(zero, p, {}), ContractViolation);
}

TEST_CASE("trajectory log-prob sums teacher-forced step log-probs") {
  ToyEnv env(3, 4);
  Instruction ins = make_toy_instruction("t", 3, 4, std::string("s"));
  env.register_task(ins);
  ScriptedPolicy script(4, 0, {1, 2, 0});
  auto rng = SeedKey(0).rng();
  Trajectory traj = rollout(env, script, HistoryPrefix{ins, {}}, 0.0, rng);

  PolicyParams zero = zero_params(4);
  HistoryPrefix empty{ins, {}};
  CHECK(trajectory_logprob(env, zero, empty, suffix_of(traj, 0)) ==
        doctest::Approx(3 * -std::log(4.0)).epsilon(1e-12));
  CHECK(trajectory_logprob(env, zero, prefix_of(traj, 3), suffix_of(traj, 3)) ==
        0.0);
  for (double g : logprob_gradient(env, zero, prefix_of(traj, 3),
                                   suffix_of(traj, 3)))
    CHECK(g == 0.0);

  // Stepwise accumulation under random params matches exactly.
  PolicyParams rand = test::random_params(4, 9, 1.5);
  double stepwise = 0.0;
  EnvState s = env.reset(ins);
  for (size_t t = 0; t < traj.steps.size(); ++t) {
    auto lp = action_logprobs(rand, prefix_of(traj, t), env.legal_actions(s));
    stepwise += lp.at(traj.steps[t].action.index);
    s = env.step(s, traj.steps[t].action.index).state;
  }
  CHECK(trajectory_logprob(env, rand, empty, suffix_of(traj, 0)) ==
        doctest::Approx(stepwise).epsilon(1e-12));
}

TEST_CASE("replay rejects corrupted stored trajectories") {
  std::vector<Product> catalog{{"p1", "T", {"a"}, {}, 10.0}};
  ShopEnv env(catalog);
  Instruction ins{"shopsim", "s0", "buy", Json{{"target_type", "T"},
                                               {"required_attributes", {"a"}},
                                               {"required_options", Json::array()},
                                               {"budget", 40.0}}};
  env.register_task(ins);
  PolicyParams zero = zero_params(env.action_count());

  Trajectory bad_action;
  bad_action.instruction = ins;
  bad_action.steps.push_back(Step{Action{env.buy_action(), "buy"},
                                  Observation{"x"}});
  CHECK_THROWS_AS(trajectory_logprob(env, zero, HistoryPrefix{ins, {}},
                                     suffix_of(bad_action, 0)),
                  DataCorruptionError);

  Trajectory tampered = shop_expert(env, ins);
  tampered.steps.back().obs.text = "edited";
  CHECK_THROWS_AS(compile_trajectory(env, tampered), DataCorruptionError);
  CHECK_THROWS_AS(replay_prefix(env, prefix_of(tampered, tampered.steps.size())),
                  DataCorruptionError);
}

TEST_CASE("log-prob gradient matches closed form and finite differences") {
  ToyEnv env(1, 2);
  Instruction ins = make_toy_instruction("t", 1, 2, std::string("s"));
  env.register_task(ins);
  ScriptedPolicy script(2, 0, {0});
  auto rng = SeedKey(0).rng();
  Trajectory traj = rollout(env, script, HistoryPrefix{ins, {}}, 0.0, rng);
  HistoryPrefix empty{ins, {}};

  // Uniform two-action case: rows are exactly ±feature/2.
  PolicyParams zero = zero_params(2);
  std::vector<double> grad = logprob_gradient(env, zero, empty, suffix_of(traj, 0));
  SparseFeatures f = sparse_featurize(empty);
  for (int b = 0; b < zero.dim; ++b) {
    double v = entry_value(f, b);
    CHECK(grad[b * 2 + 0] == doctest::Approx(0.5 * v).epsilon(1e-12));
    CHECK(grad[b * 2 + 1] == doctest::Approx(-0.5 * v).epsilon(1e-12));
  }

  // Central differences on a deeper tree with random params.
  ToyEnv env3(3, 3);
  Instruction ins3 = make_toy_instruction("t3", 3, 3, std::string("q"));
  env3.register_task(ins3);
  ScriptedPolicy script3(3, 0, {2, 0, 1});
  auto rng3 = SeedKey(0).rng();
  Trajectory traj3 = rollout(env3, script3, HistoryPrefix{ins3, {}}, 0.0, rng3);
  PolicyParams rand = test::random_params(3, 21, 1.0);
  HistoryPrefix empty3{ins3, {}};
  auto loss = [&](const PolicyParams& p) {
    return trajectory_logprob(env3, p, empty3, suffix_of(traj3, 0));
  };
  std::vector<double> g = logprob_gradient(env3, rand, empty3, suffix_of(traj3, 0));
  double max_rel = test::max_fd_error(loss, rand, g, 40);
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("sft loss is the mean negative trajectory log-prob") {
  ToyEnv env(3, 4);
  Instruction ins = make_toy_instruction("t", 3, 4, std::string("s"));
  env.register_task(ins);
  ScriptedPolicy script(4, 0, {1, 2, 0});
  auto rng = SeedKey(0).rng();
  Trajectory traj = rollout(env, script, HistoryPrefix{ins, {}}, 0.0, rng);

  PolicyParams zero = zero_params(4);
  CHECK(sft_loss(env, zero, {traj}) ==
        doctest::Approx(3 * std::log(4.0)).epsilon(1e-12));

  test::ToyFixture fx = test::make_toy_fixture(3, 4, 5);
  PolicyParams rand = test::random_params(4, 33, 1.0);
  double manual = 0.0;
  for (const auto& e : fx.experts)
    manual -= trajectory_logprob(*fx.env, rand, HistoryPrefix{e.instruction, {}},
                                 suffix_of(e, 0));
  manual /= static_cast<double>(fx.experts.size());
  CHECK(sft_loss(*fx.env, rand, fx.experts) ==
        doctest::Approx(manual).epsilon(1e-12));

  // The analytic gradient (mean of negative log-prob gradients) matches FD.
  std::vector<double> g(rand.w.size(), 0.0);
  for (const auto& e : fx.experts) {
    std::vector<double> ge = logprob_gradient(*fx.env, rand,
                                              HistoryPrefix{e.instruction, {}},
                                              suffix_of(e, 0));
    for (size_t i = 0; i < g.size(); ++i) g[i] -= ge[i] / fx.experts.size();
  }
  auto loss = [&](const PolicyParams& p) {
    return sft_loss(*fx.env, p, fx.experts);
  };
  CHECK(test::max_fd_error(loss, rand, g, 40) <= 1e-4);
}

TEST_CASE("sft training converges deterministically with monotone loss") {
  test::ToyFixture fx = test::make_toy_fixture(3, 3, 8);
  DescentConfig cfg;
  cfg.lr = 0.1;
  cfg.epochs = 60;
  cfg.batch = 4;
  cfg.tol = 0.0;
  cfg.seed = SeedKey(42).with("sft").seed();

  test::TempDir dir;
  PolicyParams init = zero_params(3);
  PolicyParams a = train_sft(*fx.env, init, fx.experts, cfg, dir.file("m.csv"));
  PolicyParams b = train_sft(*fx.env, init, fx.experts, cfg);
  CHECK(a.w == b.w);
  CHECK(a.version == b.version);
  CHECK(a.version > init.version);

  std::vector<CompiledTrajectory> compiled;
  for (const auto& e : fx.experts)
    compiled.push_back(compile_trajectory(*fx.env, e));
  CHECK(compiled_sft_loss(a, compiled) < compiled_sft_loss(init, compiled));
  CHECK(action_agreement(a, compiled) >= 0.95);

  // Metrics CSV: header, epoch 0 row, non-increasing loss within tolerance.
  std::istringstream csv(read_text_file(dir.file("m.csv")));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "epoch,loss,train_action_agreement");
  double prev = std::numeric_limits<double>::infinity();
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string epoch, loss;
    REQUIRE(std::getline(row, epoch, ','));
    REQUIRE(std::getline(row, loss, ','));
    if (rows == 0) CHECK(epoch == "0");
    double l = std::strtod(loss.c_str(), nullptr);
    CHECK(l <= prev + 1e-6);
    prev = l;
    ++rows;
  }
  CHECK(rows >= 2);
}

TEST_CASE("descent rejects bad configs and non-finite losses") {
  DescentConfig bad;
  bad.lr = 0.0;
  auto noop_grad = [](const PolicyParams&, const std::vector<int>&,
                      std::vector<double>&) {};
  auto zero_loss = [](const PolicyParams&) { return 0.0; };
  CHECK_THROWS_AS(minibatch_descent(zero_params(2), 1, bad, noop_grad,
                                    zero_loss, nullptr),
                  ConfigError);
  DescentConfig ok;
  auto nan_loss = [](const PolicyParams&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(minibatch_descent(zero_params(2), 1, ok, noop_grad, nan_loss,
                                    nullptr),
                  NumericError);
}

TEST_CASE("policy checkpoints round-trip bit-exactly") {
  PolicyParams p = test::random_params(5, 77, 3.0);
  p.version = 1234;
  test::TempDir dir;
  save_policy(dir.file("p.ckpt"), p, "deadbeef");
  LoadedPolicy back = load_policy(dir.file("p.ckpt"));
  CHECK(back.params.dim == p.dim);
  CHECK(back.params.n_actions == p.n_actions);
  CHECK(back.params.version == p.version);
  CHECK(back.params.w == p.w);
  CHECK(back.config_hash == "deadbeef");

  write_text_file(dir.file("bad.ckpt"), "not a checkpoint\n");
  CHECK_THROWS_AS(load_policy(dir.file("bad.ckpt")), DataCorruptionError);
}
