#include <cmath>

#include "doctest.h"
#include "ipr/pair_builder.hpp"
#include "ipr/shopsim.hpp"
#include "ipr/toy_env.hpp"
#include "test_util.hpp"

using namespace ipr;

namespace {

void check_pair_invariants(const PairBuildResult& result, double tau) {
  CHECK(result.stats.n_step_pairs ==
        static_cast<int>(result.step_pairs.size()));
  CHECK(result.stats.n_traj_pairs ==
        static_cast<int>(result.traj_pairs.size()));
  CHECK(result.stats.n_divergences >= result.stats.n_step_pairs);
  for (const auto& p : result.step_pairs) {
    CHECK(p.win_step_reward.value - p.lose_step_reward.value > tau);
    REQUIRE(!p.win_suffix.steps.empty());
    REQUIRE(!p.lose_suffix.steps.empty());
    CHECK(p.win_suffix.steps[0].action.index !=
          p.lose_suffix.steps[0].action.index);
    CHECK(p.lose_suffix.outcome_reward < p.win_suffix.outcome_reward);
  }
  for (const auto& p : result.traj_pairs)
    CHECK(p.lose_traj.outcome_reward < p.win_traj.outcome_reward);
}

}  // namespace

TEST_CASE("exploration replays the expert prefix then acts greedily") {
  test::ToyFixture fx = test::make_toy_fixture(3, 3, 2);
  PolicyParams agent = test::random_params(3, 40, 1.0);
  const Trajectory& expert = fx.experts[0];

  TrajectorySuffix from_start = explore_from_expert(*fx.env, agent, expert, 1);
  LinearPolicy pol(agent);
  auto rng = SeedKey(0).rng();
  Trajectory scratch =
      rollout(*fx.env, pol, HistoryPrefix{expert.instruction, {}}, 0.0, rng);
  CHECK(glue(HistoryPrefix{expert.instruction, {}}, from_start).steps.size() ==
        scratch.steps.size());
  CHECK(trajectory_line(glue(HistoryPrefix{expert.instruction, {}}, from_start)) ==
        trajectory_line(scratch));

  TrajectorySuffix again = explore_from_expert(*fx.env, agent, expert, 1);
  CHECK(trajectory_line(glue(HistoryPrefix{expert.instruction, {}}, again)) ==
        trajectory_line(scratch));

  CHECK_THROWS_AS(explore_from_expert(*fx.env, agent, expert, 0),
                  ContractViolation);
  CHECK_THROWS_AS(
      explore_from_expert(*fx.env, agent, expert, expert.steps.size() + 1),
      ContractViolation);
}

TEST_CASE("an agent that matches the expert yields no pairs") {
  // Reward table whose best leaf is the all-zeros path, which is exactly what
  // greedy zero weights (lowest-index tie-break) produce.
  std::map<std::string, double> table{{"000", 1.0}, {"001", 0.4}, {"010", 0.3},
                                      {"011", 0.2}, {"100", 0.1}, {"101", 0.1},
                                      {"110", 0.1}, {"111", 0.1}};
  Instruction ins = make_toy_instruction("t", 3, 2, table);
  ToyEnv env(3, 2);
  env.register_task(ins);
  Trajectory expert = test::toy_best_expert(env, ins, 3, 2);
  REQUIRE(expert.outcome_reward == 1.0);

  PolicyParams agent = zero_params(2);
  TrajectorySuffix imitation = explore_from_expert(env, agent, expert, 1);
  CHECK(trajectory_line(glue(HistoryPrefix{ins, {}}, imitation)) ==
        trajectory_line(expert));

  ExactStepScorer scorer(env, zero_params(2));
  PairBuildResult result = build_pairs(env, agent, scorer, {expert}, 0.01);
  CHECK(result.step_pairs.empty());
  CHECK(result.traj_pairs.empty());
  CHECK(result.stats.n_divergences == 0);
  CHECK(result.stats.n_steps == 3);
  CHECK(result.stats.n_tasks == 1);
}

TEST_CASE("admission thresholds match hand-computed exact step rewards") {
  // Expert takes 1 then 1; greedy zero-weight agent takes 0 at both depths.
  std::map<std::string, double> table{{"00", 0.2}, {"01", 0.1}, {"10", 0.1},
                                      {"11", 1.0}};
  Instruction ins = make_toy_instruction("t", 2, 2, table);
  ToyEnv env(2, 2);
  env.register_task(ins);
  Trajectory expert = test::toy_best_expert(env, ins, 2, 2);
  REQUIRE(expert.outcome_reward == 1.0);

  PolicyParams agent = zero_params(2);
  ExactStepScorer scorer(env, zero_params(2));
  PairBuildResult result = build_pairs(env, agent, scorer, {expert}, 0.1);
  check_pair_invariants(result, 0.1);
  REQUIRE(result.step_pairs.size() == 2);
  CHECK(result.stats.n_divergences == 2);

  // Root divergence: uniform continuation values are plain leaf averages.
  const ContrastiveStepPair& root = result.step_pairs[0];
  CHECK(root.prefix.steps.empty());
  CHECK(root.win_step_reward.value == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(root.lose_step_reward.value == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(root.win_step_reward.method == RewardMethod::Exact);
  CHECK(root.win_suffix.outcome_reward == 1.0);
  CHECK(root.lose_suffix.outcome_reward == 0.2);

  // Depth-two divergence terminates immediately: exact leaf values.
  const ContrastiveStepPair& deep = result.step_pairs[1];
  CHECK(deep.prefix.steps.size() == 1);
  CHECK(deep.win_step_reward.value == 1.0);
  CHECK(deep.win_step_reward.method == RewardMethod::Terminal);
  CHECK(deep.lose_step_reward.value == 0.1);

  REQUIRE(result.traj_pairs.size() == 1);
  CHECK(result.traj_pairs[0].win_traj.outcome_reward == 1.0);
  CHECK(result.traj_pairs[0].lose_traj.outcome_reward == 0.2);

  // Raising tau only removes pairs; the admitted sets are nested.
  PairBuildResult mid = build_pairs(env, agent, scorer, {expert}, 0.5);
  REQUIRE(mid.step_pairs.size() == 1);
  CHECK(mid.step_pairs[0].prefix.steps.size() == 1);  // margin 0.9 survives
  PairBuildResult high = build_pairs(env, agent, scorer, {expert}, 0.95);
  CHECK(high.step_pairs.empty());
  CHECK(high.traj_pairs.size() == 1);  // outcome pairs ignore tau
}

TEST_CASE("both admission conditions are necessary") {
  // Two perfect leaves: the agent's divergent path is equally good, so the
  // outcome condition blocks the root pair even though the margin passes.
  std::map<std::string, double> table{{"00", 1.0}, {"01", 0.3}, {"10", 0.2},
                                      {"11", 1.0}};
  Instruction ins = make_toy_instruction("t", 2, 2, table);
  ToyEnv env(2, 2);
  env.register_task(ins);
  Trajectory expert = test::toy_best_expert(env, ins, 2, 2);
  REQUIRE(expert.steps[0].action.index == 0);  // ties break low

  PolicyParams agent = zero_params(2);
  for (int b = 0; b < agent.dim; ++b) agent.at(b, 1) = 1.0;  // always picks 1
  ExactStepScorer scorer(env, zero_params(2));
  PairBuildResult result = build_pairs(env, agent, scorer, {expert}, 0.01);
  check_pair_invariants(result, 0.01);

  // Root: margin 0.65 - 0.60 = 0.05 > tau but the agent's own rollout also
  // earns 1.0, so no pair. Depth two: margin 0.7 and outcome 0.3 < 1.0.
  REQUIRE(result.step_pairs.size() == 1);
  CHECK(result.step_pairs[0].prefix.steps.size() == 1);
  CHECK(result.step_pairs[0].lose_suffix.outcome_reward == 0.3);
  CHECK(result.stats.n_divergences == 2);
  CHECK(result.traj_pairs.empty());  // equal outcomes: no trajectory pair
}

TEST_CASE("a wrong product click is caught and paired on the shop") {
  std::vector<Product> catalog{{"p1", "T", {"a"}, {}, 20.0},
                               {"p2", "W", {}, {}, 10.0}};
  ShopEnv env(catalog);
  Instruction ins{"shopsim", "s0", "buy",
                  Json{{"target_type", "T"},
                       {"required_attributes", {"a"}},
                       {"required_options", Json::array()},
                       {"budget", 50.0}}};
  env.register_task(ins);
  Trajectory expert = shop_expert(env, ins);
  REQUIRE(expert.outcome_reward == 1.0);
  REQUIRE(expert.steps.size() == 3);

  // Weights that search correctly, then insist on the wrong product and buy.
  PolicyParams agent = zero_params(env.action_count());
  for (int b = 0; b < agent.dim; ++b) {
    agent.at(b, env.click_product_action("p2")) = 100.0;
    agent.at(b, env.buy_action()) = 50.0;
  }

  McStepScorer scorer(env, zero_params(env.action_count()), 64,
                      SeedKey(19).with("scorer").seed());
  PairBuildResult result = build_pairs(env, agent, scorer, {expert}, 0.01);
  check_pair_invariants(result, 0.01);

  REQUIRE(result.step_pairs.size() == 1);
  const ContrastiveStepPair& pair = result.step_pairs[0];
  CHECK(pair.prefix.steps.size() == 1);  // diverges right after the search
  CHECK(pair.win_suffix.steps[0].action.index == env.click_product_action("p1"));
  CHECK(pair.lose_suffix.steps[0].action.index == env.click_product_action("p2"));
  CHECK(pair.win_suffix.outcome_reward == 1.0);
  CHECK(pair.lose_suffix.outcome_reward == 0.0);  // type-mismatch purchase

  REQUIRE(result.traj_pairs.size() == 1);
  CHECK(result.traj_pairs[0].win_traj.outcome_reward == 1.0);
  CHECK(result.traj_pairs[0].lose_traj.outcome_reward == 0.0);
  CHECK(result.traj_pairs[0].lose_traj.steps.size() == 3);
}

TEST_CASE("pair files round-trip against the expert set") {
  test::ToyFixture fx = test::make_toy_fixture(3, 3, 6, "mix");
  PolicyParams agent = test::random_params(3, 91, 1.5);
  McStepScorer scorer(*fx.env, test::random_params(3, 92, 0.5), 5,
                      SeedKey(7).with("scorer").seed());
  PairBuildResult built = build_pairs(*fx.env, agent, scorer, fx.experts, 0.0);

  // Same inputs, fresh scorer stream: identical output.
  McStepScorer scorer2(*fx.env, test::random_params(3, 92, 0.5), 5,
                       SeedKey(7).with("scorer").seed());
  PairBuildResult rebuilt = build_pairs(*fx.env, agent, scorer2, fx.experts, 0.0);
  CHECK(rebuilt.step_pairs.size() == built.step_pairs.size());
  CHECK(rebuilt.traj_pairs.size() == built.traj_pairs.size());

  test::TempDir dir;
  save_pairs(dir.file("pairs.jsonl"), built, fx.experts);
  save_pairs(dir.file("pairs2.jsonl"), rebuilt, fx.experts);
  CHECK(read_text_file(dir.file("pairs.jsonl")) ==
        read_text_file(dir.file("pairs2.jsonl")));

  PairBuildResult loaded = load_pairs(dir.file("pairs.jsonl"), fx.experts);
  CHECK(loaded.stats.n_step_pairs == built.stats.n_step_pairs);
  CHECK(loaded.stats.n_traj_pairs == built.stats.n_traj_pairs);
  REQUIRE(loaded.step_pairs.size() == built.step_pairs.size());
  for (size_t i = 0; i < built.step_pairs.size(); ++i) {
    const auto& a = built.step_pairs[i];
    const auto& b = loaded.step_pairs[i];
    CHECK(instruction_to_json(b.prefix.instruction) ==
          instruction_to_json(a.prefix.instruction));
    CHECK(b.prefix.steps.size() == a.prefix.steps.size());
    CHECK(trajectory_line(glue(b.prefix, b.win_suffix)) ==
          trajectory_line(glue(a.prefix, a.win_suffix)));
    CHECK(trajectory_line(glue(b.prefix, b.lose_suffix)) ==
          trajectory_line(glue(a.prefix, a.lose_suffix)));
    CHECK(b.win_step_reward.value == a.win_step_reward.value);
    CHECK(b.lose_step_reward.value == a.lose_step_reward.value);
  }
  REQUIRE(loaded.traj_pairs.size() == built.traj_pairs.size());
  for (size_t i = 0; i < built.traj_pairs.size(); ++i) {
    CHECK(trajectory_line(loaded.traj_pairs[i].win_traj) ==
          trajectory_line(built.traj_pairs[i].win_traj));
    CHECK(trajectory_line(loaded.traj_pairs[i].lose_traj) ==
          trajectory_line(built.traj_pairs[i].lose_traj));
  }

  // Loading against the wrong expert set cannot resolve the content hashes.
  test::ToyFixture other = test::make_toy_fixture(3, 3, 6, "other");
  if (!built.step_pairs.empty() || !built.traj_pairs.empty())
    CHECK_THROWS_AS(load_pairs(dir.file("pairs.jsonl"), other.experts),
                    DataCorruptionError);
}
