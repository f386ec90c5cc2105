#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

#include "doctest.h"
#include "ipr/gridhouse.hpp"
#include "ipr/shopsim.hpp"
#include "ipr/toy_env.hpp"
#include "test_util.hpp"

using namespace ipr;

namespace {

Trajectory toy_rollout(const ToyEnv& env, const Instruction& ins,
                       const std::vector<int>& actions) {
  ScriptedPolicy pol(env.action_count(), 0, actions);
  auto rng = SeedKey(0).with("toy").rng();
  return rollout(env, pol, HistoryPrefix{ins, {}}, 0.0, rng);
}

// Environment-level shortest distance to goal, independent of the planner.
int house_bfs_distance(const HouseEnv& env, const Instruction& ins, int cap) {
  auto key = [&](const EnvState& s) {
    const auto& p = dynamic_cast<const HousePayload&>(*s.payload);
    std::ostringstream os;
    os << p.agent_loc << '|' << p.inventory << '|';
    for (bool b : p.open) os << (b ? '1' : '0');
    for (const auto& [o, r] : p.object_loc) os << '|' << o << ':' << r;
    for (const auto& [o, t] : p.object_temp) os << '|' << o << '=' << temp_name(t);
    return os.str();
  };
  std::deque<std::pair<EnvState, int>> queue{{env.reset(ins), 0}};
  std::set<std::string> seen{key(queue.front().first)};
  while (!queue.empty()) {
    auto [state, dist] = queue.front();
    queue.pop_front();
    if (dist >= cap) continue;
    for (int a : env.legal_actions(state)) {
      StepResult r = env.step(state, a);
      if (r.terminal) {
        if (env.score_outcome(r.state) == 1.0) return dist + 1;
        continue;
      }
      if (seen.insert(key(r.state)).second) queue.emplace_back(r.state, dist + 1);
    }
  }
  return -1;
}

}  // namespace

TEST_CASE("prefix/suffix gluing reconstructs the trajectory at every split") {
  ToyEnv env(3, 2);
  Instruction ins = make_toy_instruction("t", 3, 2, std::string("salt"));
  env.register_task(ins);
  Trajectory traj = toy_rollout(env, ins, {1, 0, 1});
  REQUIRE(traj.steps.size() == 3);
  for (size_t t = 0; t <= traj.steps.size(); ++t) {
    HistoryPrefix pre = prefix_of(traj, t);
    TrajectorySuffix suf = suffix_of(traj, t);
    CHECK(pre.steps.size() == t);
    CHECK(suf.steps.size() == traj.steps.size() - t);
    Trajectory glued = glue(pre, suf);
    CHECK(trajectory_line(glued) == trajectory_line(traj));
  }
}

TEST_CASE("toy env pays the tabulated leaf reward") {
  std::map<std::string, double> table{{"00", 0.25}, {"01", 1.0}, {"10", 0.0},
                                      {"11", 0.5}};
  Instruction ins = make_toy_instruction("t", 2, 2, table);
  ToyEnv env(2, 2);
  env.register_task(ins);
  CHECK(toy_rollout(env, ins, {0, 1}).outcome_reward == 1.0);
  CHECK(toy_rollout(env, ins, {1, 1}).outcome_reward == 0.5);
  CHECK(env.leaf_reward(ins, "00") == 0.25);
  EnvState mid = env.step(env.reset(ins), 0).state;
  CHECK_THROWS_AS(env.score_outcome(mid), ContractViolation);
}

TEST_CASE("rollouts are reproducible and replayable") {
  test::ToyFixture fx = test::make_toy_fixture(3, 3, 4);
  const ToyEnv& env = *fx.env;
  LinearPolicy pol(test::random_params(3, 11, 1.0));
  for (const Instruction& ins : fx.tasks) {
    auto r1 = SeedKey(5).with(ins.task_id).rng();
    auto r2 = SeedKey(5).with(ins.task_id).rng();
    Trajectory a = rollout(env, pol, HistoryPrefix{ins, {}}, 1.0, r1);
    Trajectory b = rollout(env, pol, HistoryPrefix{ins, {}}, 1.0, r2);
    CHECK(trajectory_line(a) == trajectory_line(b));
    // Replaying the stored steps must reproduce every observation.
    EnvState end = replay_prefix(env, prefix_of(a, a.steps.size()));
    CHECK(end.terminal);
    CHECK(env.score_outcome(end) == a.outcome_reward);
    // A scripted policy over the recorded actions reproduces the trajectory
    // from any split point.
    std::vector<int> tail;
    for (size_t t = 1; t < a.steps.size(); ++t) tail.push_back(a.steps[t].action.index);
    ScriptedPolicy replayer(env.action_count(), 1, tail);
    auto r3 = SeedKey(6).rng();
    Trajectory c = rollout(env, replayer, prefix_of(a, 1), 0.0, r3);
    CHECK(trajectory_line(c) == trajectory_line(a));
  }
}

TEST_CASE("select_action masks illegal actions and breaks ties low") {
  auto rng = SeedKey(1).rng();
  std::vector<double> logits{5.0, 1.0, 1.0, -2.0};
  CHECK(select_action(logits, {1, 2, 3}, 0.0, rng) == 1);  // 0 masked, tie 1 vs 2
  CHECK(select_action(logits, {0, 1, 2, 3}, 0.0, rng) == 0);
  for (int i = 0; i < 200; ++i)
    CHECK(select_action(logits, {1, 3}, 1.0, rng) != 0);
}

TEST_CASE("trajectory serialization round-trips and hashes content") {
  ToyEnv env(2, 2);
  Instruction ins = make_toy_instruction("t", 2, 2, std::string("s"));
  env.register_task(ins);
  Trajectory a = toy_rollout(env, ins, {0, 1});
  Trajectory b = trajectory_from_json(trajectory_to_json(a));
  CHECK(trajectory_line(b) == trajectory_line(a));
  CHECK(trajectory_content_hash(b) == trajectory_content_hash(a));
  Trajectory c = toy_rollout(env, ins, {1, 1});
  CHECK(trajectory_content_hash(c) != trajectory_content_hash(a));

  test::TempDir dir;
  save_trajectories(dir.file("t.jsonl"), {a, c});
  auto loaded = load_trajectories(dir.file("t.jsonl"));
  REQUIRE(loaded.size() == 2);
  CHECK(trajectory_line(loaded[0]) == trajectory_line(a));
  CHECK(trajectory_line(loaded[1]) == trajectory_line(c));

  save_instructions(dir.file("i.jsonl"), {ins});
  auto ins2 = load_instructions(dir.file("i.jsonl"));
  REQUIRE(ins2.size() == 1);
  CHECK(instruction_to_json(ins2[0]) == instruction_to_json(ins));
}

TEST_CASE("purchase scoring follows the matched-fraction formula") {
  ShopGoal goal{"T", {"a", "b"}, {"x"}, 50.0};
  Product match{"p1", "T", {"a", "b"}, {"x"}, 20.0};
  Product partial{"p2", "T", {"a"}, {"x"}, 20.0};
  Product wrong{"p3", "W", {"a", "b"}, {"x"}, 20.0};
  CHECK(score_purchase(goal, match, {"x"}) == 1.0);
  CHECK(score_purchase(goal, partial, {"x"}) == 0.75);
  CHECK(score_purchase(goal, wrong, {"x"}) == 0.0);
  // Price over budget drops exactly the price term.
  Product pricey{"p4", "T", {"a", "b"}, {"x"}, 99.0};
  CHECK(score_purchase(goal, pricey, {"x"}) == 0.75);
  // Unselected required option drops exactly the option term.
  CHECK(score_purchase(goal, match, {}) == 0.75);
  CHECK(best_product_score(goal, match) == 1.0);
  CHECK(best_product_score(goal, partial) == 0.75);
}

TEST_CASE("page heuristic tracks the best reachable purchase") {
  std::vector<Product> catalog{{"p1", "T", {"a", "b"}, {"x"}, 20.0},
                               {"p2", "T", {"a"}, {"x"}, 20.0},
                               {"p3", "W", {"c"}, {}, 5.0}};
  ShopEnv env(catalog);
  Instruction ins{"shopsim", "s0", "buy", Json{{"target_type", "T"},
                                               {"required_attributes", {"a", "b"}},
                                               {"required_options", {"x"}},
                                               {"budget", 50.0}}};
  env.register_task(ins);
  ShopGoal goal = shop_goal_from_instruction(ins);

  EnvState home = env.reset(ins);
  CHECK(env.heuristic_page_score(goal, home) == 0.0);
  EnvState results = env.step(home, env.search_action(0)).state;
  CHECK(env.heuristic_page_score(goal, results) == 1.0);  // p1 is on the page
  EnvState on_p2 = env.step(results, env.click_product_action("p2")).state;
  CHECK(env.heuristic_page_score(goal, on_p2) == 0.75);

  // Non-decreasing along the expert path.
  Trajectory expert = shop_expert(env, ins);
  double prev = env.heuristic_page_score(goal, env.reset(ins));
  EnvState s = env.reset(ins);
  for (const Step& st : expert.steps) {
    s = env.step(s, st.action.index).state;
    double h = env.heuristic_page_score(goal, s);
    CHECK(h >= prev);
    prev = h;
  }
  CHECK(expert.outcome_reward == 1.0);
  CHECK(expert.steps.size() == 3 + goal.required_options.size());
}

TEST_CASE("buying pays exactly the purchase score") {
  std::vector<Product> catalog{{"p1", "T", {"a"}, {"x", "y"}, 30.0},
                               {"p2", "T", {}, {}, 10.0}};
  ShopEnv env(catalog);
  Instruction ins{"shopsim", "s0", "buy", Json{{"target_type", "T"},
                                               {"required_attributes", {"a"}},
                                               {"required_options", {"y"}},
                                               {"budget", 40.0}}};
  env.register_task(ins);
  ShopGoal goal = shop_goal_from_instruction(ins);
  EnvState s = env.reset(ins);
  s = env.step(s, env.search_action(0)).state;
  s = env.step(s, env.click_product_action("p1")).state;
  s = env.step(s, env.click_option_action("y")).state;
  StepResult fin = env.step(s, env.buy_action());
  CHECK(fin.terminal);
  CHECK(env.score_outcome(fin.state) ==
        score_purchase(goal, env.product("p1"), {"y"}));
  CHECK(env.score_outcome(fin.state) == 1.0);
}

TEST_CASE("invalid shop actions absorb a turn without changing the page") {
  std::vector<Product> catalog{{"p1", "T", {"a"}, {}, 10.0}};
  ShopEnv env(catalog);
  Instruction ins{"shopsim", "s0", "buy", Json{{"target_type", "T"},
                                               {"required_attributes", {"a"}},
                                               {"required_options", Json::array()},
                                               {"budget", 40.0}}};
  env.register_task(ins);
  EnvState home = env.reset(ins);
  StepResult r = env.step(home, env.buy_action());  // no product page yet
  CHECK(r.obs.text == "Nothing happens");
  CHECK(!r.terminal);
  CHECK(r.state.step_counter == home.step_counter + 1);
  auto legal = env.legal_actions(r.state);
  CHECK(legal == env.legal_actions(home));
  CHECK_THROWS_AS(
      env.reset(Instruction{"shopsim", "missing", "", Json::object()}),
      ConfigError);
}

TEST_CASE("shop dataset generation is deterministic with pinned sizes") {
  ShopDataset a = generate_shop_dataset(ShopDatasetConfig{}, 7);
  ShopDataset b = generate_shop_dataset(ShopDatasetConfig{}, 7);
  CHECK(a.train.size() == 300);
  CHECK(a.test.size() == 100);
  REQUIRE(a.catalog.size() == b.catalog.size());
  for (size_t i = 0; i < a.catalog.size(); ++i)
    CHECK(product_to_json(a.catalog[i]) == product_to_json(b.catalog[i]));
  for (size_t i = 0; i < a.train.size(); ++i)
    CHECK(instruction_to_json(a.train[i]) == instruction_to_json(b.train[i]));

  std::set<std::string> train_ids, test_ids;
  for (const auto& t : a.train) train_ids.insert(t.task_id);
  for (const auto& t : a.test) test_ids.insert(t.task_id);
  CHECK(train_ids.size() == a.train.size());
  std::vector<std::string> overlap;
  std::set_intersection(train_ids.begin(), train_ids.end(), test_ids.begin(),
                        test_ids.end(), std::back_inserter(overlap));
  CHECK(overlap.empty());

  // Every task is solvable at full reward; spot-check a slice for speed.
  ShopEnv env(a.catalog);
  for (size_t i = 0; i < a.test.size(); i += 7) {
    env.register_task(a.test[i]);
    CHECK(shop_expert(env, a.test[i]).outcome_reward == 1.0);
  }

  test::TempDir dir;
  save_catalog(dir.file("catalog.json"), a.catalog);
  auto loaded = load_catalog(dir.file("catalog.json"));
  REQUIRE(loaded.size() == a.catalog.size());
  for (size_t i = 0; i < loaded.size(); ++i)
    CHECK(product_to_json(loaded[i]) == product_to_json(a.catalog[i]));
}

TEST_CASE("house goal predicate requires placement and temperature") {
  HouseEnv env;
  int potato = HouseEnv::object_index("potato");
  int microwave = HouseEnv::microwave_index();
  HouseGoal goal;
  goal.object = potato;
  goal.dest = microwave;
  goal.temp = Temp::Cold;

  HousePayload p;
  p.object_loc[potato] = microwave;
  p.object_temp[potato] = Temp::Cold;
  CHECK(env.check_goal(p, goal));

  HousePayload held;
  held.inventory = potato;
  held.object_temp[potato] = Temp::Cold;
  CHECK(!env.check_goal(held, goal));

  HousePayload warm;
  warm.object_loc[potato] = microwave;
  warm.object_temp[potato] = Temp::None;
  CHECK(!env.check_goal(warm, goal));
}

TEST_CASE("house expert finds the canonical cool-and-deliver plan") {
  HouseEnv env;
  HouseGoal goal;
  goal.object = HouseEnv::object_index("potato");
  goal.dest = HouseEnv::microwave_index();
  goal.temp = Temp::Cold;
  goal.src = HouseEnv::receptacle_index("sink");
  goal.start = HouseEnv::receptacle_index("table");
  Instruction ins = make_house_instruction("h0", goal);
  env.register_task(ins);

  Trajectory expert = house_expert(env, ins);
  std::vector<std::string> texts;
  for (const Step& s : expert.steps) texts.push_back(s.action.text);
  std::vector<std::string> want{"go[sink]",    "take[potato sink]",
                                "go[fridge]",  "open[fridge]",
                                "cool[potato fridge]", "go[microwave]",
                                "open[microwave]",     "put[potato microwave]"};
  CHECK(texts == want);
  CHECK(expert.outcome_reward == 1.0);
  // No plan over real transitions is shorter.
  CHECK(house_bfs_distance(env, ins, 10) == static_cast<int>(expert.steps.size()));
}

TEST_CASE("invalid house actions absorb a turn; objects are conserved") {
  HouseEnv env;
  HouseGoal goal;
  goal.object = HouseEnv::object_index("potato");
  goal.dest = HouseEnv::microwave_index();
  goal.temp = Temp::Cold;
  goal.src = HouseEnv::receptacle_index("sink");
  goal.start = HouseEnv::receptacle_index("sink");
  goal.distractors = {{HouseEnv::object_index("apple"),
                       HouseEnv::receptacle_index("table")}};
  Instruction ins = make_house_instruction("h0", goal);
  env.register_task(ins);

  EnvState s0 = env.reset(ins);
  StepResult bad =
      env.step(s0, env.take_action(goal.object, HouseEnv::fridge_index()));
  CHECK(bad.obs.text == "Nothing happens");
  CHECK(bad.state.step_counter == 1);
  const auto& p0 = dynamic_cast<const HousePayload&>(*s0.payload);
  const auto& pb = dynamic_cast<const HousePayload&>(*bad.state.payload);
  CHECK(pb.agent_loc == p0.agent_loc);
  CHECK(pb.inventory == p0.inventory);
  CHECK(pb.object_loc == p0.object_loc);

  StepResult took =
      env.step(s0, env.take_action(goal.object, HouseEnv::receptacle_index("sink")));
  const auto& pt = dynamic_cast<const HousePayload&>(*took.state.payload);
  CHECK(pt.inventory == goal.object);
  CHECK(pt.object_loc.count(goal.object) == 0);

  // Random walk: every object stays accounted for, reward stays binary.
  UniformPolicy uniform(env.action_count());
  auto rng = SeedKey(12).with("walk").rng();
  Trajectory walk = rollout(env, uniform, HistoryPrefix{ins, {}}, 1.0, rng);
  CHECK(walk.steps.size() <= 20);
  CHECK((walk.outcome_reward == 0.0 || walk.outcome_reward == 1.0));
  EnvState s = env.reset(ins);
  for (const Step& st : walk.steps) {
    s = env.step(s, st.action.index).state;
    const auto& p = dynamic_cast<const HousePayload&>(*s.payload);
    std::set<int> objs;
    for (const auto& [o, r] : p.object_loc) objs.insert(o);
    if (p.inventory >= 0) objs.insert(p.inventory);
    CHECK(objs == std::set<int>{goal.object, goal.distractors[0].first});
  }
}

TEST_CASE("house dataset splits are deterministic and combination-disjoint") {
  HouseDataset a = generate_house_dataset(HouseDatasetConfig{}, 7);
  HouseDataset b = generate_house_dataset(HouseDatasetConfig{}, 7);
  CHECK(a.train.size() == 300);
  CHECK(a.test_seen.size() == 60);
  CHECK(a.test_unseen.size() == 60);
  for (size_t i = 0; i < a.train.size(); ++i)
    CHECK(instruction_to_json(a.train[i]) == instruction_to_json(b.train[i]));

  auto combo = [](const Instruction& ins) {
    HouseGoal g = house_goal_from_instruction(ins);
    return std::to_string(g.object) + ":" + std::to_string(g.dest) + ":" +
           temp_name(g.temp);
  };
  std::set<std::string> train_combos, seen_combos, unseen_combos;
  for (const auto& t : a.train) train_combos.insert(combo(t));
  for (const auto& t : a.test_seen) seen_combos.insert(combo(t));
  for (const auto& t : a.test_unseen) unseen_combos.insert(combo(t));
  // Unseen tasks use goal combos reserved away from the train/seen pool.
  for (const auto& c : unseen_combos) {
    CHECK(train_combos.count(c) == 0);
    CHECK(seen_combos.count(c) == 0);
  }
  // Seen tasks draw from the same pool as train; since both splits sample the
  // pool rather than enumerate it, require majority overlap, not coverage.
  size_t overlap = 0;
  for (const auto& c : seen_combos)
    if (train_combos.count(c)) ++overlap;
  CHECK(overlap * 2 > seen_combos.size());

  HouseEnv env;
  for (size_t i = 0; i < a.train.size(); i += 23) {
    env.register_task(a.train[i]);
    Trajectory expert = house_expert(env, a.train[i]);
    CHECK(expert.steps.size() <= 20);
    CHECK(expert.outcome_reward == 1.0);
  }
}
