#include "ipr/gridhouse.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace ipr {

namespace {

constexpr int kGoBase = 0;
constexpr int kOpenBase = 8;
constexpr int kCloseBase = 12;
constexpr int kTakeBase = 16;
constexpr int kPutBase = 96;
constexpr int kHeatBase = 176;
constexpr int kCoolBase = 186;
constexpr int kActionCount = 196;

// alphabetical; closable receptacles start closed at reset
const std::vector<std::string>& recep_names_impl() {
  static const std::vector<std::string> v = {"cabinet", "desk",  "drawer",
                                             "fridge",  "microwave", "shelf",
                                             "sink",    "table"};
  return v;
}

const std::array<bool, 8>& closable_flags() {
  static const std::array<bool, 8> f = {true, false, true, true,
                                        true, false, false, false};
  return f;
}

int closable_ordinal(int recep) {
  int ord = 0;
  for (int r = 0; r < recep; ++r)
    if (closable_flags()[r]) ++ord;
  return ord;
}

int closable_at_ordinal(int ord) {
  for (int r = 0; r < 8; ++r)
    if (closable_flags()[r] && ord-- == 0) return r;
  throw ContractViolation("closable ordinal out of range");
}

}  // namespace

std::string temp_name(Temp t) {
  switch (t) {
    case Temp::None: return "none";
    case Temp::Hot: return "hot";
    case Temp::Cold: return "cold";
  }
  throw ContractViolation("unhandled temp");
}

Temp temp_from_name(const std::string& name) {
  if (name == "none") return Temp::None;
  if (name == "hot") return Temp::Hot;
  if (name == "cold") return Temp::Cold;
  throw ConfigError("unknown temperature tag '" + name + "'");
}

const std::vector<std::string>& HouseEnv::receptacle_names() {
  return recep_names_impl();
}

const std::vector<std::string>& HouseEnv::object_names() {
  static const std::vector<std::string> v = {"apple", "book",   "bread", "cup",
                                             "egg",   "pen",    "plate",
                                             "potato", "soap",  "sponge"};
  return v;
}

bool HouseEnv::closable(int recep) { return closable_flags().at(recep); }

int HouseEnv::receptacle_index(const std::string& name) {
  const auto& v = receptacle_names();
  auto it = std::find(v.begin(), v.end(), name);
  if (it == v.end()) throw ConfigError("unknown receptacle '" + name + "'");
  return static_cast<int>(it - v.begin());
}

int HouseEnv::object_index(const std::string& name) {
  const auto& v = object_names();
  auto it = std::find(v.begin(), v.end(), name);
  if (it == v.end()) throw ConfigError("unknown object '" + name + "'");
  return static_cast<int>(it - v.begin());
}

int HouseEnv::microwave_index() { return receptacle_index("microwave"); }
int HouseEnv::fridge_index() { return receptacle_index("fridge"); }

HouseEnv::HouseEnv() { spec_ = EnvSpec{"gridhouse", 20}; }

int HouseEnv::action_count() const { return kActionCount; }

int HouseEnv::go_action(int recep) const { return kGoBase + recep; }

int HouseEnv::open_action(int recep) const {
  if (!closable(recep)) throw ContractViolation("receptacle is not closable");
  return kOpenBase + closable_ordinal(recep);
}

int HouseEnv::close_action(int recep) const {
  if (!closable(recep)) throw ContractViolation("receptacle is not closable");
  return kCloseBase + closable_ordinal(recep);
}

int HouseEnv::take_action(int object, int recep) const {
  return kTakeBase + object * kReceptacles + recep;
}

int HouseEnv::put_action(int object, int recep) const {
  return kPutBase + object * kReceptacles + recep;
}

int HouseEnv::heat_action(int object) const { return kHeatBase + object; }
int HouseEnv::cool_action(int object) const { return kCoolBase + object; }

std::string HouseEnv::action_text(int index, const EnvState&) const {
  const auto& receps = receptacle_names();
  const auto& objs = object_names();
  if (index >= kGoBase && index < kOpenBase)
    return "go[" + receps[index - kGoBase] + "]";
  if (index >= kOpenBase && index < kCloseBase)
    return "open[" + receps[closable_at_ordinal(index - kOpenBase)] + "]";
  if (index >= kCloseBase && index < kTakeBase)
    return "close[" + receps[closable_at_ordinal(index - kCloseBase)] + "]";
  if (index >= kTakeBase && index < kPutBase) {
    int k = index - kTakeBase;
    return "take[" + objs[k / kReceptacles] + " " + receps[k % kReceptacles] + "]";
  }
  if (index >= kPutBase && index < kHeatBase) {
    int k = index - kPutBase;
    return "put[" + objs[k / kReceptacles] + " " + receps[k % kReceptacles] + "]";
  }
  if (index >= kHeatBase && index < kCoolBase)
    return "heat[" + objs[index - kHeatBase] + " microwave]";
  if (index >= kCoolBase && index < kActionCount)
    return "cool[" + objs[index - kCoolBase] + " fridge]";
  throw ContractViolation("house action index out of range");
}

HouseGoal house_goal_from_instruction(const Instruction& instruction) {
  const Json& j = instruction.goal;
  HouseGoal g;
  g.object = HouseEnv::object_index(j.at("object").get<std::string>());
  g.dest = HouseEnv::receptacle_index(j.at("dest").get<std::string>());
  g.temp = temp_from_name(j.at("temp").get<std::string>());
  g.src = HouseEnv::receptacle_index(j.at("src").get<std::string>());
  g.start = HouseEnv::receptacle_index(j.at("start").get<std::string>());
  for (const auto& d : j.at("distractors"))
    g.distractors.emplace_back(
        HouseEnv::object_index(d.at(0).get<std::string>()),
        HouseEnv::receptacle_index(d.at(1).get<std::string>()));
  return g;
}

Instruction make_house_instruction(const std::string& task_id,
                                   const HouseGoal& goal) {
  const auto& receps = HouseEnv::receptacle_names();
  const auto& objs = HouseEnv::object_names();
  std::string tmpl = goal.temp == Temp::None ? "place"
                     : goal.temp == Temp::Hot ? "heat"
                                              : "cool";
  Instruction ins;
  ins.env_id = "gridhouse";
  ins.task_id = task_id;
  ins.text = "task:" + tmpl + " obj:" + objs[goal.object] +
             " dest:" + receps[goal.dest] + " src:" + receps[goal.src] +
             " start:" + receps[goal.start];
  ins.goal["template"] = tmpl;
  ins.goal["object"] = objs[goal.object];
  ins.goal["dest"] = receps[goal.dest];
  ins.goal["temp"] = temp_name(goal.temp);
  ins.goal["src"] = receps[goal.src];
  ins.goal["start"] = receps[goal.start];
  ins.goal["distractors"] = Json::array();
  for (const auto& [o, r] : goal.distractors) {
    Json d = Json::array();
    d.push_back(objs[o]);
    d.push_back(receps[r]);
    ins.goal["distractors"].push_back(d);
  }
  return ins;
}

const HousePayload& HouseEnv::payload(const EnvState& state) const {
  return static_cast<const HousePayload&>(*state.payload);
}

bool HouseEnv::check_goal(const HousePayload& state,
                          const HouseGoal& goal) const {
  auto it = state.object_loc.find(goal.object);
  if (it == state.object_loc.end() || it->second != goal.dest) return false;
  if (goal.temp == Temp::None) return true;
  return state.object_temp.at(goal.object) == goal.temp;
}

EnvState HouseEnv::reset(const Instruction& instruction) const {
  require_known(instruction);
  HouseGoal goal = house_goal_from_instruction(instruction);
  auto p = std::make_shared<HousePayload>();
  p->agent_loc = goal.start;
  p->inventory = -1;
  for (int r = 0; r < kReceptacles; ++r) p->open[r] = !closable(r);
  p->object_loc[goal.object] = goal.src;
  p->object_temp[goal.object] = Temp::None;
  for (const auto& [o, r] : goal.distractors) {
    if (o == goal.object)
      throw ConfigError("distractor duplicates the goal object: " +
                        instruction.task_id);
    if (!p->object_loc.emplace(o, r).second)
      throw ConfigError("duplicate distractor object: " + instruction.task_id);
    p->object_temp[o] = Temp::None;
  }
  if (check_goal(*p, goal))
    throw ConfigError("goal already satisfied at reset: " + instruction.task_id);

  EnvState s;
  s.instruction = instruction;
  s.step_counter = 0;
  s.terminal = false;
  s.payload = p;
  return s;
}

std::vector<int> HouseEnv::legal_actions(const EnvState& state) const {
  if (state.terminal) return {};
  const HousePayload& p = payload(state);
  std::vector<int> legal;
  int loc = p.agent_loc;
  for (int r = 0; r < kReceptacles; ++r)
    if (r != loc) legal.push_back(go_action(r));
  if (closable(loc)) {
    if (!p.open[loc]) legal.push_back(open_action(loc));
    if (p.open[loc]) legal.push_back(close_action(loc));
  }
  if (p.open[loc] && p.inventory < 0) {
    for (const auto& [o, r] : p.object_loc)
      if (r == loc) legal.push_back(take_action(o, loc));
  }
  if (p.inventory >= 0 && p.open[loc]) {
    legal.push_back(put_action(p.inventory, loc));
    if (loc == microwave_index()) legal.push_back(heat_action(p.inventory));
    if (loc == fridge_index()) legal.push_back(cool_action(p.inventory));
  }
  std::sort(legal.begin(), legal.end());
  return legal;
}

std::string HouseEnv::render(const HousePayload& p, const HouseGoal& goal,
                             bool acted) const {
  const auto& receps = receptacle_names();
  const auto& objs = object_names();
  int loc = p.agent_loc;
  std::string out = acted ? "ok" : "start";
  out += " loc:" + receps[loc];
  out += " inv:" + (p.inventory >= 0 ? objs[p.inventory] : "none");
  out += " tinv:" + (p.inventory >= 0 ? temp_name(p.object_temp.at(p.inventory))
                                      : "none");
  out += " here:";
  out += !closable(loc) ? "plain" : (p.open[loc] ? "open" : "shut");
  if (p.open[loc]) {
    for (const auto& [o, r] : p.object_loc)
      if (r == loc) out += " see:" + objs[o];
  }

  bool done = check_goal(p, goal);
  bool holding = p.inventory == goal.object;
  bool temp_unmet =
      goal.temp != Temp::None && p.object_temp.at(goal.object) != goal.temp;
  std::string todo, need;
  if (done) {
    todo = "done";
    need = "none";
  } else if (!holding) {
    todo = "fetch";
    need = receps[p.object_loc.at(goal.object)];
  } else if (temp_unmet) {
    todo = "temp";
    need = receps[goal.temp == Temp::Hot ? microwave_index() : fridge_index()];
  } else {
    todo = "deliver";
    need = receps[goal.dest];
  }
  out += " todo:" + todo + " need:" + need;
  out += " atneed:";
  out += (!done && receps[loc] == need) ? "yes" : "no";
  return out;
}

StepResult HouseEnv::step(const EnvState& state, int action_index) const {
  if (state.terminal) throw ContractViolation("house step on terminal state");
  if (action_index < 0 || action_index >= kActionCount)
    throw ContractViolation("house action index out of range");

  HouseGoal goal = house_goal_from_instruction(state.instruction);
  auto next_p = std::make_shared<HousePayload>(payload(state));
  EnvState next = state;
  next.step_counter = state.step_counter + 1;

  std::vector<int> legal = legal_actions(state);
  bool is_legal =
      std::find(legal.begin(), legal.end(), action_index) != legal.end();

  Observation obs;
  if (!is_legal) {
    obs.text = "Nothing happens";
  } else {
    if (action_index < kOpenBase) {
      next_p->agent_loc = action_index - kGoBase;
    } else if (action_index < kCloseBase) {
      next_p->open[closable_at_ordinal(action_index - kOpenBase)] = true;
    } else if (action_index < kTakeBase) {
      next_p->open[closable_at_ordinal(action_index - kCloseBase)] = false;
    } else if (action_index < kPutBase) {
      int o = (action_index - kTakeBase) / kReceptacles;
      next_p->object_loc.erase(o);
      next_p->inventory = o;
    } else if (action_index < kHeatBase) {
      int o = (action_index - kPutBase) / kReceptacles;
      int r = (action_index - kPutBase) % kReceptacles;
      next_p->object_loc[o] = r;
      next_p->inventory = -1;
    } else if (action_index < kCoolBase) {
      next_p->object_temp[action_index - kHeatBase] = Temp::Hot;
    } else {
      next_p->object_temp[action_index - kCoolBase] = Temp::Cold;
    }
    obs.text = render(*next_p, goal, true);
  }

  next.payload = next_p;
  if (check_goal(*next_p, goal)) {
    next.terminal = true;
    next.termination = Termination::Completed;
  } else if (next.step_counter >= spec_.max_turns) {
    next.terminal = true;
    next.termination = Termination::MaxTurns;
  }
  return StepResult{next, obs, next.terminal};
}

double HouseEnv::score_outcome(const EnvState& state) const {
  if (!state.terminal)
    throw ContractViolation("score_outcome on non-terminal house state");
  HouseGoal goal = house_goal_from_instruction(state.instruction);
  return check_goal(payload(state), goal) ? 1.0 : 0.0;
}

namespace {

// abstract search state: agent location, closable-door bits, goal object
// placement (kReceptacles == held), goal object temperature
struct AbsState {
  int loc;
  int doors;
  int place;
  int temp;
  int encode() const {
    return ((loc * 16 + doors) * (HouseEnv::kReceptacles + 1) + place) * 3 + temp;
  }
};

}  // namespace

std::vector<int> house_plan(const HouseEnv& env,
                            const Instruction& instruction) {
  HouseGoal goal = house_goal_from_instruction(instruction);
  const int held = HouseEnv::kReceptacles;
  const int n_states = 8 * 16 * (held + 1) * 3;

  auto satisfied = [&](const AbsState& s) {
    if (s.place != goal.dest) return false;
    return goal.temp == Temp::None || s.temp == static_cast<int>(goal.temp);
  };

  AbsState start{goal.start, 0, goal.src, 0};
  if (satisfied(start)) return {};

  auto door_open = [](const AbsState& s, int r) {
    if (!HouseEnv::closable(r)) return true;
    return ((s.doors >> closable_ordinal(r)) & 1) != 0;
  };
  auto with_door = [](AbsState s, int r, bool open) {
    int bit = 1 << closable_ordinal(r);
    s.doors = open ? (s.doors | bit) : (s.doors & ~bit);
    return s;
  };

  // successors in action-catalog order so BFS ties resolve canonically
  auto successors = [&](const AbsState& s,
                        std::vector<std::pair<int, AbsState>>& out) {
    out.clear();
    for (int r = 0; r < 8; ++r) {
      if (r == s.loc) continue;
      AbsState n = s;
      n.loc = r;
      out.emplace_back(env.go_action(r), n);
    }
    if (HouseEnv::closable(s.loc) && !door_open(s, s.loc))
      out.emplace_back(env.open_action(s.loc), with_door(s, s.loc, true));
    if (HouseEnv::closable(s.loc) && door_open(s, s.loc))
      out.emplace_back(env.close_action(s.loc), with_door(s, s.loc, false));
    if (s.place == s.loc && door_open(s, s.loc)) {
      AbsState n = s;
      n.place = held;
      out.emplace_back(env.take_action(goal.object, s.loc), n);
    }
    if (s.place == held && door_open(s, s.loc)) {
      AbsState n = s;
      n.place = s.loc;
      out.emplace_back(env.put_action(goal.object, s.loc), n);
      if (s.loc == HouseEnv::microwave_index()) {
        AbsState h = s;
        h.temp = static_cast<int>(Temp::Hot);
        out.emplace_back(env.heat_action(goal.object), h);
      }
      if (s.loc == HouseEnv::fridge_index()) {
        AbsState c = s;
        c.temp = static_cast<int>(Temp::Cold);
        out.emplace_back(env.cool_action(goal.object), c);
      }
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  };

  std::vector<int> prev_state(n_states, -1), prev_action(n_states, -1);
  std::vector<bool> seen(n_states, false);
  std::deque<AbsState> queue{start};
  seen[start.encode()] = true;
  std::vector<std::pair<int, AbsState>> succ;

  while (!queue.empty()) {
    AbsState s = queue.front();
    queue.pop_front();
    successors(s, succ);
    for (const auto& [action, n] : succ) {
      int code = n.encode();
      if (seen[code]) continue;
      seen[code] = true;
      prev_state[code] = s.encode();
      prev_action[code] = action;
      if (satisfied(n)) {
        std::vector<int> plan;
        for (int c = code; prev_action[c] >= 0; c = prev_state[c])
          plan.push_back(prev_action[c]);
        std::reverse(plan.begin(), plan.end());
        return plan;
      }
      queue.push_back(n);
    }
  }
  throw ConfigError("house goal unreachable: " + instruction.task_id);
}

Trajectory house_expert(const HouseEnv& env, const Instruction& instruction) {
  std::vector<int> plan = house_plan(env, instruction);
  if (plan.empty())
    throw ConfigError("empty expert plan for task " + instruction.task_id);

  EnvState state = env.reset(instruction);
  Trajectory traj;
  traj.instruction = instruction;
  for (int action : plan) {
    Step s;
    s.action = Action{action, env.action_text(action, state)};
    StepResult r = env.step(state, action);
    s.obs = r.obs;
    traj.steps.push_back(s);
    state = r.state;
  }
  if (!state.terminal)
    throw ContractViolation("expert plan did not reach a terminal state");
  traj.outcome_reward = env.score_outcome(state);
  traj.terminated = state.termination;
  if (traj.outcome_reward != 1.0)
    throw ContractViolation("expert plan failed for task " +
                            instruction.task_id);
  return traj;
}

HouseDataset generate_house_dataset(const HouseDatasetConfig& config,
                                    uint64_t seed) {
  if (config.n_train < 1 || config.n_seen < 1 || config.n_unseen < 1)
    throw ConfigError("house dataset sizes must be positive");

  struct Combo {
    int obj, dest, tmpl;
  };
  std::vector<Combo> combos;
  for (int o = 0; o < HouseEnv::kObjects; ++o)
    for (int d = 0; d < HouseEnv::kReceptacles; ++d)
      for (int t = 0; t < 3; ++t) combos.push_back({o, d, t});

  SeedKey key(seed);
  auto combo_rng = key.with("house").with("combos").rng();
  deterministic_shuffle(combos, combo_rng);
  if (config.n_unseen_combos >= static_cast<int>(combos.size()))
    throw ConfigError("unseen combo reservation exceeds combo space");
  std::vector<Combo> unseen_combos(combos.begin(),
                                   combos.begin() + config.n_unseen_combos);
  std::vector<Combo> train_combos(combos.begin() + config.n_unseen_combos,
                                  combos.end());

  HouseEnv env;
  std::set<std::string> signatures;

  auto sample_split = [&](const std::vector<Combo>& pool, int count,
                          const std::string& stream,
                          const std::string& id_prefix) {
    auto rng = key.with("house").with(stream).rng();
    std::vector<Instruction> split;
    for (int attempt = 0; static_cast<int>(split.size()) < count; ++attempt) {
      if (attempt > 1000 * count)
        throw ConfigError("house task space too small for split " + stream);
      const Combo& c = pool[uniform_index(rng, pool.size())];
      HouseGoal g;
      g.object = c.obj;
      g.dest = c.dest;
      g.temp = c.tmpl == 0 ? Temp::None : c.tmpl == 1 ? Temp::Hot : Temp::Cold;
      g.src = static_cast<int>(uniform_index(rng, HouseEnv::kReceptacles));
      if (g.temp == Temp::None && g.src == g.dest)
        g.src = (g.src + 1 + static_cast<int>(uniform_index(rng, 7))) % 8;
      g.start = static_cast<int>(uniform_index(rng, HouseEnv::kReceptacles));
      if (g.start == g.src) g.start = (g.start + 1) % 8;

      std::vector<int> others;
      for (int o = 0; o < HouseEnv::kObjects; ++o)
        if (o != c.obj) others.push_back(o);
      deterministic_shuffle(others, rng);
      for (int i = 0; i < config.n_distractors; ++i) {
        // keep the source receptacle clean so fetching is unambiguous
        int r = static_cast<int>(uniform_index(rng, 7));
        if (r >= g.src) ++r;
        g.distractors.emplace_back(others[i], r);
      }
      std::sort(g.distractors.begin(), g.distractors.end());

      char id[32];
      std::snprintf(id, sizeof id, "%s%03d", id_prefix.c_str(),
                    static_cast<int>(split.size()));
      Instruction ins = make_house_instruction(id, g);
      std::string sig = ins.text + " " + ins.goal.at("distractors").dump();
      if (!signatures.insert(sig).second) continue;

      env.register_task(ins);
      Trajectory expert = house_expert(env, ins);
      if (static_cast<int>(expert.steps.size()) > env.spec().max_turns)
        throw ContractViolation("expert exceeds turn budget: " + ins.task_id);
      split.push_back(ins);
    }
    return split;
  };

  HouseDataset out;
  out.train = sample_split(train_combos, config.n_train, "train", "house-train-");
  out.test_seen = sample_split(train_combos, config.n_seen, "seen", "house-seen-");
  out.test_unseen =
      sample_split(unseen_combos, config.n_unseen, "unseen", "house-unseen-");
  return out;
}

}  // namespace ipr
