#include "ipr/shopsim.hpp"

#include <algorithm>
#include <sstream>

namespace ipr {

namespace {

int count_intersection(const std::set<std::string>& a,
                       const std::set<std::string>& b) {
  int n = 0;
  for (const auto& t : a)
    if (b.count(t)) ++n;
  return n;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

int price_label(double price) { return static_cast<int>(price + 0.5); }

}  // namespace

ShopGoal shop_goal_from_instruction(const Instruction& instruction) {
  ShopGoal g;
  const Json& j = instruction.goal;
  g.target_type = j.at("target_type").get<std::string>();
  for (const auto& a : j.at("required_attributes"))
    g.required_attributes.insert(a.get<std::string>());
  for (const auto& o : j.at("required_options"))
    g.required_options.insert(o.get<std::string>());
  g.budget = j.at("budget").get<double>();
  if (g.required_attributes.empty() && g.required_options.empty())
    throw ConfigError("shop goal must require at least one attribute or option: " +
                      instruction.task_id);
  return g;
}

double score_purchase(const ShopGoal& goal, const Product& product,
                      const std::set<std::string>& selected_options) {
  if (product.ptype != goal.target_type) return 0.0;
  int att = count_intersection(goal.required_attributes, product.attributes);
  int opt = count_intersection(goal.required_options, selected_options);
  int price_ok = product.price <= goal.budget ? 1 : 0;
  double denom = static_cast<double>(goal.required_attributes.size() +
                                     goal.required_options.size() + 1);
  return (att + opt + price_ok) / denom;
}

double best_product_score(const ShopGoal& goal, const Product& product) {
  std::set<std::string> best;
  for (const auto& o : goal.required_options)
    if (product.options.count(o)) best.insert(o);
  return score_purchase(goal, product, best);
}

ShopEnv::ShopEnv(std::vector<Product> catalog) : catalog_(std::move(catalog)) {
  if (catalog_.empty()) throw ConfigError("shop catalog is empty");
  std::sort(catalog_.begin(), catalog_.end(),
            [](const Product& a, const Product& b) {
              return a.product_id < b.product_id;
            });
  std::set<std::string> opts;
  for (int i = 0; i < static_cast<int>(catalog_.size()); ++i) {
    const Product& p = catalog_[i];
    if (!pid_index_.emplace(p.product_id, i).second)
      throw ConfigError("duplicate product_id " + p.product_id);
    for (const auto& a : p.attributes)
      if (p.options.count(a))
        throw ConfigError("attribute/option vocabularies overlap on '" + a + "'");
    opts.insert(p.options.begin(), p.options.end());
  }
  option_vocab_.assign(opts.begin(), opts.end());
  for (int i = 0; i < static_cast<int>(option_vocab_.size()); ++i)
    option_index_[option_vocab_[i]] = i;
  spec_ = EnvSpec{"shopsim", 10};
}

int ShopEnv::action_count() const {
  return kSearchTemplates + static_cast<int>(catalog_.size()) +
         static_cast<int>(option_vocab_.size()) + 2;
}

int ShopEnv::search_action(int template_index) const {
  if (template_index < 0 || template_index >= kSearchTemplates)
    throw ContractViolation("bad search template index");
  return template_index;
}

int ShopEnv::click_product_action(const std::string& pid) const {
  auto it = pid_index_.find(pid);
  if (it == pid_index_.end()) throw ContractViolation("unknown product " + pid);
  return kSearchTemplates + it->second;
}

int ShopEnv::click_option_action(const std::string& token) const {
  auto it = option_index_.find(token);
  if (it == option_index_.end())
    throw ContractViolation("unknown option token " + token);
  return kSearchTemplates + static_cast<int>(catalog_.size()) + it->second;
}

int ShopEnv::back_action() const {
  return kSearchTemplates + static_cast<int>(catalog_.size()) +
         static_cast<int>(option_vocab_.size());
}

int ShopEnv::buy_action() const { return back_action() + 1; }

std::set<std::string> ShopEnv::search_query(const Instruction& instruction,
                                            int template_index) const {
  ShopGoal goal = shop_goal_from_instruction(instruction);
  std::set<std::string> q;
  if (template_index == 0 || template_index == 1) q.insert(goal.target_type);
  if (template_index == 0 || template_index == 2)
    q.insert(goal.required_attributes.begin(), goal.required_attributes.end());
  return q;
}

std::string ShopEnv::action_text(int index, const EnvState& state) const {
  int n_products = static_cast<int>(catalog_.size());
  int n_options = static_cast<int>(option_vocab_.size());
  if (index >= 0 && index < kSearchTemplates) {
    std::set<std::string> q = search_query(state.instruction, index);
    return "search[" + join({q.begin(), q.end()}) + "]";
  }
  if (index < kSearchTemplates + n_products)
    return "click[" + catalog_[index - kSearchTemplates].product_id + "]";
  if (index < kSearchTemplates + n_products + n_options)
    return "click[" + option_vocab_[index - kSearchTemplates - n_products] + "]";
  if (index == back_action()) return "click[back]";
  if (index == buy_action()) return "click[buy]";
  throw ContractViolation("shop action index out of range");
}

const Product& ShopEnv::product(const std::string& pid) const {
  auto it = pid_index_.find(pid);
  if (it == pid_index_.end()) throw ContractViolation("unknown product " + pid);
  return catalog_[it->second];
}

std::vector<std::string> ShopEnv::search(
    const std::set<std::string>& query) const {
  std::vector<std::pair<int, std::string>> ranked;
  for (const Product& p : catalog_) {
    std::set<std::string> haystack = p.attributes;
    haystack.insert(p.ptype);
    ranked.emplace_back(count_intersection(query, haystack), p.product_id);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first > b.first;
                     return a.second < b.second;
                   });
  std::vector<std::string> out;
  for (int i = 0; i < kTopK && i < static_cast<int>(ranked.size()); ++i)
    out.push_back(ranked[i].second);
  return out;
}

const ShopPage& ShopEnv::page(const EnvState& state) const {
  return static_cast<const ShopPage&>(*state.payload);
}

std::string ShopEnv::render(const ShopPage& p) const {
  switch (p.kind) {
    case PageKind::Home:
      return "page:home";
    case PageKind::SearchResults: {
      std::string out = "page:results";
      for (const auto& pid : p.results) {
        const Product& pr = product(pid);
        out += " item:" + pid + " is:" + pr.ptype;
        for (const auto& a : pr.attributes) out += " f:" + a;
        out += " price:" + std::to_string(price_label(pr.price));
      }
      return out;
    }
    case PageKind::ProductPage: {
      const Product& pr = product(p.current_product);
      std::string out = "page:product item:" + p.current_product +
                        " is:" + pr.ptype;
      for (const auto& a : pr.attributes) out += " f:" + a;
      out += " price:" + std::to_string(price_label(pr.price));
      for (const auto& o : pr.options) out += " opt:" + o;
      if (p.selected.empty()) {
        out += " sel:none";
      } else {
        for (const auto& s : p.selected) out += " sel:" + s;
      }
      return out;
    }
    case PageKind::Order:
      return "page:order item:" + p.purchased + " bought";
  }
  throw ContractViolation("unhandled page kind");
}

EnvState ShopEnv::reset(const Instruction& instruction) const {
  require_known(instruction);
  shop_goal_from_instruction(instruction);  // validates goal shape
  EnvState s;
  s.instruction = instruction;
  s.step_counter = 0;
  s.terminal = false;
  s.payload = std::make_shared<ShopPage>();
  return s;
}

std::vector<int> ShopEnv::legal_actions(const EnvState& state) const {
  if (state.terminal) return {};
  const ShopPage& p = page(state);
  std::vector<int> legal;
  switch (p.kind) {
    case PageKind::Home:
      for (int t = 0; t < kSearchTemplates; ++t) legal.push_back(search_action(t));
      break;
    case PageKind::SearchResults: {
      for (int t = 0; t < kSearchTemplates; ++t) legal.push_back(search_action(t));
      std::vector<int> clicks;
      for (const auto& pid : p.results) clicks.push_back(click_product_action(pid));
      std::sort(clicks.begin(), clicks.end());
      legal.insert(legal.end(), clicks.begin(), clicks.end());
      legal.push_back(back_action());
      break;
    }
    case PageKind::ProductPage: {
      const Product& pr = product(p.current_product);
      for (const auto& o : pr.options) legal.push_back(click_option_action(o));
      std::sort(legal.begin(), legal.end());
      legal.push_back(back_action());
      legal.push_back(buy_action());
      break;
    }
    case PageKind::Order:
      break;
  }
  return legal;
}

StepResult ShopEnv::step(const EnvState& state, int action_index) const {
  if (state.terminal) throw ContractViolation("shop step on terminal state");
  if (action_index < 0 || action_index >= action_count())
    throw ContractViolation("shop action index out of range");

  const ShopPage& cur = page(state);
  auto next_page = std::make_shared<ShopPage>(cur);
  EnvState next = state;
  next.step_counter = state.step_counter + 1;

  std::vector<int> legal = legal_actions(state);
  bool is_legal = std::find(legal.begin(), legal.end(), action_index) != legal.end();

  Observation obs;
  if (!is_legal) {
    obs.text = "Nothing happens";
  } else if (action_index < kSearchTemplates) {
    next_page->kind = PageKind::SearchResults;
    next_page->results = search(search_query(state.instruction, action_index));
    next_page->current_product.clear();
    next_page->selected.clear();
    obs.text = render(*next_page);
  } else if (action_index == back_action()) {
    if (cur.kind == PageKind::ProductPage) {
      next_page->kind = PageKind::SearchResults;
      next_page->results = cur.last_results;
      next_page->current_product.clear();
      next_page->selected.clear();
    } else {
      next_page->kind = PageKind::Home;
      next_page->results.clear();
    }
    obs.text = render(*next_page);
  } else if (action_index == buy_action()) {
    next_page->kind = PageKind::Order;
    next_page->purchased = cur.current_product;
    obs.text = render(*next_page);
    next.terminal = true;
    next.termination = Termination::Completed;
  } else if (action_index < kSearchTemplates + static_cast<int>(catalog_.size())) {
    next_page->kind = PageKind::ProductPage;
    next_page->last_results = cur.results;
    next_page->current_product = catalog_[action_index - kSearchTemplates].product_id;
    next_page->selected.clear();
    obs.text = render(*next_page);
  } else {
    const std::string& tok =
        option_vocab_[action_index - kSearchTemplates -
                      static_cast<int>(catalog_.size())];
    next_page->selected.insert(tok);
    obs.text = render(*next_page);
  }

  next.payload = next_page;
  if (!next.terminal && next.step_counter >= spec_.max_turns) {
    next.terminal = true;
    next.termination = Termination::MaxTurns;
  }
  return StepResult{next, obs, next.terminal};
}

double ShopEnv::score_outcome(const EnvState& state) const {
  if (!state.terminal)
    throw ContractViolation("score_outcome on non-terminal shop state");
  const ShopPage& p = page(state);
  if (p.kind != PageKind::Order) return 0.0;
  ShopGoal goal = shop_goal_from_instruction(state.instruction);
  return score_purchase(goal, product(p.purchased), p.selected);
}

double ShopEnv::heuristic_page_score(const ShopGoal& goal,
                                     const EnvState& state) const {
  const ShopPage& p = page(state);
  switch (p.kind) {
    case PageKind::Home:
      return 0.0;
    case PageKind::SearchResults: {
      double best = 0.0;
      for (const auto& pid : p.results)
        best = std::max(best, best_product_score(goal, product(pid)));
      return best;
    }
    case PageKind::ProductPage:
      return best_product_score(goal, product(p.current_product));
    case PageKind::Order:
      return score_purchase(goal, product(p.purchased), p.selected);
  }
  throw ContractViolation("unhandled page kind");
}

Trajectory shop_expert(const ShopEnv& env, const Instruction& instruction) {
  ShopGoal goal = shop_goal_from_instruction(instruction);
  EnvState state = env.reset(instruction);

  Trajectory traj;
  traj.instruction = instruction;
  auto act = [&](int index) {
    Step s;
    s.action = Action{index, env.action_text(index, state)};
    StepResult r = env.step(state, index);
    s.obs = r.obs;
    traj.steps.push_back(s);
    state = r.state;
  };

  act(env.search_action(0));
  const ShopPage& results =
      static_cast<const ShopPage&>(*state.payload);
  std::string best_pid;
  double best = -1.0;
  for (const auto& pid : results.results) {
    double sc = best_product_score(goal, env.product(pid));
    if (sc > best) {
      best = sc;
      best_pid = pid;
    }
  }
  if (best < 1.0)
    throw ConfigError("no perfect product reachable for task " +
                      instruction.task_id);
  act(env.click_product_action(best_pid));
  for (const auto& o : goal.required_options) act(env.click_option_action(o));
  act(env.buy_action());

  if (!state.terminal)
    throw ContractViolation("expert did not reach a terminal state");
  traj.outcome_reward = env.score_outcome(state);
  traj.terminated = state.termination;
  return traj;
}

namespace {

const std::vector<std::string>& type_vocab() {
  static const std::vector<std::string> v = {
      "mug",  "lamp",  "chair", "desk",  "sofa",  "rug",
      "fan",  "clock", "vase",  "shelf", "stool", "bench"};
  return v;
}

const std::vector<std::string>& attr_vocab() {
  static const std::vector<std::string> v = {
      "red",   "blue",   "green", "black", "white",  "small",
      "large", "wood",   "metal", "soft",  "round",  "square",
      "matte", "glossy", "light", "heavy"};
  return v;
}

const std::vector<std::string>& opt_vocab() {
  static const std::vector<std::string> v = {"gift", "plus", "eco",
                                             "pro",  "mini", "max"};
  return v;
}

std::string shop_task_text(const ShopGoal& goal) {
  std::string text = "buy is:" + goal.target_type;
  for (const auto& a : goal.required_attributes) text += " f:" + a;
  for (const auto& o : goal.required_options) text += " opt:" + o;
  text += " budget:" + std::to_string(price_label(goal.budget));
  text += goal.budget < 70 ? " band:tight" : " band:roomy";
  return text;
}

Json shop_goal_json(const ShopGoal& goal) {
  Json j;
  j["target_type"] = goal.target_type;
  j["required_attributes"] = Json::array();
  for (const auto& a : goal.required_attributes) j["required_attributes"].push_back(a);
  j["required_options"] = Json::array();
  for (const auto& o : goal.required_options) j["required_options"].push_back(o);
  j["budget"] = goal.budget;
  return j;
}

}  // namespace

ShopDataset generate_shop_dataset(const ShopDatasetConfig& config,
                                  uint64_t seed) {
  if (config.n_pairs < 2 || config.n_train < 1 || config.n_test < 1)
    throw ConfigError("shop dataset sizes must be positive");
  SeedKey key(seed);
  auto cat_rng = key.with("shop").with("catalog").rng();

  ShopDataset out;
  std::set<std::string> used_combos;
  const auto& types = type_vocab();
  const auto& attrs = attr_vocab();
  const auto& opts = opt_vocab();

  for (int i = 0; i < config.n_pairs; ++i) {
    std::string type;
    std::string a1, a2;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000)
        throw ConfigError("could not draw a fresh type/attribute combo");
      type = types[uniform_index(cat_rng, types.size())];
      size_t i1 = uniform_index(cat_rng, attrs.size());
      size_t i2 = uniform_index(cat_rng, attrs.size() - 1);
      if (i2 >= i1) ++i2;
      a1 = attrs[std::min(i1, i2)];
      a2 = attrs[std::max(i1, i2)];
      if (used_combos.insert(type + "|" + a1 + "|" + a2).second) break;
    }
    size_t o1 = uniform_index(cat_rng, opts.size());
    size_t o2 = uniform_index(cat_rng, opts.size() - 1);
    if (o2 >= o1) ++o2;
    std::vector<std::string> shared = {opts[o1], opts[o2]};
    std::vector<std::string> rest;
    for (const auto& o : opts)
      if (o != shared[0] && o != shared[1]) rest.push_back(o);
    std::string exclusive = rest[uniform_index(cat_rng, rest.size())];

    static const double cheap_prices[] = {15, 20, 25};
    static const double expensive_prices[] = {70, 80, 85};
    char pid[16];
    Product base;
    std::snprintf(pid, sizeof pid, "p%03d", 2 * i);
    base.product_id = pid;
    base.ptype = type;
    base.attributes = {a1, a2};
    base.options = {shared[0], shared[1]};
    base.price = cheap_prices[uniform_index(cat_rng, 3)];

    Product sibling = base;
    std::snprintf(pid, sizeof pid, "p%03d", 2 * i + 1);
    sibling.product_id = pid;
    sibling.options.insert(exclusive);
    sibling.price = expensive_prices[uniform_index(cat_rng, 3)];

    out.catalog.push_back(base);
    out.catalog.push_back(sibling);
  }

  ShopEnv env(out.catalog);
  auto task_rng = key.with("shop").with("tasks").rng();
  std::set<std::string> seen_tasks;
  std::vector<Instruction> tasks;
  int needed = config.n_train + config.n_test;
  static const double cheap_budgets[] = {30, 35, 40, 45, 50};
  static const double expensive_budgets[] = {90, 95, 100, 105, 110};

  for (int attempt = 0; static_cast<int>(tasks.size()) < needed; ++attempt) {
    if (attempt > 100 * needed)
      throw ConfigError("task space too small for requested dataset sizes");
    int pair = static_cast<int>(uniform_index(task_rng, config.n_pairs));
    bool expensive = uniform01(task_rng) < config.frac_expensive;
    const Product& target = out.catalog[2 * pair + (expensive ? 1 : 0)];
    const Product& base = out.catalog[2 * pair];

    ShopGoal goal;
    goal.target_type = target.ptype;
    goal.required_attributes = target.attributes;
    if (expensive) {
      // the sibling-only option keeps the pricier product uniquely perfect
      for (const auto& o : target.options)
        if (!base.options.count(o)) goal.required_options.insert(o);
      if (uniform01(task_rng) < 0.4) {
        std::vector<std::string> shared(base.options.begin(), base.options.end());
        goal.required_options.insert(
            shared[uniform_index(task_rng, shared.size())]);
      }
      goal.budget = expensive_budgets[uniform_index(task_rng, 5)];
    } else {
      double p = uniform01(task_rng);
      std::vector<std::string> shared(base.options.begin(), base.options.end());
      if (p < 0.55) {
        goal.required_options.insert(
            shared[uniform_index(task_rng, shared.size())]);
      } else if (p < 0.70) {
        goal.required_options.insert(shared.begin(), shared.end());
      }
      goal.budget = cheap_budgets[uniform_index(task_rng, 5)];
    }

    std::string sig = target.product_id + "|" + shop_task_text(goal);
    if (!seen_tasks.insert(sig).second) continue;

    Instruction ins;
    ins.env_id = "shopsim";
    ins.text = shop_task_text(goal);
    ins.goal = shop_goal_json(goal);
    tasks.push_back(ins);
  }

  for (int i = 0; i < needed; ++i) {
    char id[32];
    if (i < config.n_train) {
      std::snprintf(id, sizeof id, "shop-train-%03d", i);
      tasks[i].task_id = id;
      out.train.push_back(tasks[i]);
    } else {
      std::snprintf(id, sizeof id, "shop-test-%03d", i - config.n_train);
      tasks[i].task_id = id;
      out.test.push_back(tasks[i]);
    }
  }

  for (const auto& split : {out.train, out.test}) {
    ShopEnv check(out.catalog);
    for (const auto& ins : split) check.register_task(ins);
    for (const auto& ins : split) {
      Trajectory t = shop_expert(check, ins);
      if (t.outcome_reward != 1.0)
        throw ConfigError("generated task is not solvable at reward 1.0: " +
                          ins.task_id);
    }
  }
  return out;
}

Json product_to_json(const Product& p) {
  Json j;
  j["schema_version"] = 1;
  j["product_id"] = p.product_id;
  j["ptype"] = p.ptype;
  j["attributes"] = Json::array();
  for (const auto& a : p.attributes) j["attributes"].push_back(a);
  j["options"] = Json::array();
  for (const auto& o : p.options) j["options"].push_back(o);
  j["price"] = p.price;
  return j;
}

Product product_from_json(const Json& j) {
  Product p;
  p.product_id = j.at("product_id").get<std::string>();
  p.ptype = j.at("ptype").get<std::string>();
  for (const auto& a : j.at("attributes")) p.attributes.insert(a.get<std::string>());
  for (const auto& o : j.at("options")) p.options.insert(o.get<std::string>());
  p.price = j.at("price").get<double>();
  return p;
}

void save_catalog(const std::string& path, const std::vector<Product>& catalog) {
  std::string out;
  for (const auto& p : catalog) out += product_to_json(p).dump() + "\n";
  write_text_file(path, out);
}

std::vector<Product> load_catalog(const std::string& path) {
  std::vector<Product> catalog;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    catalog.push_back(product_from_json(Json::parse(line)));
  }
  if (catalog.empty()) throw DataCorruptionError("empty catalog file " + path);
  return catalog;
}

}  // namespace ipr
