#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ipr/env.hpp"

namespace ipr {

struct Product {
  std::string product_id;
  std::string ptype;
  std::set<std::string> attributes;
  std::set<std::string> options;
  double price = 0.0;
};

struct ShopGoal {
  std::string target_type;
  std::set<std::string> required_attributes;
  std::set<std::string> required_options;
  double budget = 0.0;
};

ShopGoal shop_goal_from_instruction(const Instruction& instruction);

// f_type * (attr matches + selected option matches + price-ok) / (|U_att| + |U_opt| + 1)
double score_purchase(const ShopGoal& goal, const Product& product,
                      const std::set<std::string>& selected_options);

// Best reachable purchase score for a product: selecting every goal-relevant
// option it offers is optimal, extra selections never lower the score.
double best_product_score(const ShopGoal& goal, const Product& product);

enum class PageKind { Home, SearchResults, ProductPage, Order };

struct ShopPage : StatePayload {
  PageKind kind = PageKind::Home;
  std::vector<std::string> results;     // ranked pids when kind == SearchResults
  std::vector<std::string> last_results;  // results page beneath a product page
  std::string current_product;          // pid when kind == ProductPage
  std::set<std::string> selected;       // options chosen on the current product
  std::string purchased;                // pid when kind == Order
};

class ShopEnv : public Environment {
 public:
  static constexpr int kTopK = 5;
  static constexpr int kSearchTemplates = 3;

  explicit ShopEnv(std::vector<Product> catalog);

  const EnvSpec& spec() const override { return spec_; }
  int action_count() const override;
  std::string action_text(int index, const EnvState& state) const override;
  EnvState reset(const Instruction& instruction) const override;
  StepResult step(const EnvState& state, int action_index) const override;
  std::vector<int> legal_actions(const EnvState& state) const override;
  double score_outcome(const EnvState& state) const override;

  const std::vector<Product>& catalog() const { return catalog_; }
  const Product& product(const std::string& pid) const;
  const std::vector<std::string>& option_vocab() const { return option_vocab_; }

  // Token-overlap ranking against type + attributes; ties by pid ascending.
  std::vector<std::string> search(const std::set<std::string>& query) const;
  // 0: type + required attributes, 1: type only, 2: attributes only.
  std::set<std::string> search_query(const Instruction& instruction,
                                     int template_index) const;

  double heuristic_page_score(const ShopGoal& goal, const EnvState& state) const;

  int search_action(int template_index) const;
  int click_product_action(const std::string& pid) const;
  int click_option_action(const std::string& token) const;
  int back_action() const;
  int buy_action() const;

 private:
  const ShopPage& page(const EnvState& state) const;
  std::string render(const ShopPage& page) const;

  EnvSpec spec_;
  std::vector<Product> catalog_;
  std::map<std::string, int> pid_index_;
  std::vector<std::string> option_vocab_;
  std::map<std::string, int> option_index_;
};

Trajectory shop_expert(const ShopEnv& env, const Instruction& instruction);

struct ShopDatasetConfig {
  int n_pairs = 13;        // sibling product pairs; catalog size is twice this
  int n_train = 300;
  int n_test = 100;
  double frac_expensive = 0.25;  // tasks targeting the pricier sibling
};

struct ShopDataset {
  std::vector<Product> catalog;
  std::vector<Instruction> train;
  std::vector<Instruction> test;
};

ShopDataset generate_shop_dataset(const ShopDatasetConfig& config, uint64_t seed);

Json product_to_json(const Product& product);
Product product_from_json(const Json& j);
void save_catalog(const std::string& path, const std::vector<Product>& catalog);
std::vector<Product> load_catalog(const std::string& path);

}  // namespace ipr
