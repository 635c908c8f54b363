#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/challenge.hpp"
#include "capture/registry.hpp"
#include "capture/store.hpp"

namespace capture {

enum class DecisionRule { top1_match, threshold_match };

std::string to_string(DecisionRule r);
DecisionRule decision_rule_from_string(const std::string& s);

struct BotConfig {
  std::vector<std::string> solver_models;
  DecisionRule rule = DecisionRule::top1_match;
  double threshold = 0.5;  // tau, threshold_match only
  bool knows_prompt = true;

  // Non-empty models; tau in (0, 1] for threshold_match. Throws InvalidArgument.
  void validate() const;
};

nlohmann::json to_json(const BotConfig& b);
BotConfig bot_config_from_json(const nlohmann::json& j);

using CellLoader = std::function<ImageTensor(const std::string& asset_id)>;

// Reads the target class off the prompt, then selects every cell that a
// strict majority of solver models accepts under the decision rule.
std::vector<int> solve_challenge(const ClassifierPool& pool, const BotConfig& bot, const LabelSpace& labels,
                                 const PublicChallenge& challenge, const CellLoader& load);
std::vector<int> solve_challenge(const ClassifierPool& pool, const BotConfig& bot, const LabelSpace& labels,
                                 const PublicChallenge& challenge, const AssetStore& store);

}  // namespace capture
