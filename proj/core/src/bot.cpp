#include "capture/bot.hpp"

#include "capture/error.hpp"

namespace capture {

std::string to_string(DecisionRule r) { return r == DecisionRule::top1_match ? "top1-match" : "threshold-match"; }

DecisionRule decision_rule_from_string(const std::string& s) {
  if (s == "top1-match") return DecisionRule::top1_match;
  if (s == "threshold-match") return DecisionRule::threshold_match;
  throw InvalidArgument("unknown decision rule '" + s + "' (expected top1-match or threshold-match)");
}

void BotConfig::validate() const {
  if (solver_models.empty()) throw InvalidArgument("bot needs at least one solver model");
  if (rule == DecisionRule::threshold_match && !(threshold > 0.0 && threshold <= 1.0)) {
    throw InvalidArgument("bot threshold must be in (0, 1]");
  }
}

nlohmann::json to_json(const BotConfig& b) {
  return {{"solver_models", b.solver_models},
          {"decision_rule", to_string(b.rule)},
          {"threshold", b.threshold},
          {"knows_prompt", b.knows_prompt}};
}

BotConfig bot_config_from_json(const nlohmann::json& j) {
  BotConfig b;
  try {
    b.solver_models = j.at("solver_models").get<std::vector<std::string>>();
    b.rule = decision_rule_from_string(j.value("decision_rule", std::string("top1-match")));
    b.threshold = j.value("threshold", b.threshold);
    b.knows_prompt = j.value("knows_prompt", true);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed bot config: ") + e.what());
  }
  b.validate();
  return b;
}

std::vector<int> solve_challenge(const ClassifierPool& pool, const BotConfig& bot, const LabelSpace& labels,
                                 const PublicChallenge& challenge, const CellLoader& load) {
  bot.validate();
  const auto target = parse_prompt(labels, challenge.prompt);
  if (!target) throw InvalidArgument("bot cannot read a target class from prompt '" + challenge.prompt + "'");
  std::vector<ClassifierPtr> models;
  for (const auto& id : bot.solver_models) models.push_back(pool.get(id));

  // Softmax never reaches 1 exactly, but rounding can produce 1.0; keep tau = 1
  // unreachable as it is in exact arithmetic.
  const bool reachable = bot.threshold < 1.0;
  std::vector<int> selection;
  for (int i = 0; i < static_cast<int>(challenge.cells.size()); ++i) {
    const ImageTensor img = load(challenge.cells[i]);
    std::size_t votes = 0;
    for (const auto& m : models) {
      const Prediction p = m->predict(img);
      const bool accept = bot.rule == DecisionRule::top1_match ? p.top_class == *target
                                                                : reachable && p.probs[*target] >= bot.threshold;
      votes += accept;
    }
    if (2 * votes > models.size()) selection.push_back(i);
  }
  return selection;
}

std::vector<int> solve_challenge(const ClassifierPool& pool, const BotConfig& bot, const LabelSpace& labels,
                                 const PublicChallenge& challenge, const AssetStore& store) {
  return solve_challenge(pool, bot, labels, challenge, [&](const std::string& id) { return store.load(id); });
}

}  // namespace capture
