#include <doctest.h>

#include <map>

#include "capture/bot.hpp"
#include "capture/error.hpp"
#include "support.hpp"

using namespace capture;

namespace {

// Reads its class off pixel (0, 0, 0): class = round(10 v), shifted by
// `offset` so a model can be made to disagree.
class PixelReader final : public Classifier {
 public:
  PixelReader(std::string id, int offset, double confidence)
      : handle_{std::move(id), {4, 4}, 10, {}}, offset_(offset), confidence_(confidence) {}
  const ClassifierHandle& handle() const noexcept override { return handle_; }
  Prediction predict(const ImageTensor& img) const override {
    const int k = (static_cast<int>(img.at(0, 0, 0) * 10.0 + 0.5) + offset_) % 10;
    std::vector<double> p(10, (1.0 - confidence_) / 9.0);
    p[k] = confidence_;
    return Prediction::from_probs(p);
  }

 private:
  ClassifierHandle handle_;
  int offset_;
  double confidence_;
};

ImageTensor encoded(int cls) {
  ImageTensor img(4, 4);
  img.at(0, 0, 0) = cls / 10.0;
  return img;
}

struct Fixture {
  ClassifierPool pool;
  LabelSpace labels = testing::desk_labels();
  PublicChallenge challenge;
  std::map<std::string, ImageTensor> images;
  CellLoader load = [this](const std::string& id) { return images.at(id); };

  Fixture() {
    pool.add(std::make_shared<PixelReader>("honest-a", 0, 0.9));
    pool.add(std::make_shared<PixelReader>("honest-b", 0, 0.6));
    pool.add(std::make_shared<PixelReader>("liar", 1, 0.9));
    challenge.prompt = render_prompt(labels, 4, Scheme::clean);
    challenge.rows = 3;
    challenge.cols = 3;
    const int classes[9] = {4, 0, 3, 4, 9, 5, 4, 1, 2};
    for (int i = 0; i < 9; ++i) {
      const std::string id = "cell" + std::to_string(i);
      challenge.cells.push_back(id);
      images[id] = encoded(classes[i]);
    }
  }

  std::vector<int> solve(std::vector<std::string> models, DecisionRule rule, double tau = 0.5) const {
    BotConfig bot{std::move(models), rule, tau, true};
    return solve_challenge(pool, bot, labels, challenge, load);
  }
};

}  // namespace

TEST_CASE("top-1 bot selects what the majority recognises") {
  const Fixture f;
  CHECK(f.solve({"honest-a"}, DecisionRule::top1_match) == std::vector<int>{0, 3, 6});
  CHECK(f.solve({"honest-a", "honest-b", "liar"}, DecisionRule::top1_match) == std::vector<int>{0, 3, 6});
  // The liar reads class 3 as 4.
  CHECK(f.solve({"liar"}, DecisionRule::top1_match) == std::vector<int>{2});
  // A tie is not a majority.
  CHECK(f.solve({"honest-a", "liar"}, DecisionRule::top1_match).empty());
}

TEST_CASE("threshold bot") {
  const Fixture f;
  CHECK(f.solve({"honest-a"}, DecisionRule::threshold_match, 0.8) == std::vector<int>{0, 3, 6});
  CHECK(f.solve({"honest-b"}, DecisionRule::threshold_match, 0.8).empty());
  CHECK(f.solve({"honest-a", "honest-b", "liar"}, DecisionRule::threshold_match, 0.5) == std::vector<int>{0, 3, 6});
}

TEST_CASE("an unreachable threshold selects nothing") {
  Fixture f;
  f.pool.add(std::make_shared<FixedClassifier>(ClassifierHandle{"certain", {4, 4}, 10, {}},
                                               std::vector<double>{0, 0, 0, 0, 1, 0, 0, 0, 0, 0}));
  CHECK(f.solve({"certain"}, DecisionRule::top1_match).size() == 9);
  CHECK(f.solve({"certain"}, DecisionRule::threshold_match, 1.0).empty());
  CHECK(f.solve({"honest-a", "honest-b"}, DecisionRule::threshold_match, 1.0).empty());
}

TEST_CASE("bot is deterministic and needs a readable prompt") {
  Fixture f;
  CHECK(f.solve({"honest-a", "liar", "honest-b"}, DecisionRule::top1_match) ==
        f.solve({"honest-a", "liar", "honest-b"}, DecisionRule::top1_match));
  f.challenge.prompt = "Click every bus";
  CHECK_THROWS_AS(f.solve({"honest-a"}, DecisionRule::top1_match), InvalidArgument);
}

TEST_CASE("bot config validation and json") {
  CHECK_THROWS_AS((BotConfig{{}, DecisionRule::top1_match, 0.5, true}.validate()), InvalidArgument);
  CHECK_THROWS_AS((BotConfig{{"m"}, DecisionRule::threshold_match, 0.0, true}.validate()), InvalidArgument);
  CHECK_THROWS_AS((BotConfig{{"m"}, DecisionRule::threshold_match, 1.5, true}.validate()), InvalidArgument);
  const BotConfig b{{"a", "b"}, DecisionRule::threshold_match, 0.7, true};
  const BotConfig back = bot_config_from_json(to_json(b));
  CHECK(back.solver_models == b.solver_models);
  CHECK(back.rule == b.rule);
  CHECK(back.threshold == b.threshold);
  CHECK(decision_rule_from_string("top1-match") == DecisionRule::top1_match);
  CHECK_THROWS_AS(decision_rule_from_string("vibes"), InvalidArgument);
  Fixture f;
  CHECK_THROWS_AS(f.solve({"nobody"}, DecisionRule::top1_match), UnknownId);
}
