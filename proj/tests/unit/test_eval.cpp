#include <doctest.h>

#include <fstream>
#include <sstream>

#include "capture/error.hpp"
#include "capture/eval.hpp"
#include "capture/rng.hpp"
#include "support.hpp"

using namespace capture;

namespace {

nlohmann::json transfer_row(const std::string& split, double wb, int ho, double conf) {
  return {{"split", split}, {"whitebox_fooled_fraction", wb}, {"heldout_fooled", ho}, {"heldout_confidence", conf}};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("transfer aggregates are per-split means") {
  EvalReport r;
  r.experiment = "transfer-unrec";
  r.rows = {transfer_row("a", 1.0, 1, 0.96), transfer_row("a", 0.5, 0, 0.2), transfer_row("b", 0.0, 1, 0.99),
            transfer_row("b", 0.0, 0, 0.01)};
  const auto agg = recompute_aggregates(r);
  const auto& a = agg["per_split"][0];
  const auto& b = agg["per_split"][1];
  CHECK(a["held_out"] == "a");
  CHECK(a["items"] == 2);
  CHECK(a["whitebox_fooling_rate"].get<double>() == doctest::Approx(0.75));
  CHECK(a["heldout_fooling_rate"].get<double>() == doctest::Approx(0.5));
  CHECK(a["heldout_mean_confidence"].get<double>() == doctest::Approx(0.58));
  CHECK(a["whitebox_dominates"] == true);
  CHECK(b["whitebox_dominates"] == false);
  CHECK(agg["whitebox_dominates_every_split"] == false);
  CHECK(agg["pooled"]["items"] == 4);
  CHECK(agg["pooled"]["heldout_fooling_rate"].get<double>() == doctest::Approx(0.5));
}

TEST_CASE("patch-curve aggregates sum successes over targets") {
  EvalReport r;
  r.experiment = "patch-curve";
  auto row = [](const char* role, double scale, int succ, int trials) {
    return nlohmann::json{{"split", "m"}, {"role", role}, {"scale", scale}, {"successes", succ}, {"trials", trials}};
  };
  r.rows = {row("held-out", 0.6, 3, 10), row("held-out", 0.6, 1, 10), row("held-out", 1.0, 3, 10),
            row("held-out", 1.0, 5, 10), row("white-box", 0.6, 9, 10), row("white-box", 1.0, 10, 10),
            row("white-box", 0.6, 10, 10), row("white-box", 1.0, 10, 10)};
  auto agg = recompute_aggregates(r);
  CHECK(agg["heldout_monotone"] == true);
  CHECK(agg["whitebox_min_success_at_1_0"].get<double>() == 1.0);
  CHECK(agg["whitebox_min_success_at_0_6"].get<double>() == doctest::Approx(0.95));
  const auto& ho = agg["curves"][0];
  CHECK(ho["role"] == "held-out");
  CHECK(ho["points"][0]["successes"] == 4);
  CHECK(ho["points"][0]["trials"] == 20);

  // 0.6 -> 0.4 at a larger scale drops 20 points.
  r.rows[2]["successes"] = 0;
  r.rows[3]["successes"] = 0;
  agg = recompute_aggregates(r);
  CHECK(agg["heldout_monotone"] == false);
  CHECK(report_curves(r, "white-box").size() == 1);
}

TEST_CASE("solve aggregates and the clean gap") {
  EvalReport r;
  r.experiment = "challenge-solve";
  for (int i = 0; i < 10; ++i) r.rows.push_back({{"scheme", "clean"}, {"solved", i < 9 ? 1 : 0}});
  for (int i = 0; i < 10; ++i) r.rows.push_back({{"scheme", "combined"}, {"solved", i < 1 ? 1 : 0}});
  const auto agg = recompute_aggregates(r);
  CHECK(agg["schemes"]["clean"]["solve_rate"].get<double>() == doctest::Approx(0.9));
  CHECK(agg["schemes"]["combined"]["solved"] == 1);
  CHECK(agg["clean_minus_combined"].get<double>() == doctest::Approx(0.8));
  CHECK(agg["clean_exceeds_every_hardened_scheme"] == true);

  r.experiment = "nonsense";
  CHECK_THROWS_AS(recompute_aggregates(r), InvalidArgument);
}

TEST_CASE("csv flattening and report files") {
  EvalReport r;
  r.experiment = "challenge-solve";
  r.rows = {{{"scheme", "clean"}, {"solved", 1}, {"note", "a,\"b\""}}, {{"scheme", "combined"}, {"solved", 0}, {"flag", true}}};
  r.aggregates = recompute_aggregates(r);
  CHECK(rows_csv(r) == "note,scheme,solved,flag\n\"a,\"\"b\"\"\",clean,1,\n,combined,0,1\n");

  const auto dir = testing::scratch_dir("report");
  const auto path = write_report(r, dir, "solve");
  CHECK(read_file(dir / "solve.csv") == rows_csv(r));
  const auto back = eval_report_from_json(nlohmann::json::parse(read_file(path)));
  CHECK(back.rows == r.rows);
  CHECK(recompute_aggregates(back) == r.aggregates);
  CHECK_THROWS_AS(eval_report_from_json(nlohmann::json{{"rows", 3}}), FormatError);
}

TEST_CASE("solve eval matches an independent recount") {
  const auto store = testing::synthetic_store(testing::scratch_dir("eval-store"), 10, 6);
  const auto labels = testing::desk_labels();
  const auto pool = ClassifierPool::load(testing::desk_pool_path());
  SolveEvalConfig cfg;
  cfg.bot = {pool.ids(), DecisionRule::top1_match, 0.5, true};
  cfg.n_challenges = 6;
  cfg.seed = 31;
  const auto report = run_challenge_solve_eval(pool, labels, store, cfg);
  REQUIRE(report.rows.size() == 4 * 6);

  std::map<std::string, int> solved;
  for (const auto& row : report.rows) {
    const auto scheme = scheme_from_string(row["scheme"]);
    const int i = row["challenge"];
    const std::uint64_t seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
    Rng rng(seed);
    const int target = static_cast<int>(uniform_index(rng, 10));
    CHECK(row["target_class"] == target);
    const Challenge c = assemble(ChallengeSpec::defaults(scheme, target, seed), store, labels);
    CHECK(row["challenge_id"] == c.challenge_id);

    std::vector<int> selection;
    for (int cell = 0; cell < 9; ++cell) {
      const auto img = store.load(c.cells[cell]);
      int votes = 0;
      for (const auto& id : pool.ids()) votes += pool.get(id)->predict(img).top_class == target;
      if (2 * votes > static_cast<int>(pool.size())) selection.push_back(cell);
    }
    std::vector<int> key;
    for (int cell = 0; cell < 9; ++cell) {
      if (store.get(c.cells[cell]).true_class == target) key.push_back(cell);
    }
    const int ok = selection == key ? 1 : 0;
    CHECK(row["solved"] == ok);
    solved[row["scheme"]] += ok;
  }
  for (const auto& [scheme, n] : solved) CHECK(report.aggregates["schemes"][scheme]["solved"] == n);
}

TEST_CASE("zero challenges give an empty report") {
  const auto store = testing::synthetic_store(testing::scratch_dir("eval-empty"), 10, 1);
  const auto pool = ClassifierPool::load(testing::desk_pool_path());
  SolveEvalConfig cfg;
  cfg.bot = {pool.ids(), DecisionRule::top1_match, 0.5, true};
  cfg.n_challenges = 0;
  const auto report = run_challenge_solve_eval(pool, testing::desk_labels(), store, cfg);
  CHECK(report.rows.empty());
  CHECK(report.aggregates["schemes"].empty());
  CHECK(rows_csv(report) == "\n");
}

TEST_CASE("transfer eval rows follow the split layout") {
  const auto pool = ClassifierPool::load(testing::desk_pool_path());
  TransferEvalConfig cfg;
  cfg.method = UnrecMethod::gradient;
  cfg.n_per_split = 2;
  cfg.ascent.steps = 5;
  cfg.ascent.image_size = {32, 32};
  cfg.seed = 4;
  const auto report = run_transfer_eval(pool, cfg);
  REQUIRE(report.rows.size() == 3 * 2);
  for (std::size_t t = 0; t < report.rows.size(); ++t) {
    const auto& row = report.rows[t];
    CHECK(row["split"] == pool.ids()[t / 2]);
    CHECK(row["target_class"] == static_cast<int>(t % 2));
    CHECK(row["seed"] == mix_seed(cfg.seed, t));
    const double frac = row["whitebox_fooled_fraction"];
    CHECK((frac == 0.0 || frac == 0.5 || frac == 1.0));
  }
  CHECK(report.aggregates == recompute_aggregates(report));
  CHECK(to_json(run_transfer_eval(pool, cfg)) == to_json(report));
}
