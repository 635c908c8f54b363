#include "capture/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "capture/error.hpp"
#include "capture/parallel.hpp"
#include "capture/png_io.hpp"

namespace capture {

namespace {

std::string csv_cell(const nlohmann::json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_null()) return "";
  return v.dump();
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

nlohmann::json transfer_aggregates(const EvalReport& r) {
  struct Acc {
    int items = 0;
    double wb = 0.0, ho = 0.0, ho_conf = 0.0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> by_split;
  Acc pooled;
  for (const auto& row : r.rows) {
    const auto split = row.at("split").get<std::string>();
    if (!by_split.count(split)) order.push_back(split);
    for (Acc* a : {&by_split[split], &pooled}) {
      a->items += 1;
      a->wb += row.at("whitebox_fooled_fraction").get<double>();
      a->ho += row.at("heldout_fooled").get<int>();
      a->ho_conf += row.at("heldout_confidence").get<double>();
    }
  }
  auto summary = [](const Acc& a) {
    return nlohmann::json{{"items", a.items},
                          {"whitebox_fooling_rate", ratio(a.wb, a.items)},
                          {"heldout_fooling_rate", ratio(a.ho, a.items)},
                          {"heldout_mean_confidence", ratio(a.ho_conf, a.items)}};
  };
  nlohmann::json splits = nlohmann::json::array();
  bool dominance = true;
  for (const auto& s : order) {
    auto j = summary(by_split[s]);
    j["held_out"] = s;
    j["whitebox_dominates"] = j["whitebox_fooling_rate"].get<double>() >= j["heldout_fooling_rate"].get<double>();
    dominance = dominance && j["whitebox_dominates"].get<bool>();
    splits.push_back(j);
  }
  return {{"per_split", splits},
          {"pooled", summary(pooled)},
          {"whitebox_dominates_every_split", dominance},
          {"full_scale_reference", {{"heldout_fooling_rate", 0.70}, {"confidence", 0.95}, {"gated", false}}}};
}

nlohmann::json patch_curve_aggregates(const EvalReport& r) {
  struct Key {
    std::string split, role;
    double scale;
    bool operator<(const Key& o) const { return std::tie(split, role, scale) < std::tie(o.split, o.role, o.scale); }
  };
  std::map<Key, std::pair<long, long>> acc;  // successes, trials
  std::vector<std::pair<std::string, std::string>> curves;
  for (const auto& row : r.rows) {
    Key k{row.at("split").get<std::string>(), row.at("role").get<std::string>(), row.at("scale").get<double>()};
    auto& [succ, trials] = acc[k];
    succ += row.at("successes").get<int>();
    trials += row.at("trials").get<int>();
    const auto sr = std::make_pair(k.split, k.role);
    if (std::find(curves.begin(), curves.end(), sr) == curves.end()) curves.push_back(sr);
  }
  nlohmann::json out = nlohmann::json::array();
  bool heldout_monotone = true;
  double wb_full = 1.0, wb_60 = 1.0;
  bool has_full = false, has_60 = false;
  for (const auto& [split, role] : curves) {
    ScaleCurve c{split, 0, {}};
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& [k, v] : acc) {
      if (k.split != split || k.role != role) continue;
      ScalePoint p{k.scale, static_cast<int>(v.second), static_cast<int>(v.first), 0};
      c.points.push_back(p);
      pts.push_back({{"scale", k.scale}, {"successes", v.first}, {"trials", v.second}, {"success_rate", p.success_rate()}});
      if (role == "white-box" && std::abs(k.scale - 1.0) < 1e-9) {
        wb_full = std::min(wb_full, p.success_rate());
        has_full = true;
      }
      if (role == "white-box" && std::abs(k.scale - 0.6) < 1e-9) {
        wb_60 = std::min(wb_60, p.success_rate());
        has_60 = true;
      }
    }
    const bool mono = monotone_within(c, 0.05);
    if (role == "held-out") heldout_monotone = heldout_monotone && mono;
    out.push_back({{"split", split}, {"role", role}, {"points", pts}, {"monotone_within_5_points", mono}});
  }
  nlohmann::json j{{"curves", out}, {"heldout_monotone", heldout_monotone}};
  j["whitebox_min_success_at_1_0"] = has_full ? nlohmann::json(wb_full) : nlohmann::json(nullptr);
  j["whitebox_min_success_at_0_6"] = has_60 ? nlohmann::json(wb_60) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json solve_aggregates(const EvalReport& r) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<int, int>> acc;  // solved, challenges
  for (const auto& row : r.rows) {
    const auto s = row.at("scheme").get<std::string>();
    if (!acc.count(s)) order.push_back(s);
    acc[s].first += row.at("solved").get<int>();
    acc[s].second += 1;
  }
  nlohmann::json schemes = nlohmann::json::object();
  for (const auto& s : order) {
    schemes[s] = {{"challenges", acc[s].second}, {"solved", acc[s].first},
                  {"solve_rate", ratio(acc[s].first, acc[s].second)}};
  }
  nlohmann::json j{{"schemes", schemes}};
  if (acc.count("clean")) {
    const double clean = ratio(acc["clean"].first, acc["clean"].second);
    bool exceeds = true;
    for (const auto& s : order) {
      if (s != "clean") exceeds = exceeds && clean > ratio(acc[s].first, acc[s].second);
    }
    j["clean_exceeds_every_hardened_scheme"] = exceeds;
    if (acc.count("combined")) j["clean_minus_combined"] = clean - ratio(acc["combined"].first, acc["combined"].second);
  }
  return j;
}

std::vector<double> member_confidences(const Ensemble& ens, const ImageTensor& img, int target) {
  return ens.member_confidences(img, target);
}

nlohmann::json confidence_map(const Ensemble& ens, const std::vector<double>& conf) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < conf.size(); ++i) j[ens.members()[i]->id()] = conf[i];
  return j;
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  return {{"experiment", r.experiment}, {"seed", r.seed},           {"config", r.config},
          {"rows", r.rows},             {"aggregates", r.aggregates}, {"artifacts", r.artifacts}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.experiment = j.at("experiment").get<std::string>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.config = j.value("config", nlohmann::json::object());
    r.rows = j.at("rows").get<std::vector<nlohmann::json>>();
    r.aggregates = j.value("aggregates", nlohmann::json::object());
    r.artifacts = j.value("artifacts", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

std::string rows_csv(const EvalReport& r) {
  std::vector<std::string> columns;
  for (const auto& row : r.rows) {
    for (const auto& [k, v] : row.items()) {
      if (std::find(columns.begin(), columns.end(), k) == columns.end()) columns.push_back(k);
    }
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      out << (i ? "," : "") << (row.contains(columns[i]) ? csv_cell(row[columns[i]]) : "");
    }
    out << '\n';
  }
  return out.str();
}

std::filesystem::path write_report(const EvalReport& r, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  const auto json_path = dir / (stem + ".json");
  std::ofstream j(json_path);
  std::ofstream c(dir / (stem + ".csv"));
  if (!j || !c) throw IoError("cannot write report files under " + dir.string());
  j << to_json(r).dump(2) << '\n';
  c << rows_csv(r);
  return json_path;
}

nlohmann::json recompute_aggregates(const EvalReport& r) {
  if (r.experiment == "transfer-unrec") return transfer_aggregates(r);
  if (r.experiment == "patch-curve") return patch_curve_aggregates(r);
  if (r.experiment == "challenge-solve") return solve_aggregates(r);
  throw InvalidArgument("unknown experiment '" + r.experiment + "'");
}

std::string to_string(UnrecMethod m) {
  switch (m) {
    case UnrecMethod::cppn: return "cppn";
    case UnrecMethod::gradient: return "gradient";
    case UnrecMethod::direct: return "direct";
  }
  return "cppn";
}

UnrecMethod unrec_method_from_string(const std::string& s) {
  if (s == "cppn") return UnrecMethod::cppn;
  if (s == "gradient") return UnrecMethod::gradient;
  if (s == "direct") return UnrecMethod::direct;
  throw InvalidArgument("unknown method '" + s + "' (expected cppn, gradient or direct)");
}

UnrecImage generate_unrec(const ClassifierPool& pool, UnrecMethod method, int target, const EnsembleSpec& ensemble,
                          std::uint64_t seed, const EvolutionConfig& evolution, const GradientAscentConfig& ascent) {
  UnrecImage out;
  nlohmann::json detail;
  switch (method) {
    case UnrecMethod::cppn: {
      EvolutionConfig cfg = evolution;
      cfg.target_class = target;
      cfg.ensemble = ensemble;
      cfg.seed = seed;
      auto r = evolve_cppn(pool, cfg);
      out.image = std::move(r.image);
      detail = {{"generations", r.history.size()}, {"genome", to_json(r.genome)}, {"config", to_json(cfg)}};
      break;
    }
    case UnrecMethod::direct: {
      EvolutionConfig cfg = evolution;
      cfg.target_class = target;
      cfg.ensemble = ensemble;
      cfg.seed = seed;
      auto r = evolve_direct(pool, cfg);
      out.image = std::move(r.image);
      detail = {{"generations", r.history.size()}, {"config", to_json(cfg)}};
      break;
    }
    case UnrecMethod::gradient: {
      GradientAscentConfig cfg = ascent;
      cfg.target_class = target;
      cfg.ensemble = ensemble;
      cfg.seed = seed;
      auto r = gradient_ascent(pool, cfg);
      out.image = std::move(r.image);
      detail = {{"steps_taken", r.steps_taken}, {"config", to_json(cfg)}};
      break;
    }
  }
  out.image = quantize(out.image);
  const Ensemble ens(pool, ensemble);
  const auto conf = member_confidences(ens, out.image, target);
  const double agg = aggregate(ensemble.aggregation, conf);
  const double goal = method == UnrecMethod::gradient ? ascent.stop_confidence.value_or(0.99) : evolution.fitness_target;
  out.reached_target = agg >= goal;
  out.manifest = {{"method", to_string(method)},
                  {"target_class", target},
                  {"ensemble", ensemble.member_ids},
                  {"seed", seed},
                  {"per_member_confidence", confidence_map(ens, conf)},
                  {"aggregate_confidence", agg},
                  {"reached_target", out.reached_target},
                  {"recommended", method != UnrecMethod::direct},
                  {"detail", detail}};
  return out;
}

EvalReport run_transfer_eval(const ClassifierPool& pool, const TransferEvalConfig& cfg) {
  if (pool.size() < 2) throw InvalidArgument("transfer evaluation needs a pool of at least two models");
  if (cfg.n_per_split < 0) throw InvalidArgument("n_per_split must be >= 0");
  const auto splits = holdout_splits(pool.handles(), cfg.evolution.ensemble.aggregation);

  EvalReport report;
  report.experiment = "transfer-unrec";
  report.seed = cfg.seed;
  report.config = {{"method", to_string(cfg.method)},
                   {"n_per_split", cfg.n_per_split},
                   {"fooling_confidence", cfg.fooling_confidence},
                   {"pool", pool.ids()}};
  if (cfg.method == UnrecMethod::gradient) {
    report.config["ascent"] = to_json(cfg.ascent);
  } else {
    EvolutionConfig shown = cfg.evolution;
    if (shown.ensemble.member_ids.empty()) shown.ensemble.member_ids = {splits.front().ensemble.member_ids};
    report.config["evolution"] = to_json(shown);
  }

  const std::size_t per = static_cast<std::size_t>(cfg.n_per_split);
  std::vector<nlohmann::json> rows(splits.size() * per);
  parallel_for(rows.size(), cfg.jobs, [&](std::size_t task) {
    const std::size_t s = task / per, k = task % per;
    const auto& split = splits[s];
    const int target = static_cast<int>(k % static_cast<std::size_t>(pool.label_count()));
    const std::uint64_t seed = mix_seed(cfg.seed, task);
    const auto unrec = generate_unrec(pool, cfg.method, target, split.ensemble, seed, cfg.evolution, cfg.ascent);

    const Ensemble ens(pool, split.ensemble);
    double wb_mean = 0.0, wb_min = 1.0, wb_fooled = 0.0;
    for (const auto& m : ens.members()) {
      const Prediction p = m->predict(unrec.image);
      const double c = p.probs[target];
      wb_mean += c;
      wb_min = std::min(wb_min, c);
      wb_fooled += p.top_class == target && c >= cfg.fooling_confidence;
    }
    const auto n = static_cast<double>(ens.members().size());
    const Prediction ho = pool.get(split.held_out)->predict(unrec.image);
    rows[task] = {{"split", split.held_out},
                  {"item", k},
                  {"target_class", target},
                  {"method", to_string(cfg.method)},
                  {"seed", seed},
                  {"reached_target", unrec.reached_target ? 1 : 0},
                  {"whitebox_mean_confidence", wb_mean / n},
                  {"whitebox_min_confidence", wb_min},
                  {"whitebox_fooled_fraction", wb_fooled / n},
                  {"heldout_top_class", ho.top_class},
                  {"heldout_confidence", ho.probs[target]},
                  {"heldout_fooled", ho.top_class == target && ho.probs[target] >= cfg.fooling_confidence ? 1 : 0}};
  });
  report.rows = std::move(rows);
  report.aggregates = recompute_aggregates(report);
  return report;
}

EvalReport run_patch_curve_eval(const ClassifierPool& pool, const TrainingImageSet& train,
                                const TrainingImageSet& eval_images, const PatchCurveEvalConfig& cfg) {
  if (pool.size() < 2) throw InvalidArgument("patch-curve evaluation needs a pool of at least two models");
  train.validate();
  eval_images.validate();
  const auto splits = holdout_splits(pool.handles(), cfg.training.ensemble.aggregation);

  EvalReport report;
  report.experiment = "patch-curve";
  report.seed = cfg.seed;
  PatchTrainingConfig shown = cfg.training;
  shown.ensemble = splits.front().ensemble;
  report.config = {{"training", to_json(shown)},
                   {"targets", cfg.targets},
                   {"scales", cfg.scales},
                   {"train_images", train.size()},
                   {"eval_images", eval_images.size()},
                   {"pool", pool.ids()}};

  const std::size_t per = cfg.targets.size();
  std::vector<std::vector<nlohmann::json>> task_rows(splits.size() * per);
  std::vector<nlohmann::json> patches(splits.size() * per);
  parallel_for(task_rows.size(), cfg.jobs, [&](std::size_t task) {
    const auto& split = splits[task / per];
    PatchTrainingConfig tc = cfg.training;
    tc.ensemble = split.ensemble;
    tc.target_class = cfg.targets[task % per];
    tc.seed = mix_seed(cfg.seed, task);
    tc.jobs = 1;
    const PatchAsset asset = train_patch(pool, train, tc);
    patches[task] = {{"split", split.held_out},
                     {"target_class", tc.target_class},
                     {"seed", tc.seed},
                     {"initial_objective", asset.training_curve.empty() ? 0.0 : asset.training_curve.front()},
                     {"final_objective", asset.final_objective}};
    for (const auto& id : pool.ids()) {
      const std::string role = id == split.held_out ? "held-out" : "white-box";
      const ScaleCurve curve =
          eval_patch_scale_curve(asset, *pool.get(id), eval_images, cfg.scales, mix_seed(tc.seed, 1));
      for (const auto& p : curve.points) {
        task_rows[task].push_back({{"split", split.held_out},
                                   {"target_class", tc.target_class},
                                   {"model", id},
                                   {"role", role},
                                   {"scale", p.scale},
                                   {"trials", p.trials},
                                   {"successes", p.successes},
                                   {"skipped", p.skipped},
                                   {"success_rate", p.success_rate()}});
      }
    }
  });
  for (auto& rows : task_rows) {
    for (auto& row : rows) report.rows.push_back(std::move(row));
  }
  report.artifacts["patches"] = patches;
  report.aggregates = recompute_aggregates(report);
  return report;
}

std::vector<ScaleCurve> report_curves(const EvalReport& r, const std::string& role) {
  if (r.experiment != "patch-curve") throw InvalidArgument("not a patch-curve report");
  std::vector<ScaleCurve> out;
  const nlohmann::json agg = recompute_aggregates(r);
  for (const auto& c : agg.at("curves")) {
    if (c.at("role").get<std::string>() != role) continue;
    ScaleCurve curve{c.at("split").get<std::string>(), 0, {}};
    for (const auto& p : c.at("points")) {
      curve.points.push_back({p.at("scale").get<double>(), p.at("trials").get<int>(), p.at("successes").get<int>(), 0});
    }
    out.push_back(std::move(curve));
  }
  return out;
}

EvalReport run_challenge_solve_eval(const ClassifierPool& pool, const LabelSpace& labels, const AssetStore& store,
                                    const SolveEvalConfig& cfg) {
  cfg.bot.validate();
  if (cfg.n_challenges < 0) throw InvalidArgument("n_challenges must be >= 0");
  EvalReport report;
  report.experiment = "challenge-solve";
  report.seed = cfg.seed;
  nlohmann::json schemes = nlohmann::json::array();
  for (Scheme s : cfg.schemes) schemes.push_back(to_string(s));
  report.config = {{"bot", to_json(cfg.bot)}, {"schemes", schemes}, {"n_challenges", cfg.n_challenges},
                   {"store", store.root().string()}};

  for (Scheme scheme : cfg.schemes) {
    for (int i = 0; i < cfg.n_challenges; ++i) {
      const std::uint64_t seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
      Rng rng(seed);
      const int target = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(labels.size())));
      const Challenge c = assemble(ChallengeSpec::defaults(scheme, target, seed), store, labels);
      const auto selection = solve_challenge(pool, cfg.bot, labels, public_view(c), store);
      report.rows.push_back({{"scheme", to_string(scheme)},
                             {"challenge", i},
                             {"challenge_id", c.challenge_id},
                             {"target_class", target},
                             {"selection", join(selection)},
                             {"answer_key", join(c.answer_key)},
                             {"solved", verify(c, selection) ? 1 : 0}});
    }
  }
  report.aggregates = recompute_aggregates(report);
  return report;
}

}  // namespace capture
