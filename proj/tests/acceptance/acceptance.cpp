// Acceptance gates on the committed desk pool. One PASS/FAIL line per gate;
// exits non-zero when any gate fails.

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "capture/ascent.hpp"
#include "capture/builder.hpp"
#include "capture/config.hpp"
#include "capture/cppn.hpp"
#include "capture/desk_data.hpp"
#include "capture/desk_pool.hpp"
#include "capture/error.hpp"
#include "capture/eval.hpp"
#include "capture/http_server.hpp"
#include "capture/service.hpp"
#include "capture/transform.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace capture;

namespace {

struct GateResult {
  bool pass = false;
  std::string detail;
};

using Steady = std::chrono::steady_clock;

double seconds_since(Steady::time_point t0) {
  return std::chrono::duration<double>(Steady::now() - t0).count();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

struct Context {
  fs::path work;
  Profile profile;
  ClassifierPool pool;
  LabelSpace labels;
  bool fresh = false;
};

// --- mutation schedule -----------------------------------------------------

GateResult mutation_schedule(Context&) {
  const EvolutionConfig cfg;
  const double r0 = mutation_rate_at(0, cfg), r1 = mutation_rate_at(1000, cfg), r2 = mutation_rate_at(2000, cfg);
  return {r0 == 0.10 && r1 == 0.05 && r2 == 0.025,
          "rates at 0/1000/2000 = " + fmt(r0, 4) + "/" + fmt(r1, 4) + "/" + fmt(r2, 4)};
}

// --- polynomial mutation ---------------------------------------------------

double oracle_mutation(double y, double lo, double hi, double eta, double u) {
  const double d1 = (y - lo) / (hi - lo), d2 = (hi - y) / (hi - lo);
  const double power = 1.0 / (eta + 1.0);
  double dq;
  if (u <= 0.5) {
    const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, eta + 1.0);
    dq = std::pow(val, power) - 1.0;
  } else {
    const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, eta + 1.0);
    dq = 1.0 - std::pow(val, power);
  }
  return std::min(std::max(y + dq * (hi - lo), lo), hi);
}

GateResult polynomial_oracle(Context&) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const double y = 255.0 * u01(rng), u = u01(rng);
    mismatches += polynomial_mutation(y, 0.0, 255.0, 15.0, u) != oracle_mutation(y, 0.0, 255.0, 15.0, u);
  }
  // Genome level: 100 x 100 x 3 values, every one selected.
  const auto g = DirectGenome::random({100, 100}, 7);
  const auto m = polynomial_mutate(g, 1.0, 15.0, 8);
  std::mt19937_64 gr(8);
  int genome_mismatches = 0;
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    if (!(u01(gr) < 1.0)) continue;
    const double y = oracle_mutation(g.pixels[i], 0.0, 255.0, 15.0, u01(gr));
    genome_mismatches += m.pixels[i] != static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
  }
  return {mismatches == 0 && genome_mismatches == 0,
          std::to_string(mismatches) + "/10000 scalar and " + std::to_string(genome_mismatches) + "/" +
              std::to_string(g.pixels.size()) + " genome mismatches at eta 15"};
}

// --- gradients -------------------------------------------------------------

ImageTensor interior_image(int h, int w, Rng& rng) {
  ImageTensor img(h, w);
  for (double& v : img.values()) v = uniform(rng, 0.1, 0.9);
  return img;
}

double log_prob(const Classifier& m, const ImageTensor& img, int target) { return std::log(m.predict(img).probs[target]); }

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

GateResult gradient_correctness(Context&) {
  const double h = 1e-5;
  double worst_input = 0.0, worst_patch = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto model = desk::tiny_model(seed, {8, 8}, 5);
    Rng rng(mix_seed(seed, 100));
    const int target = static_cast<int>(seed % 5);

    const auto img = interior_image(12, 12, rng);
    const auto grad = model->input_gradient(img, target);
    for (int k = 0; k < 5; ++k) {
      const std::size_t i = uniform_index(rng, img.size());
      ImageTensor plus = img, minus = img;
      plus.values()[i] += h;
      minus.values()[i] -= h;
      const double fd = (log_prob(*model, plus, target) - log_prob(*model, minus, target)) / (2 * h);
      worst_input = std::max(worst_input, rel_error(grad.values()[i], fd));
    }

    const auto host = interior_image(16, 16, rng);
    const auto patch = interior_image(8, 8, rng);
    const PatchTransform t{uniform(rng, -40.0, 40.0), 0.6, 8.0, 8.0};
    const auto g = patch_objective_gradient(*model, patch, MaskShape::disc, host, t, target);
    const auto mask = make_mask(8, MaskShape::disc);
    for (int k = 0; k < 5; ++k) {
      std::size_t i;
      do {
        i = uniform_index(rng, patch.size());
      } while (!mask[i / 3] || g.gradient.values()[i] == 0.0);
      ImageTensor plus = patch, minus = patch;
      plus.values()[i] += h;
      minus.values()[i] -= h;
      const double fd = (log_prob(*model, apply_patch(plus, MaskShape::disc, host, t), target) -
                         log_prob(*model, apply_patch(minus, MaskShape::disc, host, t), target)) /
                        (2 * h);
      worst_patch = std::max(worst_patch, rel_error(g.gradient.values()[i], fd));
    }
  }
  return {worst_input <= 1e-3 && worst_patch <= 1e-3,
          "max relative error input " + sci(worst_input) + ", patch " + sci(worst_patch) + " (need <= 1e-3)"};
}

// --- white-box fooling and fragility -----------------------------------------

EnsembleSpec whole_pool(const ClassifierPool& pool) {
  EnsembleSpec e;
  e.member_ids = pool.ids();
  return e;
}

struct AscentAsset {
  ImageTensor image;
  int target = 0;
};

std::vector<AscentAsset>& ascent_assets() {
  static std::vector<AscentAsset> assets;
  return assets;
}

GateResult whitebox_fooling(Context& ctx) {
  const auto t0 = Steady::now();
  const EnsembleSpec ens = whole_pool(ctx.pool);
  auto& assets = ascent_assets();
  assets.clear();
  int fooled = 0;
  double worst = 1.0;
  for (int k = 0; k < 10; ++k) {
    GradientAscentConfig cfg = ctx.profile.transfer().ascent;
    cfg.target_class = k % ctx.pool.label_count();
    cfg.ensemble = ens;
    cfg.seed = mix_seed(ctx.profile.seed, 500 + k);
    auto r = gradient_ascent(ctx.pool, cfg);
    const double lowest = *std::min_element(r.member_confidences.begin(), r.member_confidences.end());
    worst = std::min(worst, lowest);
    fooled += lowest >= 0.99;
    assets.push_back({std::move(r.image), cfg.target_class});
  }
  const double elapsed = seconds_since(t0);
  return {fooled >= 9 && elapsed <= 300.0, std::to_string(fooled) + "/10 seeds at >= 0.99 on every member (lowest " +
                                               fmt(worst, 4) + "), " + fmt(elapsed, 1) + " s"};
}

// Mean white-box target confidence in points at native size and after resizing.
std::pair<double, double> confidence_before_after(const Ensemble& ens, const ImageTensor& img, int target) {
  const ImageTensor resized = apply_transform(img, ImageTransformSpec::resize(299, 299));
  return {100.0 * ens.confidence(img, target, Aggregation::mean_confidence),
          100.0 * ens.confidence(resized, target, Aggregation::mean_confidence)};
}

GateResult fragility(Context& ctx) {
  const EnsembleSpec spec = whole_pool(ctx.pool);
  const Ensemble ens(ctx.pool, spec);
  if (ascent_assets().size() != 10) whitebox_fooling(ctx);

  std::vector<double> ascent_drops, cppn_drops;
  for (const auto& a : ascent_assets()) {
    const auto [before, after] = confidence_before_after(ens, a.image, a.target);
    ascent_drops.push_back(before - after);
  }
  for (int k = 0; k < 10; ++k) {
    EvolutionConfig cfg = ctx.profile.transfer().evolution;
    cfg.target_class = k % ctx.pool.label_count();
    cfg.ensemble = spec;
    cfg.ensemble.aggregation = Aggregation::min_confidence;
    cfg.image_size = {224, 224};
    cfg.seed = mix_seed(ctx.profile.seed, 600 + k);
    const auto r = evolve_cppn(ctx.pool, cfg);
    const auto [before, after] = confidence_before_after(ens, r.image, cfg.target_class);
    cppn_drops.push_back(before - after);
  }
  const double ga = median(ascent_drops), cppn = median(cppn_drops);
  return {ga >= 30.0 && cppn <= 10.0, "median drop after 224->299: gradient ascent " + fmt(ga, 2) +
                                          " points (need >= 30), cppn " + fmt(cppn, 2) + " points (need <= 10)"};
}

// --- patch scale curve -------------------------------------------------------

TrainingImageSet desk_images(int per_class, int size, std::uint64_t seed) {
  TrainingImageSet set;
  for (auto& item : desk::make_dataset(per_class, size, seed)) {
    set.images.push_back(std::move(item.image));
    set.labels.push_back(item.label);
  }
  return set;
}

GateResult patch_curve(Context& ctx) {
  const auto t0 = Steady::now();
  const auto section = ctx.profile.section("patch_curve");
  const int size = section.value("image_size", 96);
  const auto train = desk_images(section.value("train_per_class", 8), size, mix_seed(ctx.profile.seed, 11));
  const auto eval = desk_images(section.value("eval_per_class", 10), size, mix_seed(ctx.profile.seed, 12));
  const auto report = run_patch_curve_eval(ctx.pool, train, eval, ctx.profile.patch_curve());
  write_report(report, ctx.work, "patch-curve");
  const double elapsed = seconds_since(t0);

  const auto& agg = report.aggregates;
  const bool mono = agg["heldout_monotone"].get<bool>();
  const double at_full = agg["whitebox_min_success_at_1_0"].is_null() ? 0.0 : agg["whitebox_min_success_at_1_0"].get<double>();
  const double at_60 = agg["whitebox_min_success_at_0_6"].is_null() ? 0.0 : agg["whitebox_min_success_at_0_6"].get<double>();
  return {mono && at_full >= 0.99 && at_60 >= 0.95 && elapsed <= 600.0,
          std::string("held-out monotone ") + (mono ? "yes" : "no") + ", white-box min success at 1.0 " +
              fmt(at_full) + " (need >= 0.99), at 0.6 " + fmt(at_60) + " (need >= 0.95), " + fmt(elapsed, 1) + " s"};
}

// --- transfer dominance ------------------------------------------------------

GateResult transfer_dominance(Context& ctx) {
  const auto t0 = Steady::now();
  auto cfg = ctx.profile.transfer();
  cfg.jobs = ctx.profile.jobs;
  const auto report = run_transfer_eval(ctx.pool, cfg);
  write_report(report, ctx.work, "transfer-unrec");
  // The report's own aggregates must be what a fresh fold of its rows gives.
  const bool consistent = recompute_aggregates(report) == report.aggregates;
  const auto& agg = report.aggregates;
  std::string splits;
  for (const auto& s : agg["per_split"]) {
    splits += " " + s["held_out"].get<std::string>() + " " + fmt(s["whitebox_fooling_rate"].get<double>(), 2) + "/" +
              fmt(s["heldout_fooling_rate"].get<double>(), 2);
  }
  const double pooled = agg["pooled"]["heldout_fooling_rate"].get<double>();
  return {consistent && agg["whitebox_dominates_every_split"].get<bool>(),
          "white-box/held-out per split:" + splits + "; pooled held-out " + fmt(pooled) +
              " vs full-scale 0.70 at 0.95 confidence (not gated), " + fmt(seconds_since(t0), 1) + " s"};
}

// --- bot gap -----------------------------------------------------------------

AssetStore desk_store(Context& ctx) {
  const fs::path root = ctx.work / "desk-store";
  StoreBuildConfig cfg = ctx.profile.store_build();
  cfg.seed = ctx.profile.seed;
  cfg.jobs = ctx.profile.jobs;
  const fs::path stamp = root / "build-config.json";
  if (!ctx.fresh && fs::exists(root / "catalog.json") && fs::exists(stamp)) {
    std::ifstream in(stamp);
    if (nlohmann::json::parse(in, nullptr, false) == to_json(cfg)) return AssetStore::open(root);
  }
  fs::remove_all(root);
  auto store = AssetStore::create(root);
  const auto summary = build_store(ctx.pool, ctx.labels, cfg, store);
  std::ofstream(stamp) << to_json(cfg).dump(2) << "\n";
  std::ofstream(ctx.work / "store-build.json") << to_json(summary).dump(2) << "\n";
  return store;
}

GateResult bot_gap(Context& ctx) {
  const auto t0 = Steady::now();
  const auto store = desk_store(ctx);
  const double build_s = seconds_since(t0);
  SolveEvalConfig cfg = ctx.profile.solve();
  cfg.n_challenges = 100;
  cfg.seed = ctx.profile.seed;
  const auto report = run_challenge_solve_eval(ctx.pool, ctx.labels, store, cfg);
  write_report(report, ctx.work, "challenge-solve");
  const auto& s = report.aggregates["schemes"];
  const double clean = s["clean"]["solve_rate"].get<double>();
  const double combined = s["combined"]["solve_rate"].get<double>();
  std::string all;
  for (const auto& [name, v] : s.items()) all += " " + name + " " + fmt(v["solve_rate"].get<double>(), 2);
  return {clean - combined >= 0.5 && combined <= 0.05,
          "solve rates:" + all + "; clean - combined " + fmt(clean - combined, 2) + " (need >= 0.50), store " +
              std::to_string(store.size()) + " assets, " + fmt(build_s, 1) + " s build"};
}

// --- challenge soundness -----------------------------------------------------

ChallengeSpec random_spec(Rng& rng, int labels) {
  const Scheme scheme = all_schemes()[uniform_index(rng, all_schemes().size())];
  return ChallengeSpec::defaults(scheme, static_cast<int>(uniform_index(rng, labels)), rng());
}

std::vector<int> key_from_store(const Challenge& c, const AssetStore& store) {
  std::vector<int> key;
  for (int i = 0; i < static_cast<int>(c.cells.size()); ++i) {
    if (store.get(c.cells[i]).true_class == c.spec.target_class) key.push_back(i);
  }
  return key;
}

GateResult challenge_soundness(Context& ctx) {
  const auto store = testing::synthetic_store(ctx.work / "synthetic-store", ctx.labels.size(), 6);
  Rng rng(mix_seed(ctx.profile.seed, 700));
  int key_mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    const Challenge c = assemble(random_spec(rng, ctx.labels.size()), store, ctx.labels);
    key_mismatch += key_from_store(c, store) != c.answer_key || c.answer_key.empty();
  }
  int verify_mismatch = 0;
  for (int f = 0; f < 100; ++f) {
    const Challenge c = assemble(random_spec(rng, ctx.labels.size()), store, ctx.labels);
    unsigned key_mask = 0;
    for (int i : key_from_store(c, store)) key_mask |= 1u << i;
    for (unsigned mask = 0; mask < 512; ++mask) {
      std::vector<int> sel;
      for (int i = 0; i < 9; ++i) {
        if (mask & (1u << i)) sel.push_back(i);
      }
      verify_mismatch += verify(c, sel) != (mask == key_mask);
    }
  }
  return {key_mismatch == 0 && verify_mismatch == 0,
          std::to_string(key_mismatch) + "/10000 answer-key mismatches, " + std::to_string(verify_mismatch) +
              "/51200 verify disagreements with the exhaustive oracle"};
}

// --- service parity ----------------------------------------------------------

// Independent fold over the JSONL log, straight from the file.
nlohmann::json fold_log(const fs::path& path) {
  struct Tally {
    int pass = 0, fail = 0, expired = 0;
    std::vector<double> times;
  };
  std::map<std::string, Tally> by;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    auto& t = by[j["scheme"].get<std::string>()];
    const auto outcome = j["outcome"].get<std::string>();
    if (outcome == "expired") {
      ++t.expired;
      continue;
    }
    (outcome == "pass" ? t.pass : t.fail) += 1;
    t.times.push_back(static_cast<double>(j["answered_at"].get<std::int64_t>() - j["issued_at"].get<std::int64_t>()));
  }
  nlohmann::json schemes = nlohmann::json::object();
  for (const char* s : {"unrec-only", "patch-only", "combined"}) by[s];
  for (auto& [name, t] : by) {
    nlohmann::json j{{"pass", t.pass}, {"fail", t.fail}, {"expired", t.expired}, {"answered", t.pass + t.fail}};
    if (t.pass + t.fail > 0) j["success_rate"] = static_cast<double>(t.pass) / (t.pass + t.fail);
    if (!t.times.empty()) j["median_solve_ms"] = median(t.times);
    schemes[name] = j;
  }
  return {{"schemes", schemes}};
}

bool mentions_hidden_fields(const std::string& body) {
  for (const char* word : {"answer", "key", "provenance", "true_class", "fooling", "manifest", "challenge_id"}) {
    if (body.find(word) != std::string::npos) return true;
  }
  return false;
}

GateResult service_parity(Context& ctx) {
  const fs::path dir = ctx.work / "service";
  fs::remove_all(dir);
  const auto store = testing::synthetic_store(dir / "store", ctx.labels.size(), 4);
  ServiceConfig cfg;
  cfg.store = dir / "store";
  cfg.log = dir / "sessions.jsonl";
  cfg.challenge_dir = dir / "challenges";
  cfg.ttl_ms = 10LL * 60 * 1000;
  cfg.seed = ctx.profile.seed;
  CaptureService service(store, ctx.labels, cfg);
  HttpServer server(service);
  const int port = server.bind_any("127.0.0.1");
  if (port <= 0) return {false, "cannot bind a local port"};
  std::thread thread([&] { server.run(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  Rng rng(mix_seed(ctx.profile.seed, 800));
  int outcome_mismatch = 0, schema_violations = 0, transport_errors = 0, passes = 0;
  const std::set<std::string> payload_keys{"session_id", "prompt", "rows", "cols", "images"};
  for (int i = 0; i < 1000; ++i) {
    const Scheme scheme = all_schemes()[uniform_index(rng, all_schemes().size())];
    const auto r = cli.Post("/api/challenge", nlohmann::json{{"scheme", to_string(scheme)}}.dump(), "application/json");
    if (!r || r->status != 200) {
      ++transport_errors;
      continue;
    }
    const auto body = nlohmann::json::parse(r->body);
    std::set<std::string> keys;
    for (const auto& [k, _] : body.items()) keys.insert(k);
    schema_violations += keys != payload_keys || mentions_hidden_fields(r->body);
    const std::string sid = body["session_id"];

    // The record the service wrote at issue time, checked against the store.
    const Challenge issued = service.challenge_for(sid);
    std::ifstream rec(cfg.challenge_dir / (issued.challenge_id + ".json"));
    const Challenge on_disk = challenge_from_json(nlohmann::json::parse(rec));
    const auto key = key_from_store(on_disk, store);

    std::vector<int> selection;
    switch (uniform_index(rng, 3)) {
      case 0: selection = key; break;
      case 1:
        for (int c = 0; c < 9; ++c) {
          if (uniform_index(rng, 2)) selection.push_back(c);
        }
        break;
      default: {
        selection = key;
        const int flip = static_cast<int>(uniform_index(rng, 9));
        const auto it = std::find(selection.begin(), selection.end(), flip);
        if (it == selection.end()) selection.push_back(flip); else selection.erase(it);
      }
    }
    const auto a = cli.Post("/api/session/" + sid + "/answer", nlohmann::json{{"selection", selection}}.dump(),
                            "application/json");
    if (!a || a->status != 200) {
      ++transport_errors;
      continue;
    }
    const auto answer = nlohmann::json::parse(a->body);
    std::set<std::string> akeys;
    for (const auto& [k, _] : answer.items()) akeys.insert(k);
    schema_violations += akeys != std::set<std::string>{"outcome", "elapsed_ms"};
    std::vector<int> sorted = selection;
    std::sort(sorted.begin(), sorted.end());
    const bool expected = sorted == key && verify(on_disk, selection);
    outcome_mismatch += (answer["outcome"] == "pass") != expected;
    passes += expected;
  }
  const auto stats = cli.Get("/api/stats");
  server.stop();
  thread.join();
  if (!stats || stats->status != 200) return {false, "stats endpoint failed"};
  const bool stats_match = nlohmann::json::parse(stats->body) == fold_log(cfg.log);
  return {outcome_mismatch == 0 && schema_violations == 0 && transport_errors == 0 && stats_match,
          "1000 sessions over HTTP (" + std::to_string(passes) + " passes): " + std::to_string(outcome_mismatch) +
              " outcome mismatches, " + std::to_string(schema_violations) + " schema violations, " +
              std::to_string(transport_errors) + " transport errors, stats " +
              (stats_match ? "equal" : "differ from") + " the log fold"};
}

struct Gate {
  std::string name;
  std::function<GateResult(Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gates on the desk pool"};
  fs::path work = "acceptance-work";
  fs::path config = testing::data_dir() / "configs/desk.json";
  std::vector<std::string> only;
  bool fresh = false;
  app.add_option("--work", work, "Scratch directory for stores and reports");
  app.add_option("--config", config, "Profile to run against")->check(CLI::ExistingFile);
  app.add_option("--only", only, "Run only these gates")->delimiter(',');
  app.add_flag("--fresh", fresh, "Rebuild the asset store even if a matching one exists");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  try {
    fs::create_directories(work);
    ctx.work = fs::absolute(work);
    ctx.profile = load_profile(config);
    ctx.pool = ClassifierPool::load(ctx.profile.pool);
    ctx.labels = LabelSpace::load(ctx.profile.labels);
    ctx.fresh = fresh;
  } catch (const std::exception& e) {
    std::cerr << "setup failed: " << e.what() << "\n";
    return 2;
  }

  const std::vector<Gate> gates{
      {"mutation-schedule", mutation_schedule},     {"polynomial-mutation-oracle", polynomial_oracle},
      {"gradient-correctness", gradient_correctness}, {"white-box-fooling", whitebox_fooling},
      {"fragility-asymmetry", fragility},           {"patch-scale-curve", patch_curve},
      {"transfer-dominance", transfer_dominance},   {"bot-gap", bot_gap},
      {"challenge-soundness", challenge_soundness}, {"service-parity", service_parity},
  };
  int failed = 0;
  for (const auto& gate : gates) {
    if (!only.empty() && std::find(only.begin(), only.end(), gate.name) == only.end()) continue;
    GateResult o;
    try {
      o = gate.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << gate.name << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
