#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "capture/builder.hpp"
#include "capture/config.hpp"
#include "capture/desk_data.hpp"
#include "capture/desk_pool.hpp"
#include "capture/error.hpp"
#include "capture/eval.hpp"
#include "capture/http_server.hpp"
#include "capture/plot.hpp"
#include "capture/png_io.hpp"
#include "capture/service.hpp"

namespace fs = std::filesystem;
using namespace capture;

namespace {

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::string profile = "desk";
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out = "out";
  std::string store;
};

void add_common(CLI::App* cmd, Common& c, bool with_store = false) {
  cmd->add_option("--config", c.config, "Profile config file (JSON); overrides --profile");
  cmd->add_option("--profile", c.profile, "Scale profile name resolved under configs/ (desk, full)")
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed recorded in every artifact (default: profile seed)");
  cmd->add_option("--jobs", c.jobs, "Maximum concurrent workers")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  if (with_store) cmd->add_option("--store", c.store, "Asset store directory (default: profile store)");
}

// Setup failures (bad config, unknown class) exit 2; failures while running exit 1.
template <class F>
auto setup(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
}

Profile load(const Common& c) {
  const fs::path path = !c.config.empty() ? fs::path(c.config)
                                          : fs::path(CAPTURE_DATA_DIR) / "configs" / (c.profile + ".json");
  Profile p = load_profile(path);
  if (c.seed) p.seed = *c.seed;
  if (c.jobs) p.jobs = *c.jobs;
  if (!c.store.empty()) p.store = fs::absolute(c.store);
  return p;
}

ClassifierPool load_pool(const Profile& p) { return ClassifierPool::load(p.pool); }

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return fs::path(c.out);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

EnsembleSpec ensemble_for(const ClassifierPool& pool, const std::vector<std::string>& ids, Aggregation agg) {
  EnsembleSpec e;
  e.member_ids = ids.empty() ? pool.ids() : ids;
  e.aggregation = agg;
  e.validate();
  for (const auto& id : e.member_ids) {
    if (!pool.contains(id)) throw ConfigError("unknown model '" + id + "'");
  }
  return e;
}

TrainingImageSet desk_images(int per_class, int size, std::uint64_t seed) {
  TrainingImageSet set;
  for (auto& item : desk::make_dataset(per_class, size, seed)) {
    set.images.push_back(std::move(item.image));
    set.labels.push_back(item.label);
  }
  return set;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '-';
  return out;
}

HttpServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial image CAPTCHA toolkit: asset generation, challenge assembly, bot evaluation, serving"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::function<void()> run;

  // gen-unrec
  Common gu_c;
  std::string gu_method = "cppn", gu_target;
  std::vector<std::string> gu_models;
  auto* gu = app.add_subcommand("gen-unrec", "Generate one unrecognizable image fooling an ensemble");
  add_common(gu, gu_c);
  gu->add_option("--method", gu_method, "cppn, gradient or direct")->capture_default_str();
  gu->add_option("--target", gu_target, "Target class name or index")->required();
  gu->add_option("--pool", gu_c.profile, "Model pool profile (alias of --profile)");
  gu->add_option("--models", gu_models, "Ensemble members (default: whole pool)")->delimiter(',');
  gu->callback([&] {
    run = [&] {
      auto [p, pool, labels, method, target, transfer] = setup([&] {
        Profile p = load(gu_c);
        auto pool = load_pool(p);
        auto labels = LabelSpace::load(p.labels);
        return std::make_tuple(p, std::move(pool), labels, unrec_method_from_string(gu_method),
                               labels.resolve(gu_target), p.transfer());
      });
      const auto ens = setup([&] { return ensemble_for(pool, gu_models, transfer.evolution.ensemble.aggregation); });
      const auto img = generate_unrec(pool, method, target, ens, p.seed, transfer.evolution, transfer.ascent);
      const fs::path dir = out_dir(gu_c);
      const std::string stem = "unrec-" + gu_method + "-" + slug(labels.name(target)) + "-s" + std::to_string(p.seed);
      save_image(img.image, dir / (stem + ".png"));
      auto manifest = img.manifest;
      manifest["profile"] = p.name;
      write_json(dir / (stem + ".json"), manifest);
      std::cout << (dir / (stem + ".png")).string() << "\n" << (dir / (stem + ".json")).string() << "\n";
      if (!img.reached_target) std::cerr << R"({"warning":"fitness target not reached"})" << "\n";
    };
  });

  // gen-patch
  Common gp_c;
  std::string gp_target;
  std::optional<int> gp_steps;
  std::vector<std::string> gp_models;
  auto* gp = app.add_subcommand("gen-patch", "Train one adversarial patch against an ensemble");
  add_common(gp, gp_c);
  gp->add_option("--target", gp_target, "Target class name or index")->required();
  gp->add_option("--steps", gp_steps, "Training steps (default: profile)")->check(CLI::PositiveNumber);
  gp->add_option("--models", gp_models, "Ensemble members (default: whole pool)")->delimiter(',');
  gp->callback([&] {
    run = [&] {
      auto [p, pool, labels, curve, target] = setup([&] {
        Profile p = load(gp_c);
        auto labels = LabelSpace::load(p.labels);
        return std::make_tuple(p, load_pool(p), labels, p.patch_curve(), labels.resolve(gp_target));
      });
      PatchTrainingConfig tc = curve.training;
      setup([&] {
        tc.ensemble = ensemble_for(pool, gp_models, Aggregation::mean_confidence);
        tc.target_class = target;
        tc.seed = p.seed;
        tc.jobs = p.jobs;
        if (gp_steps) tc.steps = *gp_steps;
        tc.validate();
        return 0;
      });
      const auto section = p.section("patch_curve");
      const auto train = desk_images(section.value("train_per_class", 8), section.value("image_size", 96),
                                     mix_seed(p.seed, 11));
      const PatchAsset asset = train_patch(pool, train, tc);
      const fs::path dir = out_dir(gp_c);
      const std::string stem = "patch-" + slug(labels.name(target)) + "-s" + std::to_string(p.seed);
      save_patch_asset(asset, dir, stem);
      std::cout << (dir / (stem + ".png")).string() << "\n" << (dir / (stem + ".json")).string() << "\n";
    };
  });

  // assemble
  Common as_c;
  std::string as_scheme = "combined", as_target;
  std::int64_t as_created = 0;
  auto* as = app.add_subcommand("assemble", "Assemble one challenge from the asset store");
  add_common(as, as_c, true);
  as->add_option("--scheme", as_scheme, "clean, unrec-only, patch-only or combined")->capture_default_str();
  as->add_option("--target", as_target, "Target class (default: drawn from the seed)");
  as->add_option("--created-at", as_created, "Timestamp recorded in the challenge (ms since epoch)")
      ->capture_default_str();
  as->callback([&] {
    run = [&] {
      auto [p, labels, spec] = setup([&] {
        Profile p = load(as_c);
        auto labels = LabelSpace::load(p.labels);
        Rng rng(p.seed);
        int target = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(labels.size())));
        if (!as_target.empty()) target = labels.resolve(as_target);
        return std::make_tuple(p, labels, ChallengeSpec::defaults(scheme_from_string(as_scheme), target, p.seed));
      });
      const auto store = AssetStore::open(p.store);
      const Challenge c = assemble(spec, store, labels, as_created);
      const fs::path path = out_dir(as_c) / ("challenge-" + c.challenge_id + ".json");
      write_json(path, to_json(c));
      std::cout << path.string() << "\n";
    };
  });

  // eval-transfer
  Common et_c;
  std::string et_method;
  std::optional<int> et_n;
  auto* et = app.add_subcommand("eval-transfer", "Hold-one-out transfer of unrecognizable images");
  add_common(et, et_c);
  et->add_option("--method", et_method, "cppn, gradient or direct (default: profile)");
  et->add_option("--n-per-split", et_n, "Images per hold-one-out split")->check(CLI::NonNegativeNumber);
  et->callback([&] {
    run = [&] {
      auto [p, pool, cfg] = setup([&] {
        Profile p = load(et_c);
        auto cfg = p.transfer();
        if (!et_method.empty()) cfg.method = unrec_method_from_string(et_method);
        if (et_n) cfg.n_per_split = *et_n;
        return std::make_tuple(p, load_pool(p), cfg);
      });
      const auto report = run_transfer_eval(pool, cfg);
      const auto path = write_report(report, out_dir(et_c), "transfer-unrec");
      std::cout << path.string() << "\n" << fs::path(path).replace_extension(".csv").string() << "\n";
      if (!report.aggregates.value("whitebox_dominates_every_split", true)) {
        std::cerr << R"({"warning":"white-box fooling rate below held-out rate on some split"})" << "\n";
      }
    };
  });

  // eval-patch-curve
  Common ep_c;
  std::optional<int> ep_steps, ep_images;
  std::vector<std::string> ep_targets;
  auto* ep = app.add_subcommand("eval-patch-curve", "Patch success against scale for every hold-one-out split");
  add_common(ep, ep_c);
  ep->add_option("--steps", ep_steps, "Patch training steps (default: profile)")->check(CLI::PositiveNumber);
  ep->add_option("--targets", ep_targets, "Patch target classes")->delimiter(',');
  ep->add_option("--n-images", ep_images, "Evaluation hosts per class")->check(CLI::PositiveNumber);
  ep->callback([&] {
    run = [&] {
      auto [p, pool, cfg] = setup([&] {
        Profile p = load(ep_c);
        auto cfg = p.patch_curve();
        if (ep_steps) cfg.training.steps = *ep_steps;
        if (!ep_targets.empty()) {
          const auto labels = LabelSpace::load(p.labels);
          cfg.targets.clear();
          for (const auto& t : ep_targets) cfg.targets.push_back(labels.resolve(t));
        }
        return std::make_tuple(p, load_pool(p), cfg);
      });
      const auto section = p.section("patch_curve");
      const int size = section.value("image_size", 96);
      const auto train = desk_images(section.value("train_per_class", 8), size, mix_seed(p.seed, 11));
      const auto eval = desk_images(ep_images.value_or(section.value("eval_per_class", 10)), size, mix_seed(p.seed, 12));
      const auto report = run_patch_curve_eval(pool, train, eval, cfg);
      const fs::path dir = out_dir(ep_c);
      const auto path = write_report(report, dir, "patch-curve");
      std::cout << path.string() << "\n" << fs::path(path).replace_extension(".csv").string() << "\n";
      for (const auto& curve : report_curves(report, "held-out")) {
        const fs::path cp = dir / ("patch-curve-heldout-" + slug(curve.model_id) + ".csv");
        std::ofstream(cp) << curve_csv(curve);
        std::cout << cp.string() << "\n";
      }
    };
  });

  // eval-solve
  Common es_c;
  std::optional<int> es_n;
  std::vector<std::string> es_schemes, es_models;
  std::string es_rule;
  std::optional<double> es_threshold;
  auto* es = app.add_subcommand("eval-solve", "Bot solve rates on clean and hardened challenges");
  add_common(es, es_c, true);
  es->add_option("--n-challenges", es_n, "Challenges per scheme")->check(CLI::NonNegativeNumber);
  es->add_option("--schemes", es_schemes, "Schemes to evaluate")->delimiter(',');
  es->add_option("--models", es_models, "Bot solver models")->delimiter(',');
  es->add_option("--rule", es_rule, "top1-match or threshold-match");
  es->add_option("--threshold", es_threshold, "Threshold for threshold-match");
  es->callback([&] {
    run = [&] {
      auto [p, pool, labels, cfg] = setup([&] {
        Profile p = load(es_c);
        auto cfg = p.solve();
        if (es_n) cfg.n_challenges = *es_n;
        if (!es_schemes.empty()) {
          cfg.schemes.clear();
          for (const auto& s : es_schemes) cfg.schemes.push_back(scheme_from_string(s));
        }
        if (!es_models.empty()) cfg.bot.solver_models = es_models;
        if (!es_rule.empty()) cfg.bot.rule = decision_rule_from_string(es_rule);
        if (es_threshold) cfg.bot.threshold = *es_threshold;
        auto pool = load_pool(p);
        if (cfg.bot.solver_models.empty()) cfg.bot.solver_models = pool.ids();
        for (const auto& id : cfg.bot.solver_models) {
          if (!pool.contains(id)) throw ConfigError("unknown model '" + id + "'");
        }
        cfg.bot.validate();
        return std::make_tuple(p, std::move(pool), LabelSpace::load(p.labels), cfg);
      });
      const auto store = AssetStore::open(p.store);
      const auto report = run_challenge_solve_eval(pool, labels, store, cfg);
      const auto path = write_report(report, out_dir(es_c), "challenge-solve");
      std::cout << path.string() << "\n" << fs::path(path).replace_extension(".csv").string() << "\n";
    };
  });

  // plot-curve
  Common pc_c;
  std::string pc_csv;
  auto* pc = app.add_subcommand("plot-curve", "Render one success-vs-scale PNG per held-out model");
  add_common(pc, pc_c);
  pc->add_option("csv", pc_csv, "patch-curve report CSV or single-curve CSV")->required()->check(CLI::ExistingFile);
  pc->callback([&] {
    run = [&] {
      std::ifstream in(pc_csv);
      std::stringstream text;
      text << in.rdbuf();
      const auto sets = setup([&] { return curves_from_csv(text.str()); });
      const fs::path dir = out_dir(pc_c);
      for (const auto& s : sets) {
        const fs::path path = dir / ("curve-" + slug(s.held_out) + ".png");
        save_image(plot_curve(s), path);
        std::cout << path.string() << "\n";
      }
    };
  });

  // serve
  Common sv_c;
  std::string sv_host;
  std::optional<int> sv_port;
  std::optional<double> sv_ttl;
  std::string sv_static;
  auto* sv = app.add_subcommand("serve", "Serve challenges over HTTP and log solve sessions");
  add_common(sv, sv_c, true);
  sv->add_option("--host", sv_host, "Listen address (default: profile)");
  sv->add_option("--port", sv_port, "Listen port (default: profile)")->check(CLI::Range(0, 65535));
  sv->add_option("--ttl", sv_ttl, "Session time-to-live in seconds")->check(CLI::PositiveNumber);
  sv->add_option("--static", sv_static, "Directory with the built UI bundle");
  sv->callback([&] {
    run = [&] {
      auto [p, labels, cfg] = setup([&] {
        Profile p = load(sv_c);
        auto cfg = p.service();
        if (!sv_c.store.empty()) cfg.store = p.store;
        if (!sv_host.empty()) cfg.host = sv_host;
        if (sv_port) cfg.port = *sv_port;
        if (sv_ttl) cfg.ttl_ms = static_cast<std::int64_t>(*sv_ttl * 1000.0);
        if (!sv_static.empty()) cfg.static_dir = sv_static;
        return std::make_tuple(p, LabelSpace::load(p.labels), cfg);
      });
      const auto store = AssetStore::open(cfg.store);
      CaptureService service(store, labels, cfg);
      HttpServer server(service, cfg.static_dir);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      int port = cfg.port;
      if (port == 0) {
        port = server.bind_any(cfg.host);
        if (port < 0) throw IoError("cannot bind " + cfg.host);
      }
      std::cout << "http://" << cfg.host << ":" << port << "/\n" << std::flush;
      const bool ok = cfg.port == 0 ? server.run() : server.listen(cfg.host, port);
      g_server = nullptr;
      if (!ok) throw IoError("cannot listen on " + cfg.host + ":" + std::to_string(port));
    };
  });

  // build-store
  Common bs_c;
  auto* bs = app.add_subcommand("build-store", "Populate an asset store for every challenge scheme");
  add_common(bs, bs_c, true);
  bs->callback([&] {
    run = [&] {
      auto [p, pool, labels, cfg] = setup([&] {
        Profile p = load(bs_c);
        return std::make_tuple(p, load_pool(p), LabelSpace::load(p.labels), p.store_build());
      });
      auto store = fs::exists(p.store / "catalog.json") ? AssetStore::open(p.store) : AssetStore::create(p.store);
      const auto summary = build_store(pool, labels, cfg, store);
      const fs::path path = out_dir(bs_c) / "store-build.json";
      write_json(path, {{"store", p.store.string()}, {"config", to_json(cfg)}, {"summary", to_json(summary)}});
      std::cout << p.store.string() << "\n" << path.string() << "\n";
    };
  });

  // train-pool
  Common tp_c;
  int tp_epochs = desk::PoolTrainingConfig{}.epochs;
  auto* tp = app.add_subcommand("train-pool", "Retrain the desk-scale model pool into --out");
  add_common(tp, tp_c);
  tp->add_option("--epochs", tp_epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  tp->callback([&] {
    run = [&] {
      desk::PoolTrainingConfig cfg;
      cfg.epochs = tp_epochs;
      if (tp_c.seed) cfg.seed = *tp_c.seed;
      nlohmann::json out = nlohmann::json::array();
      for (const auto& m : desk::train_pool(out_dir(tp_c), cfg)) {
        out.push_back({{"id", m.id}, {"test_accuracy", m.test_accuracy}, {"weights", m.weights.string()}});
      }
      std::cout << out.dump(2) << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << nlohmann::json{{"error", {{"kind", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }

  try {
    run();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
}
