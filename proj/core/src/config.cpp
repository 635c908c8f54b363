#include "capture/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "capture/error.hpp"

extern char** environ;

namespace capture {

namespace {

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

ImageShape shape_from(const nlohmann::json& v) {
  if (v.is_number_integer()) return {v.get<int>(), v.get<int>()};
  const auto dims = v.get<std::vector<int>>();
  if (dims.size() != 2) throw InvalidArgument("image sizes are [height, width] or a single integer");
  return {dims[0], dims[1]};
}

void take_shape(const nlohmann::json& j, const char* key, ImageShape& out) {
  if (j.contains(key) && !j[key].is_null()) out = shape_from(j[key]);
}

void take_ensemble(const nlohmann::json& j, EnsembleSpec& out) {
  if (!j.contains("ensemble")) return;
  const auto& e = j["ensemble"];
  if (e.is_array()) {
    out.member_ids = e.get<std::vector<std::string>>();
  } else if (e.is_object()) {
    take(e, "member_ids", out.member_ids);
    if (e.contains("aggregation")) out.aggregation = aggregation_from_string(e["aggregation"].get<std::string>());
  }
}

// Runs a parse step and converts library / json errors into ConfigError.
template <class F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

void apply_env_overrides(nlohmann::json& config, const std::map<std::string, std::string>& env) {
  static const std::string prefix = "CAPTURE_";
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
    std::string rest = name.substr(prefix.size());
    std::transform(rest.begin(), rest.end(), rest.begin(), [](unsigned char c) { return std::tolower(c); });
    nlohmann::json* node = &config;
    std::size_t start = 0;
    while (true) {
      const auto sep = rest.find("__", start);
      const std::string key = rest.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
      if (key.empty()) throw ConfigError("malformed override variable " + name);
      if (!node->is_object()) *node = nlohmann::json::object();
      if (sep == std::string::npos) {
        nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
        (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
        break;
      }
      node = &(*node)[key];
      start = sep + 2;
    }
  }
}

std::map<std::string, std::string> capture_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq != std::string::npos && entry.rfind("CAPTURE_", 0) == 0) env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false, true);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + path.string() + " is not a JSON object");
  apply_env_overrides(j, capture_environment());
  return j;
}

EvolutionConfig evolution_config_from_json(const nlohmann::json& j, EvolutionConfig c) {
  return guarded("evolution", [&] {
    take(j, "population_size", c.population_size);
    take(j, "max_generations", c.max_generations);
    take(j, "mutation_strength", c.mutation_strength);
    take(j, "initial_mutation_rate", c.initial_mutation_rate);
    take(j, "rate_halving_period", c.rate_halving_period);
    take(j, "fitness_target", c.fitness_target);
    take(j, "target_class", c.target_class);
    take(j, "seed", c.seed);
    take(j, "tournament_size", c.tournament_size);
    take(j, "elite_count", c.elite_count);
    take_shape(j, "image_size", c.image_size);
    if (j.contains("fitness_size")) {
      c.fitness_size = j["fitness_size"].is_null() ? std::nullopt : std::optional(shape_from(j["fitness_size"]));
    }
    if (j.contains("aggregation")) c.ensemble.aggregation = aggregation_from_string(j["aggregation"]);
    take_ensemble(j, c.ensemble);
    if (j.contains("cppn")) {
      const auto& m = j["cppn"];
      take(m, "perturb_weight", c.cppn.perturb_weight);
      take(m, "weight_sigma", c.cppn.weight_sigma);
      take(m, "add_connection", c.cppn.add_connection);
      take(m, "add_node", c.cppn.add_node);
      take(m, "toggle_enable", c.cppn.toggle_enable);
    }
    return c;
  });
}

GradientAscentConfig ascent_config_from_json(const nlohmann::json& j, GradientAscentConfig c) {
  return guarded("ascent", [&] {
    take(j, "target_class", c.target_class);
    take(j, "steps", c.steps);
    take(j, "step_size", c.step_size);
    take(j, "seed", c.seed);
    take_shape(j, "image_size", c.image_size);
    if (j.contains("stop_confidence")) {
      c.stop_confidence = j["stop_confidence"].is_null() ? std::nullopt : std::optional(j["stop_confidence"].get<double>());
    }
    if (j.contains("aggregation")) c.ensemble.aggregation = aggregation_from_string(j["aggregation"]);
    take_ensemble(j, c.ensemble);
    return c;
  });
}

PatchTrainingConfig patch_training_config_from_json(const nlohmann::json& j, PatchTrainingConfig c) {
  return guarded("patch", [&] {
    take(j, "target_class", c.target_class);
    take(j, "steps", c.steps);
    take(j, "batch", c.batch);
    take(j, "step_size", c.step_size);
    if (j.contains("final_step_size") && !j["final_step_size"].is_null()) {
      c.final_step_size = j["final_step_size"].get<double>();
    }
    take(j, "seed", c.seed);
    take(j, "side", c.side);
    take(j, "jobs", c.jobs);
    if (j.contains("mask")) c.mask = mask_shape_from_string(j["mask"]);
    if (j.contains("distribution")) c.distribution = distribution_from_json(j["distribution"]);
    take_ensemble(j, c.ensemble);
    return c;
  });
}

StoreBuildConfig store_build_config_from_json(const nlohmann::json& j) {
  return guarded("store_build", [&] {
    StoreBuildConfig c;
    take(j, "image_size", c.image_size);
    take(j, "ensemble", c.ensemble);
    take(j, "clean_per_class", c.clean_per_class);
    take(j, "unrec_per_class", c.unrec_per_class);
    if (j.contains("unrec_method")) c.unrec_method = unrec_method_from_string(j["unrec_method"]);
    take(j, "gradient_fallback", c.gradient_fallback);
    if (j.contains("evolution")) c.evolution = evolution_config_from_json(j["evolution"], c.evolution);
    if (j.contains("ascent")) c.ascent = ascent_config_from_json(j["ascent"], c.ascent);
    if (j.contains("patch")) c.patch = patch_training_config_from_json(j["patch"], c.patch);
    take(j, "patch_train_per_class", c.patch_train_per_class);
    take(j, "hosts_per_pair", c.hosts_per_pair);
    if (j.contains("placement")) c.placement = distribution_from_json(j["placement"]);
    take(j, "placement_confidence", c.placement_confidence);
    take(j, "placement_attempts", c.placement_attempts);
    take(j, "perturbed_per_class", c.perturbed_per_class);
    take(j, "perturb_epsilon", c.perturb_epsilon);
    take(j, "seed", c.seed);
    take(j, "jobs", c.jobs);
    c.validate();
    return c;
  });
}

TransferEvalConfig transfer_config_from_json(const nlohmann::json& j) {
  return guarded("transfer", [&] {
    TransferEvalConfig c;
    if (j.contains("method")) c.method = unrec_method_from_string(j["method"]);
    take(j, "n_per_split", c.n_per_split);
    if (j.contains("evolution")) c.evolution = evolution_config_from_json(j["evolution"], c.evolution);
    if (j.contains("ascent")) c.ascent = ascent_config_from_json(j["ascent"], c.ascent);
    take(j, "fooling_confidence", c.fooling_confidence);
    take(j, "seed", c.seed);
    take(j, "jobs", c.jobs);
    if (c.n_per_split < 0) throw InvalidArgument("n_per_split must be >= 0");
    return c;
  });
}

PatchCurveEvalConfig patch_curve_config_from_json(const nlohmann::json& j) {
  return guarded("patch_curve", [&] {
    PatchCurveEvalConfig c;
    if (j.contains("training")) c.training = patch_training_config_from_json(j["training"], c.training);
    take(j, "targets", c.targets);
    take(j, "scales", c.scales);
    take(j, "seed", c.seed);
    take(j, "jobs", c.jobs);
    if (c.targets.empty()) throw InvalidArgument("patch_curve.targets must not be empty");
    return c;
  });
}

SolveEvalConfig solve_config_from_json(const nlohmann::json& j) {
  return guarded("solve", [&] {
    SolveEvalConfig c;
    if (j.contains("bot")) c.bot = bot_config_from_json(j["bot"]);
    if (j.contains("schemes")) {
      c.schemes.clear();
      for (const auto& s : j["schemes"]) c.schemes.push_back(scheme_from_string(s.get<std::string>()));
    }
    take(j, "n_challenges", c.n_challenges);
    take(j, "seed", c.seed);
    if (c.n_challenges < 0) throw InvalidArgument("n_challenges must be >= 0");
    return c;
  });
}

nlohmann::json to_json(const ServiceConfig& c) {
  nlohmann::json j{{"host", c.host},         {"port", c.port},
                   {"store", c.store.string()}, {"log", c.log.string()},
                   {"challenge_dir", c.challenge_dir.string()}, {"ttl_ms", c.ttl_ms},
                   {"seed", c.seed}};
  j["static_dir"] = c.static_dir ? nlohmann::json(c.static_dir->string()) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json Profile::section(const std::string& key) const {
  return raw.contains(key) && raw[key].is_object() ? raw[key] : nlohmann::json::object();
}

StoreBuildConfig Profile::store_build() const {
  auto j = section("store_build");
  if (!j.contains("seed")) j["seed"] = seed;
  if (!j.contains("jobs")) j["jobs"] = jobs;
  return store_build_config_from_json(j);
}

TransferEvalConfig Profile::transfer() const {
  auto j = section("transfer");
  if (!j.contains("seed")) j["seed"] = seed;
  if (!j.contains("jobs")) j["jobs"] = jobs;
  return transfer_config_from_json(j);
}

PatchCurveEvalConfig Profile::patch_curve() const {
  auto j = section("patch_curve");
  if (!j.contains("seed")) j["seed"] = seed;
  if (!j.contains("jobs")) j["jobs"] = jobs;
  return patch_curve_config_from_json(j);
}

SolveEvalConfig Profile::solve() const {
  auto j = section("solve");
  if (!j.contains("seed")) j["seed"] = seed;
  return solve_config_from_json(j);
}

ServiceConfig Profile::service() const {
  const auto j = section("service");
  const auto base = source.parent_path();
  return guarded("service", [&] {
    ServiceConfig c;
    c.store = store;
    take(j, "host", c.host);
    take(j, "port", c.port);
    if (j.contains("store")) c.store = resolve(base, j["store"]);
    if (j.contains("log")) c.log = resolve(base, j["log"]);
    if (j.contains("challenge_dir")) c.challenge_dir = resolve(base, j["challenge_dir"]);
    if (j.contains("static_dir") && !j["static_dir"].is_null()) c.static_dir = resolve(base, j["static_dir"]);
    if (j.contains("ttl_s")) c.ttl_ms = static_cast<std::int64_t>(j["ttl_s"].get<double>() * 1000.0);
    take(j, "ttl_ms", c.ttl_ms);
    c.seed = seed;
    take(j, "seed", c.seed);
    if (c.ttl_ms <= 0) throw InvalidArgument("ttl must be positive");
    if (c.port < 0 || c.port > 65535) throw InvalidArgument("port out of range");
    return c;
  });
}

Profile load_profile(const std::filesystem::path& path) {
  Profile p;
  p.source = std::filesystem::absolute(path);
  p.raw = load_config_file(path);
  const auto base = p.source.parent_path();
  guarded("profile", [&] {
    p.name = p.raw.value("name", path.stem().string());
    p.pool = resolve(base, p.raw.value("pool", std::string()));
    p.labels = resolve(base, p.raw.value("labels", std::string()));
    p.store = resolve(base, p.raw.value("store", std::string("store")));
    take(p.raw, "seed", p.seed);
    take(p.raw, "jobs", p.jobs);
    if (p.pool.empty()) throw ConfigError("profile " + path.string() + " names no model pool");
    if (p.labels.empty()) throw ConfigError("profile " + path.string() + " names no label space");
    return 0;
  });
  return p;
}

}  // namespace capture
