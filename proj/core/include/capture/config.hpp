#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "capture/builder.hpp"
#include "capture/eval.hpp"

namespace capture {

// Applies CAPTURE_* variables to `config`. CAPTURE_SERVICE__TTL_S=60 sets
// config["service"]["ttl_s"]; values parse as JSON when they can and fall back
// to plain strings.
void apply_env_overrides(nlohmann::json& config, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> capture_environment();

// Reads a JSON config file and applies the process environment on top.
// Throws ConfigError.
nlohmann::json load_config_file(const std::filesystem::path& path);

EvolutionConfig evolution_config_from_json(const nlohmann::json& j, EvolutionConfig base = {});
GradientAscentConfig ascent_config_from_json(const nlohmann::json& j, GradientAscentConfig base = {});
PatchTrainingConfig patch_training_config_from_json(const nlohmann::json& j, PatchTrainingConfig base = {});
TransferEvalConfig transfer_config_from_json(const nlohmann::json& j);
PatchCurveEvalConfig patch_curve_config_from_json(const nlohmann::json& j);
SolveEvalConfig solve_config_from_json(const nlohmann::json& j);

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path store;
  std::filesystem::path log = "sessions.jsonl";
  std::filesystem::path challenge_dir = "challenges";
  std::optional<std::filesystem::path> static_dir;  // built UI bundle, served at /
  std::int64_t ttl_ms = 120000;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const ServiceConfig& cfg);

// A scale profile: the pool, label space and per-experiment settings that
// every CLI subcommand reads. Relative paths resolve against the config file.
struct Profile {
  std::string name;
  std::filesystem::path source;
  std::filesystem::path pool;
  std::filesystem::path labels;
  std::filesystem::path store;
  std::uint64_t seed = 0;
  int jobs = 1;
  nlohmann::json raw;  // the merged config, overrides applied

  StoreBuildConfig store_build() const;
  TransferEvalConfig transfer() const;
  PatchCurveEvalConfig patch_curve() const;
  SolveEvalConfig solve() const;
  ServiceConfig service() const;
  nlohmann::json section(const std::string& key) const;
};

// Throws ConfigError on unreadable or malformed profiles.
Profile load_profile(const std::filesystem::path& path);

}  // namespace capture
