#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/ascent.hpp"
#include "capture/bot.hpp"
#include "capture/challenge.hpp"
#include "capture/cppn.hpp"
#include "capture/evolution.hpp"
#include "capture/patch.hpp"

namespace capture {

// Rows hold scalar fields only, so they flatten to CSV unchanged.
struct EvalReport {
  std::string experiment;  // transfer-unrec, patch-curve or challenge-solve
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<nlohmann::json> rows;
  nlohmann::json aggregates = nlohmann::json::object();
  nlohmann::json artifacts = nlohmann::json::object();  // side outputs, e.g. trained patch objectives
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);
std::string rows_csv(const EvalReport& r);
// Writes <stem>.json and <stem>.csv; returns the JSON path.
std::filesystem::path write_report(const EvalReport& r, const std::filesystem::path& dir, const std::string& stem);

// Aggregates as a pure function of experiment + rows (+ config).
nlohmann::json recompute_aggregates(const EvalReport& r);

enum class UnrecMethod { cppn, gradient, direct };
std::string to_string(UnrecMethod m);
UnrecMethod unrec_method_from_string(const std::string& s);

struct UnrecImage {
  ImageTensor image;
  bool reached_target = false;
  nlohmann::json manifest;  // method, target, ensemble, seed, per-member confidence
};

// Generates one unrecognizable image with the chosen method against `ensemble`.
// The evolution / ascent templates supply every parameter except target,
// ensemble and seed.
UnrecImage generate_unrec(const ClassifierPool& pool, UnrecMethod method, int target, const EnsembleSpec& ensemble,
                          std::uint64_t seed, const EvolutionConfig& evolution, const GradientAscentConfig& ascent);

struct TransferEvalConfig {
  UnrecMethod method = UnrecMethod::cppn;
  int n_per_split = 20;
  EvolutionConfig evolution;
  GradientAscentConfig ascent;
  double fooling_confidence = 0.95;  // fooled = top-1 is the target and confidence >= this
  std::uint64_t seed = 0;
  int jobs = 1;
};

// One hold-one-out split per pool member; item k of a split targets class
// k mod label_count.
EvalReport run_transfer_eval(const ClassifierPool& pool, const TransferEvalConfig& cfg);

struct PatchCurveEvalConfig {
  PatchTrainingConfig training;  // template; ensemble, target and seed are set per split
  std::vector<int> targets{0};
  std::vector<double> scales = default_scale_sweep();
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Per split: trains one patch per target on the k-1 members and sweeps scales
// on every pool member (white-box and held-out).
EvalReport run_patch_curve_eval(const ClassifierPool& pool, const TrainingImageSet& train,
                                const TrainingImageSet& eval_images, const PatchCurveEvalConfig& cfg);

// Curves from a patch-curve report: one per (split, role), averaged over
// targets and members.
std::vector<ScaleCurve> report_curves(const EvalReport& r, const std::string& role);

struct SolveEvalConfig {
  BotConfig bot;
  std::vector<Scheme> schemes = all_schemes();
  int n_challenges = 100;
  std::uint64_t seed = 0;
};

EvalReport run_challenge_solve_eval(const ClassifierPool& pool, const LabelSpace& labels, const AssetStore& store,
                                    const SolveEvalConfig& cfg);

}  // namespace capture
