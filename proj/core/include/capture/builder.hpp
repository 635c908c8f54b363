#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/eval.hpp"
#include "capture/store.hpp"

namespace capture {

// Recipe for populating an asset store with everything the four challenge
// schemes draw from. Every asset is rendered at image_size x image_size so
// dimensions reveal nothing about provenance.
struct StoreBuildConfig {
  int image_size = 96;
  std::vector<std::string> ensemble;  // generation models; empty = whole pool
  int clean_per_class = 12;

  int unrec_per_class = 4;
  UnrecMethod unrec_method = UnrecMethod::cppn;
  bool gradient_fallback = true;  // retry with gradient ascent when the primary method misses its target
  // Templates; target, ensemble, seed and image size are set per asset.
  EvolutionConfig evolution = [] {
    EvolutionConfig e;
    e.max_generations = 300;
    e.fitness_size = ImageShape{32, 32};
    e.ensemble.aggregation = Aggregation::min_confidence;
    return e;
  }();
  GradientAscentConfig ascent = [] {
    GradientAscentConfig a;
    a.stop_confidence = 0.99;
    return a;
  }();

  // Template; target, ensemble and seed are set per class. Square masks: some
  // classes (theater-curtain) are recognized from frame-wide texture a disc
  // cannot cover.
  PatchTrainingConfig patch = [] {
    PatchTrainingConfig p;
    p.steps = 600;
    p.mask = MaskShape::square;
    p.distribution = {-15.0, 15.0, 0.5, 0.8};
    return p;
  }();
  int patch_train_per_class = 8;
  int hosts_per_pair = 2;  // patched assets per (host class, patch class) pair
  TransformDistribution placement{-15.0, 15.0, 0.6, 0.8};
  double placement_confidence = 0.5;  // every member must put the patch class on top with at least this
  int placement_attempts = 40;

  int perturbed_per_class = 0;
  double perturb_epsilon = 8.0 / 255.0;

  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const StoreBuildConfig& cfg);
// Missing keys keep their defaults. Throws InvalidArgument on bad values.
StoreBuildConfig store_build_config_from_json(const nlohmann::json& j);

struct StoreBuildSummary {
  int clean = 0;
  int unrecognizable = 0;
  int unrec_missed = 0;  // stored with recommended = false
  int patched = 0;
  int patched_skipped = 0;  // hosts where no placement fooled every member
  int perturbed = 0;
  std::vector<nlohmann::json> patches;  // per-class training summary
};

nlohmann::json to_json(const StoreBuildSummary& s);

// Adds assets to `store` and saves its catalog.
StoreBuildSummary build_store(const ClassifierPool& pool, const LabelSpace& labels, const StoreBuildConfig& cfg,
                              AssetStore& store);

}  // namespace capture
