#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/ensemble.hpp"
#include "capture/image.hpp"

namespace capture {

// Structural mutation probabilities for CPPN genomes.
struct CppnMutationConfig {
  double perturb_weight = 0.8;
  double weight_sigma = 0.5;
  double add_connection = 0.1;
  double add_node = 0.05;
  double toggle_enable = 0.05;
};

struct EvolutionConfig {
  int population_size = 20;
  int max_generations = 2000;
  double mutation_strength = 15.0;  // distribution index of the polynomial mutation
  double initial_mutation_rate = 0.10;
  int rate_halving_period = 1000;
  double fitness_target = 0.99;
  int target_class = 0;
  EnsembleSpec ensemble;
  std::uint64_t seed = 0;
  int tournament_size = 3;
  int elite_count = 1;
  ImageShape image_size{224, 224};
  // CPPN only: resolution at which candidates are rendered for fitness. The
  // final image is always rendered at image_size.
  std::optional<ImageShape> fitness_size;
  CppnMutationConfig cppn;

  void validate() const;
};

nlohmann::json to_json(const EvolutionConfig& cfg);

struct FitnessRecord {
  int generation = 0;
  std::map<std::string, double> per_member_confidence;
  double aggregate = 0.0;
};

nlohmann::json to_json(const FitnessRecord& r);

// initial_rate * 2^-floor(gen / period); exact in floating point.
double mutation_rate_at(int generation, const EvolutionConfig& cfg);

// Raw-pixel genome: H x W x 3 integers in [0, 255].
struct DirectGenome {
  ImageShape shape;
  std::vector<std::uint8_t> pixels;
  std::uint64_t rng_seed = 0;

  static DirectGenome random(ImageShape shape, std::uint64_t seed);
  ImageTensor to_image() const;
};

// Deb's bounded polynomial mutation of one value y in [lower, upper] with
// distribution index eta, driven by the uniform draw u in [0, 1).
double polynomial_mutation(double y, double lower, double upper, double eta, double u);

// Each value is selected independently with probability `rate` (draw u < rate);
// selected values get a second draw for the polynomial perturbation, then are
// rounded to the nearest integer and clamped to [0, 255].
DirectGenome polynomial_mutate(const DirectGenome& g, double rate, double eta, std::uint64_t seed);

struct EvolutionResult {
  ImageTensor image;
  std::vector<FitnessRecord> history;  // best individual after each generation
  bool reached_target = false;
};

// Elitist EA over direct encodings scored by ensemble confidence in the
// target class. Stops at fitness_target or max_generations.
EvolutionResult evolve_direct(const ClassifierPool& pool, const EvolutionConfig& cfg);

}  // namespace capture
