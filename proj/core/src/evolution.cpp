#include "capture/evolution.hpp"

#include <algorithm>
#include <cmath>

#include "capture/error.hpp"
#include "capture/rng.hpp"

namespace capture {

void EvolutionConfig::validate() const {
  if (population_size < 1) throw InvalidArgument("population_size must be positive");
  if (max_generations < 1) throw InvalidArgument("max_generations must be positive");
  if (!(mutation_strength > 0.0)) throw InvalidArgument("mutation strength must be > 0");
  if (!(initial_mutation_rate > 0.0 && initial_mutation_rate <= 1.0)) {
    throw InvalidArgument("initial_mutation_rate must be in (0, 1]");
  }
  if (rate_halving_period < 1) throw InvalidArgument("rate_halving_period must be >= 1");
  if (tournament_size < 1) throw InvalidArgument("tournament_size must be >= 1");
  if (elite_count < 1 || elite_count > population_size) {
    throw InvalidArgument("elite_count must be in [1, population_size]");
  }
  if (image_size.height <= 0 || image_size.width <= 0) throw InvalidArgument("image_size must be positive");
  ensemble.validate();
}

nlohmann::json to_json(const EvolutionConfig& cfg) {
  nlohmann::json j{{"population_size", cfg.population_size},
                   {"max_generations", cfg.max_generations},
                   {"mutation_strength", cfg.mutation_strength},
                   {"initial_mutation_rate", cfg.initial_mutation_rate},
                   {"rate_halving_period", cfg.rate_halving_period},
                   {"fitness_target", cfg.fitness_target},
                   {"target_class", cfg.target_class},
                   {"ensemble", to_json(cfg.ensemble)},
                   {"seed", cfg.seed},
                   {"tournament_size", cfg.tournament_size},
                   {"elite_count", cfg.elite_count},
                   {"image_size", {cfg.image_size.height, cfg.image_size.width}}};
  if (cfg.fitness_size) j["fitness_size"] = {cfg.fitness_size->height, cfg.fitness_size->width};
  return j;
}

nlohmann::json to_json(const FitnessRecord& r) {
  return {{"generation", r.generation},
          {"per_member_confidence", r.per_member_confidence},
          {"aggregate", r.aggregate}};
}

double mutation_rate_at(int generation, const EvolutionConfig& cfg) {
  if (generation < 0) throw InvalidArgument("generation must be >= 0");
  return std::ldexp(cfg.initial_mutation_rate, -(generation / cfg.rate_halving_period));
}

DirectGenome DirectGenome::random(ImageShape shape, std::uint64_t seed) {
  if (shape.height <= 0 || shape.width <= 0) throw InvalidArgument("genome shape must be positive");
  DirectGenome g{shape, std::vector<std::uint8_t>(static_cast<std::size_t>(shape.height) * shape.width * 3), seed};
  Rng rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(byte(rng));
  return g;
}

ImageTensor DirectGenome::to_image() const {
  ImageTensor img(shape.height, shape.width);
  auto v = img.values();
  for (std::size_t i = 0; i < pixels.size(); ++i) v[i] = pixels[i] / 255.0;
  return img;
}

double polynomial_mutation(double y, double lower, double upper, double eta, double u) {
  const double range = upper - lower;
  const double delta1 = (y - lower) / range;
  const double delta2 = (upper - y) / range;
  const double power = 1.0 / (eta + 1.0);
  double deltaq;
  if (u <= 0.5) {
    const double xy = 1.0 - delta1;
    const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(xy, eta + 1.0);
    deltaq = std::pow(val, power) - 1.0;
  } else {
    const double xy = 1.0 - delta2;
    const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(xy, eta + 1.0);
    deltaq = 1.0 - std::pow(val, power);
  }
  return std::clamp(y + deltaq * range, lower, upper);
}

DirectGenome polynomial_mutate(const DirectGenome& g, double rate, double eta, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("mutation rate must be in [0, 1]");
  DirectGenome out = g;
  Rng rng(seed);
  for (auto& p : out.pixels) {
    if (uniform01(rng) < rate) {
      const double y = polynomial_mutation(p, 0.0, 255.0, eta, uniform01(rng));
      p = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
    }
  }
  return out;
}

namespace {

struct Scored {
  DirectGenome genome;
  std::vector<double> confidences;
  double fitness = 0.0;
};

FitnessRecord record_of(int generation, const Ensemble& ens, const std::vector<double>& conf,
                        double fitness) {
  FitnessRecord r{generation, {}, fitness};
  for (std::size_t i = 0; i < conf.size(); ++i) r.per_member_confidence[ens.members()[i]->id()] = conf[i];
  return r;
}

}  // namespace

EvolutionResult evolve_direct(const ClassifierPool& pool, const EvolutionConfig& cfg) {
  cfg.validate();
  const Ensemble ens(pool, cfg.ensemble);
  Rng rng(cfg.seed);

  auto score = [&](DirectGenome g) {
    Scored s{std::move(g), {}, 0.0};
    s.confidences = ens.member_confidences(s.genome.to_image(), cfg.target_class);
    s.fitness = aggregate(cfg.ensemble.aggregation, s.confidences);
    return s;
  };
  auto by_fitness = [](const Scored& a, const Scored& b) { return a.fitness > b.fitness; };

  std::vector<Scored> population;
  for (int i = 0; i < cfg.population_size; ++i) {
    population.push_back(score(DirectGenome::random(cfg.image_size, rng())));
  }
  std::stable_sort(population.begin(), population.end(), by_fitness);

  EvolutionResult result;
  for (int gen = 0;; ++gen) {
    const Scored& best = population.front();
    result.history.push_back(record_of(gen, ens, best.confidences, best.fitness));
    if (best.fitness >= cfg.fitness_target) {
      result.reached_target = true;
      break;
    }
    if (gen + 1 >= cfg.max_generations) break;

    const double rate = mutation_rate_at(gen, cfg);
    std::vector<Scored> next(population.begin(), population.begin() + cfg.elite_count);
    while (static_cast<int>(next.size()) < cfg.population_size) {
      std::size_t winner = uniform_index(rng, population.size());
      for (int k = 1; k < cfg.tournament_size; ++k) {
        winner = std::min(winner, uniform_index(rng, population.size()));  // sorted: lower is fitter
      }
      next.push_back(score(polynomial_mutate(population[winner].genome, rate, cfg.mutation_strength, rng())));
    }
    std::stable_sort(next.begin(), next.end(), by_fitness);
    population = std::move(next);
  }
  result.image = population.front().genome.to_image();
  return result;
}

}  // namespace capture
