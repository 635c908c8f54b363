#include <doctest.h>

#include <cmath>

#include "capture/cppn.hpp"
#include "capture/desk_pool.hpp"
#include "capture/error.hpp"
#include "capture/transform.hpp"

using namespace capture;

namespace {

// Hand-rolled generator: a genome after a random-length chain of mutations
// with boosted structural rates.
CPPNGenome random_genome(std::uint64_t seed) {
  Rng rng(seed);
  auto g = CPPNGenome::initial(rng, seed);
  CppnMutationConfig cfg;
  cfg.add_node = 0.3;
  cfg.add_connection = 0.4;
  cfg.toggle_enable = 0.2;
  const int steps = static_cast<int>(uniform_index(rng, 40));
  for (int i = 0; i < steps; ++i) g = mutate_cppn(g, cfg, rng);
  return g;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 1.0;
}

}  // namespace

TEST_CASE("initial genome fully connects inputs to outputs") {
  Rng rng(1);
  const auto g = CPPNGenome::initial(rng);
  CHECK(g.nodes.size() == 7);
  CHECK(g.connections.size() == 12);
  for (const auto& c : g.connections) {
    CHECK(CPPNGenome::is_input(c.from));
    CHECK(CPPNGenome::is_output(c.to));
    CHECK(std::abs(c.weight) <= 1.0);
  }
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("mutation chains keep genomes valid and acyclic") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto g = random_genome(seed);
    CAPTURE(seed);
    CHECK_NOTHROW(g.validate());
    const auto order = g.evaluation_order();
    CHECK(order.size() == g.nodes.size() - CPPNGenome::kInputCount);
    // Every enabled edge goes forward in the evaluation order.
    std::map<int, int> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
    for (const auto& c : g.connections) {
      if (!CPPNGenome::is_input(c.from)) CHECK(pos[c.from] < pos[c.to]);
    }
  }
}

TEST_CASE("genome json round trip") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto g = random_genome(seed);
    const auto back = cppn_from_json(to_json(g));
    CHECK(to_json(back) == to_json(g));
    CHECK(render_cppn(back, 12, 12) == render_cppn(g, 12, 12));
  }
}

TEST_CASE("structural violations are rejected") {
  Rng rng(2);
  auto g = CPPNGenome::initial(rng);
  auto into_input = g;
  into_input.connections.push_back({4, 0, 1.0, true});
  CHECK_THROWS_AS(into_input.validate(), InvalidArgument);

  auto cyclic = g;
  cyclic.nodes.push_back({7, Activation::sine});
  cyclic.nodes.push_back({8, Activation::gaussian});
  cyclic.connections.push_back({0, 7, 1.0, true});
  cyclic.connections.push_back({7, 8, 1.0, true});
  cyclic.connections.push_back({8, 7, 1.0, true});
  cyclic.connections.push_back({8, 4, 1.0, true});
  CHECK_THROWS_AS(cyclic.validate(), InvalidArgument);

  auto dangling = g;
  dangling.connections.push_back({0, 42, 1.0, true});
  CHECK_THROWS_AS(dangling.validate(), InvalidArgument);

  auto chain = g;
  chain.nodes.push_back({7, Activation::sine});
  chain.connections.push_back({0, 7, 1.0, true});
  chain.connections.push_back({7, 4, 1.0, true});
  CHECK(chain.creates_cycle(4, 7));
  chain.nodes.push_back({8, Activation::sine});
  chain.connections.push_back({7, 8, 1.0, true});
  CHECK(chain.creates_cycle(8, 7));
  CHECK_FALSE(chain.creates_cycle(7, 8));
}

TEST_CASE("render is deterministic and in range") {
  const auto g = random_genome(5);
  const auto a = render_cppn(g, 20, 30);
  CHECK(a == render_cppn(g, 20, 30));
  CHECK(a.in_range());
  CHECK(a.height() == 20);
  CHECK(a.width() == 30);
}

TEST_CASE("renders agree across resolutions") {
  // A CPPN is a function of continuous coordinates: a 32x32 render should
  // correlate strongly with a 96x96 render downsampled to 32x32.
  double worst = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = random_genome(seed + 100);
    const auto small = render_cppn(g, 32, 32);
    const auto big = resize_bilinear(render_cppn(g, 96, 96), 32, 32);
    worst = std::min(worst, pearson(small.values(), big.values()));
  }
  CHECK(worst >= 0.9);
}

TEST_CASE("cppn evolution is deterministic and never loses fitness") {
  ClassifierPool pool;
  pool.add(desk::tiny_model(3, {8, 8}, 4));
  EvolutionConfig cfg;
  cfg.population_size = 8;
  cfg.max_generations = 10;
  cfg.image_size = {16, 16};
  cfg.fitness_size = ImageShape{8, 8};
  cfg.ensemble.member_ids = pool.ids();
  cfg.seed = 4;
  cfg.target_class = 1;
  const auto a = evolve_cppn(pool, cfg);
  const auto b = evolve_cppn(pool, cfg);
  CHECK(a.image == b.image);
  CHECK(to_json(a.genome) == to_json(b.genome));
  CHECK(a.image.shape() == ImageShape{16, 16});
  for (std::size_t i = 1; i < a.history.size(); ++i) CHECK(a.history[i].aggregate >= a.history[i - 1].aggregate);
}
