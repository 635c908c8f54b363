#include "capture/cppn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include "capture/error.hpp"

namespace capture {

namespace {

constexpr Activation kHiddenActivations[] = {Activation::sine, Activation::gaussian,
                                             Activation::sigmoid, Activation::identity,
                                             Activation::absolute};

double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

// Flattened evaluation program for rendering.
struct Program {
  struct Step {
    int slot;
    Activation activation;
    std::vector<std::pair<int, double>> inputs;  // (slot, weight)
  };
  std::vector<Step> steps;
  int slots = 0;
  std::array<int, 3> outputs{};
};

Program compile(const CPPNGenome& g) {
  const auto order = g.evaluation_order();
  std::map<int, int> slot;
  for (int i = 0; i < CPPNGenome::kInputCount; ++i) slot[i] = i;
  int next = CPPNGenome::kInputCount;
  for (int id : order) slot[id] = next++;
  std::map<int, Activation> act;
  for (const auto& n : g.nodes) act[n.id] = n.activation;

  Program p;
  p.slots = next;
  for (int id : order) {
    Program::Step s{slot[id], CPPNGenome::is_output(id) ? Activation::sigmoid : act[id], {}};
    for (const auto& c : g.connections) {
      if (c.enabled && c.to == id) s.inputs.emplace_back(slot.at(c.from), c.weight);
    }
    p.steps.push_back(std::move(s));
  }
  for (int k = 0; k < 3; ++k) p.outputs[k] = slot.at(CPPNGenome::kFirstOutput + k);
  return p;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::sine: return "sine";
    case Activation::gaussian: return "gaussian";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
    case Activation::absolute: return "absolute";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  for (Activation a : kHiddenActivations) {
    if (to_string(a) == s) return a;
  }
  throw InvalidArgument("unknown activation '" + s + "'");
}

double activate(Activation a, double z) noexcept {
  switch (a) {
    case Activation::sine: return std::sin(z);
    case Activation::gaussian: return std::exp(-z * z);
    case Activation::sigmoid: return sigmoid(z);
    case Activation::identity: return z;
    case Activation::absolute: return std::abs(z);
  }
  return z;
}

CPPNGenome CPPNGenome::initial(Rng& rng, std::uint64_t seed) {
  CPPNGenome g;
  g.seed = seed;
  for (int i = 0; i < kInputCount; ++i) g.nodes.push_back({i, Activation::identity});
  for (int k = 0; k < kOutputCount; ++k) g.nodes.push_back({kFirstOutput + k, Activation::sigmoid});
  for (int k = 0; k < kOutputCount; ++k) {
    for (int i = 0; i < kInputCount; ++i) {
      g.connections.push_back({i, kFirstOutput + k, uniform(rng, -1.0, 1.0), true});
    }
  }
  return g;
}

std::vector<int> CPPNGenome::evaluation_order() const {
  std::map<int, int> indegree;
  std::map<int, std::vector<int>> out;
  for (const auto& n : nodes) {
    if (!is_input(n.id)) indegree[n.id] = 0;
  }
  for (const auto& c : connections) {
    if (is_input(c.to)) throw InvalidArgument("connection into input node " + std::to_string(c.to));
    if (!indegree.count(c.to)) throw InvalidArgument("connection to unknown node " + std::to_string(c.to));
    if (!is_input(c.from)) {
      if (!indegree.count(c.from)) {
        throw InvalidArgument("connection from unknown node " + std::to_string(c.from));
      }
      ++indegree[c.to];
      out[c.from].push_back(c.to);
    }
  }
  std::vector<int> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push_back(id);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end(), std::greater<>());
    const int id = ready.back();
    ready.pop_back();
    order.push_back(id);
    for (int to : out[id]) {
      if (--indegree[to] == 0) ready.push_back(to);
    }
  }
  if (order.size() != indegree.size()) throw InvalidArgument("CPPN genome contains a cycle");
  return order;
}

void CPPNGenome::validate() const {
  std::set<int> ids;
  for (const auto& n : nodes) {
    if (!ids.insert(n.id).second) throw InvalidArgument("duplicate node id " + std::to_string(n.id));
  }
  for (int i = 0; i < kFirstHidden; ++i) {
    if (!ids.count(i)) throw InvalidArgument("missing fixed node " + std::to_string(i));
  }
  for (const auto& c : connections) {
    if (is_output(c.from)) throw InvalidArgument("connection out of output node " + std::to_string(c.from));
  }
  (void)evaluation_order();
  // Reachability: walk backwards from every output.
  for (int k = 0; k < kOutputCount; ++k) {
    std::vector<int> stack{kFirstOutput + k};
    std::set<int> seen;
    bool reached = false;
    while (!stack.empty() && !reached) {
      const int id = stack.back();
      stack.pop_back();
      for (const auto& c : connections) {
        if (c.to != id) continue;
        if (is_input(c.from)) {
          reached = true;
          break;
        }
        if (seen.insert(c.from).second) stack.push_back(c.from);
      }
    }
    if (!reached) throw InvalidArgument("output " + std::to_string(kFirstOutput + k) + " is not reachable from any input");
  }
}

int CPPNGenome::next_node_id() const {
  int m = kFirstHidden - 1;
  for (const auto& n : nodes) m = std::max(m, n.id);
  return m + 1;
}

bool CPPNGenome::creates_cycle(int from, int to) const {
  if (from == to) return true;
  // A cycle appears iff `from` is reachable from `to`.
  std::vector<int> stack{to};
  std::set<int> seen{to};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (const auto& c : connections) {
      if (c.from != id) continue;
      if (c.to == from) return true;
      if (seen.insert(c.to).second) stack.push_back(c.to);
    }
  }
  return false;
}

nlohmann::json to_json(const CPPNGenome& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes) nodes.push_back({{"id", n.id}, {"activation", to_string(n.activation)}});
  nlohmann::json conns = nlohmann::json::array();
  for (const auto& c : g.connections) {
    conns.push_back({{"from", c.from}, {"to", c.to}, {"weight", c.weight}, {"enabled", c.enabled}});
  }
  return {{"nodes", nodes}, {"connections", conns}, {"seed", g.seed}};
}

CPPNGenome cppn_from_json(const nlohmann::json& j) {
  CPPNGenome g;
  try {
    for (const auto& n : j.at("nodes")) {
      g.nodes.push_back({n.at("id").get<int>(), activation_from_string(n.at("activation").get<std::string>())});
    }
    for (const auto& c : j.at("connections")) {
      g.connections.push_back({c.at("from").get<int>(), c.at("to").get<int>(), c.at("weight").get<double>(),
                               c.value("enabled", true)});
    }
    g.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed CPPN genome: ") + e.what());
  }
  g.validate();
  return g;
}

ImageTensor render_cppn(const CPPNGenome& g, int height, int width) {
  if (height <= 0 || width <= 0) throw InvalidArgument("render size must be positive");
  const Program p = compile(g);
  std::vector<double> v(p.slots);
  ImageTensor img(height, width);
  for (int i = 0; i < height; ++i) {
    const double y = 2.0 * (i + 0.5) / height - 1.0;
    for (int j = 0; j < width; ++j) {
      const double x = 2.0 * (j + 0.5) / width - 1.0;
      v[0] = x;
      v[1] = y;
      v[2] = std::sqrt(x * x + y * y);
      v[3] = 1.0;
      for (const auto& s : p.steps) {
        double z = 0.0;
        for (const auto& [slot, w] : s.inputs) z += w * v[slot];
        v[s.slot] = activate(s.activation, z);
      }
      for (int k = 0; k < 3; ++k) img.at(i, j, k) = std::clamp(v[p.outputs[k]], 0.0, 1.0);
    }
  }
  return img;
}

CPPNGenome mutate_cppn(const CPPNGenome& g, const CppnMutationConfig& cfg, Rng& rng) {
  CPPNGenome out = g;
  if (uniform01(rng) < cfg.perturb_weight && !out.connections.empty()) {
    const double p = std::max(0.2, 1.0 / static_cast<double>(out.connections.size()));
    bool touched = false;
    for (auto& c : out.connections) {
      if (uniform01(rng) < p) {
        c.weight += gaussian(rng, cfg.weight_sigma);
        touched = true;
      }
    }
    if (!touched) out.connections[uniform_index(rng, out.connections.size())].weight += gaussian(rng, cfg.weight_sigma);
  }
  if (uniform01(rng) < cfg.add_connection) {
    std::vector<int> sources, sinks;
    for (const auto& n : out.nodes) {
      if (!CPPNGenome::is_output(n.id)) sources.push_back(n.id);
      if (!CPPNGenome::is_input(n.id)) sinks.push_back(n.id);
    }
    // A few attempts to find a new, acyclic edge.
    for (int attempt = 0; attempt < 8; ++attempt) {
      const int from = sources[uniform_index(rng, sources.size())];
      const int to = sinks[uniform_index(rng, sinks.size())];
      const bool exists = std::any_of(out.connections.begin(), out.connections.end(),
                                      [&](const CppnConnection& c) { return c.from == from && c.to == to; });
      if (exists || out.creates_cycle(from, to)) continue;
      out.connections.push_back({from, to, uniform(rng, -1.0, 1.0), true});
      break;
    }
  }
  if (uniform01(rng) < cfg.add_node) {
    std::vector<std::size_t> enabled;
    for (std::size_t i = 0; i < out.connections.size(); ++i) {
      if (out.connections[i].enabled) enabled.push_back(i);
    }
    if (!enabled.empty()) {
      const std::size_t idx = enabled[uniform_index(rng, enabled.size())];
      const CppnConnection split = out.connections[idx];
      out.connections[idx].enabled = false;
      const int id = out.next_node_id();
      out.nodes.push_back({id, kHiddenActivations[uniform_index(rng, std::size(kHiddenActivations))]});
      out.connections.push_back({split.from, id, 1.0, true});
      out.connections.push_back({id, split.to, split.weight, true});
    }
  }
  if (uniform01(rng) < cfg.toggle_enable && !out.connections.empty()) {
    auto& c = out.connections[uniform_index(rng, out.connections.size())];
    c.enabled = !c.enabled;
  }
  return out;
}

CppnEvolutionResult evolve_cppn(const ClassifierPool& pool, const EvolutionConfig& cfg) {
  cfg.validate();
  const Ensemble ens(pool, cfg.ensemble);
  const ImageShape eval = cfg.fitness_size.value_or(cfg.image_size);
  Rng rng(cfg.seed);

  struct Scored {
    CPPNGenome genome;
    std::vector<double> confidences;
    double fitness = 0.0;
  };
  auto score = [&](CPPNGenome g) {
    Scored s{std::move(g), {}, 0.0};
    s.confidences = ens.member_confidences(render_cppn(s.genome, eval.height, eval.width), cfg.target_class);
    s.fitness = aggregate(cfg.ensemble.aggregation, s.confidences);
    return s;
  };
  auto by_fitness = [](const Scored& a, const Scored& b) { return a.fitness > b.fitness; };
  auto record = [&](int gen, const Scored& s) {
    FitnessRecord r{gen, {}, s.fitness};
    for (std::size_t i = 0; i < s.confidences.size(); ++i) {
      r.per_member_confidence[ens.members()[i]->id()] = s.confidences[i];
    }
    return r;
  };

  std::vector<Scored> population;
  for (int i = 0; i < cfg.population_size; ++i) population.push_back(score(CPPNGenome::initial(rng, cfg.seed)));
  std::stable_sort(population.begin(), population.end(), by_fitness);

  CppnEvolutionResult result;
  for (int gen = 0;; ++gen) {
    result.history.push_back(record(gen, population.front()));
    if (population.front().fitness >= cfg.fitness_target) {
      result.reached_target = true;
      break;
    }
    if (gen + 1 >= cfg.max_generations) break;
    std::vector<Scored> next(population.begin(), population.begin() + cfg.elite_count);
    while (static_cast<int>(next.size()) < cfg.population_size) {
      std::size_t winner = uniform_index(rng, population.size());
      for (int k = 1; k < cfg.tournament_size; ++k) winner = std::min(winner, uniform_index(rng, population.size()));
      next.push_back(score(mutate_cppn(population[winner].genome, cfg.cppn, rng)));
    }
    std::stable_sort(next.begin(), next.end(), by_fitness);
    population = std::move(next);
  }
  result.genome = population.front().genome;
  result.image = render_cppn(result.genome, cfg.image_size.height, cfg.image_size.width);
  return result;
}

}  // namespace capture
