#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/evolution.hpp"
#include "capture/image.hpp"
#include "capture/rng.hpp"

namespace capture {

enum class Activation { sine, gaussian, sigmoid, identity, absolute };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
double activate(Activation a, double z) noexcept;

struct CppnNode {
  int id = 0;
  Activation activation = Activation::identity;
};

struct CppnConnection {
  int from = 0;
  int to = 0;
  double weight = 0.0;
  bool enabled = true;
};

// Compositional pattern-producing network. Node ids 0..3 are the inputs
// (x, y, radial distance, bias = 1); ids 4..6 are the R, G, B outputs, always
// squashed through a sigmoid. Hidden nodes take ids from 7 upward.
struct CPPNGenome {
  static constexpr int kInputCount = 4;
  static constexpr int kOutputCount = 3;
  static constexpr int kFirstOutput = kInputCount;
  static constexpr int kFirstHidden = kInputCount + kOutputCount;

  std::vector<CppnNode> nodes;
  std::vector<CppnConnection> connections;
  std::uint64_t seed = 0;

  // Inputs fully connected to outputs with weights drawn from U[-1, 1].
  static CPPNGenome initial(Rng& rng, std::uint64_t seed = 0);

  static bool is_input(int id) noexcept { return id >= 0 && id < kInputCount; }
  static bool is_output(int id) noexcept { return id >= kFirstOutput && id < kFirstHidden; }

  // Throws InvalidArgument for dangling ids, edges into inputs or out of
  // outputs, cycles, or an output not reachable from any input.
  void validate() const;
  // Non-input node ids in evaluation order. Throws InvalidArgument on cycles.
  std::vector<int> evaluation_order() const;
  int next_node_id() const;
  bool creates_cycle(int from, int to) const;
};

nlohmann::json to_json(const CPPNGenome& g);
CPPNGenome cppn_from_json(const nlohmann::json& j);

// Pixel (i, j) evaluates the network at x = 2 (j + 0.5) / width - 1,
// y = 2 (i + 0.5) / height - 1, r = sqrt(x^2 + y^2), bias = 1.
ImageTensor render_cppn(const CPPNGenome& g, int height, int width);

// Applies each structural mutation independently with its configured probability.
CPPNGenome mutate_cppn(const CPPNGenome& g, const CppnMutationConfig& cfg, Rng& rng);

struct CppnEvolutionResult {
  CPPNGenome genome;
  ImageTensor image;  // rendered at cfg.image_size
  std::vector<FitnessRecord> history;
  bool reached_target = false;
};

CppnEvolutionResult evolve_cppn(const ClassifierPool& pool, const EvolutionConfig& cfg);

}  // namespace capture
