#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capture/classifier.hpp"
#include "capture/network.hpp"

namespace capture::desk {

struct ModelRecipe {
  std::string id;
  ImageShape input_size;
  nn::Network (*build)(ImageShape input);
};

// The three committed desk-scale architectures (two CNNs and an MLP).
const std::vector<ModelRecipe>& recipes();

struct PoolTrainingConfig {
  int train_per_class = 300;
  int test_per_class = 50;
  int epochs = 6;
  std::uint64_t seed = 20201015;
};

struct TrainedModel {
  std::string id;
  double test_accuracy = 0.0;
  std::filesystem::path weights;
};

// Trains every recipe on the procedural dataset and writes weights plus a
// registry file `desk_pool.json` into `out_dir`.
std::vector<TrainedModel> train_pool(const std::filesystem::path& out_dir,
                                     const PoolTrainingConfig& cfg);

// Small smooth (tanh) randomly initialized network used for gradient checks.
std::shared_ptr<NetworkClassifier> tiny_model(std::uint64_t seed, ImageShape input = {8, 8},
                                              int labels = 4);

}  // namespace capture::desk
