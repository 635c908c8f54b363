#include "capture/desk_pool.hpp"

#include <fstream>

#include "capture/desk_data.hpp"
#include "capture/error.hpp"
#include "capture/registry.hpp"

namespace capture::desk {

namespace {

nn::Network build_cnn_a(ImageShape in) {
  nn::Network net({3, in.height, in.width});
  const int h = in.height / 4, w = in.width / 4;
  net.add(nn::conv2d(3, 8, 3, 1, 1)).add(nn::relu()).add(nn::avg_pool(2));
  net.add(nn::conv2d(8, 16, 3, 1, 1)).add(nn::relu()).add(nn::avg_pool(2));
  net.add(nn::dense(16 * h * w, kClassCount));
  return net;
}

nn::Network build_cnn_b(ImageShape in) {
  nn::Network net({3, in.height, in.width});
  net.add(nn::conv2d(3, 12, 5, 2, 2)).add(nn::tanh_layer()).add(nn::avg_pool(2));
  net.add(nn::conv2d(12, 16, 3, 1, 1)).add(nn::relu()).add(nn::avg_pool(2));
  net.add(nn::dense(16 * (in.height / 8) * (in.width / 8), kClassCount));
  return net;
}

nn::Network build_mlp(ImageShape in) {
  nn::Network net({3, in.height, in.width});
  net.add(nn::dense(3 * in.height * in.width, 48)).add(nn::tanh_layer());
  net.add(nn::dense(48, kClassCount));
  return net;
}

}  // namespace

const std::vector<ModelRecipe>& recipes() {
  static const std::vector<ModelRecipe> all{
      {"desk-cnn-a", {32, 32}, build_cnn_a},
      {"desk-cnn-b", {32, 32}, build_cnn_b},
      {"desk-mlp", {32, 32}, build_mlp},
  };
  return all;
}

std::vector<TrainedModel> train_pool(const std::filesystem::path& out_dir,
                                     const PoolTrainingConfig& cfg) {
  std::filesystem::create_directories(out_dir);
  const auto train_set = make_dataset(cfg.train_per_class, 96, mix_seed(cfg.seed, 1));
  const auto test_set = make_dataset(cfg.test_per_class, 96, mix_seed(cfg.seed, 2));

  std::vector<TrainedModel> trained;
  nlohmann::json registry = nlohmann::json::array();
  std::uint64_t stream = 10;
  for (const auto& recipe : recipes()) {
    ClassifierHandle handle{recipe.id, recipe.input_size, kClassCount, {}};
    nn::Network net = recipe.build(recipe.input_size);
    Rng rng(mix_seed(cfg.seed, stream++));
    net.init(rng);

    const NetworkClassifier prep(handle, net);
    std::vector<nn::LabeledSample> samples;
    samples.reserve(train_set.size());
    for (const auto& item : train_set) samples.push_back({prep.prepare(item.image), item.label});

    nn::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.seed = mix_seed(cfg.seed, stream++);
    nn::train(net, samples, tc);

    const NetworkClassifier model(handle, net);
    int correct = 0;
    for (const auto& item : test_set) correct += model.predict(item.image).top_class == item.label;

    const auto weights = out_dir / (recipe.id + ".json");
    std::ofstream out(weights);
    if (!out) throw IoError("cannot write " + weights.string());
    out << net.to_json().dump();

    auto entry = handle_to_json(handle);
    entry["adapter"] = "desk-net";
    entry["weights"] = weights.filename().string();
    registry.push_back(entry);
    trained.push_back({recipe.id, static_cast<double>(correct) / test_set.size(), weights});
  }
  std::ofstream reg(out_dir / "desk_pool.json");
  reg << registry.dump(2) << "\n";
  return trained;
}

std::shared_ptr<NetworkClassifier> tiny_model(std::uint64_t seed, ImageShape input, int labels) {
  nn::Network net({3, input.height, input.width});
  net.add(nn::conv2d(3, 4, 3, 1, 1)).add(nn::tanh_layer()).add(nn::avg_pool(2));
  net.add(nn::dense(4 * (input.height / 2) * (input.width / 2), 12)).add(nn::tanh_layer());
  net.add(nn::dense(12, labels));
  Rng rng(seed);
  net.init(rng);
  ClassifierHandle handle{"tiny-" + std::to_string(seed), input, labels, {}};
  return std::make_shared<NetworkClassifier>(std::move(handle), std::move(net));
}

}  // namespace capture::desk
