#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/rng.hpp"

namespace capture::nn {

// Channel-major activation shape.
struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(channels) * height * width;
  }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string type() const = 0;
  virtual Shape3 output_shape(Shape3 in) const = 0;
  virtual void forward(Shape3 in, std::span<const double> x, std::span<double> y) const = 0;
  // Accumulates into gx (input gradient) and gparams (same layout as params()).
  // gparams may be empty when parameter gradients are not needed.
  virtual void backward(Shape3 in, std::span<const double> x, std::span<const double> y,
                        std::span<const double> gy, std::span<double> gx,
                        std::span<double> gparams) const = 0;

  virtual std::span<double> params() noexcept { return {}; }
  virtual std::span<const double> params() const noexcept { return {}; }
  virtual void init(Rng& /*rng*/, Shape3 /*in*/) {}
  virtual nlohmann::json to_json() const;
  virtual std::unique_ptr<Layer> clone() const = 0;
};

std::unique_ptr<Layer> conv2d(int in_channels, int out_channels, int kernel, int stride, int pad);
std::unique_ptr<Layer> dense(int in_features, int out_features);
std::unique_ptr<Layer> relu();
std::unique_ptr<Layer> tanh_layer();
std::unique_ptr<Layer> avg_pool(int kernel);
std::unique_ptr<Layer> global_avg_pool();

std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j);

// Feed-forward stack of layers mapping a Shape3 input to a logit vector.
class Network {
 public:
  // Activations recorded by forward_trace and consumed by backward.
  struct Trace {
    std::vector<std::vector<double>> activations;  // [0] is the input
  };

  Network() = default;
  explicit Network(Shape3 input) : input_(input) {}
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Network& add(std::unique_ptr<Layer> layer);

  Shape3 input_shape() const noexcept { return input_; }
  Shape3 output_shape() const;
  std::size_t param_count() const;

  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> forward_trace(std::span<const double> x, Trace& trace) const;
  // Returns the gradient w.r.t. the input; when gparams is non-empty it also
  // accumulates parameter gradients (flattened in layer order).
  std::vector<double> backward(const Trace& trace, std::span<const double> grad_logits,
                               std::span<double> gparams = {}) const;

  void init(Rng& rng);
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> flat);

  nlohmann::json to_json() const;
  static Network from_json(const nlohmann::json& j);

 private:
  Shape3 input_{};
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Numerically stable softmax and log-softmax.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

struct TrainConfig {
  int epochs = 6;
  int batch_size = 32;
  double learning_rate = 2e-3;
  std::uint64_t seed = 1;
};

struct LabeledSample {
  std::vector<double> input;  // layout = network input shape (CHW)
  int label = 0;
};

// Minibatch Adam on softmax cross-entropy. Returns the final epoch's mean loss.
double train(Network& net, std::span<const LabeledSample> data, const TrainConfig& cfg);

}  // namespace capture::nn
