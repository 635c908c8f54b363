#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "capture/image.hpp"
#include "capture/network.hpp"

namespace capture {

// Per-channel affine normalization applied after resizing: (v - mean) / scale.
struct Preprocessing {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> scale{0.25, 0.25, 0.25};
};

struct ClassifierHandle {
  std::string id;
  ImageShape input_size;
  int label_count = 0;
  Preprocessing preprocessing;
};

struct Prediction {
  std::vector<double> probs;
  int top_class = 0;
  double top_confidence = 0.0;

  static Prediction from_probs(std::vector<double> probs);
};

struct GradientResult {
  Prediction prediction;
  PixelField gradient;  // d log probs[target] / d image, shaped like the input image
};

// Read-only classifier adapter. Implementations must be safe to call
// concurrently through a const reference.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual const ClassifierHandle& handle() const noexcept = 0;
  const std::string& id() const noexcept { return handle().id; }

  // Accepts any image size; resizing to handle().input_size happens inside.
  virtual Prediction predict(const ImageTensor& img) const = 0;

  virtual bool differentiable() const noexcept { return false; }

  // Throws CapabilityError unless differentiable().
  virtual GradientResult log_prob_gradient(const ImageTensor& img, int target) const;

  PixelField input_gradient(const ImageTensor& img, int target) const {
    return log_prob_gradient(img, target).gradient;
  }
};

using ClassifierPtr = std::shared_ptr<const Classifier>;

// Adapter around an nn::Network whose input shape is (3, H, W).
class NetworkClassifier final : public Classifier {
 public:
  NetworkClassifier(ClassifierHandle handle, nn::Network net);

  const ClassifierHandle& handle() const noexcept override { return handle_; }
  Prediction predict(const ImageTensor& img) const override;
  bool differentiable() const noexcept override { return true; }
  GradientResult log_prob_gradient(const ImageTensor& img, int target) const override;

  const nn::Network& network() const noexcept { return net_; }

  // Resize + normalize + HWC->CHW, exactly as used for inference.
  std::vector<double> prepare(const ImageTensor& img) const;

 private:
  ClassifierHandle handle_;
  nn::Network net_;
};

// Returns a fixed probability vector for every input; its log-prob gradient
// is identically zero. Useful as a stub and as a calibration baseline.
class FixedClassifier final : public Classifier {
 public:
  FixedClassifier(ClassifierHandle handle, std::vector<double> probs);

  const ClassifierHandle& handle() const noexcept override { return handle_; }
  Prediction predict(const ImageTensor& img) const override;
  bool differentiable() const noexcept override { return true; }
  GradientResult log_prob_gradient(const ImageTensor& img, int target) const override;

 private:
  ClassifierHandle handle_;
  Prediction prediction_;
};

}  // namespace capture
