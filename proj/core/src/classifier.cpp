#include "capture/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capture/error.hpp"
#include "capture/transform.hpp"

namespace capture {

Prediction Prediction::from_probs(std::vector<double> probs) {
  if (probs.empty()) throw InvalidArgument("empty probability vector");
  Prediction p;
  const auto it = std::max_element(probs.begin(), probs.end());
  p.top_class = static_cast<int>(it - probs.begin());
  p.top_confidence = *it;
  p.probs = std::move(probs);
  return p;
}

GradientResult Classifier::log_prob_gradient(const ImageTensor&, int) const {
  throw CapabilityError("classifier '" + id() + "' does not provide input gradients");
}

NetworkClassifier::NetworkClassifier(ClassifierHandle handle, nn::Network net)
    : handle_(std::move(handle)), net_(std::move(net)) {
  const auto in = net_.input_shape();
  if (in.channels != 3 || in.height != handle_.input_size.height ||
      in.width != handle_.input_size.width) {
    throw ModelLoadError("classifier '" + handle_.id + "': network input does not match input_size");
  }
  const auto out = net_.output_shape();
  if (static_cast<int>(out.size()) != handle_.label_count) {
    throw ModelLoadError("classifier '" + handle_.id + "': network has " +
                         std::to_string(out.size()) + " outputs, label_count is " +
                         std::to_string(handle_.label_count));
  }
  if (handle_.label_count < 2) throw ModelLoadError("label_count must be >= 2");
}

std::vector<double> NetworkClassifier::prepare(const ImageTensor& img) const {
  const ImageTensor resized =
      resize_bilinear(img, handle_.input_size.height, handle_.input_size.width);
  const int h = resized.height(), w = resized.width();
  std::vector<double> x(static_cast<std::size_t>(3) * h * w);
  for (int ch = 0; ch < 3; ++ch) {
    const double mean = handle_.preprocessing.mean[ch];
    const double scale = handle_.preprocessing.scale[ch];
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        x[(static_cast<std::size_t>(ch) * h + r) * w + c] = (resized.at(r, c, ch) - mean) / scale;
      }
    }
  }
  return x;
}

Prediction NetworkClassifier::predict(const ImageTensor& img) const {
  if (img.empty()) throw InvalidArgument("predict on empty image");
  return Prediction::from_probs(nn::softmax(net_.forward(prepare(img))));
}

GradientResult NetworkClassifier::log_prob_gradient(const ImageTensor& img, int target) const {
  if (target < 0 || target >= handle_.label_count) throw InvalidArgument("target label out of range");
  nn::Network::Trace trace;
  const auto logits = net_.forward_trace(prepare(img), trace);
  auto probs = nn::softmax(logits);
  // d log p_t / d z = onehot(t) - p
  std::vector<double> g(probs.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -probs[i];
  g[target] += 1.0;
  const auto gx = net_.backward(trace, g);

  const int h = handle_.input_size.height, w = handle_.input_size.width;
  PixelField at_input(h, w);
  for (int ch = 0; ch < 3; ++ch) {
    const double inv = 1.0 / handle_.preprocessing.scale[ch];
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        at_input.at(r, c, ch) = gx[(static_cast<std::size_t>(ch) * h + r) * w + c] * inv;
      }
    }
  }
  return {Prediction::from_probs(std::move(probs)), resize_bilinear_adjoint(at_input, img.shape())};
}

FixedClassifier::FixedClassifier(ClassifierHandle handle, std::vector<double> probs)
    : handle_(std::move(handle)) {
  if (static_cast<int>(probs.size()) != handle_.label_count) {
    throw ModelLoadError("fixed classifier '" + handle_.id + "': probs length != label_count");
  }
  const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (sum <= 0.0 || std::any_of(probs.begin(), probs.end(), [](double p) { return p < 0.0; })) {
    throw ModelLoadError("fixed classifier '" + handle_.id + "': invalid probabilities");
  }
  for (double& p : probs) p /= sum;
  prediction_ = Prediction::from_probs(std::move(probs));
}

Prediction FixedClassifier::predict(const ImageTensor& img) const {
  if (img.empty()) throw InvalidArgument("predict on empty image");
  return prediction_;
}

GradientResult FixedClassifier::log_prob_gradient(const ImageTensor& img, int target) const {
  if (target < 0 || target >= handle_.label_count) throw InvalidArgument("target label out of range");
  return {prediction_, PixelField(img.height(), img.width())};
}

}  // namespace capture
