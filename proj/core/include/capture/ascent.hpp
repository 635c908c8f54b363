#pragma once

#include <cstdint>
#include <optional>

#include <nlohmann/json.hpp>

#include "capture/ensemble.hpp"
#include "capture/image.hpp"

namespace capture {

struct GradientAscentConfig {
  int target_class = 0;
  EnsembleSpec ensemble;
  int steps = 500;
  double step_size = 1.0 / 255.0;
  std::uint64_t seed = 0;
  ImageShape image_size{224, 224};
  // Stop once every member reaches this confidence. Unset runs all steps.
  std::optional<double> stop_confidence;

  void validate() const;
};

nlohmann::json to_json(const GradientAscentConfig& cfg);

struct AscentResult {
  ImageTensor image;
  std::vector<double> member_confidences;
  int steps_taken = 0;
};

// Uniform noise in [0, 1] seeded by `seed`; the ascent starting point.
ImageTensor noise_image(ImageShape shape, std::uint64_t seed);

// Repeatedly adds step_size * sign(mean member gradient of log probs[target])
// and clamps to [0, 1].
AscentResult gradient_ascent(const ClassifierPool& pool, const GradientAscentConfig& cfg);

ImageTensor gradient_ascent_image(const ClassifierPool& pool, int target, const EnsembleSpec& ensemble,
                                  int steps, double step_size, std::uint64_t seed);

// One signed-gradient step of size epsilon that lowers the ensemble's
// log-probability of the image's current top class.
ImageTensor perturb_clean(const ClassifierPool& pool, const ImageTensor& img, const EnsembleSpec& ensemble,
                          double epsilon);

}  // namespace capture
