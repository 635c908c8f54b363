#include "capture/ascent.hpp"

#include <algorithm>
#include <numeric>

#include "capture/error.hpp"
#include "capture/rng.hpp"

namespace capture {

namespace {

double sign(double v) noexcept { return (v > 0.0) - (v < 0.0); }

}  // namespace

void GradientAscentConfig::validate() const {
  if (steps < 0) throw InvalidArgument("steps must be >= 0");
  if (!(step_size > 0.0)) throw InvalidArgument("step_size must be > 0");
  if (image_size.height <= 0 || image_size.width <= 0) throw InvalidArgument("image_size must be positive");
  if (stop_confidence && !(*stop_confidence > 0.0 && *stop_confidence <= 1.0)) {
    throw InvalidArgument("stop_confidence must be in (0, 1]");
  }
  ensemble.validate();
}

nlohmann::json to_json(const GradientAscentConfig& cfg) {
  nlohmann::json j{{"target_class", cfg.target_class},
                   {"ensemble", to_json(cfg.ensemble)},
                   {"steps", cfg.steps},
                   {"step_size", cfg.step_size},
                   {"seed", cfg.seed},
                   {"image_size", {cfg.image_size.height, cfg.image_size.width}}};
  if (cfg.stop_confidence) j["stop_confidence"] = *cfg.stop_confidence;
  return j;
}

ImageTensor noise_image(ImageShape shape, std::uint64_t seed) {
  ImageTensor img(shape.height, shape.width);
  Rng rng(seed);
  for (double& v : img.values()) v = uniform01(rng);
  return img;
}

AscentResult gradient_ascent(const ClassifierPool& pool, const GradientAscentConfig& cfg) {
  cfg.validate();
  const Ensemble ens(pool, cfg.ensemble);
  ens.require_differentiable();
  if (cfg.target_class < 0 || cfg.target_class >= ens.label_count()) {
    throw InvalidArgument("target class " + std::to_string(cfg.target_class) + " out of range");
  }

  AscentResult r{noise_image(cfg.image_size, cfg.seed), {}, 0};
  auto done = [&](const std::vector<double>& conf) {
    return cfg.stop_confidence &&
           std::all_of(conf.begin(), conf.end(), [&](double c) { return c >= *cfg.stop_confidence; });
  };
  for (; r.steps_taken < cfg.steps; ++r.steps_taken) {
    const MemberGradients g = ens.log_prob_gradient(r.image, cfg.target_class);
    if (done(g.confidences)) break;
    auto px = r.image.values();
    auto gv = g.mean_gradient.values();
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = std::clamp(px[i] + cfg.step_size * sign(gv[i]), 0.0, 1.0);
  }
  r.member_confidences = ens.member_confidences(r.image, cfg.target_class);
  return r;
}

ImageTensor gradient_ascent_image(const ClassifierPool& pool, int target, const EnsembleSpec& ensemble,
                                  int steps, double step_size, std::uint64_t seed) {
  GradientAscentConfig cfg;
  cfg.target_class = target;
  cfg.ensemble = ensemble;
  cfg.steps = steps;
  cfg.step_size = step_size;
  cfg.seed = seed;
  return gradient_ascent(pool, cfg).image;
}

ImageTensor perturb_clean(const ClassifierPool& pool, const ImageTensor& img, const EnsembleSpec& ensemble,
                          double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.25)) throw InvalidArgument("epsilon must be in (0, 0.25]");
  const Ensemble ens(pool, ensemble);
  ens.require_differentiable();

  // Top class of the ensemble: argmax of mean member probability.
  std::vector<double> mean(ens.label_count(), 0.0);
  for (const auto& m : ens.members()) {
    const auto p = m->predict(img).probs;
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p[k];
  }
  const int top = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());

  const MemberGradients g = ens.log_prob_gradient(img, top);
  ImageTensor out = img;
  auto px = out.values();
  auto gv = g.mean_gradient.values();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = std::clamp(px[i] - epsilon * sign(gv[i]), 0.0, 1.0);
  return out;
}

}  // namespace capture
