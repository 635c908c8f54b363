#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/ensemble.hpp"
#include "capture/image.hpp"
#include "capture/rng.hpp"

namespace capture {

enum class MaskShape { disc, square };

std::string to_string(MaskShape m);
MaskShape mask_shape_from_string(const std::string& s);

// S x S binary mask, row-major; 1 marks pixel centers inside the shape.
std::vector<std::uint8_t> make_mask(int side, MaskShape shape);

struct TransformDistribution {
  double theta_min = -45.0;  // degrees
  double theta_max = 45.0;
  double scale_min = 0.2;
  double scale_max = 0.7;

  // Non-empty ranges, scales within (0, 1]. Throws InvalidArgument.
  void validate() const;
};

nlohmann::json to_json(const TransformDistribution& d);
TransformDistribution distribution_from_json(const nlohmann::json& j);

// Patch placement on a host image. The patch is drawn with diameter
// scale * max(H, W) pixels, rotated by rotation_deg, centered at (row, col)
// in continuous pixel coordinates (pixel (i, j) has its center at
// (i + 0.5, j + 0.5)).
struct PatchTransform {
  double rotation_deg = 0.0;
  double scale = 0.5;
  double row = 0.0;
  double col = 0.0;
};

nlohmann::json to_json(const PatchTransform& t);

// Distance from the patch center to the farthest point of the rotated shape
// along either image axis.
double patch_half_extent(MaskShape mask, ImageShape host, double scale, double rotation_deg);

bool transform_fits(MaskShape mask, ImageShape host, const PatchTransform& t);

// theta ~ U(theta range), scale ~ U(scale range), center uniform over all
// positions keeping the shape inside the host. Throws GeometryError if the
// sampled shape cannot fit anywhere.
PatchTransform sample_transform(const TransformDistribution& dist, ImageShape host, Rng& rng,
                                MaskShape mask = MaskShape::disc);
PatchTransform sample_transform(const TransformDistribution& dist, ImageShape host, std::uint64_t seed,
                                MaskShape mask = MaskShape::disc);

struct PatchAsset {
  ImageTensor patch;
  MaskShape mask_shape = MaskShape::disc;
  int target_class = 0;
  EnsembleSpec trained_against;
  std::uint64_t seed = 0;
  TransformDistribution distribution;
  std::vector<double> training_curve;  // batch objective per step
  double final_objective = 0.0;

  int side() const noexcept { return patch.height(); }
  std::vector<std::uint8_t> mask() const { return make_mask(side(), mask_shape); }
};

nlohmann::json manifest_json(const PatchAsset& asset);
// Writes <stem>.png, <stem>_mask.png and <stem>.json into `dir`.
void save_patch_asset(const PatchAsset& asset, const std::filesystem::path& dir, const std::string& stem);
PatchAsset load_patch_asset(const std::filesystem::path& manifest);

// A(p, x, l, t): host pixels whose centers fall inside the transformed shape
// are replaced by bilinear samples of the patch; all others are copied.
// Throws GeometryError if the shape leaves the host.
ImageTensor apply_patch(const ImageTensor& patch, MaskShape mask, const ImageTensor& host,
                        const PatchTransform& t);
ImageTensor apply_patch(const PatchAsset& asset, const ImageTensor& host, const PatchTransform& t);

// Adjoint of apply_patch with respect to the patch: pulls a gradient on the
// patched image back onto the patch grid.
PixelField patch_adjoint(int side, MaskShape mask, ImageShape host, const PatchTransform& t,
                         const PixelField& grad_out);

// d log probs[target](A(p, x, l, t)) / d p for one classifier.
GradientResult patch_objective_gradient(const Classifier& model, const ImageTensor& patch, MaskShape mask,
                                        const ImageTensor& host, const PatchTransform& t, int target);

struct TrainingImageSet {
  std::vector<ImageTensor> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return images.size(); }
  void validate() const;
};

struct PatchTrainingConfig {
  int target_class = 0;
  EnsembleSpec ensemble;
  TransformDistribution distribution;
  int steps = 2000;
  int batch = 16;
  double step_size = 1.0 / 64.0;
  // Cosine decay from step_size down to this over the run; unset keeps the step constant.
  std::optional<double> final_step_size;
  std::uint64_t seed = 0;
  int side = 64;
  MaskShape mask = MaskShape::disc;
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const PatchTrainingConfig& cfg);

// Signed-gradient ascent on the Monte-Carlo estimate of
// E_{x, t, l}[log Pr(target | A(p, x, l, t))], averaged over ensemble members.
PatchAsset train_patch(const ClassifierPool& pool, const TrainingImageSet& X, const PatchTrainingConfig& cfg);

// Mean over `samples` draws of (x, t, l) and over the asset's ensemble of
// log probs[target]; deterministic under seed.
double estimate_patch_objective(const ClassifierPool& pool, const PatchAsset& asset, const ImageTensor& patch,
                                const TrainingImageSet& X, int samples, std::uint64_t seed);

struct ScalePoint {
  double scale = 0.0;
  int trials = 0;
  int successes = 0;
  int skipped = 0;  // infeasible placements

  double success_rate() const noexcept { return trials ? static_cast<double>(successes) / trials : 0.0; }
};

struct ScaleCurve {
  std::string model_id;
  int target_class = 0;
  std::vector<ScalePoint> points;
};

// For each scale, places the patch once on every image whose label differs
// from the patch target (random rotation from the asset's distribution and a
// random feasible center) and counts top-1 hits on the target.
ScaleCurve eval_patch_scale_curve(const PatchAsset& asset, const Classifier& model, const TrainingImageSet& images,
                                  std::span<const double> scales, std::uint64_t seed);

std::vector<double> default_scale_sweep();  // 0.1, 0.2, ..., 1.0

std::string curve_csv(const ScaleCurve& curve);
nlohmann::json to_json(const ScaleCurve& curve);

// Every point is at least the running maximum of earlier points minus `tolerance`.
bool monotone_within(const ScaleCurve& curve, double tolerance);

}  // namespace capture
