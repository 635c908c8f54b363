#include "capture/patch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "capture/error.hpp"
#include "capture/parallel.hpp"
#include "capture/png_io.hpp"

namespace capture {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

// One patched host pixel: bilinear taps into the patch grid. Taps on texels
// outside the mask get zero weight and the rest are renormalized, so pixels
// off the mask never reach the host.
struct Tap {
  std::size_t host = 0;  // row * W + col
  std::array<std::size_t, 4> src{};
  std::array<double, 4> w{};
};

std::vector<Tap> footprint(int side, MaskShape mask, ImageShape host, const PatchTransform& t) {
  if (!transform_fits(mask, host, t)) {
    throw GeometryError("patch at scale " + std::to_string(t.scale) + " does not fit inside a " +
                        std::to_string(host.height) + "x" + std::to_string(host.width) + " host");
  }
  const double diameter = t.scale * std::max(host.height, host.width);
  const double radius = diameter / 2.0;
  const double to_patch = side / diameter;
  const double c = std::cos(radians(t.rotation_deg)), s = std::sin(radians(t.rotation_deg));
  const double extent = patch_half_extent(mask, host, t.scale, t.rotation_deg);
  const int r0 = std::max(0, static_cast<int>(std::floor(t.row - extent)));
  const int r1 = std::min(host.height - 1, static_cast<int>(std::ceil(t.row + extent)));
  const int c0 = std::max(0, static_cast<int>(std::floor(t.col - extent)));
  const int c1 = std::min(host.width - 1, static_cast<int>(std::ceil(t.col + extent)));

  const auto texels = make_mask(side, mask);
  std::vector<Tap> taps;
  for (int i = r0; i <= r1; ++i) {
    for (int j = c0; j <= c1; ++j) {
      const double dy = i + 0.5 - t.row, dx = j + 0.5 - t.col;
      // Rotate the host offset by -theta into the patch frame.
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      const bool inside = mask == MaskShape::disc ? u * u + v * v <= radius * radius
                                                  : std::abs(u) <= radius && std::abs(v) <= radius;
      if (!inside) continue;
      const double py = std::clamp((v + radius) * to_patch - 0.5, 0.0, side - 1.0);
      const double px = std::clamp((u + radius) * to_patch - 0.5, 0.0, side - 1.0);
      const int y0 = std::min(static_cast<int>(py), side - 1), x0 = std::min(static_cast<int>(px), side - 1);
      const int y1 = std::min(y0 + 1, side - 1), x1 = std::min(x0 + 1, side - 1);
      const double fy = py - y0, fx = px - x0;
      Tap tap;
      tap.host = static_cast<std::size_t>(i) * host.width + j;
      tap.src = {static_cast<std::size_t>(y0) * side + x0, static_cast<std::size_t>(y0) * side + x1,
                 static_cast<std::size_t>(y1) * side + x0, static_cast<std::size_t>(y1) * side + x1};
      tap.w = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
      double total = 0.0;
      for (int k = 0; k < 4; ++k) {
        if (!texels[tap.src[k]]) tap.w[k] = 0.0;
        total += tap.w[k];
      }
      if (total <= 0.0) continue;
      for (double& w : tap.w) w /= total;
      taps.push_back(tap);
    }
  }
  return taps;
}

void check_patch(const ImageTensor& patch) {
  if (patch.empty() || patch.height() != patch.width()) throw InvalidArgument("patch must be a non-empty square");
}

}  // namespace

std::string to_string(MaskShape m) { return m == MaskShape::disc ? "disc" : "square"; }

MaskShape mask_shape_from_string(const std::string& s) {
  if (s == "disc") return MaskShape::disc;
  if (s == "square") return MaskShape::square;
  throw InvalidArgument("unknown mask shape '" + s + "' (expected disc or square)");
}

std::vector<std::uint8_t> make_mask(int side, MaskShape shape) {
  if (side <= 0) throw InvalidArgument("mask side must be positive");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(side) * side, 1);
  if (shape == MaskShape::square) return mask;
  const double r = side / 2.0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double dy = i + 0.5 - r, dx = j + 0.5 - r;
      mask[static_cast<std::size_t>(i) * side + j] = dx * dx + dy * dy <= r * r;
    }
  }
  return mask;
}

void TransformDistribution::validate() const {
  if (!(theta_min <= theta_max)) throw InvalidArgument("empty rotation range");
  if (!(scale_min <= scale_max)) throw InvalidArgument("empty scale range");
  if (!(scale_min > 0.0 && scale_max <= 1.0)) throw InvalidArgument("scale range must lie within (0, 1]");
}

nlohmann::json to_json(const TransformDistribution& d) {
  return {{"theta_range", {d.theta_min, d.theta_max}}, {"scale_range", {d.scale_min, d.scale_max}}};
}

TransformDistribution distribution_from_json(const nlohmann::json& j) {
  TransformDistribution d;
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "theta_range" && key != "scale_range") {
        throw FormatError("unknown transform distribution key '" + key + "'");
      }
    }
    if (j.contains("theta_range")) {
      d.theta_min = j["theta_range"].at(0).get<double>();
      d.theta_max = j["theta_range"].at(1).get<double>();
    }
    if (j.contains("scale_range")) {
      d.scale_min = j["scale_range"].at(0).get<double>();
      d.scale_max = j["scale_range"].at(1).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed transform distribution: ") + e.what());
  }
  d.validate();
  return d;
}

nlohmann::json to_json(const PatchTransform& t) {
  return {{"rotation_deg", t.rotation_deg}, {"scale", t.scale}, {"row", t.row}, {"col", t.col}};
}

double patch_half_extent(MaskShape mask, ImageShape host, double scale, double rotation_deg) {
  const double radius = scale * std::max(host.height, host.width) / 2.0;
  if (mask == MaskShape::disc) return radius;
  const double a = radians(rotation_deg);
  return radius * (std::abs(std::cos(a)) + std::abs(std::sin(a)));
}

bool transform_fits(MaskShape mask, ImageShape host, const PatchTransform& t) {
  if (!(t.scale > 0.0 && t.scale <= 1.0)) return false;
  // Small slack absorbs rounding in the rotated extent.
  constexpr double eps = 1e-9;
  const double e = patch_half_extent(mask, host, t.scale, t.rotation_deg);
  return t.row - e >= -eps && t.row + e <= host.height + eps && t.col - e >= -eps && t.col + e <= host.width + eps;
}

PatchTransform sample_transform(const TransformDistribution& dist, ImageShape host, Rng& rng, MaskShape mask) {
  dist.validate();
  PatchTransform t;
  t.rotation_deg = uniform(rng, dist.theta_min, dist.theta_max);
  t.scale = uniform(rng, dist.scale_min, dist.scale_max);
  const double e = patch_half_extent(mask, host, t.scale, t.rotation_deg);
  if (2.0 * e > host.height + 1e-9 || 2.0 * e > host.width + 1e-9) {
    throw GeometryError("no valid center for a patch at scale " + std::to_string(t.scale) + " on a " +
                        std::to_string(host.height) + "x" + std::to_string(host.width) + " host");
  }
  t.row = uniform(rng, std::min(e, host.height / 2.0), std::max(host.height - e, host.height / 2.0));
  t.col = uniform(rng, std::min(e, host.width / 2.0), std::max(host.width - e, host.width / 2.0));
  return t;
}

PatchTransform sample_transform(const TransformDistribution& dist, ImageShape host, std::uint64_t seed,
                                MaskShape mask) {
  Rng rng(seed);
  return sample_transform(dist, host, rng, mask);
}

ImageTensor apply_patch(const ImageTensor& patch, MaskShape mask, const ImageTensor& host,
                        const PatchTransform& t) {
  check_patch(patch);
  ImageTensor out = host;
  auto o = out.values();
  auto p = patch.values();
  for (const Tap& tap : footprint(patch.height(), mask, host.shape(), t)) {
    for (int ch = 0; ch < 3; ++ch) {
      double v = 0.0;
      for (int k = 0; k < 4; ++k) v += tap.w[k] * p[tap.src[k] * 3 + ch];
      o[tap.host * 3 + ch] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

ImageTensor apply_patch(const PatchAsset& asset, const ImageTensor& host, const PatchTransform& t) {
  return apply_patch(asset.patch, asset.mask_shape, host, t);
}

PixelField patch_adjoint(int side, MaskShape mask, ImageShape host, const PatchTransform& t,
                         const PixelField& grad_out) {
  if (grad_out.shape() != host) throw InvalidArgument("gradient shape does not match host");
  PixelField g(side, side);
  auto gv = g.values();
  auto go = grad_out.values();
  for (const Tap& tap : footprint(side, mask, host, t)) {
    for (int ch = 0; ch < 3; ++ch) {
      const double d = go[tap.host * 3 + ch];
      for (int k = 0; k < 4; ++k) gv[tap.src[k] * 3 + ch] += tap.w[k] * d;
    }
  }
  return g;
}

GradientResult patch_objective_gradient(const Classifier& model, const ImageTensor& patch, MaskShape mask,
                                        const ImageTensor& host, const PatchTransform& t, int target) {
  check_patch(patch);
  GradientResult r = model.log_prob_gradient(apply_patch(patch, mask, host, t), target);
  r.gradient = patch_adjoint(patch.height(), mask, host.shape(), t, r.gradient);
  return r;
}

void TrainingImageSet::validate() const {
  if (images.empty()) throw InvalidArgument("training image set is empty");
  if (labels.size() != images.size()) throw InvalidArgument("training image set needs one label per image");
}

void PatchTrainingConfig::validate() const {
  if (steps < 0) throw InvalidArgument("steps must be >= 0");
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  if (!(step_size > 0.0)) throw InvalidArgument("step_size must be > 0");
  if (final_step_size && !(*final_step_size > 0.0 && *final_step_size <= step_size)) {
    throw InvalidArgument("final_step_size must lie in (0, step_size]");
  }
  if (side < 2) throw InvalidArgument("patch side must be >= 2");
  distribution.validate();
  ensemble.validate();
}

nlohmann::json to_json(const PatchTrainingConfig& cfg) {
  return {{"target_class", cfg.target_class}, {"ensemble", to_json(cfg.ensemble)},
          {"distribution", to_json(cfg.distribution)}, {"steps", cfg.steps},
          {"batch", cfg.batch}, {"step_size", cfg.step_size},
          {"seed", cfg.seed}, {"side", cfg.side},
          {"mask", to_string(cfg.mask)},
          {"final_step_size", cfg.final_step_size ? nlohmann::json(*cfg.final_step_size) : nlohmann::json()}};
}

namespace {

struct Draw {
  std::size_t image = 0;
  PatchTransform t;
};

std::vector<Draw> draw_batch(const TrainingImageSet& X, const TransformDistribution& dist, MaskShape mask,
                             int n, Rng& rng) {
  std::vector<Draw> out(n);
  for (auto& d : out) {
    d.image = uniform_index(rng, X.size());
    d.t = sample_transform(dist, X.images[d.image].shape(), rng, mask);
  }
  return out;
}

}  // namespace

PatchAsset train_patch(const ClassifierPool& pool, const TrainingImageSet& X, const PatchTrainingConfig& cfg) {
  cfg.validate();
  X.validate();
  const Ensemble ens(pool, cfg.ensemble);
  ens.require_differentiable();
  if (cfg.target_class < 0 || cfg.target_class >= ens.label_count()) {
    throw InvalidArgument("target class " + std::to_string(cfg.target_class) + " out of range");
  }

  PatchAsset asset;
  asset.mask_shape = cfg.mask;
  asset.target_class = cfg.target_class;
  asset.trained_against = cfg.ensemble;
  asset.seed = cfg.seed;
  asset.distribution = cfg.distribution;
  asset.patch = ImageTensor(cfg.side, cfg.side);
  Rng rng(cfg.seed);
  for (double& v : asset.patch.values()) v = uniform(rng, 0.4, 0.6);

  const auto& members = ens.members();
  const double norm = 1.0 / (static_cast<double>(cfg.batch) * members.size());
  std::vector<PixelField> grads(cfg.batch);
  std::vector<double> objective(cfg.batch);
  asset.training_curve.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = draw_batch(X, cfg.distribution, cfg.mask, cfg.batch, rng);
    parallel_for(batch.size(), cfg.jobs, [&](std::size_t b) {
      grads[b] = PixelField(cfg.side, cfg.side);
      objective[b] = 0.0;
      for (const auto& m : members) {
        const auto r = patch_objective_gradient(*m, asset.patch, cfg.mask, X.images[batch[b].image], batch[b].t,
                                                cfg.target_class);
        objective[b] += std::log(std::max(r.prediction.probs[cfg.target_class], 1e-300));
        auto gv = grads[b].values();
        auto rv = r.gradient.values();
        for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += rv[i];
      }
    });
    double obj = 0.0;
    PixelField total(cfg.side, cfg.side);
    auto tv = total.values();
    for (int b = 0; b < cfg.batch; ++b) {
      obj += objective[b];
      auto gv = grads[b].values();
      for (std::size_t i = 0; i < tv.size(); ++i) tv[i] += gv[i];
    }
    asset.training_curve.push_back(obj * norm);
    double eta = cfg.step_size;
    if (cfg.final_step_size && cfg.steps > 1) {
      const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * step / (cfg.steps - 1)));
      eta = *cfg.final_step_size + (cfg.step_size - *cfg.final_step_size) * c;
    }
    auto pv = asset.patch.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double g = tv[i];
      pv[i] = std::clamp(pv[i] + eta * ((g > 0.0) - (g < 0.0)), 0.0, 1.0);
    }
  }
  asset.final_objective = asset.training_curve.empty() ? 0.0 : asset.training_curve.back();
  return asset;
}

double estimate_patch_objective(const ClassifierPool& pool, const PatchAsset& asset, const ImageTensor& patch,
                                const TrainingImageSet& X, int samples, std::uint64_t seed) {
  X.validate();
  if (samples < 1) throw InvalidArgument("samples must be >= 1");
  const Ensemble ens(pool, asset.trained_against);
  Rng rng(seed);
  double total = 0.0;
  for (const auto& d : draw_batch(X, asset.distribution, asset.mask_shape, samples, rng)) {
    const ImageTensor img = apply_patch(patch, asset.mask_shape, X.images[d.image], d.t);
    for (const auto& m : ens.members()) {
      total += std::log(std::max(m->predict(img).probs[asset.target_class], 1e-300));
    }
  }
  return total / (static_cast<double>(samples) * ens.members().size());
}

nlohmann::json manifest_json(const PatchAsset& asset) {
  return {{"target_class", asset.target_class},
          {"ensemble", to_json(asset.trained_against)},
          {"distribution", to_json(asset.distribution)},
          {"mask", to_string(asset.mask_shape)},
          {"side", asset.side()},
          {"seed", asset.seed},
          {"final_objective", asset.final_objective},
          {"training_curve", asset.training_curve}};
}

void save_patch_asset(const PatchAsset& asset, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  save_image(asset.patch, dir / (stem + ".png"));
  save_mask(asset.mask(), asset.side(), dir / (stem + "_mask.png"));
  auto j = manifest_json(asset);
  j["patch"] = stem + ".png";
  j["mask_png"] = stem + "_mask.png";
  std::ofstream out(dir / (stem + ".json"));
  if (!out) throw IoError("cannot write " + (dir / (stem + ".json")).string());
  out << j.dump(2) << "\n";
}

PatchAsset load_patch_asset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open patch manifest " + manifest.string());
  PatchAsset a;
  try {
    const auto j = nlohmann::json::parse(in);
    a.patch = load_image(manifest.parent_path() / j.at("patch").get<std::string>());
    a.mask_shape = mask_shape_from_string(j.value("mask", std::string("disc")));
    a.target_class = j.at("target_class").get<int>();
    a.trained_against = ensemble_from_json(j.at("ensemble"));
    a.distribution = distribution_from_json(j.at("distribution"));
    a.seed = j.value("seed", std::uint64_t{0});
    a.final_objective = j.value("final_objective", 0.0);
    a.training_curve = j.value("training_curve", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed patch manifest " + manifest.string() + ": " + e.what());
  }
  check_patch(a.patch);
  return a;
}

ScaleCurve eval_patch_scale_curve(const PatchAsset& asset, const Classifier& model, const TrainingImageSet& images,
                                  std::span<const double> scales, std::uint64_t seed) {
  images.validate();
  ScaleCurve curve{model.id(), asset.target_class, {}};
  for (std::size_t si = 0; si < scales.size(); ++si) {
    const double s = scales[si];
    if (!(s > 0.0 && s <= 1.0)) throw InvalidArgument("scales must lie in (0, 1]");
    TransformDistribution at{asset.distribution.theta_min, asset.distribution.theta_max, s, s};
    Rng rng(mix_seed(seed, si));
    ScalePoint pt{s, 0, 0, 0};
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images.labels[i] == asset.target_class) continue;
      PatchTransform t;
      try {
        t = sample_transform(at, images.images[i].shape(), rng, asset.mask_shape);
      } catch (const GeometryError&) {
        ++pt.skipped;
        continue;
      }
      ++pt.trials;
      pt.successes += model.predict(apply_patch(asset, images.images[i], t)).top_class == asset.target_class;
    }
    curve.points.push_back(pt);
  }
  return curve;
}

std::vector<double> default_scale_sweep() {
  std::vector<double> s;
  for (int k = 1; k <= 10; ++k) s.push_back(k / 10.0);
  return s;
}

std::string curve_csv(const ScaleCurve& curve) {
  std::ostringstream out;
  out << "scale,trials,successes,success_rate\n";
  for (const auto& p : curve.points) {
    out << p.scale << ',' << p.trials << ',' << p.successes << ',' << p.success_rate() << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const ScaleCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : curve.points) {
    pts.push_back({{"scale", p.scale}, {"trials", p.trials}, {"successes", p.successes},
                   {"skipped", p.skipped}, {"success_rate", p.success_rate()}});
  }
  return {{"model", curve.model_id}, {"target_class", curve.target_class}, {"points", pts}};
}

bool monotone_within(const ScaleCurve& curve, double tolerance) {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.success_rate() < best - tolerance) return false;
    best = std::max(best, p.success_rate());
  }
  return true;
}

}  // namespace capture
