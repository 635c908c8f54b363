#include "capture/builder.hpp"

#include <map>

#include "capture/desk_data.hpp"
#include "capture/error.hpp"
#include "capture/parallel.hpp"
#include "capture/png_io.hpp"

namespace capture {

namespace {

struct Generated {
  ImageTensor image;
  nlohmann::json manifest;
  bool ok = false;
};

TrainingImageSet training_set(const std::vector<desk::LabeledImage>& items) {
  TrainingImageSet set;
  for (const auto& item : items) {
    set.images.push_back(item.image);
    set.labels.push_back(item.label);
  }
  return set;
}

nlohmann::json confidences(const Ensemble& ens, const ImageTensor& img, int target, bool& all_top,
                           double threshold) {
  nlohmann::json j = nlohmann::json::object();
  all_top = true;
  for (const auto& m : ens.members()) {
    const Prediction p = m->predict(img);
    j[m->id()] = p.probs[target];
    all_top = all_top && p.top_class == target && p.probs[target] >= threshold;
  }
  return j;
}

}  // namespace

void StoreBuildConfig::validate() const {
  if (image_size < 8) throw InvalidArgument("image_size must be >= 8");
  if (clean_per_class < 0 || unrec_per_class < 0 || hosts_per_pair < 0 || perturbed_per_class < 0) {
    throw InvalidArgument("per-class counts must be >= 0");
  }
  if (patch_train_per_class < 1) throw InvalidArgument("patch_train_per_class must be >= 1");
  if (placement_attempts < 1) throw InvalidArgument("placement_attempts must be >= 1");
  if (!(placement_confidence >= 0.0 && placement_confidence <= 1.0)) {
    throw InvalidArgument("placement_confidence must lie in [0, 1]");
  }
  if (!(perturb_epsilon > 0.0 && perturb_epsilon <= 0.25)) throw InvalidArgument("perturb_epsilon must lie in (0, 0.25]");
  placement.validate();
}

nlohmann::json to_json(const StoreBuildConfig& c) {
  return {{"image_size", c.image_size},
          {"ensemble", c.ensemble},
          {"clean_per_class", c.clean_per_class},
          {"unrec_per_class", c.unrec_per_class},
          {"unrec_method", to_string(c.unrec_method)},
          {"gradient_fallback", c.gradient_fallback},
          {"evolution", to_json(c.evolution)},
          {"ascent", to_json(c.ascent)},
          {"patch", to_json(c.patch)},
          {"patch_train_per_class", c.patch_train_per_class},
          {"hosts_per_pair", c.hosts_per_pair},
          {"placement", to_json(c.placement)},
          {"placement_confidence", c.placement_confidence},
          {"placement_attempts", c.placement_attempts},
          {"perturbed_per_class", c.perturbed_per_class},
          {"perturb_epsilon", c.perturb_epsilon},
          {"seed", c.seed}};
}

nlohmann::json to_json(const StoreBuildSummary& s) {
  return {{"clean", s.clean},
          {"unrecognizable", s.unrecognizable},
          {"unrec_missed", s.unrec_missed},
          {"patched", s.patched},
          {"patched_skipped", s.patched_skipped},
          {"perturbed", s.perturbed},
          {"patches", s.patches}};
}

StoreBuildSummary build_store(const ClassifierPool& pool, const LabelSpace& labels, const StoreBuildConfig& cfg,
                              AssetStore& store) {
  cfg.validate();
  if (labels.size() != desk::kClassCount || pool.label_count() != labels.size()) {
    throw InvalidArgument("the store builder renders desk-scale classes; the label space must have " +
                          std::to_string(desk::kClassCount) + " classes matching the pool");
  }
  EnsembleSpec ens_spec;
  ens_spec.member_ids = cfg.ensemble.empty() ? pool.ids() : cfg.ensemble;
  ens_spec.aggregation = cfg.evolution.ensemble.aggregation;
  ens_spec.validate();
  const Ensemble ens(pool, ens_spec);
  const int L = labels.size();
  const ImageShape shape{cfg.image_size, cfg.image_size};
  StoreBuildSummary summary;

  // Clean photographs of every class.
  const auto clean = desk::make_dataset(cfg.clean_per_class, cfg.image_size, mix_seed(cfg.seed, 1));
  for (std::size_t i = 0; i < clean.size(); ++i) {
    store.add(quantize(clean[i].image), Provenance::clean, clean[i].label, std::nullopt,
              {{"source", "desk-render"}, {"seed", cfg.seed}, {"index", i}});
    ++summary.clean;
  }

  // Unrecognizable images fooling the ensemble toward each class.
  EvolutionConfig evo = cfg.evolution;
  evo.image_size = shape;
  GradientAscentConfig asc = cfg.ascent;
  asc.image_size = shape;
  const std::size_t n_unrec = static_cast<std::size_t>(L) * cfg.unrec_per_class;
  std::vector<UnrecImage> unrec(n_unrec);
  std::vector<UnrecMethod> used(n_unrec, cfg.unrec_method);
  parallel_for(n_unrec, cfg.jobs, [&](std::size_t k) {
    const int target = static_cast<int>(k) % L;
    const std::uint64_t seed = mix_seed(cfg.seed, 1000 + k);
    unrec[k] = generate_unrec(pool, cfg.unrec_method, target, ens_spec, seed, evo, asc);
    if (!unrec[k].reached_target && cfg.gradient_fallback && cfg.unrec_method != UnrecMethod::gradient) {
      auto fallback = generate_unrec(pool, UnrecMethod::gradient, target, ens_spec, seed, evo, asc);
      if (fallback.reached_target) {
        fallback.manifest["fallback_from"] = to_string(cfg.unrec_method);
        unrec[k] = std::move(fallback);
        used[k] = UnrecMethod::gradient;
      }
    }
  });
  for (std::size_t k = 0; k < n_unrec; ++k) {
    auto manifest = unrec[k].manifest;
    manifest["recommended"] = unrec[k].reached_target;
    manifest["threshold"] = used[k] == UnrecMethod::gradient ? asc.stop_confidence.value_or(0.99) : evo.fitness_target;
    const Provenance prov = used[k] == UnrecMethod::cppn       ? Provenance::unrec_cppn
                            : used[k] == UnrecMethod::gradient ? Provenance::unrec_gradient
                                                               : Provenance::unrec_direct;
    store.add(unrec[k].image, prov, std::nullopt, static_cast<int>(k) % L, manifest);
    ++summary.unrecognizable;
    summary.unrec_missed += !unrec[k].reached_target;
  }

  // One patch per class, then every (host class, patch class) pairing.
  if (cfg.hosts_per_pair > 0) {
    const auto train = training_set(desk::make_dataset(cfg.patch_train_per_class, cfg.image_size, mix_seed(cfg.seed, 2)));
    std::vector<PatchAsset> patches(static_cast<std::size_t>(L));
    parallel_for(patches.size(), cfg.jobs, [&](std::size_t c) {
      PatchTrainingConfig tc = cfg.patch;
      tc.target_class = static_cast<int>(c);
      tc.ensemble = ens_spec;
      tc.seed = mix_seed(cfg.seed, 2000 + c);
      tc.jobs = 1;
      patches[c] = train_patch(pool, train, tc);
    });
    for (const auto& p : patches) {
      summary.patches.push_back({{"target_class", p.target_class},
                                 {"seed", p.seed},
                                 {"initial_objective", p.training_curve.empty() ? 0.0 : p.training_curve.front()},
                                 {"final_objective", p.final_objective}});
    }

    const int per_host_class = cfg.hosts_per_pair * (L - 1);
    const auto hosts = desk::make_dataset(per_host_class, cfg.image_size, mix_seed(cfg.seed, 3));
    std::map<int, std::vector<const ImageTensor*>> by_class;
    for (const auto& h : hosts) by_class[h.label].push_back(&h.image);

    struct Job {
      int host_class, patch_class, slot;
    };
    std::vector<Job> jobs;
    for (int h = 0; h < L; ++h) {
      for (int p = 0; p < L; ++p) {
        if (p == h) continue;
        for (int k = 0; k < cfg.hosts_per_pair; ++k) jobs.push_back({h, p, k});
      }
    }
    std::vector<Generated> out(jobs.size());
    parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
      const Job& job = jobs[i];
      const int pair_index = (job.patch_class < job.host_class ? job.patch_class : job.patch_class - 1);
      const ImageTensor& host = *by_class[job.host_class][static_cast<std::size_t>(pair_index * cfg.hosts_per_pair + job.slot)];
      const PatchAsset& patch = patches[static_cast<std::size_t>(job.patch_class)];
      const std::uint64_t seed = mix_seed(cfg.seed, 100000 + i);
      Rng rng(seed);
      for (int attempt = 1; attempt <= cfg.placement_attempts; ++attempt) {
        const PatchTransform t = sample_transform(cfg.placement, host.shape(), rng, patch.mask_shape);
        ImageTensor img = quantize(apply_patch(patch, host, t));
        bool fooled = false;
        auto conf = confidences(ens, img, job.patch_class, fooled, cfg.placement_confidence);
        if (!fooled) continue;
        out[i] = {std::move(img),
                  {{"host_class", job.host_class},
                   {"patch_class", job.patch_class},
                   {"patch_seed", patch.seed},
                   {"transform", to_json(t)},
                   {"ensemble", ens_spec.member_ids},
                   {"per_member_confidence", conf},
                   {"threshold", cfg.placement_confidence},
                   {"attempts", attempt},
                   {"seed", seed}},
                  true};
        return;
      }
    });
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (!out[i].ok) {
        ++summary.patched_skipped;
        continue;
      }
      store.add(out[i].image, Provenance::patched, jobs[i].host_class, jobs[i].patch_class, out[i].manifest);
      ++summary.patched;
    }
  }

  // Clean images nudged off their class; humans still see the original.
  if (cfg.perturbed_per_class > 0) {
    const auto base = desk::make_dataset(cfg.perturbed_per_class, cfg.image_size, mix_seed(cfg.seed, 4));
    std::vector<ImageTensor> perturbed(base.size());
    parallel_for(base.size(), cfg.jobs, [&](std::size_t i) {
      perturbed[i] = quantize(perturb_clean(pool, base[i].image, ens_spec, cfg.perturb_epsilon));
    });
    for (std::size_t i = 0; i < base.size(); ++i) {
      store.add(perturbed[i], Provenance::perturbed_clean, base[i].label, std::nullopt,
                {{"epsilon", cfg.perturb_epsilon}, {"ensemble", ens_spec.member_ids}, {"seed", cfg.seed}});
      ++summary.perturbed;
    }
  }
  store.save_catalog();
  return summary;
}

}  // namespace capture
