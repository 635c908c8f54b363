#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/classifier.hpp"
#include "capture/registry.hpp"

namespace capture {

enum class Aggregation { mean_confidence, min_confidence };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

struct EnsembleSpec {
  std::vector<std::string> member_ids;
  std::optional<std::string> held_out_id;
  Aggregation aggregation = Aggregation::mean_confidence;

  // Non-empty, no duplicates, held-out not a member. Throws InvalidArgument.
  void validate() const;
};

nlohmann::json to_json(const EnsembleSpec& spec);
EnsembleSpec ensemble_from_json(const nlohmann::json& j);

double aggregate(Aggregation rule, std::span<const double> member_confidences);

struct MemberGradients {
  std::vector<double> confidences;  // probs[target] per member, in member order
  PixelField mean_gradient;         // mean over members of d log probs[target] / d img
};

// An EnsembleSpec bound to loaded classifiers.
class Ensemble {
 public:
  Ensemble(const ClassifierPool& pool, EnsembleSpec spec);

  const EnsembleSpec& spec() const noexcept { return spec_; }
  const std::vector<ClassifierPtr>& members() const noexcept { return members_; }
  int label_count() const noexcept { return label_count_; }

  std::vector<double> member_confidences(const ImageTensor& img, int target) const;
  double confidence(const ImageTensor& img, int target) const;
  double confidence(const ImageTensor& img, int target, Aggregation rule) const;

  // Throws CapabilityError if any member is not differentiable.
  MemberGradients log_prob_gradient(const ImageTensor& img, int target) const;
  void require_differentiable() const;

 private:
  EnsembleSpec spec_;
  std::vector<ClassifierPtr> members_;
  int label_count_ = 0;
};

double ensemble_confidence(const ClassifierPool& pool, const EnsembleSpec& spec,
                           const ImageTensor& img, int target);

struct HoldoutSplit {
  EnsembleSpec ensemble;
  std::string held_out;
};

// One split per pool member: that member held out, all others in the ensemble.
// Throws InvalidArgument for pools smaller than two.
std::vector<HoldoutSplit> holdout_splits(std::span<const ClassifierHandle> pool,
                                         Aggregation aggregation = Aggregation::mean_confidence);

}  // namespace capture
