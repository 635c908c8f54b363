#include "capture/ensemble.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "capture/error.hpp"

namespace capture {

std::string to_string(Aggregation a) {
  return a == Aggregation::mean_confidence ? "mean-confidence" : "min-confidence";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean-confidence" || s == "mean") return Aggregation::mean_confidence;
  if (s == "min-confidence" || s == "min") return Aggregation::min_confidence;
  throw InvalidArgument("unknown aggregation '" + s + "'");
}

void EnsembleSpec::validate() const {
  if (member_ids.empty()) throw InvalidArgument("ensemble must have at least one member");
  std::set<std::string> seen;
  for (const auto& id : member_ids) {
    if (!seen.insert(id).second) throw InvalidArgument("duplicate ensemble member '" + id + "'");
  }
  if (held_out_id && seen.count(*held_out_id)) {
    throw InvalidArgument("held-out model '" + *held_out_id + "' is also an ensemble member");
  }
}

nlohmann::json to_json(const EnsembleSpec& spec) {
  nlohmann::json j{{"member_ids", spec.member_ids}, {"aggregation", to_string(spec.aggregation)}};
  j["held_out_id"] = spec.held_out_id ? nlohmann::json(*spec.held_out_id) : nlohmann::json(nullptr);
  return j;
}

EnsembleSpec ensemble_from_json(const nlohmann::json& j) {
  EnsembleSpec spec;
  spec.member_ids = j.at("member_ids").get<std::vector<std::string>>();
  if (j.contains("held_out_id") && !j.at("held_out_id").is_null()) {
    spec.held_out_id = j.at("held_out_id").get<std::string>();
  }
  spec.aggregation = aggregation_from_string(j.value("aggregation", std::string("mean-confidence")));
  spec.validate();
  return spec;
}

double aggregate(Aggregation rule, std::span<const double> c) {
  if (c.empty()) throw InvalidArgument("aggregate over an empty ensemble");
  if (rule == Aggregation::min_confidence) return *std::min_element(c.begin(), c.end());
  return std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
}

Ensemble::Ensemble(const ClassifierPool& pool, EnsembleSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (const auto& id : spec_.member_ids) members_.push_back(pool.get(id));
  label_count_ = members_.front()->handle().label_count;
}

std::vector<double> Ensemble::member_confidences(const ImageTensor& img, int target) const {
  if (target < 0 || target >= label_count_) throw InvalidArgument("target label out of range");
  std::vector<double> out;
  out.reserve(members_.size());
  for (const auto& m : members_) out.push_back(m->predict(img).probs[target]);
  return out;
}

double Ensemble::confidence(const ImageTensor& img, int target) const {
  return confidence(img, target, spec_.aggregation);
}

double Ensemble::confidence(const ImageTensor& img, int target, Aggregation rule) const {
  const auto c = member_confidences(img, target);
  return aggregate(rule, c);
}

void Ensemble::require_differentiable() const {
  for (const auto& m : members_) {
    if (!m->differentiable()) {
      throw CapabilityError("ensemble member '" + m->id() + "' does not provide gradients");
    }
  }
}

MemberGradients Ensemble::log_prob_gradient(const ImageTensor& img, int target) const {
  require_differentiable();
  MemberGradients out{{}, PixelField(img.height(), img.width())};
  const double inv = 1.0 / static_cast<double>(members_.size());
  auto acc = out.mean_gradient.values();
  for (const auto& m : members_) {
    auto r = m->log_prob_gradient(img, target);
    out.confidences.push_back(r.prediction.probs[target]);
    auto g = r.gradient.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * inv;
  }
  return out;
}

double ensemble_confidence(const ClassifierPool& pool, const EnsembleSpec& spec,
                           const ImageTensor& img, int target) {
  return Ensemble(pool, spec).confidence(img, target);
}

std::vector<HoldoutSplit> holdout_splits(std::span<const ClassifierHandle> pool,
                                         Aggregation aggregation) {
  if (pool.size() < 2) throw InvalidArgument("hold-one-out needs a pool of at least two models");
  std::vector<HoldoutSplit> splits;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    HoldoutSplit s;
    s.held_out = pool[i].id;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (j != i) s.ensemble.member_ids.push_back(pool[j].id);
    }
    s.ensemble.held_out_id = s.held_out;
    s.ensemble.aggregation = aggregation;
    s.ensemble.validate();
    splits.push_back(std::move(s));
  }
  return splits;
}

}  // namespace capture
