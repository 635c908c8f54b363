#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/classifier.hpp"

namespace capture {

// Ordered class names, one per line in the label-space file.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> names);

  static LabelSpace load(const std::filesystem::path& path);

  int size() const noexcept { return static_cast<int>(names_.size()); }
  const std::string& name(int label) const;
  // Accepts a class name or a decimal label index. Throws UnknownId.
  int resolve(const std::string& name_or_index) const;
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
};

// Builds a classifier from one registry entry. `base_dir` is the directory of
// the registry file; relative weight paths resolve against it.
using AdapterFactory = std::function<ClassifierPtr(
    const nlohmann::json& entry, ClassifierHandle handle, const std::filesystem::path& base_dir)>;

// Named-adapter registry. Built-in adapters: "desk-net" (nn::Network JSON
// weights) and "fixed" (constant probability vector).
class AdapterRegistry {
 public:
  static AdapterRegistry& instance();

  void add(const std::string& name, AdapterFactory factory);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  ClassifierPtr create(const nlohmann::json& entry, const std::filesystem::path& base_dir) const;

 private:
  AdapterRegistry();
  std::map<std::string, AdapterFactory> factories_;
};

// A set of classifiers sharing one label space.
class ClassifierPool {
 public:
  ClassifierPool() = default;

  // Registry config: either a JSON list of entries or {"models": [...]}, each
  // entry {id, adapter, weights, input_size: [h, w], preprocessing: {mean, scale}}.
  static ClassifierPool load(const std::filesystem::path& config);

  void add(ClassifierPtr classifier);
  ClassifierPtr get(const std::string& id) const;
  bool contains(const std::string& id) const;

  std::vector<std::string> ids() const;
  std::vector<ClassifierHandle> handles() const;
  std::size_t size() const noexcept { return order_.size(); }
  int label_count() const noexcept { return label_count_; }

 private:
  std::vector<std::string> order_;
  std::map<std::string, ClassifierPtr> by_id_;
  int label_count_ = 0;
};

ClassifierHandle handle_from_json(const nlohmann::json& entry);
nlohmann::json handle_to_json(const ClassifierHandle& handle);

}  // namespace capture
