#include "capture/registry.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include "capture/error.hpp"

namespace capture {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ClassifierPtr make_desk_net(const json& entry, ClassifierHandle handle,
                            const std::filesystem::path& base_dir) {
  if (!entry.contains("weights")) throw ModelLoadError(handle.id + ": missing weights path");
  std::filesystem::path weights = entry.at("weights").get<std::string>();
  if (weights.is_relative()) weights = base_dir / weights;
  json j;
  try {
    j = read_json(weights);
  } catch (const Error& e) {
    throw ModelLoadError(handle.id + ": " + e.what());
  }
  auto net = nn::Network::from_json(j);
  if (handle.label_count == 0) handle.label_count = static_cast<int>(net.output_shape().size());
  return std::make_shared<NetworkClassifier>(std::move(handle), std::move(net));
}

ClassifierPtr make_fixed(const json& entry, ClassifierHandle handle, const std::filesystem::path&) {
  auto probs = entry.at("probs").get<std::vector<double>>();
  if (handle.label_count == 0) handle.label_count = static_cast<int>(probs.size());
  return std::make_shared<FixedClassifier>(std::move(handle), std::move(probs));
}

}  // namespace

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw InvalidArgument("label space needs at least two classes");
}

LabelSpace LabelSpace::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) names.push_back(line);
  }
  return LabelSpace(std::move(names));
}

const std::string& LabelSpace::name(int label) const {
  if (label < 0 || label >= size()) throw UnknownId("label index " + std::to_string(label));
  return names_[label];
}

int LabelSpace::resolve(const std::string& name_or_index) const {
  const auto it = std::find(names_.begin(), names_.end(), name_or_index);
  if (it != names_.end()) return static_cast<int>(it - names_.begin());
  int index = -1;
  const auto* first = name_or_index.data();
  const auto* last = first + name_or_index.size();
  auto [ptr, ec] = std::from_chars(first, last, index);
  if (ec == std::errc() && ptr == last && index >= 0 && index < size()) return index;
  throw UnknownId("unknown class '" + name_or_index + "'");
}

AdapterRegistry::AdapterRegistry() {
  factories_["desk-net"] = make_desk_net;
  factories_["fixed"] = make_fixed;
}

AdapterRegistry& AdapterRegistry::instance() {
  static AdapterRegistry registry;
  return registry;
}

void AdapterRegistry::add(const std::string& name, AdapterFactory factory) {
  factories_[name] = std::move(factory);
}

bool AdapterRegistry::contains(const std::string& name) const { return factories_.count(name) > 0; }

std::vector<std::string> AdapterRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

ClassifierPtr AdapterRegistry::create(const json& entry, const std::filesystem::path& base_dir) const {
  ClassifierHandle handle = handle_from_json(entry);
  const auto adapter = entry.value("adapter", std::string("desk-net"));
  const auto it = factories_.find(adapter);
  if (it == factories_.end()) {
    std::string known;
    for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
    throw ModelLoadError("model '" + handle.id + "': adapter '" + adapter +
                         "' is not available in this build (available: " + known + ")");
  }
  return it->second(entry, std::move(handle), base_dir);
}

ClassifierHandle handle_from_json(const json& entry) {
  ClassifierHandle h;
  try {
    h.id = entry.at("id").get<std::string>();
    const auto size = entry.at("input_size").get<std::vector<int>>();
    if (size.size() != 2 || size[0] <= 0 || size[1] <= 0) {
      throw ModelLoadError(h.id + ": input_size must be [height, width] > 0");
    }
    h.input_size = {size[0], size[1]};
    h.label_count = entry.value("label_count", 0);
    if (entry.contains("preprocessing")) {
      const auto& pre = entry.at("preprocessing");
      if (pre.contains("mean")) h.preprocessing.mean = pre.at("mean").get<std::array<double, 3>>();
      if (pre.contains("scale")) h.preprocessing.scale = pre.at("scale").get<std::array<double, 3>>();
    }
  } catch (const json::exception& e) {
    throw ModelLoadError(std::string("malformed registry entry: ") + e.what());
  }
  for (double s : h.preprocessing.scale) {
    if (!(s > 0.0)) throw ModelLoadError(h.id + ": preprocessing scale must be > 0");
  }
  return h;
}

json handle_to_json(const ClassifierHandle& h) {
  return {{"id", h.id},
          {"input_size", {h.input_size.height, h.input_size.width}},
          {"label_count", h.label_count},
          {"preprocessing", {{"mean", h.preprocessing.mean}, {"scale", h.preprocessing.scale}}}};
}

ClassifierPool ClassifierPool::load(const std::filesystem::path& config) {
  const json j = read_json(config);
  const json& entries = j.is_array() ? j : j.at("models");
  ClassifierPool pool;
  const auto base = config.parent_path();
  for (const auto& entry : entries) pool.add(AdapterRegistry::instance().create(entry, base));
  return pool;
}

void ClassifierPool::add(ClassifierPtr classifier) {
  if (!classifier) throw InvalidArgument("null classifier");
  const auto& h = classifier->handle();
  if (by_id_.count(h.id)) throw InvalidArgument("duplicate classifier id '" + h.id + "'");
  if (label_count_ != 0 && h.label_count != label_count_) {
    throw InvalidArgument("classifier '" + h.id + "' has " + std::to_string(h.label_count) +
                          " labels; pool uses " + std::to_string(label_count_));
  }
  label_count_ = h.label_count;
  order_.push_back(h.id);
  by_id_[h.id] = std::move(classifier);
}

ClassifierPtr ClassifierPool::get(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw UnknownId("unknown classifier '" + id + "'");
  return it->second;
}

bool ClassifierPool::contains(const std::string& id) const { return by_id_.count(id) > 0; }

std::vector<std::string> ClassifierPool::ids() const { return order_; }

std::vector<ClassifierHandle> ClassifierPool::handles() const {
  std::vector<ClassifierHandle> out;
  for (const auto& id : order_) out.push_back(by_id_.at(id)->handle());
  return out;
}

}  // namespace capture
