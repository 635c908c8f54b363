#include "capture/store.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "capture/error.hpp"
#include "capture/png_io.hpp"

namespace capture {

namespace {

constexpr const char* kCatalog = "catalog.json";

struct ProvenanceName {
  Provenance value;
  const char* name;
};

constexpr ProvenanceName kProvenanceNames[] = {
    {Provenance::clean, "clean"},
    {Provenance::unrec_direct, "unrec-direct"},
    {Provenance::unrec_cppn, "unrec-cppn"},
    {Provenance::unrec_gradient, "unrec-gradient"},
    {Provenance::patched, "patched"},
    {Provenance::perturbed_clean, "perturbed-clean"},
};

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string to_string(Provenance p) {
  for (const auto& [value, name] : kProvenanceNames) {
    if (value == p) return name;
  }
  return "clean";
}

Provenance provenance_from_string(const std::string& s) {
  for (const auto& [value, name] : kProvenanceNames) {
    if (s == name) return value;
  }
  throw InvalidArgument("unknown provenance '" + s + "'");
}

bool is_unrecognizable(Provenance p) noexcept {
  return p == Provenance::unrec_direct || p == Provenance::unrec_cppn || p == Provenance::unrec_gradient;
}

void AssetRecord::validate() const {
  if (asset_id.empty()) throw InvalidArgument("asset id must not be empty");
  if (provenance == Provenance::patched && !(true_class && fooling_class)) {
    throw InvalidArgument("patched asset " + asset_id + " needs both true_class and fooling_class");
  }
  if (is_unrecognizable(provenance) && (true_class || !fooling_class)) {
    throw InvalidArgument("unrecognizable asset " + asset_id + " needs a fooling_class and no true_class");
  }
  if ((provenance == Provenance::clean || provenance == Provenance::perturbed_clean) && !true_class) {
    throw InvalidArgument("clean asset " + asset_id + " needs a true_class");
  }
  if (provenance == Provenance::clean && fooling_class) {
    throw InvalidArgument("clean asset " + asset_id + " cannot carry a fooling_class");
  }
}

nlohmann::json to_json(const AssetRecord& r) {
  nlohmann::json j{{"asset_id", r.asset_id}, {"path", r.path}, {"provenance", to_string(r.provenance)},
                   {"manifest", r.manifest}};
  j["true_class"] = r.true_class ? nlohmann::json(*r.true_class) : nlohmann::json(nullptr);
  j["fooling_class"] = r.fooling_class ? nlohmann::json(*r.fooling_class) : nlohmann::json(nullptr);
  return j;
}

AssetRecord asset_record_from_json(const nlohmann::json& j) {
  AssetRecord r;
  try {
    r.asset_id = j.at("asset_id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    if (j.contains("true_class") && !j["true_class"].is_null()) r.true_class = j["true_class"].get<int>();
    if (j.contains("fooling_class") && !j["fooling_class"].is_null()) r.fooling_class = j["fooling_class"].get<int>();
    r.manifest = j.value("manifest", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed asset record: ") + e.what());
  }
  r.validate();
  return r;
}

AssetStore AssetStore::create(const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "assets");
  AssetStore s;
  s.root_ = root;
  if (std::filesystem::exists(root / kCatalog)) return open(root);
  s.save_catalog();
  return s;
}

AssetStore AssetStore::open(const std::filesystem::path& root) {
  std::ifstream in(root / kCatalog);
  if (!in) throw IoError("no asset catalog at " + (root / kCatalog).string());
  AssetStore s;
  s.root_ = root;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed catalog " + (root / kCatalog).string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError("catalog must be a JSON list of asset records");
  for (const auto& entry : j) {
    AssetRecord r = asset_record_from_json(entry);
    if (s.index_.count(r.asset_id)) throw FormatError("duplicate asset id " + r.asset_id + " in catalog");
    s.index_[r.asset_id] = s.records_.size();
    s.records_.push_back(std::move(r));
  }
  return s;
}

const AssetRecord& AssetStore::add(const ImageTensor& img, Provenance provenance, std::optional<int> true_class,
                                   std::optional<int> fooling_class, nlohmann::json manifest) {
  const auto png = encode_png(img);
  const std::string id = hex_digest(png);
  if (auto it = index_.find(id); it != index_.end()) return records_[it->second];

  if (manifest.is_null()) manifest = nlohmann::json::object();
  AssetRecord r{id, "assets/" + id + ".png", provenance, true_class, fooling_class, std::move(manifest)};
  r.validate();
  std::filesystem::create_directories(root_ / "assets");
  {
    std::ofstream out(root_ / r.path, std::ios::binary);
    if (!out) throw IoError("cannot write " + (root_ / r.path).string());
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  }
  write_text(root_ / "assets" / (id + ".json"), to_json(r).dump(2) + "\n");
  index_[id] = records_.size();
  records_.push_back(std::move(r));
  return records_.back();
}

void AssetStore::save_catalog() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : records_) j.push_back(to_json(r));
  write_text(root_ / kCatalog, j.dump(1) + "\n");
}

const AssetRecord& AssetStore::get(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw UnknownId("unknown asset '" + id + "'");
  return records_[it->second];
}

std::vector<std::uint8_t> AssetStore::png_bytes(const std::string& id) const {
  const auto path = root_ / get(id).path;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageTensor AssetStore::load(const std::string& id) const { return load_image(root_ / get(id).path); }

std::string hex_digest(const std::string& bytes) {
  return hex64(fnv1a(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
}

std::string hex_digest(const std::vector<std::uint8_t>& bytes) { return hex64(fnv1a(bytes.data(), bytes.size())); }

}  // namespace capture
