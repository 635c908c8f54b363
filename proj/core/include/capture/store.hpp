#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/image.hpp"

namespace capture {

enum class Provenance { clean, unrec_direct, unrec_cppn, unrec_gradient, patched, perturbed_clean };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);
bool is_unrecognizable(Provenance p) noexcept;

struct AssetRecord {
  std::string asset_id;
  std::string path;  // relative to the store root
  Provenance provenance = Provenance::clean;
  std::optional<int> true_class;     // what a human sees
  std::optional<int> fooling_class;  // what the generating models see
  nlohmann::json manifest = nlohmann::json::object();

  // Patched assets need both classes; unrecognizable ones only a fooling
  // class; clean ones only a true class. Throws InvalidArgument.
  void validate() const;
};

nlohmann::json to_json(const AssetRecord& r);
AssetRecord asset_record_from_json(const nlohmann::json& j);

// Directory of PNG assets with per-asset JSON manifests and a single
// catalog.json index. One writer at a time; readers use a loaded snapshot.
class AssetStore {
 public:
  static AssetStore create(const std::filesystem::path& root);
  // Throws IoError if the catalog is missing, FormatError if it is malformed.
  static AssetStore open(const std::filesystem::path& root);

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<AssetRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }

  // Writes assets/<id>.png and assets/<id>.json and indexes the record. The
  // id is derived from the PNG bytes, so re-adding identical content returns
  // the existing record.
  const AssetRecord& add(const ImageTensor& img, Provenance provenance, std::optional<int> true_class,
                         std::optional<int> fooling_class, nlohmann::json manifest);

  // Rewrites catalog.json (via a temporary file and rename).
  void save_catalog() const;

  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  const AssetRecord& get(const std::string& id) const;  // throws UnknownId
  std::vector<std::uint8_t> png_bytes(const std::string& id) const;
  ImageTensor load(const std::string& id) const;

 private:
  std::filesystem::path root_;
  std::vector<AssetRecord> records_;
  std::map<std::string, std::size_t> index_;
};

// 16 lowercase hex digits of a 64-bit FNV-1a hash.
std::string hex_digest(const std::string& bytes);
std::string hex_digest(const std::vector<std::uint8_t>& bytes);

}  // namespace capture
