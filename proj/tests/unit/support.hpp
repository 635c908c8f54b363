#pragma once

#include <filesystem>
#include <string>

#include "capture/registry.hpp"
#include "capture/store.hpp"

namespace capture::testing {

inline std::filesystem::path data_dir() { return CAPTURE_DATA_DIR; }
inline std::filesystem::path desk_pool_path() { return data_dir() / "fixtures/models/desk_pool.json"; }
inline LabelSpace desk_labels() { return LabelSpace::load(data_dir() / "fixtures/labels.txt"); }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("capture-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Solid-colour image; distinct `tag`s give distinct PNG bytes and asset ids.
inline ImageTensor tagged_image(int tag) {
  ImageTensor img(4, 4);
  for (int i = 0; i < 16; ++i) {
    img.at(i / 4, i % 4, 0) = ((tag >> (i % 8)) & 1) ? 1.0 : 0.0;
    img.at(i / 4, i % 4, 1) = (tag % 251) / 255.0;
    img.at(i / 4, i % 4, 2) = (tag / 251 % 251) / 255.0;
  }
  return img;
}

// A model-free store with `per` assets of every role for every class:
// clean, cppn unrecognizable, and patched for each (host, patch != host) pair.
inline AssetStore synthetic_store(const std::filesystem::path& root, int classes, int per) {
  auto store = AssetStore::create(root);
  int tag = 1;
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < per; ++k) {
      store.add(tagged_image(tag++), Provenance::clean, c, std::nullopt, {{"k", k}});
      store.add(tagged_image(tag++), Provenance::unrec_cppn, std::nullopt, c, {{"k", k}, {"recommended", true}});
      for (int p = 0; p < classes; ++p) {
        if (p != c) store.add(tagged_image(tag++), Provenance::patched, c, p, {{"k", k}});
      }
    }
  }
  store.save_catalog();
  return store;
}

}  // namespace capture::testing
