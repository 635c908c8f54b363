#include <doctest.h>

#include <fstream>

#include "capture/error.hpp"
#include "capture/png_io.hpp"
#include "capture/store.hpp"
#include "support.hpp"

using namespace capture;

TEST_CASE("hex digest is 64-bit FNV-1a") {
  CHECK(hex_digest(std::string()) == "cbf29ce484222325");
  CHECK(hex_digest(std::string("a")) == "af63dc4c8601ec8c");
  CHECK(hex_digest(std::string("foobar")) == "85944171f73967e8");
}

TEST_CASE("record invariants by provenance") {
  AssetRecord r{"id", "assets/id.png", Provenance::clean, 1, std::nullopt, {}};
  CHECK_NOTHROW(r.validate());
  r.fooling_class = 2;
  CHECK_THROWS_AS(r.validate(), InvalidArgument);

  AssetRecord u{"id", "assets/id.png", Provenance::unrec_cppn, std::nullopt, 3, {}};
  CHECK_NOTHROW(u.validate());
  u.true_class = 3;
  CHECK_THROWS_AS(u.validate(), InvalidArgument);

  AssetRecord p{"id", "assets/id.png", Provenance::patched, 1, std::nullopt, {}};
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.fooling_class = 4;
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("provenance names round trip") {
  for (auto p : {Provenance::clean, Provenance::unrec_direct, Provenance::unrec_cppn, Provenance::unrec_gradient,
                 Provenance::patched, Provenance::perturbed_clean}) {
    CHECK(provenance_from_string(to_string(p)) == p);
  }
  CHECK(to_string(Provenance::unrec_cppn) == "unrec-cppn");
  CHECK(is_unrecognizable(Provenance::unrec_gradient));
  CHECK_FALSE(is_unrecognizable(Provenance::patched));
  CHECK_THROWS_AS(provenance_from_string("photo"), InvalidArgument);
}

TEST_CASE("store adds, dedupes, persists and reloads") {
  const auto root = testing::scratch_dir("store");
  auto store = AssetStore::create(root);
  const auto img = quantize(testing::tagged_image(9));
  const std::string id = store.add(img, Provenance::clean, 2, std::nullopt, {{"note", "x"}}).asset_id;
  CHECK(id.size() == 16);
  CHECK(id == hex_digest(encode_png(img)));
  CHECK(store.add(img, Provenance::clean, 2, std::nullopt, {}).asset_id == id);
  CHECK(store.size() == 1);
  store.add(testing::tagged_image(10), Provenance::unrec_cppn, std::nullopt, 5, {});
  store.save_catalog();
  CHECK(std::filesystem::exists(root / "catalog.json"));
  CHECK(std::filesystem::exists(root / "assets" / (id + ".png")));
  CHECK(std::filesystem::exists(root / "assets" / (id + ".json")));

  const auto again = AssetStore::open(root);
  CHECK(again.size() == 2);
  CHECK(again.get(id).true_class == 2);
  CHECK(again.get(id).manifest["note"] == "x");
  CHECK(again.load(id) == img);
  CHECK(again.png_bytes(id) == encode_png(img));
  CHECK_THROWS_AS(again.get("0000000000000000"), UnknownId);
}

TEST_CASE("store open errors are typed") {
  CHECK_THROWS_AS(AssetStore::open(testing::scratch_dir("empty-store")), IoError);
  const auto bad = testing::scratch_dir("bad-store");
  std::ofstream(bad / "catalog.json") << "{not json";
  CHECK_THROWS_AS(AssetStore::open(bad), FormatError);
}

TEST_CASE("invalid records are refused at insertion") {
  auto store = AssetStore::create(testing::scratch_dir("refuse"));
  CHECK_THROWS_AS(store.add(testing::tagged_image(1), Provenance::patched, 1, std::nullopt, {}), InvalidArgument);
  CHECK(store.size() == 0);
}
