#include <doctest.h>

#include <array>
#include <set>

#include "capture/challenge.hpp"
#include "capture/error.hpp"
#include "capture/rng.hpp"
#include "support.hpp"

using namespace capture;

namespace {

const AssetStore& shared_store() {
  static const AssetStore store = testing::synthetic_store(testing::scratch_dir("challenge-store"), 10, 8);
  return store;
}

ChallengeSpec random_spec(Rng& rng) {
  const Scheme scheme = all_schemes()[uniform_index(rng, all_schemes().size())];
  return ChallengeSpec::defaults(scheme, static_cast<int>(uniform_index(rng, 10)), rng());
}

}  // namespace

TEST_CASE("default compositions fill a 3x3 grid") {
  for (Scheme s : all_schemes()) {
    const auto spec = ChallengeSpec::defaults(s, 4, 1);
    CHECK_NOTHROW(spec.validate());
    CHECK(spec.n_true + spec.n_unrecognizable + spec.n_patched_decoy + spec.n_clean_decoy == 9);
  }
  auto bad = ChallengeSpec::defaults(Scheme::clean, 0, 0);
  bad.n_clean_decoy = 7;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = ChallengeSpec::defaults(Scheme::patch_only, 0, 0);
  bad.n_patched_true = 3;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad.n_patched_true = 0;
  bad.n_true = 0;
  bad.n_clean_decoy = 2;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("prompts read like the examples and parse back") {
  const auto labels = testing::desk_labels();
  CHECK(render_prompt(labels, 3, Scheme::unrec_only) ==
        "Select all the choices that show a real image of THEATER CURTAINS");
  CHECK(render_prompt(labels, 0, Scheme::patch_only) == "Select all the choices that show an image of a FLAGPOLE");
  CHECK(render_prompt(labels, 5, Scheme::clean) == "Select all the choices that show an image of an UMBRELLA");
  CHECK(render_prompt(labels, 8, Scheme::combined) == "Select all the choices that show a real image of WINDOWS");
  for (int k = 0; k < labels.size(); ++k) {
    for (Scheme s : all_schemes()) CHECK(parse_prompt(labels, render_prompt(labels, k, s)) == k);
  }
  CHECK_FALSE(parse_prompt(labels, "Select all squares with bicycles").has_value());
  CHECK_THROWS_AS(render_prompt(labels, 10, Scheme::clean), UnknownId);
}

TEST_CASE("soundness over random assemblies") {
  const auto& store = shared_store();
  const auto labels = testing::desk_labels();
  Rng rng(77);
  for (int trial = 0; trial < 10000; ++trial) {
    const ChallengeSpec spec = random_spec(rng);
    const Challenge c = assemble(spec, store, labels);
    REQUIRE(c.cells.size() == 9);
    REQUIRE(std::set<std::string>(c.cells.begin(), c.cells.end()).size() == 9);

    int n_true = 0, n_patched_true = 0, n_unrec = 0, n_patched_decoy = 0, n_clean_decoy = 0;
    std::vector<int> key;
    for (int i = 0; i < 9; ++i) {
      const auto& r = store.get(c.cells[i]);
      if (r.true_class == spec.target_class) {
        key.push_back(i);
        ++n_true;
        if (r.provenance == Provenance::patched) {
          ++n_patched_true;
          REQUIRE(r.fooling_class != spec.target_class);
        } else {
          REQUIRE(r.provenance == Provenance::clean);
        }
      } else if (is_unrecognizable(r.provenance)) {
        ++n_unrec;
        REQUIRE(r.fooling_class == spec.target_class);
      } else if (r.provenance == Provenance::patched) {
        ++n_patched_decoy;
        REQUIRE(r.fooling_class == spec.target_class);
      } else {
        ++n_clean_decoy;
        REQUIRE(r.provenance == Provenance::clean);
      }
    }
    REQUIRE(key == c.answer_key);
    REQUIRE(n_true == spec.n_true);
    REQUIRE(n_patched_true == spec.n_patched_true);
    REQUIRE(n_unrec == spec.n_unrecognizable);
    REQUIRE(n_patched_decoy == spec.n_patched_decoy);
    REQUIRE(n_clean_decoy == spec.n_clean_decoy);
    REQUIRE(!c.answer_key.empty());
  }
}

TEST_CASE("verify accepts exactly the answer key over every subset") {
  const auto& store = shared_store();
  const auto labels = testing::desk_labels();
  Rng rng(5);
  for (int fixture = 0; fixture < 100; ++fixture) {
    const Challenge c = assemble(random_spec(rng), store, labels);
    unsigned key_mask = 0;
    for (int i = 0; i < 9; ++i) {
      if (store.get(c.cells[i]).true_class == c.spec.target_class) key_mask |= 1u << i;
    }
    int accepted = 0;
    for (unsigned mask = 0; mask < 512; ++mask) {
      std::vector<int> sel;
      for (int i = 0; i < 9; ++i) {
        if (mask & (1u << i)) sel.push_back(i);
      }
      const bool ok = verify(c, sel);
      REQUIRE(ok == (mask == key_mask));
      accepted += ok;
    }
    REQUIRE(accepted == 1);
  }
}

TEST_CASE("verify collapses duplicates and rejects out-of-grid indices") {
  const Challenge c = assemble(ChallengeSpec::defaults(Scheme::patch_only, 2, 9), shared_store(), testing::desk_labels());
  REQUIRE(c.answer_key.size() == 2);
  std::vector<int> dup{c.answer_key[1], c.answer_key[0], c.answer_key[0]};
  CHECK(verify(c, dup));
  CHECK_THROWS_AS(verify(c, std::vector<int>{9}), InvalidArgument);
  CHECK_THROWS_AS(verify(c, std::vector<int>{-1}), InvalidArgument);
  CHECK_FALSE(verify(c, std::vector<int>{}));
}

TEST_CASE("cell order is uniform over seeds") {
  const auto& store = shared_store();
  const auto labels = testing::desk_labels();
  std::array<int, 9> hits{};
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    const Challenge c = assemble(ChallengeSpec::defaults(Scheme::clean, 6, mix_seed(123, s)), store, labels);
    REQUIRE(c.answer_key.size() == 1);
    ++hits[c.answer_key[0]];
  }
  for (int h : hits) CHECK(std::abs(static_cast<double>(h) / trials - 1.0 / 9.0) <= 0.01);
}

TEST_CASE("assembly is a pure function of the challenge spec and store") {
  const auto& store = shared_store();
  const auto labels = testing::desk_labels();
  const auto spec = ChallengeSpec::defaults(Scheme::combined, 1, 4242);
  const Challenge a = assemble(spec, store, labels, 10);
  const Challenge b = assemble(spec, store, labels, 10);
  CHECK(to_json(a) == to_json(b));
  CHECK(challenge_from_json(to_json(a)).cells == a.cells);
  const Challenge other = assemble(ChallengeSpec::defaults(Scheme::combined, 1, 4243), store, labels, 10);
  CHECK(other.challenge_id != a.challenge_id);

  const auto pub = public_view(a);
  CHECK(pub.cells == a.cells);
  CHECK(pub.prompt == a.prompt);
  CHECK(pub.rows == 3);
}

TEST_CASE("shortage lists every missing role") {
  auto store = AssetStore::create(testing::scratch_dir("short-store"));
  int tag = 5000;
  for (int c = 0; c < 10; ++c) store.add(testing::tagged_image(tag++), Provenance::clean, c, std::nullopt, {});
  const auto labels = testing::desk_labels();
  CHECK_NOTHROW(assemble(ChallengeSpec::defaults(Scheme::clean, 0, 1), store, labels));
  try {
    assemble(ChallengeSpec::defaults(Scheme::combined, 0, 1), store, labels);
    FAIL("expected a shortage");
  } catch (const ShortageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("patched true") != std::string::npos);
    CHECK(msg.find("unrecognizable") != std::string::npos);
    CHECK(msg.find("patched decoy") != std::string::npos);
  }
}

TEST_CASE("unrecognizable assets not recommended are never served") {
  auto store = AssetStore::create(testing::scratch_dir("unrec-store"));
  int tag = 7000;
  for (int c = 0; c < 10; ++c) store.add(testing::tagged_image(tag++), Provenance::clean, c, std::nullopt, {});
  store.add(testing::tagged_image(tag++), Provenance::unrec_direct, std::nullopt, 0, {{"recommended", false}});
  store.add(testing::tagged_image(tag++), Provenance::unrec_direct, std::nullopt, 0, {{"recommended", false}});
  auto spec = ChallengeSpec::defaults(Scheme::unrec_only, 0, 1);
  spec.n_clean_decoy = 6;
  CHECK_THROWS_AS(assemble(spec, store, testing::desk_labels()), ShortageError);
}
