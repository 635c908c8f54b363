#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/registry.hpp"
#include "capture/store.hpp"

namespace capture {

// `clean` is the unhardened baseline: one true image among clean decoys.
enum class Scheme { clean, unrec_only, patch_only, combined };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);
const std::vector<Scheme>& all_schemes();

struct ChallengeSpec {
  int rows = 3;
  int cols = 3;
  int target_class = 0;
  int n_true = 1;                // cells a human should select
  int n_patched_true = 0;        // of n_true: target hosts carrying an off-target patch
  int n_unrecognizable = 0;      // decoys fooling toward the target
  int n_patched_decoy = 0;       // non-target hosts carrying a target patch
  int n_clean_decoy = 0;
  Scheme scheme = Scheme::clean;
  std::uint64_t seed = 0;

  // Default composition of a 3x3 challenge for each scheme.
  static ChallengeSpec defaults(Scheme scheme, int target_class, std::uint64_t seed);

  // n_true + n_unrecognizable + n_patched_decoy + n_clean_decoy == rows * cols,
  // 1 <= n_true, n_patched_true <= n_true. Throws InvalidArgument.
  void validate() const;
};

nlohmann::json to_json(const ChallengeSpec& s);
ChallengeSpec challenge_spec_from_json(const nlohmann::json& j);

struct Challenge {
  std::string challenge_id;
  std::string prompt;
  std::vector<std::string> cells;  // asset ids, row-major
  std::vector<int> answer_key;     // sorted cell indices
  std::int64_t created_at = 0;     // ms since epoch
  ChallengeSpec spec;
};

// Full record, answer key included.
nlohmann::json to_json(const Challenge& c);
Challenge challenge_from_json(const nlohmann::json& j);

// What a solver (human or bot) receives: no key, no provenance.
struct PublicChallenge {
  std::string prompt;
  int rows = 0;
  int cols = 0;
  std::vector<std::string> cells;
};

PublicChallenge public_view(const Challenge& c);

std::string render_prompt(const LabelSpace& labels, int target_class, Scheme scheme);

// Inverse of render_prompt over every class and scheme; nullopt if no class matches.
std::optional<int> parse_prompt(const LabelSpace& labels, const std::string& prompt);

// Picks assets for every role, shuffles cell order by spec.seed and derives
// the answer key from true_class. Throws ShortageError listing every missing
// (provenance, class) requirement.
Challenge assemble(const ChallengeSpec& spec, const AssetStore& store, const LabelSpace& labels,
                   std::int64_t created_at = 0);

// Exact set equality with the answer key. Duplicate indices collapse; an
// index outside the grid throws InvalidArgument.
bool verify(const Challenge& c, std::span<const int> selection);

}  // namespace capture
