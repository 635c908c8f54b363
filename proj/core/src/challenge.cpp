#include "capture/challenge.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "capture/error.hpp"
#include "capture/rng.hpp"

namespace capture {

namespace {

std::string display_name(const std::string& name) {
  std::string out;
  for (char c : name) out += c == '-' || c == '_' ? ' ' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string plural(const std::string& upper) {
  auto ends = [&](const std::string& suffix) {
    return upper.size() >= suffix.size() && upper.compare(upper.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends("S") || ends("X") || ends("Z") || ends("CH") || ends("SH")) return upper + "ES";
  if (upper.size() >= 2 && ends("Y") && std::string("AEIOU").find(upper[upper.size() - 2]) == std::string::npos) {
    return upper.substr(0, upper.size() - 1) + "IES";
  }
  return upper + "S";
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::clean: return "clean";
    case Scheme::unrec_only: return "unrec-only";
    case Scheme::patch_only: return "patch-only";
    case Scheme::combined: return "combined";
  }
  return "clean";
}

Scheme scheme_from_string(const std::string& s) {
  for (Scheme v : all_schemes()) {
    if (to_string(v) == s) return v;
  }
  throw InvalidArgument("unknown scheme '" + s + "' (expected clean, unrec-only, patch-only or combined)");
}

const std::vector<Scheme>& all_schemes() {
  static const std::vector<Scheme> all{Scheme::clean, Scheme::unrec_only, Scheme::patch_only, Scheme::combined};
  return all;
}

ChallengeSpec ChallengeSpec::defaults(Scheme scheme, int target_class, std::uint64_t seed) {
  ChallengeSpec s;
  s.target_class = target_class;
  s.scheme = scheme;
  s.seed = seed;
  switch (scheme) {
    case Scheme::clean:
      s.n_clean_decoy = 8;
      break;
    case Scheme::unrec_only:
      s.n_unrecognizable = 2;
      s.n_clean_decoy = 6;
      break;
    case Scheme::patch_only:
      s.n_true = 2;
      s.n_patched_true = 2;
      s.n_patched_decoy = 7;
      break;
    case Scheme::combined:
      s.n_true = 2;
      s.n_patched_true = 1;
      s.n_unrecognizable = 2;
      s.n_patched_decoy = 3;
      s.n_clean_decoy = 2;
      break;
  }
  return s;
}

void ChallengeSpec::validate() const {
  if (rows < 1 || cols < 1) throw InvalidArgument("grid dimensions must be positive");
  if (n_true < 1) throw InvalidArgument("n_true must be >= 1");
  if (n_patched_true < 0 || n_patched_true > n_true) throw InvalidArgument("n_patched_true must be in [0, n_true]");
  if (n_unrecognizable < 0 || n_patched_decoy < 0 || n_clean_decoy < 0) {
    throw InvalidArgument("cell counts must be non-negative");
  }
  if (n_true + n_unrecognizable + n_patched_decoy + n_clean_decoy != rows * cols) {
    throw InvalidArgument("cell counts must sum to rows * cols = " + std::to_string(rows * cols));
  }
}

nlohmann::json to_json(const ChallengeSpec& s) {
  return {{"rows", s.rows},
          {"cols", s.cols},
          {"target_class", s.target_class},
          {"n_true", s.n_true},
          {"n_patched_true", s.n_patched_true},
          {"n_unrecognizable", s.n_unrecognizable},
          {"n_patched_decoy", s.n_patched_decoy},
          {"n_clean_decoy", s.n_clean_decoy},
          {"scheme", to_string(s.scheme)},
          {"seed", s.seed}};
}

ChallengeSpec challenge_spec_from_json(const nlohmann::json& j) {
  try {
    const Scheme scheme = scheme_from_string(j.value("scheme", std::string("clean")));
    ChallengeSpec s = ChallengeSpec::defaults(scheme, j.value("target_class", 0), j.value("seed", std::uint64_t{0}));
    s.rows = j.value("rows", s.rows);
    s.cols = j.value("cols", s.cols);
    s.n_true = j.value("n_true", s.n_true);
    s.n_patched_true = j.value("n_patched_true", s.n_patched_true);
    s.n_unrecognizable = j.value("n_unrecognizable", s.n_unrecognizable);
    s.n_patched_decoy = j.value("n_patched_decoy", s.n_patched_decoy);
    s.n_clean_decoy = j.value("n_clean_decoy", s.n_clean_decoy);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed challenge spec: ") + e.what());
  }
}

nlohmann::json to_json(const Challenge& c) {
  return {{"challenge_id", c.challenge_id}, {"prompt", c.prompt},       {"cells", c.cells},
          {"answer_key", c.answer_key},     {"created_at", c.created_at}, {"spec", to_json(c.spec)}};
}

Challenge challenge_from_json(const nlohmann::json& j) {
  try {
    Challenge c;
    c.challenge_id = j.at("challenge_id").get<std::string>();
    c.prompt = j.at("prompt").get<std::string>();
    c.cells = j.at("cells").get<std::vector<std::string>>();
    c.answer_key = j.at("answer_key").get<std::vector<int>>();
    c.created_at = j.value("created_at", std::int64_t{0});
    c.spec = challenge_spec_from_json(j.at("spec"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed challenge: ") + e.what());
  }
}

PublicChallenge public_view(const Challenge& c) { return {c.prompt, c.spec.rows, c.spec.cols, c.cells}; }

std::string render_prompt(const LabelSpace& labels, int target_class, Scheme scheme) {
  if (target_class < 0 || target_class >= labels.size()) {
    throw UnknownId("no display name for class " + std::to_string(target_class));
  }
  const std::string name = display_name(labels.name(target_class));
  if (scheme == Scheme::unrec_only || scheme == Scheme::combined) {
    return "Select all the choices that show a real image of " + plural(name);
  }
  const bool vowel = std::string("AEIOU").find(name.front()) != std::string::npos;
  return std::string("Select all the choices that show an image of ") + (vowel ? "an " : "a ") + name;
}

std::optional<int> parse_prompt(const LabelSpace& labels, const std::string& prompt) {
  for (int k = 0; k < labels.size(); ++k) {
    for (Scheme s : all_schemes()) {
      if (render_prompt(labels, k, s) == prompt) return k;
    }
  }
  return std::nullopt;
}

Challenge assemble(const ChallengeSpec& spec, const AssetStore& store, const LabelSpace& labels,
                   std::int64_t created_at) {
  spec.validate();
  const int target = spec.target_class;
  Rng rng(spec.seed);

  struct Role {
    const char* what;
    int count;
    bool (*accept)(const AssetRecord&, int);
  };
  const Role roles[] = {
      {"clean true", spec.n_true - spec.n_patched_true,
       [](const AssetRecord& r, int t) { return r.provenance == Provenance::clean && r.true_class == t; }},
      {"patched true (off-target patch)", spec.n_patched_true,
       [](const AssetRecord& r, int t) {
         return r.provenance == Provenance::patched && r.true_class == t && r.fooling_class != t;
       }},
      {"unrecognizable fooling toward", spec.n_unrecognizable,
       [](const AssetRecord& r, int t) {
         return is_unrecognizable(r.provenance) && r.fooling_class == t && r.manifest.value("recommended", true);
       }},
      {"patched decoy fooling toward", spec.n_patched_decoy,
       [](const AssetRecord& r, int t) {
         return r.provenance == Provenance::patched && r.fooling_class == t && r.true_class != t;
       }},
      {"clean decoy other than", spec.n_clean_decoy,
       [](const AssetRecord& r, int t) { return r.provenance == Provenance::clean && r.true_class != t; }},
  };

  std::vector<std::string> cells;
  std::vector<std::string> missing;
  for (const Role& role : roles) {
    if (role.count == 0) continue;
    std::vector<std::string> pool;
    for (const auto& r : store.records()) {
      if (role.accept(r, target)) pool.push_back(r.asset_id);
    }
    std::sort(pool.begin(), pool.end());
    if (static_cast<int>(pool.size()) < role.count) {
      missing.push_back(std::string(role.what) + " class " + std::to_string(target) + ": need " +
                        std::to_string(role.count) + ", have " + std::to_string(pool.size()));
      continue;
    }
    shuffle(pool, rng);
    cells.insert(cells.end(), pool.begin(), pool.begin() + role.count);
  }
  if (!missing.empty()) {
    std::string msg = "asset store cannot fill challenge:";
    for (const auto& m : missing) msg += " [" + m + "]";
    throw ShortageError(msg);
  }
  shuffle(cells, rng);

  Challenge c;
  c.spec = spec;
  c.cells = cells;
  c.created_at = created_at;
  c.prompt = render_prompt(labels, target, spec.scheme);
  for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
    if (store.get(cells[i]).true_class == target) c.answer_key.push_back(i);
  }
  std::string basis = to_json(spec).dump();
  for (const auto& id : cells) basis += id;
  c.challenge_id = hex_digest(basis);
  return c;
}

bool verify(const Challenge& c, std::span<const int> selection) {
  const int n = static_cast<int>(c.cells.size());
  std::set<int> chosen;
  for (int i : selection) {
    if (i < 0 || i >= n) {
      throw InvalidArgument("malformed selection: index " + std::to_string(i) + " outside 0.." + std::to_string(n - 1));
    }
    chosen.insert(i);
  }
  return std::equal(chosen.begin(), chosen.end(), c.answer_key.begin(), c.answer_key.end());
}

}  // namespace capture
