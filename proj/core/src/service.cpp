#include "capture/service.hpp"

#include <algorithm>
#include <chrono>

#include "capture/error.hpp"

namespace capture {

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::pass: return "pass";
    case Outcome::fail: return "fail";
    case Outcome::expired: return "expired";
    case Outcome::open: return "open";
  }
  return "open";
}

Outcome outcome_from_string(const std::string& s) {
  if (s == "pass") return Outcome::pass;
  if (s == "fail") return Outcome::fail;
  if (s == "expired") return Outcome::expired;
  if (s == "open") return Outcome::open;
  throw InvalidArgument("unknown outcome '" + s + "'");
}

nlohmann::json to_json(const Session& s) {
  nlohmann::json j{{"session_id", s.session_id}, {"challenge_id", s.challenge_id}, {"scheme", to_string(s.scheme)},
                   {"issued_at", s.issued_at},   {"outcome", to_string(s.outcome)}};
  j["answered_at"] = s.answered_at ? nlohmann::json(*s.answered_at) : nlohmann::json(nullptr);
  j["selection"] = s.selection ? nlohmann::json(*s.selection) : nlohmann::json(nullptr);
  return j;
}

Session session_from_json(const nlohmann::json& j) {
  try {
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.challenge_id = j.at("challenge_id").get<std::string>();
    s.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    s.issued_at = j.at("issued_at").get<std::int64_t>();
    s.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    if (j.contains("answered_at") && !j["answered_at"].is_null()) s.answered_at = j["answered_at"].get<std::int64_t>();
    if (j.contains("selection") && !j["selection"].is_null()) s.selection = j["selection"].get<std::vector<int>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed session record: ") + e.what());
  }
}

Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

SessionLog::SessionLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app);
  if (!out_) throw IoError("cannot open session log " + path_.string());
}

void SessionLog::append(const Session& s) {
  const std::string line = to_json(s).dump() + "\n";
  std::lock_guard lock(mu_);
  out_ << line;
  out_.flush();
  if (!out_) throw IoError("cannot append to session log " + path_.string());
}

std::vector<Session> read_session_log(const std::filesystem::path& path) {
  std::vector<Session> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FormatError(path.string() + ":" + std::to_string(n) + ": not JSON");
    out.push_back(session_from_json(j));
  }
  return out;
}

nlohmann::json session_stats(const std::vector<Session>& closed, std::optional<Scheme> filter) {
  struct Acc {
    int pass = 0, fail = 0, expired = 0;
    std::vector<std::int64_t> times;
  };
  std::map<std::string, Acc> acc;
  std::vector<Scheme> shown;
  if (filter) {
    shown = {*filter};
  } else {
    shown = {Scheme::unrec_only, Scheme::patch_only, Scheme::combined};
  }
  for (const auto& s : closed) {
    if (filter && s.scheme != *filter) continue;
    if (std::find(shown.begin(), shown.end(), s.scheme) == shown.end()) shown.push_back(s.scheme);
    Acc& a = acc[to_string(s.scheme)];
    switch (s.outcome) {
      case Outcome::pass: ++a.pass; break;
      case Outcome::fail: ++a.fail; break;
      case Outcome::expired: ++a.expired; break;
      case Outcome::open: continue;
    }
    if (s.outcome != Outcome::expired && s.answered_at) a.times.push_back(*s.answered_at - s.issued_at);
  }
  nlohmann::json schemes = nlohmann::json::object();
  for (Scheme sc : shown) {
    Acc a = acc[to_string(sc)];
    nlohmann::json j{{"pass", a.pass}, {"fail", a.fail}, {"expired", a.expired}, {"answered", a.pass + a.fail}};
    if (a.pass + a.fail > 0) j["success_rate"] = static_cast<double>(a.pass) / (a.pass + a.fail);
    if (!a.times.empty()) {
      std::sort(a.times.begin(), a.times.end());
      const std::size_t n = a.times.size();
      j["median_solve_ms"] = n % 2 ? static_cast<double>(a.times[n / 2])
                                   : (static_cast<double>(a.times[n / 2 - 1]) + static_cast<double>(a.times[n / 2])) / 2.0;
    }
    schemes[to_string(sc)] = j;
  }
  return {{"schemes", schemes}};
}

nlohmann::json to_json(const ServedChallenge& c) {
  return {{"session_id", c.session_id}, {"prompt", c.prompt}, {"rows", c.rows}, {"cols", c.cols},
          {"images", c.images}};
}

CaptureService::CaptureService(const AssetStore& store, LabelSpace labels, ServiceConfig cfg, Clock clock)
    : store_(store), labels_(std::move(labels)), cfg_(std::move(cfg)), clock_(std::move(clock)), log_(cfg_.log) {
  if (cfg_.ttl_ms <= 0) throw InvalidArgument("ttl must be positive");
  if (!cfg_.challenge_dir.empty()) std::filesystem::create_directories(cfg_.challenge_dir);
}

ServedChallenge CaptureService::issue(Scheme scheme, const nlohmann::json& overrides) {
  std::uint64_t n;
  {
    std::lock_guard lock(mu_);
    n = issued_++;
  }
  ChallengeSpec spec;
  try {
    const std::uint64_t seed = overrides.contains("seed") ? overrides["seed"].get<std::uint64_t>() : mix_seed(cfg_.seed, n);
    Rng rng(seed);
    int target = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(labels_.size())));
    if (overrides.contains("target_class")) {
      const auto& t = overrides["target_class"];
      target = t.is_number_integer() ? t.get<int>() : labels_.resolve(t.get<std::string>());
    }
    spec = ChallengeSpec::defaults(scheme, target, seed);
    auto count = [&](const char* key, int& field) {
      if (overrides.contains(key)) field = overrides[key].get<int>();
    };
    count("rows", spec.rows);
    count("cols", spec.cols);
    count("n_true", spec.n_true);
    count("n_patched_true", spec.n_patched_true);
    count("n_unrecognizable", spec.n_unrecognizable);
    count("n_patched_decoy", spec.n_patched_decoy);
    count("n_clean_decoy", spec.n_clean_decoy);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed challenge request: ") + e.what());
  }
  if (spec.target_class < 0 || spec.target_class >= labels_.size()) throw InvalidArgument("target_class out of range");
  spec.validate();

  const std::int64_t now = clock_();
  Challenge c = assemble(spec, store_, labels_, now);
  if (!cfg_.challenge_dir.empty()) {
    std::ofstream out(cfg_.challenge_dir / (c.challenge_id + ".json"));
    out << to_json(c).dump() << "\n";
  }

  Session s;
  s.challenge_id = c.challenge_id;
  s.scheme = scheme;
  s.issued_at = now;
  ServedChallenge served{"", c.prompt, spec.rows, spec.cols, {}};
  for (const auto& id : c.cells) served.images.push_back("/api/asset/" + id + ".png");
  {
    std::lock_guard lock(mu_);
    for (std::uint64_t salt = 0;; ++salt) {
      s.session_id = hex_digest(std::to_string(cfg_.seed) + ":" + std::to_string(n) + ":" + std::to_string(salt) +
                                ":" + c.challenge_id);
      if (!open_.count(s.session_id) && !closed_.count(s.session_id)) break;
    }
    served.session_id = s.session_id;
    open_.emplace(s.session_id, Open{s, std::move(c)});
  }
  return served;
}

SubmitResult CaptureService::submit(const std::string& session_id, const std::vector<int>& selection) {
  Session s;
  bool pass = false;
  {
    std::lock_guard lock(mu_);
    auto it = open_.find(session_id);
    if (it == open_.end()) {
      if (closed_.count(session_id)) throw SessionClosed("session " + session_id + " is closed");
      throw UnknownId("unknown session " + session_id);
    }
    const std::int64_t now = clock_();
    s = it->second.session;
    if (now - s.issued_at > cfg_.ttl_ms) {
      s.outcome = Outcome::expired;
      closed_.emplace(session_id, std::move(it->second.challenge));
      open_.erase(it);
      log_.append(s);
      throw SessionExpired("session " + session_id + " expired");
    }
    pass = verify(it->second.challenge, selection);  // throws on malformed selection, session stays open
    s.answered_at = std::max(now, s.issued_at);
    s.selection = selection;
    std::sort(s.selection->begin(), s.selection->end());
    s.outcome = pass ? Outcome::pass : Outcome::fail;
    closed_.emplace(session_id, std::move(it->second.challenge));
    open_.erase(it);
    log_.append(s);
  }
  return {s.outcome, *s.answered_at - s.issued_at};
}

std::size_t CaptureService::expire_stale() {
  std::lock_guard lock(mu_);
  const std::int64_t now = clock_();
  std::size_t n = 0;
  for (auto it = open_.begin(); it != open_.end();) {
    if (now - it->second.session.issued_at > cfg_.ttl_ms) {
      Session s = it->second.session;
      s.outcome = Outcome::expired;
      log_.append(s);
      closed_.emplace(it->first, std::move(it->second.challenge));
      it = open_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

nlohmann::json CaptureService::stats(std::optional<Scheme> filter) {
  expire_stale();
  std::lock_guard lock(mu_);  // no append can interleave with the read
  return session_stats(read_session_log(log_.path()), filter);
}

std::vector<std::uint8_t> CaptureService::asset_png(const std::string& asset_id) const {
  if (!store_.contains(asset_id)) throw UnknownId("unknown asset " + asset_id);
  return store_.png_bytes(asset_id);
}

Challenge CaptureService::challenge_for(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  if (auto it = open_.find(session_id); it != open_.end()) return it->second.challenge;
  if (auto it = closed_.find(session_id); it != closed_.end()) return it->second;
  throw UnknownId("unknown session " + session_id);
}

}  // namespace capture
