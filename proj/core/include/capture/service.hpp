#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capture/challenge.hpp"
#include "capture/config.hpp"
#include "capture/registry.hpp"
#include "capture/store.hpp"

namespace capture {

enum class Outcome { pass, fail, expired, open };

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

struct Session {
  std::string session_id;
  std::string challenge_id;
  Scheme scheme = Scheme::clean;
  std::int64_t issued_at = 0;  // ms
  std::optional<std::int64_t> answered_at;
  std::optional<std::vector<int>> selection;
  Outcome outcome = Outcome::open;
};

nlohmann::json to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

// Milliseconds since an arbitrary epoch.
using Clock = std::function<std::int64_t()>;
Clock system_clock_ms();

// Append-only JSON-lines file of closed sessions. Appends are serialized.
class SessionLog {
 public:
  explicit SessionLog(std::filesystem::path path);
  void append(const Session& s);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::ofstream out_;
};

std::vector<Session> read_session_log(const std::filesystem::path& path);

// Per-scheme pass / fail / expired counts, success rate over answered
// sessions (absent when none) and median solve time of answered sessions.
nlohmann::json session_stats(const std::vector<Session>& closed, std::optional<Scheme> filter = std::nullopt);

// What a client receives for a new challenge: no key, no asset metadata.
struct ServedChallenge {
  std::string session_id;
  std::string prompt;
  int rows = 0;
  int cols = 0;
  std::vector<std::string> images;  // URLs, row-major
};

nlohmann::json to_json(const ServedChallenge& c);

struct SubmitResult {
  Outcome outcome = Outcome::fail;
  std::int64_t elapsed_ms = 0;
};

class CaptureService {
 public:
  CaptureService(const AssetStore& store, LabelSpace labels, ServiceConfig cfg, Clock clock = system_clock_ms());

  // `overrides` may set target_class (name or index), seed and any
  // ChallengeSpec count. Throws ShortageError when the store cannot cover it.
  ServedChallenge issue(Scheme scheme, const nlohmann::json& overrides = nlohmann::json::object());

  // Throws UnknownId, SessionClosed, SessionExpired or InvalidArgument.
  SubmitResult submit(const std::string& session_id, const std::vector<int>& selection);

  // Closes open sessions past their TTL, then folds the log.
  nlohmann::json stats(std::optional<Scheme> filter = std::nullopt);
  std::size_t expire_stale();

  std::vector<std::uint8_t> asset_png(const std::string& asset_id) const;  // throws UnknownId

  // Internal state for tests and audits; never served.
  Challenge challenge_for(const std::string& session_id) const;
  const ServiceConfig& config() const noexcept { return cfg_; }

 private:
  struct Open {
    Session session;
    Challenge challenge;
  };

  const AssetStore& store_;
  LabelSpace labels_;
  ServiceConfig cfg_;
  Clock clock_;
  SessionLog log_;
  mutable std::mutex mu_;
  std::map<std::string, Open> open_;
  std::map<std::string, Challenge> closed_;
  std::uint64_t issued_ = 0;
};

}  // namespace capture
