#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "capture/service.hpp"

namespace capture {

// JSON API over a CaptureService:
//   POST /api/challenge               {scheme, ...overrides}
//   GET  /api/asset/<id>.png
//   POST /api/session/<id>/answer     {selection: [int...]}
//   GET  /api/stats?scheme=<name>
// plus the static UI bundle at / when a directory is given.
class HttpServer {
 public:
  explicit HttpServer(CaptureService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~HttpServer();

  // Blocks until stop(). Returns false if the address cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it (-1 on failure); serve with run().
  int bind_any(const std::string& host);
  bool run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace capture
