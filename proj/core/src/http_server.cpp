#include "capture/http_server.hpp"

#include <httplib.h>

#include "capture/error.hpp"

namespace capture {

namespace {

int status_for(const Error& e) {
  if (e.kind() == "shortage") return 503;
  if (e.kind() == "unknown-id") return 404;
  if (e.kind() == "session-closed") return 409;
  if (e.kind() == "session-expired") return 410;
  if (e.kind() == "invalid-argument") return 400;
  return 500;
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  send_json(res, status, {{"error", {{"kind", kind}, {"message", message}}}});
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_error(res, status_for(e), e.kind(), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "invalid-argument", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InvalidArgument("request body must be a JSON object");
  return j;
}

}  // namespace

struct HttpServer::Impl {
  explicit Impl(CaptureService& s) : service(s) {}
  CaptureService& service;
  httplib::Server server;
};

HttpServer::HttpServer(CaptureService& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;

  srv.Post("/api/challenge", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = parse_body(req);
      const Scheme scheme = scheme_from_string(body.value("scheme", std::string("combined")));
      body.erase("scheme");
      send_json(res, 200, to_json(svc.issue(scheme, body)));
    });
  });

  srv.Get(R"(/api/asset/([0-9a-f]+)\.png)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto bytes = svc.asset_png(req.matches[1]);
      res.status = 200;
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });
  });

  srv.Post(R"(/api/session/([^/]+)/answer)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      if (!body.contains("selection") || !body["selection"].is_array()) {
        throw InvalidArgument("malformed selection: expected {\"selection\": [int...]}");
      }
      const auto r = svc.submit(req.matches[1], body["selection"].get<std::vector<int>>());
      send_json(res, 200, {{"outcome", to_string(r.outcome)}, {"elapsed_ms", r.elapsed_ms}});
    });
  });

  srv.Get("/api/stats", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<Scheme> filter;
      if (req.has_param("scheme") && !req.get_param_value("scheme").empty()) {
        filter = scheme_from_string(req.get_param_value("scheme"));
      }
      send_json(res, 200, svc.stats(filter));
    });
  });

  if (static_dir) srv.set_mount_point("/", static_dir->string());
}

HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::run() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace capture
