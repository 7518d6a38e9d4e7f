#pragma once

#include <chrono>
#include <cstddef>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

// Bursts of concurrent clients overflow httplib's default backlog of 5.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include "seeker/service.hpp"

namespace seeker {

/// UTC timestamp, ISO-8601 with milliseconds.
inline std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

/// Runs `fn`, mapping ApiError and malformed JSON to error responses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ApiError& e) {
    send_json(res, e.status(), {{"error", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  return nlohmann::json::parse(req.body);
}

inline std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const auto v = req.get_param_value(key);
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(key);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ApiError(400, std::string("query parameter '") + key + "' must be a nonnegative integer");
  }
}

/// Catalog upload: a multipart file field, a JSON {"path": ...} reference,
/// or the catalog text itself as the body.
inline std::string catalog_payload(const httplib::Request& req) {
  if (req.is_multipart_form_data()) {
    if (req.files.empty()) throw ApiError(400, "multipart upload without a file");
    return req.files.begin()->second.content;
  }
  const auto newline = req.body.find('\n');
  const bool single_line = newline == std::string::npos || req.body.find_first_not_of(" \t\r\n", newline) == std::string::npos;
  if (single_line) {
    const auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_object() && j.contains("path")) {
      if (!j["path"].is_string()) throw ApiError(400, "'path' must be a string");
      std::ifstream in(j["path"].get<std::string>(), std::ios::binary);
      if (!in) throw ApiError(400, "cannot read catalog file '" + j["path"].get<std::string>() + "'");
      std::ostringstream buf;
      buf << in.rdbuf();
      return buf.str();
    }
  }
  return req.body;
}

}  // namespace detail

/// Installs the JSON API on `server`. When `ui_dir` is set, its files are
/// served under /ui.
inline void mount_routes(httplib::Server& server, SeekerService& service,
                         const std::optional<std::filesystem::path>& ui_dir = std::nullopt) {
  using detail::guarded;
  using detail::send_json;
  using httplib::Request;
  using httplib::Response;

  server.Post("/catalogs", [&service](const Request& req, Response& res) {
    guarded(res, [&] { send_json(res, 201, service.register_catalog(detail::catalog_payload(req))); });
  });
  server.Get("/catalogs", [&service](const Request&, Response& res) {
    guarded(res, [&] { send_json(res, 200, {{"catalogs", service.list_catalogs()}}); });
  });
  server.Post(R"(/catalogs/([^/]+)/sessions)", [&service](const Request& req, Response& res) {
    guarded(res, [&] { send_json(res, 201, service.create_session(req.matches[1], detail::parse_body(req))); });
  });
  server.Post(R"(/sessions/([^/]+)/feedback)", [&service](const Request& req, Response& res) {
    guarded(res, [&] { send_json(res, 200, service.feedback(req.matches[1], detail::parse_body(req))); });
  });
  server.Get(R"(/sessions/([^/]+)/items)", [&service](const Request& req, Response& res) {
    guarded(res, [&] {
      const auto offset = detail::query_size(req, "offset", 0);
      const auto limit = detail::query_size(req, "limit", std::numeric_limits<std::size_t>::max());
      send_json(res, 200, service.items(req.matches[1], offset, limit));
    });
  });
  server.Get(R"(/sessions/([^/]+)/rank/(.+))", [&service](const Request& req, Response& res) {
    guarded(res, [&] { send_json(res, 200, service.rank(req.matches[1], req.matches[2])); });
  });
  server.Get(R"(/sessions/([^/]+))", [&service](const Request& req, Response& res) {
    guarded(res, [&] { send_json(res, 200, service.session_view(req.matches[1])); });
  });
  if (ui_dir) server.set_mount_point("/ui", ui_dir->string());
}

/// Splits "host:port"; a bare port binds all interfaces.
inline std::pair<std::string, int> parse_bind_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "0.0.0.0" : addr.substr(0, colon);
  const std::string port = colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  std::size_t used = 0;
  int p = -1;
  try {
    p = std::stoi(port, &used);
  } catch (const std::exception&) {
  }
  if (used != port.size() || p < 0 || p > 65535) throw std::invalid_argument("bad bind address '" + addr + "'");
  return {host, p};
}

}  // namespace seeker
