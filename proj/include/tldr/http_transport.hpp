#pragma once

// Live HTTP transports backed by cpp-httplib. Link against tldr_http.

#include <chrono>
#include <string>
#include <utility>

#include <httplib.h>

#include "tldr/llmclient.hpp"

namespace tldr {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("URL without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

namespace detail {

inline void set_timeouts(httplib::Client& client, int timeout_ms) {
  const auto t = std::chrono::milliseconds(timeout_ms);
  client.set_connection_timeout(t);
  client.set_read_timeout(t);
  client.set_write_timeout(t);
}

}  // namespace detail

/// POSTs the JSON body; connection failures and timeouts raise TransportError.
inline Transport http_post_transport() {
  return [](const HttpRequest& req) {
    const auto url = split_url(req.url);
    httplib::Client client(url.origin);
    detail::set_timeouts(client, req.timeout_ms > 0 ? req.timeout_ms : 60000);
    auto res = client.Post(url.path, req.body, "application/json");
    if (!res) throw TransportError("POST " + req.url + ": " + httplib::to_string(res.error()));
    return HttpResponse{res->status, res->body};
  };
}

/// GETs the URL; the request body is ignored.
inline Transport http_get_transport(std::string user_agent = "tldr-audit") {
  return [ua = std::move(user_agent)](const HttpRequest& req) {
    const auto url = split_url(req.url);
    httplib::Client client(url.origin);
    client.set_follow_location(true);
    detail::set_timeouts(client, req.timeout_ms > 0 ? req.timeout_ms : 30000);
    auto res = client.Get(url.path, {{"User-Agent", ua}});
    if (!res) throw TransportError("GET " + req.url + ": " + httplib::to_string(res.error()));
    return HttpResponse{res->status, res->body};
  };
}

}  // namespace tldr
