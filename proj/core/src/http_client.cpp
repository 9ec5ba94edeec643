#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "http_client.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "star/error.hpp"

namespace star::detail {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must be an absolute URL: '" + url + "'");
  }
  const auto path_at = url.find('/', scheme_end + 3);
  if (path_at == std::string::npos) return {url, "/"};
  return {url.substr(0, path_at), url.substr(path_at)};
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string post_json(const PostRequest& request) {
  const auto url = split_url(request.url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(request.timeout_seconds, 0);
  client.set_read_timeout(request.timeout_seconds, 0);
  client.set_write_timeout(request.timeout_seconds, 0);

  httplib::Headers headers;
  if (!request.token.empty()) headers.emplace("Authorization", "Bearer " + request.token);

  std::string last_error;
  for (int attempt = 0; attempt <= request.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto delay = std::chrono::milliseconds(static_cast<long>(request.backoff_ms) << (attempt - 1));
      spdlog::warn("http: retrying {} in {} ms ({})", request.url, delay.count(), last_error);
      std::this_thread::sleep_for(delay);
    }
    auto res = client.Post(url.path, headers, request.body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    if (!retryable(res->status)) break;
  }
  throw ProviderError("request to " + request.url + " failed: " + last_error);
}

}  // namespace star::detail
