#pragma once

#include <string>

namespace star::detail {

struct PostRequest {
  std::string url;  // scheme://host[:port]/path
  std::string body;
  std::string token;
  int timeout_seconds = 60;
  int max_retries = 3;
  int backoff_ms = 500;
};

/// POSTs a JSON body, retrying transport errors, 429 and 5xx with
/// exponential backoff. Returns the response body of the first 2xx reply.
/// Throws ProviderError once retries are exhausted or on any other status.
std::string post_json(const PostRequest& request);

}  // namespace star::detail
