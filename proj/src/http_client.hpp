#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace iterresearch::detail {

struct HttpReply {
  int status = 0;
  std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// Splits "scheme://host[:port]/path?query" into origin and path; throws Error(invalid_argument).
std::pair<std::string, std::string> split_url(const std::string& url);

/// Both throw Error(transport) when no HTTP response was received.
HttpReply http_post(const std::string& url, const std::string& body, const std::string& content_type,
                    const Headers& headers, std::chrono::milliseconds timeout);
HttpReply http_get(const std::string& url, const Headers& headers, std::chrono::milliseconds timeout);

}  // namespace iterresearch::detail
