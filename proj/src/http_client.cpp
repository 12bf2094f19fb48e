#include <httplib.h>

#include "http_client.hpp"
#include "iterresearch/error.hpp"

namespace iterresearch::detail {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::invalid_argument, "URL without scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

namespace {

httplib::Client make_client(const std::string& origin, std::chrono::milliseconds timeout) {
  httplib::Client client(origin);
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  client.set_follow_location(true);
  return client;
}

httplib::Headers to_httplib(const Headers& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

HttpReply unwrap(const httplib::Result& res, const std::string& url) {
  if (!res) throw Error(Errc::transport, url + ": " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

}  // namespace

HttpReply http_post(const std::string& url, const std::string& body, const std::string& content_type,
                    const Headers& headers, std::chrono::milliseconds timeout) {
  auto [origin, path] = split_url(url);
  auto client = make_client(origin, timeout);
  return unwrap(client.Post(path, to_httplib(headers), body, content_type), url);
}

HttpReply http_get(const std::string& url, const Headers& headers, std::chrono::milliseconds timeout) {
  auto [origin, path] = split_url(url);
  auto client = make_client(origin, timeout);
  return unwrap(client.Get(path, to_httplib(headers)), url);
}

}  // namespace iterresearch::detail
