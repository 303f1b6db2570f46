#include "prefdata/genclient/http_transport.hpp"

#include <httplib.h>

#include <cmath>

namespace prefdata::genclient {

HttpTransport::HttpTransport(std::string base_url, std::string api_key, double timeout_seconds)
    : api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint url lacks a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    origin_ = base_url;
  } else {
    origin_ = base_url.substr(0, path_start);
    prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
}

json HttpTransport::post(const std::string& path, const json& body) {
  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(std::floor(timeout_seconds_));
  const auto usecs = static_cast<time_t>((timeout_seconds_ - std::floor(timeout_seconds_)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const std::string url = prefix_ + path;
  auto res = client.Post(url, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("POST " + origin_ + url + " failed: " + httplib::to_string(res.error()), true);
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("POST " + origin_ + url + " returned HTTP " + std::to_string(res->status), true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("POST " + origin_ + url + " returned HTTP " + std::to_string(res->status) + ": " +
                             res->body.substr(0, 200),
                         false);
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ClientError("POST " + origin_ + url + ": response is not JSON: " + e.what());
  }
}

}  // namespace prefdata::genclient
