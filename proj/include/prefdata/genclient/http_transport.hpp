#pragma once

#include <string>

#include "prefdata/genclient/transport.hpp"

namespace prefdata::genclient {

// POSTs JSON to <base_url><path>. base_url may carry a path prefix, e.g.
// "http://localhost:8000/v1". http and https are supported.
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string api_key, double timeout_seconds);

  json post(const std::string& path, const json& body) override;

  const std::string& origin() const { return origin_; }
  const std::string& prefix() const { return prefix_; }

 private:
  std::string origin_;  // scheme://host[:port]
  std::string prefix_;  // path prefix without trailing slash
  std::string api_key_;
  double timeout_seconds_;
};

}  // namespace prefdata::genclient
