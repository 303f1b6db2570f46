#pragma once

#include <array>
#include <string>
#include <string_view>

namespace prefdata::genclient {

// The external model roles the pipeline talks to.
enum class Role { generate_base, generate_instruct, rewrite, embed, reward, safety };

inline constexpr std::array<Role, 6> kAllRoles{Role::generate_base, Role::generate_instruct, Role::rewrite,
                                               Role::embed,         Role::reward,            Role::safety};

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

// Address and limits for one model-serving endpoint. base_url "mock" selects
// the in-process mock for the role.
struct EndpointSpec {
  Role role = Role::generate_instruct;
  std::string base_url = "mock";
  std::string model_name;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int max_in_flight = 8;
  double retry_backoff_ms = 250.0;
  // Name of the environment variable holding the bearer token. Empty means
  // PREFDATA_API_KEY_<ROLE>, then PREFDATA_API_KEY.
  std::string api_key_env;

  bool is_mock() const { return base_url == "mock"; }
};

// Throws std::invalid_argument when timeout <= 0, retries < 0 or in-flight < 1.
void validate(const EndpointSpec& spec);

// Resolve the API key for an endpoint from the environment; empty if unset.
std::string resolve_api_key(const EndpointSpec& spec);

}  // namespace prefdata::genclient
