#include "prefdata/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <sstream>

namespace prefdata {

namespace genclient {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::generate_base: return "generate_base";
    case Role::generate_instruct: return "generate_instruct";
    case Role::rewrite: return "rewrite";
    case Role::embed: return "embed";
    case Role::reward: return "reward";
    case Role::safety: return "safety";
  }
  return "?";
}

Role parse_role(std::string_view name) {
  for (Role r : kAllRoles) {
    if (to_string(r) == name) return r;
  }
  throw std::invalid_argument("unknown endpoint role '" + std::string(name) + "'");
}

void validate(const EndpointSpec& spec) {
  const std::string role(to_string(spec.role));
  if (!(spec.timeout_seconds > 0.0)) throw std::invalid_argument("endpoint " + role + ": timeout must be > 0");
  if (spec.max_retries < 0) throw std::invalid_argument("endpoint " + role + ": retries must be >= 0");
  if (spec.max_in_flight < 1) throw std::invalid_argument("endpoint " + role + ": max_in_flight must be >= 1");
  if (spec.base_url.empty()) throw std::invalid_argument("endpoint " + role + ": url is empty");
}

std::string resolve_api_key(const EndpointSpec& spec) {
  auto read = [](const std::string& name) -> std::string {
    const char* v = std::getenv(name.c_str());
    return v ? std::string(v) : std::string();
  };
  if (!spec.api_key_env.empty()) return read(spec.api_key_env);
  std::string upper(to_string(spec.role));
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (auto key = read("PREFDATA_API_KEY_" + upper); !key.empty()) return key;
  return read("PREFDATA_API_KEY");
}

}  // namespace genclient

namespace {

using boost::property_tree::ptree;
using genclient::Role;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
  return s;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& value) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "': not an unsigned integer: '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + value + "'");
}

std::vector<Category> parse_categories(const std::string& value) {
  std::vector<Category> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_category(item));
  }
  return out;
}

void apply_endpoint(genclient::EndpointSpec& ep, const std::string& section, const ptree& tree) {
  for (const auto& [key, node] : tree) {
    const std::string v = trim(node.data());
    const std::string full = section + "." + key;
    if (key == "url") ep.base_url = v;
    else if (key == "model") ep.model_name = v;
    else if (key == "timeout") ep.timeout_seconds = parse_double(full, v);
    else if (key == "retries") ep.max_retries = static_cast<int>(parse_int(full, v));
    else if (key == "max_in_flight") ep.max_in_flight = static_cast<int>(parse_int(full, v));
    else if (key == "backoff_ms") ep.retry_backoff_ms = parse_double(full, v);
    else if (key == "api_key_env") ep.api_key_env = v;
    else throw ConfigError("unknown config key '" + full + "'");
  }
}

void apply_tree(PipelineConfig& c, const ptree& root) {
  for (const auto& [section, tree] : root) {
    if (section.rfind("endpoint.", 0) == 0) {
      Role role;
      try {
        role = genclient::parse_role(section.substr(9));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("config section [" + section + "]: " + e.what());
      }
      auto& ep = c.endpoints[role];
      ep.role = role;
      apply_endpoint(ep, section, tree);
      continue;
    }
    for (const auto& [key, node] : tree) {
      const std::string v = trim(node.data());
      const std::string full = section + "." + key;
      auto unknown = [&] { throw ConfigError("unknown config key '" + full + "'"); };
      if (section == "pipeline") {
        if (key == "k") c.k = static_cast<int>(parse_int(full, v));
        else if (key == "delta") c.delta = parse_double(full, v);
        else if (key == "epsilon") c.epsilon = parse_double(full, v);
        else if (key == "alpha") c.alpha_percent = parse_double(full, v);
        else if (key == "cap") c.pair_cap = (v == "k" || v.empty()) ? std::nullopt : std::optional<int>(static_cast<int>(parse_int(full, v)));
        else if (key == "seed") c.rng_seed = parse_u64(full, v);
        else if (key == "workers") c.workers = static_cast<int>(parse_int(full, v));
        else if (key == "categories") c.categories = parse_categories(v);
        else unknown();
      } else if (section == "decoding") {
        if (key == "temperature") c.decoding.temperature = parse_double(full, v);
        else if (key == "top_p") c.decoding.top_p = parse_double(full, v);
        else if (key == "max_tokens") c.decoding.max_tokens = static_cast<int>(parse_int(full, v));
        else unknown();
      } else if (section == "filters") {
        if (key == "mean_after_safety") c.mean_after_safety = parse_bool(full, v);
        else if (key == "include_base_raw") c.include_base_raw = parse_bool(full, v);
        else unknown();
      } else if (section == "pairing") {
        if (key == "strategy") {
          try {
            c.strategy = parse_strategy(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(full + ": " + e.what());
          }
        } else if (key == "alpha_after_cap") c.alpha_after_cap = parse_bool(full, v);
        else if (key == "drop_zero_gap") c.drop_zero_gap = parse_bool(full, v);
        else if (key == "baseline_top_fraction") c.baseline_top_fraction = parse_double(full, v);
        else if (key == "max_pairs") c.max_pairs = static_cast<std::size_t>(parse_u64(full, v));
        else unknown();
      } else if (section == "dpolab") {
        if (key == "beta") c.beta = parse_double(full, v);
        else if (key == "preset") {
          auto b = beta_preset(v);
          if (!b) throw ConfigError(full + ": unknown preset '" + v + "'");
          c.beta = *b;
        } else if (key == "label_smoothing") c.label_smoothing = parse_double(full, v);
        else if (key == "tau_if") c.tau_if = parse_double(full, v);
        else if (key == "tau_s") c.tau_s = parse_double(full, v);
        else unknown();
      } else if (section == "eval") {
        if (key == "k") c.eval_k = static_cast<int>(parse_int(full, v));
        else if (key == "resamples") c.resamples = static_cast<int>(parse_int(full, v));
        else if (key == "confidence") c.confidence = parse_double(full, v);
        else if (key == "unit") {
          if (v == "prompt") c.bootstrap_unit = BootstrapUnit::prompt;
          else if (v == "sample") c.bootstrap_unit = BootstrapUnit::sample;
          else throw ConfigError(full + ": expected prompt or sample");
        } else unknown();
      } else if (section == "export") {
        if (key == "format") {
          try {
            c.export_format = parse_export_format(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(full + ": " + e.what());
          }
        } else unknown();
      } else if (section == "mock") {
        if (key == "safety_marker") c.mock.safety_marker = v;
        else if (key == "reward_offset") c.mock.reward_offset = parse_double(full, v);
        else if (key == "rewriter") {
          if (v == "identity") c.mock.rewriter = RewriterMock::identity;
          else if (v == "prefix") c.mock.rewriter = RewriterMock::prefix;
          else throw ConfigError(full + ": expected identity or prefix");
        } else if (key == "embed_dim") c.mock.embed_dim = static_cast<int>(parse_int(full, v));
        else if (key == "unsafe_rate") c.mock.unsafe_rate = parse_double(full, v);
        else if (key == "truncation_rate") c.mock.truncation_rate = parse_double(full, v);
        else if (key == "empty_rate") c.mock.empty_rate = parse_double(full, v);
        else unknown();
      } else {
        throw ConfigError("unknown config section [" + section + "]");
      }
    }
  }
}

}  // namespace

std::map<Role, genclient::EndpointSpec> PipelineConfig::default_endpoints() {
  std::map<Role, genclient::EndpointSpec> out;
  for (Role r : genclient::kAllRoles) {
    genclient::EndpointSpec ep;
    ep.role = r;
    ep.model_name = std::string("mock-") + std::string(genclient::to_string(r));
    out.emplace(r, ep);
  }
  return out;
}

const genclient::EndpointSpec& PipelineConfig::endpoint(Role role) const {
  auto it = endpoints.find(role);
  if (it == endpoints.end()) throw ConfigError("no endpoint configured for role " + std::string(genclient::to_string(role)));
  return it->second;
}

void validate(const PipelineConfig& c) {
  if (c.k < 1) throw ConfigError("pipeline.k must be a positive integer");
  if (!(c.delta >= 0.0 && c.delta < 1.0)) throw ConfigError("pipeline.delta must lie in [0, 1)");
  if (!(c.epsilon >= 0.0)) throw ConfigError("pipeline.epsilon must be nonnegative");
  if (!(c.alpha_percent > 0.0 && c.alpha_percent <= 100.0)) throw ConfigError("pipeline.alpha must lie in (0, 100]");
  if (c.effective_pair_cap() < 1) throw ConfigError("pipeline.cap must be a positive integer");
  if (c.workers < 1) throw ConfigError("pipeline.workers must be >= 1");
  if (!(c.baseline_top_fraction > 0.0 && c.baseline_top_fraction <= 1.0)) {
    throw ConfigError("pairing.baseline_top_fraction must lie in (0, 1]");
  }
  if (!(c.beta > 0.0)) throw ConfigError("dpolab.beta must be > 0");
  if (!(c.label_smoothing >= 0.0 && c.label_smoothing < 0.5)) throw ConfigError("dpolab.label_smoothing must lie in [0, 0.5)");
  if (c.eval_k < 2) throw ConfigError("eval.k must be >= 2");
  if (c.resamples < 1) throw ConfigError("eval.resamples must be >= 1");
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) throw ConfigError("eval.confidence must lie in (0, 1)");
  if (c.decoding.max_tokens < 1) throw ConfigError("decoding.max_tokens must be >= 1");
  if (c.mock.embed_dim < 2) throw ConfigError("mock.embed_dim must be >= 2");
  for (const auto& [role, ep] : c.endpoints) {
    try {
      genclient::validate(ep);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

void apply_config_text(PipelineConfig& config, const std::string& text) {
  ptree root;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  apply_tree(config, root);
}

void apply_config_file(PipelineConfig& config, const std::string& path) {
  ptree root;
  try {
    boost::property_tree::ini_parser::read_ini(path, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  apply_tree(config, root);
}

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::optional<double> beta_preset(const std::string& family) {
  if (family == "llama-3.1-8b") return 0.10;
  if (family == "olmo-3-7b") return 0.03;
  if (family == "qwen3-4b") return 0.03;
  return std::nullopt;
}

std::string_view to_string(RewriterMock kind) { return kind == RewriterMock::identity ? "identity" : "prefix"; }
std::string_view to_string(ExportFormat format) {
  return format == ExportFormat::flat_jsonl ? "flat_jsonl" : "conversational_jsonl";
}
std::string_view to_string(BootstrapUnit unit) { return unit == BootstrapUnit::prompt ? "prompt" : "sample"; }

ExportFormat parse_export_format(std::string_view name) {
  if (name == "flat_jsonl" || name == "flat") return ExportFormat::flat_jsonl;
  if (name == "conversational_jsonl" || name == "conversational") return ExportFormat::conversational_jsonl;
  throw std::invalid_argument("unknown export format '" + std::string(name) + "'");
}

std::string render_config(const PipelineConfig& c) {
  std::ostringstream out;
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::string cats;
  for (std::size_t i = 0; i < c.categories.size(); ++i) {
    if (i) cats += ",";
    cats += to_string(c.categories[i]);
  }
  out << "[pipeline]\n"
      << "k = " << c.k << "\n"
      << "delta = " << format_real(c.delta) << "\n"
      << "epsilon = " << format_real(c.epsilon) << "\n"
      << "alpha = " << format_real(c.alpha_percent) << "\n"
      << "cap = " << c.effective_pair_cap() << "\n"
      << "seed = " << c.rng_seed << "\n"
      << "workers = " << c.workers << "\n"
      << "categories = " << cats << "\n\n";
  out << "[decoding]\n"
      << "temperature = " << format_real(c.decoding.temperature) << "\n"
      << "top_p = " << format_real(c.decoding.top_p) << "\n"
      << "max_tokens = " << c.decoding.max_tokens << "\n\n";
  out << "[filters]\n"
      << "mean_after_safety = " << b(c.mean_after_safety) << "\n"
      << "include_base_raw = " << b(c.include_base_raw) << "\n\n";
  out << "[pairing]\n"
      << "strategy = " << to_string(c.strategy) << "\n"
      << "alpha_after_cap = " << b(c.alpha_after_cap) << "\n"
      << "drop_zero_gap = " << b(c.drop_zero_gap) << "\n"
      << "baseline_top_fraction = " << format_real(c.baseline_top_fraction) << "\n"
      << "max_pairs = " << c.max_pairs << "\n\n";
  out << "[dpolab]\n"
      << "beta = " << format_real(c.beta) << "\n"
      << "label_smoothing = " << format_real(c.label_smoothing) << "\n"
      << "tau_if = " << format_real(c.tau_if) << "\n"
      << "tau_s = " << format_real(c.tau_s) << "\n\n";
  out << "[eval]\n"
      << "k = " << c.eval_k << "\n"
      << "resamples = " << c.resamples << "\n"
      << "confidence = " << format_real(c.confidence) << "\n"
      << "unit = " << to_string(c.bootstrap_unit) << "\n\n";
  out << "[export]\n"
      << "format = " << to_string(c.export_format) << "\n\n";
  out << "[mock]\n"
      << "safety_marker = " << c.mock.safety_marker << "\n"
      << "reward_offset = " << format_real(c.mock.reward_offset) << "\n"
      << "rewriter = " << to_string(c.mock.rewriter) << "\n"
      << "embed_dim = " << c.mock.embed_dim << "\n"
      << "unsafe_rate = " << format_real(c.mock.unsafe_rate) << "\n"
      << "truncation_rate = " << format_real(c.mock.truncation_rate) << "\n"
      << "empty_rate = " << format_real(c.mock.empty_rate) << "\n";
  for (const auto& [role, ep] : c.endpoints) {
    out << "\n[endpoint." << genclient::to_string(role) << "]\n"
        << "url = " << ep.base_url << "\n"
        << "model = " << ep.model_name << "\n"
        << "timeout = " << format_real(ep.timeout_seconds) << "\n"
        << "retries = " << ep.max_retries << "\n"
        << "max_in_flight = " << ep.max_in_flight << "\n"
        << "backoff_ms = " << format_real(ep.retry_backoff_ms) << "\n"
        << "api_key_env = " << ep.api_key_env << "\n";
  }
  return out.str();
}

nlohmann::ordered_json config_snapshot(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["k"] = c.k;
  j["delta"] = c.delta;
  j["epsilon"] = c.epsilon;
  j["alpha_percent"] = c.alpha_percent;
  j["pair_cap"] = c.effective_pair_cap();
  j["rng_seed"] = c.rng_seed;
  auto cats = nlohmann::ordered_json::array();
  for (auto cat : c.categories) cats.push_back(std::string(to_string(cat)));
  j["categories"] = cats;
  j["decoding"] = {{"temperature", c.decoding.temperature},
                   {"top_p", c.decoding.top_p},
                   {"max_tokens", c.decoding.max_tokens}};
  j["mean_after_safety"] = c.mean_after_safety;
  j["include_base_raw"] = c.include_base_raw;
  j["strategy"] = std::string(to_string(c.strategy));
  j["alpha_after_cap"] = c.alpha_after_cap;
  j["drop_zero_gap"] = c.drop_zero_gap;
  j["baseline_top_fraction"] = c.baseline_top_fraction;
  j["max_pairs"] = c.max_pairs;
  j["export_format"] = std::string(to_string(c.export_format));
  nlohmann::ordered_json eps = nlohmann::ordered_json::object();
  for (const auto& [role, ep] : c.endpoints) {
    eps[std::string(genclient::to_string(role))] = {{"url", ep.base_url}, {"model", ep.model_name}};
  }
  j["endpoints"] = eps;
  j["mock"] = {{"safety_marker", c.mock.safety_marker},
               {"reward_offset", c.mock.reward_offset},
               {"rewriter", std::string(to_string(c.mock.rewriter))},
               {"embed_dim", c.mock.embed_dim},
               {"unsafe_rate", c.mock.unsafe_rate},
               {"truncation_rate", c.mock.truncation_rate},
               {"empty_rate", c.mock.empty_rate}};
  j["eval"] = {{"k", c.eval_k},
               {"resamples", c.resamples},
               {"confidence", c.confidence},
               {"unit", std::string(to_string(c.bootstrap_unit))}};
  return j;
}

}  // namespace prefdata
