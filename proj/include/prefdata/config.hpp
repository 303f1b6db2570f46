#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefdata/genclient/endpoint.hpp"
#include "prefdata/types.hpp"

namespace prefdata {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RewriterMock { identity, prefix };
enum class ExportFormat { flat_jsonl, conversational_jsonl };
enum class BootstrapUnit { prompt, sample };

struct DecodingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 512;
};

// Behaviour of the in-process mock endpoints.
struct MockSettings {
  std::string safety_marker = "[[unsafe]]";
  double reward_offset = 0.0;
  RewriterMock rewriter = RewriterMock::prefix;
  int embed_dim = 256;
  double unsafe_rate = 0.04;
  double truncation_rate = 0.3;
  double empty_rate = 0.02;
};

struct PipelineConfig {
  // Sampling and pairing hyperparameters.
  int k = 16;
  double delta = 0.15;
  double epsilon = 6.0;
  double alpha_percent = 25.0;
  std::optional<int> pair_cap;  // defaults to k
  std::uint64_t rng_seed = 0;
  int workers = 4;
  std::vector<Category> categories{Category::open_qa, Category::brainstorming, Category::creative_writing};

  DecodingParams decoding;

  // Stage toggles.
  bool mean_after_safety = true;
  bool include_base_raw = false;
  bool alpha_after_cap = true;
  bool drop_zero_gap = false;

  Strategy strategy = Strategy::redipo;
  double baseline_top_fraction = 0.25;
  std::size_t max_pairs = 0;  // 0 = unlimited, baselines only

  // DPO objective and checkpoint gate.
  double beta = 0.10;
  double label_smoothing = 0.05;
  double tau_if = 6.0;
  double tau_s = 0.15;

  // Validation / bootstrap.
  int eval_k = 10;
  int resamples = 1000;
  double confidence = 0.95;
  BootstrapUnit bootstrap_unit = BootstrapUnit::prompt;

  ExportFormat export_format = ExportFormat::flat_jsonl;
  MockSettings mock;
  std::map<genclient::Role, genclient::EndpointSpec> endpoints = default_endpoints();

  int effective_pair_cap() const { return pair_cap.value_or(k); }
  const genclient::EndpointSpec& endpoint(genclient::Role role) const;

  static std::map<genclient::Role, genclient::EndpointSpec> default_endpoints();
};

// Throws ConfigError naming the offending key.
void validate(const PipelineConfig& config);

// Apply a key = value document with [section] headers on top of `config`.
void apply_config_file(PipelineConfig& config, const std::string& path);
void apply_config_text(PipelineConfig& config, const std::string& text);

// Render the full configuration in the same key = value format the loader
// reads. Reals use their shortest round-trip form with a trailing ".0" for
// integral values.
std::string render_config(const PipelineConfig& config);

// Configuration snapshot for run manifests. Excludes runtime-only knobs
// (worker count) so manifests do not depend on them.
nlohmann::ordered_json config_snapshot(const PipelineConfig& config);

// Shortest round-trip decimal form of a double, always containing a '.' or an
// exponent.
std::string format_real(double value);

// Named beta presets per model family: llama-3.1-8b, olmo-3-7b, qwen3-4b.
std::optional<double> beta_preset(const std::string& family);

std::string_view to_string(RewriterMock kind);
std::string_view to_string(ExportFormat format);
std::string_view to_string(BootstrapUnit unit);
ExportFormat parse_export_format(std::string_view name);

}  // namespace prefdata
