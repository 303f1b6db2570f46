#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefdata/config.hpp"
#include "prefdata/dpolab.hpp"
#include "prefdata/genclient/clients.hpp"
#include "prefdata/types.hpp"

namespace prefdata::evalkit {

struct BootstrapCI {
  double estimate = 0.0;  // plain sample mean
  double half_width = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int resamples = 0;
  double confidence = 0.95;
};

// Linear-interpolation percentile (q in [0, 1]) of an ascending-sorted list.
double percentile(std::span<const double> sorted, double q);

// Percentile bootstrap of the mean. Resample r draws its indices from
// mt19937_64(derive_seed(seed, r)) as rng() % n, so the result does not depend
// on how the resamples are split across `workers` threads.
BootstrapCI bootstrap_ci(std::span<const double> values, int resamples = 1000, double confidence = 0.95,
                         std::uint64_t seed = 0, int workers = 1);

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

// Whitespace word counts; absent for an empty list.
std::optional<LengthStats> length_stats(std::span<const std::string> texts);

struct ValidationClients {
  const genclient::SamplerClient& model;
  const genclient::EmbedderClient& embedder;
  const genclient::RewardClient& reward;
  const genclient::SafetyJudgeClient& judge;
};

// Per-prompt and per-sample values behind a CheckpointMetrics.
struct ValidationResult {
  dpolab::CheckpointMetrics metrics;
  std::vector<double> prompt_diversity;  // mean D over the k samples of each prompt
  std::vector<double> prompt_if;
  std::vector<double> prompt_safety;
  std::vector<double> sample_diversity;
  std::vector<double> sample_if;
  std::vector<double> sample_safety;  // 1 safe, 0 unsafe
  std::vector<std::string> texts;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sample k responses per prompt from the model and score them. Any client
// failure refuses the whole result (EvalError); no partial metrics.
ValidationResult validation_metrics(const ValidationClients& clients, std::span<const PromptRecord> prompts, int k,
                                    const DecodingParams& decoding, int workers = 1);

// report.json body: per-metric bootstrap intervals over the configured unit,
// plus length statistics.
nlohmann::ordered_json build_report(const ValidationResult& result, const PipelineConfig& config);

}  // namespace prefdata::evalkit
