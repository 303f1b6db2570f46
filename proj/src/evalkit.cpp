#include "prefdata/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "prefdata/diversity.hpp"
#include "prefdata/hash.hpp"
#include "prefdata/jsonl.hpp"
#include "prefdata/pairing.hpp"
#include "prefdata/parallel.hpp"

namespace prefdata::evalkit {

namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

ojson ci_json(const BootstrapCI& ci) {
  return ojson{{"estimate", ci.estimate}, {"half_width", ci.half_width}, {"lower", ci.lower}, {"upper", ci.upper},
               {"resamples", ci.resamples}, {"confidence", ci.confidence}};
}

}  // namespace

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty list");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapCI bootstrap_ci(std::span<const double> values, int resamples, double confidence, std::uint64_t seed,
                         int workers) {
  if (values.empty()) throw std::invalid_argument("bootstrap_ci: empty input");
  if (resamples < 1) throw std::invalid_argument("bootstrap_ci: resamples must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("bootstrap_ci: confidence must be in (0,1)");

  const std::size_t n = values.size();
  std::vector<double> means(static_cast<std::size_t>(resamples));
  // Chunk the resample indices; every resample owns its RNG stream.
  const int chunks = std::max(1, std::min(workers, resamples));
  const std::size_t per = (means.size() + chunks - 1) / chunks;
  parallel_for(static_cast<std::size_t>(chunks), workers, [&](std::size_t c) {
    const std::size_t end = std::min(means.size(), (c + 1) * per);
    for (std::size_t r = c * per; r < end; ++r) {
      std::mt19937_64 rng(derive_seed(seed, r));
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += values[rng() % n];
      means[r] = s / static_cast<double>(n);
    }
  });
  std::sort(means.begin(), means.end());

  BootstrapCI ci;
  ci.estimate = mean_of(values);
  ci.lower = percentile(means, (1.0 - confidence) / 2.0);
  ci.upper = percentile(means, 1.0 - (1.0 - confidence) / 2.0);
  ci.half_width = std::max(0.0, (ci.upper - ci.lower) / 2.0);
  ci.resamples = resamples;
  ci.confidence = confidence;
  return ci;
}

std::optional<LengthStats> length_stats(std::span<const std::string> texts) {
  if (texts.empty()) return std::nullopt;
  std::vector<double> counts;
  counts.reserve(texts.size());
  for (const auto& t : texts) counts.push_back(pairing::whitespace_tokens(t));
  const double m = mean_of(counts);
  double ss = 0.0;
  for (double c : counts) ss += (c - m) * (c - m);
  return LengthStats{m, std::sqrt(ss / static_cast<double>(counts.size()))};
}

ValidationResult validation_metrics(const ValidationClients& clients, std::span<const PromptRecord> prompts, int k,
                                    const DecodingParams& decoding, int workers) {
  if (k < 2) throw std::invalid_argument("validation_metrics: k must be >= 2 for marginal diversity");
  if (prompts.empty()) throw std::invalid_argument("validation_metrics: no validation prompts");

  struct PerPrompt {
    std::vector<std::string> texts;
    std::vector<double> diversity, scores, safe;
  };
  std::vector<PerPrompt> per(prompts.size());
  try {
    parallel_for(prompts.size(), workers, [&](std::size_t i) {
      const auto& p = prompts[i];
      auto& out = per[i];
      out.texts = clients.model.sample(p.prompt_text, k, decoding);
      const auto vecs = clients.embedder.embed(out.texts);
      std::vector<diversity::EmbeddedResponse> embedded;
      for (std::size_t j = 0; j < vecs.size(); ++j) {
        // Sample index as id keeps neighbor tie-breaks deterministic.
        char id[16];
        std::snprintf(id, sizeof id, "%06zu", j);
        embedded.push_back({id, vecs[j]});
      }
      for (const auto& e : diversity::marginal_diversity(p.prompt_id, embedded).entries) {
        out.diversity.push_back(e.diversity);
      }
      for (const auto& t : out.texts) {
        out.scores.push_back(clients.reward.score(p.prompt_text, t));
        out.safe.push_back(clients.judge.judge(p.prompt_text, t) == SafetyLabel::safe ? 1.0 : 0.0);
      }
    });
  } catch (const std::exception& e) {
    throw EvalError(std::string("validation metrics refused: ") + e.what());
  }

  ValidationResult r;
  for (auto& p : per) {
    r.prompt_diversity.push_back(mean_of(p.diversity));
    r.prompt_if.push_back(mean_of(p.scores));
    r.prompt_safety.push_back(mean_of(p.safe));
    r.sample_diversity.insert(r.sample_diversity.end(), p.diversity.begin(), p.diversity.end());
    r.sample_if.insert(r.sample_if.end(), p.scores.begin(), p.scores.end());
    r.sample_safety.insert(r.sample_safety.end(), p.safe.begin(), p.safe.end());
    r.texts.insert(r.texts.end(), std::make_move_iterator(p.texts.begin()), std::make_move_iterator(p.texts.end()));
  }
  r.metrics.mean_diversity = mean_of(r.prompt_diversity);
  r.metrics.mean_if = mean_of(r.prompt_if);
  r.metrics.safety_rate = mean_of(r.sample_safety);
  return r;
}

ojson build_report(const ValidationResult& result, const PipelineConfig& config) {
  const bool per_prompt = config.bootstrap_unit == BootstrapUnit::prompt;
  auto ci = [&](const std::vector<double>& prompt_vals, const std::vector<double>& sample_vals, std::uint64_t stream) {
    return ci_json(bootstrap_ci(per_prompt ? prompt_vals : sample_vals, config.resamples, config.confidence,
                                derive_seed(config.rng_seed, stream), config.workers));
  };
  ojson report;
  report["prompts"] = result.prompt_diversity.size();
  report["k"] = config.eval_k;
  report["unit"] = std::string(to_string(config.bootstrap_unit));
  report["metrics"] = ojson{{"mean_diversity", ci(result.prompt_diversity, result.sample_diversity, 1)},
                            {"mean_if", ci(result.prompt_if, result.sample_if, 2)},
                            {"safety_rate", ci(result.prompt_safety, result.sample_safety, 3)}};
  report["checkpoint_metrics"] = ojson{{"mean_diversity", result.metrics.mean_diversity},
                                       {"mean_if", result.metrics.mean_if},
                                       {"safety_rate", result.metrics.safety_rate}};
  if (auto ls = length_stats(result.texts)) {
    report["length_words"] = ojson{{"mean", ls->mean}, {"stddev", ls->stddev}};
  }
  return report;
}

}  // namespace prefdata::evalkit
