#include "prefdata/filters.hpp"

#include <spdlog/spdlog.h>

namespace prefdata::filters {

namespace {

FilterOutcome start(FilterStage stage, const PromptPool& pool) {
  FilterOutcome o;
  o.stage = stage;
  o.prompt_id = pool.prompt_id;
  return o;
}

void drop_all(const PromptPool& pool, FilterOutcome& o) {
  o.prompt_removed = true;
  o.survivor_ids.clear();
  o.removed_ids.clear();
  for (const auto& r : pool.responses) o.removed_ids.push_back(r.response_id);
}

}  // namespace

FilterResult filter_safety(const PromptPool& pool) {
  FilterOutcome o = start(FilterStage::safety, pool);
  PromptPool out = pool;
  out.responses.clear();
  for (const auto& r : pool.responses) {
    if (!r.safety_label) {
      throw StageOrderError("safety filter: response " + r.response_id + " has no safety_label");
    }
    if (*r.safety_label == SafetyLabel::safe) {
      out.responses.push_back(r);
      o.survivor_ids.push_back(r.response_id);
    } else {
      o.removed_ids.push_back(r.response_id);
    }
  }
  out.filtered_through = FilterStage::safety;
  return {std::move(out), std::move(o)};
}

double quality_threshold(double mean, double delta) {
  return mean >= 0.0 ? (1.0 - delta) * mean : (1.0 + delta) * mean;
}

FilterResult filter_quality(const PromptPool& pool, double delta, std::span<const ResponseRecord> mean_basis) {
  if (pool.filtered_through != FilterStage::safety) {
    throw StageOrderError("quality filter applied to pool " + pool.prompt_id + " before safety filtering");
  }
  FilterOutcome o = start(FilterStage::quality, pool);
  for (const auto& r : pool.responses) {
    if (!r.if_score) throw StageOrderError("quality filter: response " + r.response_id + " has no if_score");
  }
  if (mean_basis.empty()) mean_basis = pool.responses;

  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : mean_basis) {
    if (r.origin != Origin::instruct) continue;
    if (!r.if_score) throw StageOrderError("quality filter: mean basis response " + r.response_id + " has no if_score");
    sum += *r.if_score;
    ++n;
  }
  if (n == 0) {
    spdlog::warn("quality filter: prompt {} has no instruct responses; dropped", pool.prompt_id);
    drop_all(pool, o);
    return {std::nullopt, std::move(o)};
  }
  const double mean = sum / static_cast<double>(n);
  const double threshold = quality_threshold(mean, delta);

  PromptPool out = pool;
  out.responses.clear();
  out.instruct_mean_if = mean;
  for (const auto& r : pool.responses) {
    if (*r.if_score >= threshold) {
      out.responses.push_back(r);
      o.survivor_ids.push_back(r.response_id);
    } else {
      o.removed_ids.push_back(r.response_id);
    }
  }
  out.filtered_through = FilterStage::quality;
  return {std::move(out), std::move(o)};
}

FilterResult filter_min_samples(const PromptPool& pool) {
  if (pool.filtered_through != FilterStage::quality) {
    throw StageOrderError("min-samples filter applied to pool " + pool.prompt_id + " before quality filtering");
  }
  FilterOutcome o = start(FilterStage::min_samples, pool);
  const std::size_t total = pool.responses.size();
  const std::size_t base = pool.count_origin(true);
  if (total < kMinTotalResponses || base < kMinBaseResponses) {
    drop_all(pool, o);
    return {std::nullopt, std::move(o)};
  }
  for (const auto& r : pool.responses) o.survivor_ids.push_back(r.response_id);
  PromptPool out = pool;
  out.filtered_through = FilterStage::min_samples;
  return {std::move(out), std::move(o)};
}

FilterSummary summarize(FilterStage stage, std::span<const FilterOutcome> outcomes) {
  FilterSummary s;
  s.stage = stage;
  for (const auto& o : outcomes) {
    s.input_responses += o.input_count();
    s.removed_responses += o.removed_ids.size();
    s.surviving_responses += o.survivor_ids.size();
    if (o.prompt_removed) {
      ++s.removed_prompts;
      s.removed_prompt_ids.push_back(o.prompt_id);
    }
  }
  return s;
}

}  // namespace prefdata::filters
