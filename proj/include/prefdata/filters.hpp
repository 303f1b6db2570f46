#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefdata/manifest.hpp"
#include "prefdata/types.hpp"

namespace prefdata::filters {

// A filter was applied to a pool that has not been through the stage before it.
class StageOrderError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct FilterOutcome {
  FilterStage stage = FilterStage::safety;
  std::string prompt_id;
  std::vector<std::string> removed_ids;
  std::vector<std::string> survivor_ids;
  bool prompt_removed = false;

  std::size_t input_count() const { return removed_ids.size() + survivor_ids.size(); }
};

// The pool is absent when the stage dropped the whole prompt.
struct FilterResult {
  std::optional<PromptPool> pool;
  FilterOutcome outcome;
};

inline constexpr std::size_t kMinTotalResponses = 10;
inline constexpr std::size_t kMinBaseResponses = 2;

// Keep exactly the responses labelled safe. Every response must carry a label.
FilterResult filter_safety(const PromptPool& pool);

// Lowest score that survives the quality stage for instruct mean `mean`.
// (1 - delta) * mean for a positive mean; (1 + delta) * mean for a negative
// one, so the band always sits below the mean.
double quality_threshold(double mean, double delta);

// Remove responses scoring strictly below quality_threshold(mu, delta), where
// mu is the mean if_score of the instruct responses in `mean_basis` (the pool
// itself when empty). Records mu on the pool. A pool whose basis has no
// instruct response is dropped.
FilterResult filter_quality(const PromptPool& pool, double delta, std::span<const ResponseRecord> mean_basis = {});

// Keep the pool when it has >= 10 responses and >= 2 of base origin; drop it
// otherwise.
FilterResult filter_min_samples(const PromptPool& pool);

// Roll per-prompt outcomes of one stage into a manifest summary.
FilterSummary summarize(FilterStage stage, std::span<const FilterOutcome> outcomes);

}  // namespace prefdata::filters
