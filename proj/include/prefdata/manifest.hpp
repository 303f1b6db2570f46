#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefdata/types.hpp"

namespace prefdata {

// Per-stage summary of one filter stage across all prompts.
struct FilterSummary {
  FilterStage stage = FilterStage::safety;
  std::size_t input_responses = 0;
  std::size_t removed_responses = 0;
  std::size_t surviving_responses = 0;
  std::size_t removed_prompts = 0;
  std::vector<std::string> removed_prompt_ids;

  bool operator==(const FilterSummary&) const = default;
};

// Sample accounting for one run, stage by stage:
//   initial_generations + rewrites_added - rewrite_dropped - safety_removed
//     - quality_removed - min_samples_responses_removed
//       == responses_entering_pairing
// rewrites_added is nonzero only when raw drafts stay in the pools next to
// their rewrites; otherwise each rewrite replaces its draft.
struct RunManifest {
  std::size_t prompts_loaded = 0;
  std::size_t prompts_skipped_category = 0;
  std::size_t initial_generations = 0;
  std::size_t rewrites_added = 0;
  std::size_t rewrite_dropped = 0;
  std::size_t safety_removed = 0;
  std::size_t quality_removed = 0;
  std::size_t prompts_removed_quality = 0;
  std::size_t prompts_removed_min_samples = 0;
  std::size_t min_samples_responses_removed = 0;
  std::size_t responses_entering_pairing = 0;
  std::size_t surviving_pairs = 0;
  std::size_t unique_prompts = 0;
  std::size_t prompts_without_pairs = 0;
  std::size_t exported_records = 0;
  std::vector<FilterSummary> filter_outcomes;
  std::vector<std::string> completed_stages;
  std::optional<std::string> failed_stage;
  std::optional<std::string> failure_message;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();

  // True when the accounting identity above holds and each filter summary's
  // input equals removed plus survivors.
  bool reconciles() const;

  bool operator==(const RunManifest&) const = default;
};

}  // namespace prefdata
