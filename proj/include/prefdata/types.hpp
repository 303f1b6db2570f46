#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace prefdata {

// Where a response came from. base_rewritten records always carry the id of
// the base_raw draft they were produced from.
enum class Origin { base_raw, base_rewritten, instruct };
enum class SafetyLabel { safe, unsafe };
enum class Category { open_qa, brainstorming, creative_writing, other };
enum class Strategy { redipo, vanilla_dpo, divpo, random };
enum class FilterStage { safety, quality, min_samples };

std::string_view to_string(Origin origin);
std::string_view to_string(SafetyLabel label);
std::string_view to_string(Category category);
std::string_view to_string(Strategy strategy);
std::string_view to_string(FilterStage stage);

// Parsers throw std::invalid_argument on unknown names. Strategy accepts both
// the wire names ("vanilla_dpo") and the CLI spelling ("vanilla-dpo").
Origin parse_origin(std::string_view name);
SafetyLabel parse_safety_label(std::string_view name);
Category parse_category(std::string_view name);
Strategy parse_strategy(std::string_view name);
FilterStage parse_filter_stage(std::string_view name);

bool is_base_origin(Origin origin);

struct ResponseRecord {
  std::string response_id;
  std::string prompt_id;
  Origin origin = Origin::instruct;
  int sample_index = 0;
  std::optional<std::string> parent_id;
  std::string text;
  std::optional<SafetyLabel> safety_label;
  std::optional<double> if_score;
  std::optional<double> diversity_score;
  std::optional<std::string> embedding_ref;

  bool operator==(const ResponseRecord&) const = default;
};

struct PromptRecord {
  std::string prompt_id;
  std::string prompt_text;
  Category category = Category::other;

  bool operator==(const PromptRecord&) const = default;
};

struct PromptPool {
  std::string prompt_id;
  std::string prompt_text;
  Category category = Category::other;
  std::vector<ResponseRecord> responses;  // sorted by response_id
  std::optional<double> instruct_mean_if;
  std::optional<FilterStage> filtered_through;

  void sort_responses();
  const ResponseRecord* find(std::string_view response_id) const;
  std::size_t count_origin(bool base) const;

  bool operator==(const PromptPool&) const = default;
};

struct PreferencePair {
  std::string prompt_id;
  std::string chosen_id;
  std::string rejected_id;
  double reward_gap = 0.0;
  double diversity_gap = 0.0;
  Strategy strategy = Strategy::redipo;

  bool operator==(const PreferencePair&) const = default;
};

// Raised when a record violates one of its type invariants.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throw ValidationError naming the offending field.
void validate(const ResponseRecord& record);
void validate(const PromptRecord& record);
void validate(const PromptPool& pool);
void validate(const PreferencePair& pair);

// Group records into pools keyed by prompt id, in the order prompts appear.
std::vector<PromptPool> group_into_pools(const std::vector<PromptRecord>& prompts,
                                         const std::vector<ResponseRecord>& responses);

}  // namespace prefdata
