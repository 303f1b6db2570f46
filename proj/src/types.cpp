#include "prefdata/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace prefdata {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::array<std::pair<std::string_view, Enum>, N>& table,
                std::string_view what) {
  for (const auto& [key, value] : table) {
    if (key == name) return value;
  }
  throw std::invalid_argument("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

constexpr std::array<std::pair<std::string_view, Origin>, 3> kOrigins{{
    {"base_raw", Origin::base_raw},
    {"base_rewritten", Origin::base_rewritten},
    {"instruct", Origin::instruct},
}};

constexpr std::array<std::pair<std::string_view, SafetyLabel>, 2> kSafety{{
    {"safe", SafetyLabel::safe},
    {"unsafe", SafetyLabel::unsafe},
}};

constexpr std::array<std::pair<std::string_view, Category>, 4> kCategories{{
    {"open_qa", Category::open_qa},
    {"brainstorming", Category::brainstorming},
    {"creative_writing", Category::creative_writing},
    {"other", Category::other},
}};

constexpr std::array<std::pair<std::string_view, Strategy>, 6> kStrategies{{
    {"redipo", Strategy::redipo},
    {"vanilla_dpo", Strategy::vanilla_dpo},
    {"vanilla-dpo", Strategy::vanilla_dpo},
    {"divpo", Strategy::divpo},
    {"random", Strategy::random},
    {"dpo", Strategy::vanilla_dpo},
}};

constexpr std::array<std::pair<std::string_view, FilterStage>, 3> kStages{{
    {"safety", FilterStage::safety},
    {"quality", FilterStage::quality},
    {"min_samples", FilterStage::min_samples},
}};

}  // namespace

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::base_raw: return "base_raw";
    case Origin::base_rewritten: return "base_rewritten";
    case Origin::instruct: return "instruct";
  }
  return "?";
}

std::string_view to_string(SafetyLabel label) {
  return label == SafetyLabel::safe ? "safe" : "unsafe";
}

std::string_view to_string(Category category) {
  switch (category) {
    case Category::open_qa: return "open_qa";
    case Category::brainstorming: return "brainstorming";
    case Category::creative_writing: return "creative_writing";
    case Category::other: return "other";
  }
  return "?";
}

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::redipo: return "redipo";
    case Strategy::vanilla_dpo: return "vanilla_dpo";
    case Strategy::divpo: return "divpo";
    case Strategy::random: return "random";
  }
  return "?";
}

std::string_view to_string(FilterStage stage) {
  switch (stage) {
    case FilterStage::safety: return "safety";
    case FilterStage::quality: return "quality";
    case FilterStage::min_samples: return "min_samples";
  }
  return "?";
}

Origin parse_origin(std::string_view name) { return parse_enum(name, kOrigins, "origin"); }
SafetyLabel parse_safety_label(std::string_view name) { return parse_enum(name, kSafety, "safety_label"); }
FilterStage parse_filter_stage(std::string_view name) { return parse_enum(name, kStages, "filter stage"); }
Strategy parse_strategy(std::string_view name) { return parse_enum(name, kStrategies, "strategy"); }

Category parse_category(std::string_view name) {
  for (const auto& [key, value] : kCategories) {
    if (key == name) return value;
  }
  // Source datasets carry more categories than we model; they all map to other.
  return Category::other;
}

bool is_base_origin(Origin origin) { return origin != Origin::instruct; }

void PromptPool::sort_responses() {
  std::sort(responses.begin(), responses.end(),
            [](const ResponseRecord& a, const ResponseRecord& b) { return a.response_id < b.response_id; });
}

const ResponseRecord* PromptPool::find(std::string_view response_id) const {
  auto it = std::lower_bound(responses.begin(), responses.end(), response_id,
                             [](const ResponseRecord& r, std::string_view id) { return r.response_id < id; });
  if (it != responses.end() && it->response_id == response_id) return &*it;
  // Fall back to a scan for pools that were built without sorting.
  for (const auto& r : responses) {
    if (r.response_id == response_id) return &r;
  }
  return nullptr;
}

std::size_t PromptPool::count_origin(bool base) const {
  return static_cast<std::size_t>(std::count_if(responses.begin(), responses.end(), [base](const ResponseRecord& r) {
    return is_base_origin(r.origin) == base;
  }));
}

void validate(const ResponseRecord& record) {
  if (record.response_id.empty()) throw ValidationError("response_id is empty");
  if (record.prompt_id.empty()) throw ValidationError("prompt_id is empty");
  if (record.sample_index < 0) throw ValidationError("sample_index is negative");
  if (record.origin == Origin::base_rewritten && (!record.parent_id || record.parent_id->empty())) {
    throw ValidationError("parent_id required for origin base_rewritten");
  }
  if (record.if_score && !std::isfinite(*record.if_score)) throw ValidationError("if_score is not finite");
  if (record.diversity_score) {
    const double d = *record.diversity_score;
    if (!(d >= 0.0 && d <= 2.0)) throw ValidationError("diversity_score out of [0,2]");
  }
}

void validate(const PromptRecord& record) {
  if (record.prompt_id.empty()) throw ValidationError("prompt_id is empty");
}

void validate(const PromptPool& pool) {
  if (pool.prompt_id.empty()) throw ValidationError("prompt_id is empty");
  std::unordered_set<std::string_view> seen;
  for (const auto& r : pool.responses) {
    validate(r);
    if (r.prompt_id != pool.prompt_id) throw ValidationError("responses.prompt_id differs from pool prompt_id");
    if (!seen.insert(r.response_id).second) throw ValidationError("responses.response_id duplicated: " + r.response_id);
  }
  if (!std::is_sorted(pool.responses.begin(), pool.responses.end(),
                      [](const ResponseRecord& a, const ResponseRecord& b) { return a.response_id < b.response_id; })) {
    throw ValidationError("responses not sorted by response_id");
  }
  if (pool.instruct_mean_if && !std::isfinite(*pool.instruct_mean_if)) {
    throw ValidationError("instruct_mean_if is not finite");
  }
}

void validate(const PreferencePair& pair) {
  if (pair.prompt_id.empty()) throw ValidationError("prompt_id is empty");
  if (pair.chosen_id.empty() || pair.rejected_id.empty()) throw ValidationError("chosen_id/rejected_id is empty");
  if (pair.chosen_id == pair.rejected_id) throw ValidationError("chosen_id equals rejected_id");
  if (!(pair.reward_gap >= 0.0)) throw ValidationError("reward_gap is negative");
  if (!(pair.diversity_gap >= 0.0)) throw ValidationError("diversity_gap is negative");
}

std::vector<PromptPool> group_into_pools(const std::vector<PromptRecord>& prompts,
                                         const std::vector<ResponseRecord>& responses) {
  std::vector<PromptPool> pools;
  pools.reserve(prompts.size());
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& p : prompts) {
    index.emplace(p.prompt_id, pools.size());
    pools.push_back(PromptPool{p.prompt_id, p.prompt_text, p.category, {}, std::nullopt, std::nullopt});
  }
  for (const auto& r : responses) {
    auto it = index.find(r.prompt_id);
    if (it == index.end()) throw ValidationError("response " + r.response_id + " references unknown prompt " + r.prompt_id);
    pools[it->second].responses.push_back(r);
  }
  for (auto& pool : pools) pool.sort_responses();
  return pools;
}

}  // namespace prefdata
