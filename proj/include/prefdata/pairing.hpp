#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prefdata/types.hpp"

namespace prefdata::pairing {

// Unordered response pair, canonicalized so first_id < second_id.
struct CandidatePair {
  std::string first_id;
  std::string second_id;
  double reward_gap = 0.0;     // |R(first) - R(second)|
  double diversity_gap = 0.0;  // |D(first) - D(second)|
};

// Every unordered pair whose reward gap is <= epsilon (inclusive), in
// (first_id, second_id) order. Responses need if_score and diversity_score.
std::vector<CandidatePair> enumerate_epsilon_pairs(const PromptPool& pool, double epsilon);

// chosen = the response with the larger diversity score; on a tie the
// lexicographically smaller id is chosen.
PreferencePair label_pair(const std::string& prompt_id, const CandidatePair& pair, double first_diversity,
                          double second_diversity);

// Where the alpha retention fraction is measured.
enum class AlphaBase {
  post_cap,  // top share of the pairs accepted by the cap sweep
  pre_cap,   // top share of all ranked feasible pairs, then the cap sweep
};

struct RedipoOptions {
  double epsilon = 6.0;
  double alpha_percent = 25.0;
  int cap = 16;
  AlphaBase alpha_base = AlphaBase::post_cap;
  bool drop_zero_gap = false;
};

// Number of pairs kept out of `count` by alpha retention: ceil(alpha% of
// count), at least 1 when count > 0.
std::size_t alpha_keep_count(std::size_t count, double alpha_percent);

// Quality-matched, diversity-ranked pairs for one prompt:
//  1. enumerate epsilon-feasible pairs and label them by diversity;
//  2. rank by diversity gap descending, ties by (chosen_id, rejected_id);
//  3. sweep in rank order, skipping a pair once either response already sits
//     in `cap` accepted pairs;
//  4. keep the top alpha_keep_count of the accepted list.
std::vector<PreferencePair> select_redipo_pairs(const PromptPool& pool, const RedipoOptions& options);

// Pairs sampled uniformly from the epsilon-feasible set with coin-flip labels.
// Emits as many pairs as select_redipo_pairs would for the same pool.
// Deterministic in (seed, prompt_id).
std::vector<PreferencePair> select_random_pairs(const PromptPool& pool, const RedipoOptions& options,
                                                std::uint64_t seed);

// Reward-gap baseline for one prompt: every pair labelled chosen = higher
// if_score (ties: smaller id), ranked by reward gap descending with ties by
// (chosen_id, rejected_id), top ceil(top_fraction * count) kept.
std::vector<PreferencePair> vanilla_dpo_prompt_pairs(const PromptPool& pool, double top_fraction);

// Per-prompt vanilla pairs across pools, then the global top max_pairs by
// reward gap (ties: prompt_id, chosen_id, rejected_id). max_pairs = 0 keeps all.
std::vector<PreferencePair> select_vanilla_dpo_pairs(std::span<const PromptPool> pools, double top_fraction,
                                                     std::size_t max_pairs);

// Sequence log probability and token count of one response.
struct LogprobStat {
  double logprob = 0.0;
  int token_count = 1;
};

using TokenCounter = std::function<int(std::string_view)>;

// Whitespace-delimited token count.
int whitespace_tokens(std::string_view text);

class LogprobScorer {
 public:
  virtual ~LogprobScorer() = default;
  virtual LogprobStat score(const ResponseRecord& response) const = 0;
};

// logprob = -tokens * (0.5 + 2 * hash_fraction(seed, text)), tokens from the
// counter (whitespace by default).
class MockLogprobScorer : public LogprobScorer {
 public:
  explicit MockLogprobScorer(std::uint64_t seed, TokenCounter counter = whitespace_tokens)
      : seed_(seed), counter_(std::move(counter)) {}
  LogprobStat score(const ResponseRecord& response) const override;

 private:
  std::uint64_t seed_;
  TokenCounter counter_;
};

// Values read from JSONL lines {"response_id", "logprob", "token_count"}.
class TableLogprobScorer : public LogprobScorer {
 public:
  explicit TableLogprobScorer(std::map<std::string, LogprobStat> table) : table_(std::move(table)) {}
  static TableLogprobScorer from_file(const std::string& path);
  LogprobStat score(const ResponseRecord& response) const override;

 private:
  std::map<std::string, LogprobStat> table_;
};

// Length-normalized diversity proxy: -(logprob / token_count).
double divpo_proxy(const LogprobStat& stat);

// One DivPO pair for a prompt: responses are ranked by if_score (descending,
// ties by id); the top half forms the high-reward group and the rest the low
// group. chosen = max proxy in the high group, rejected = min proxy in the low
// group (ties: smaller id). Nothing for pools under two responses.
std::optional<PreferencePair> divpo_prompt_pair(const PromptPool& pool, const std::map<std::string, double>& proxies);

// DivPO pairs across pools ranked by proxy gap (chosen - rejected) descending,
// ties by prompt_id; top max_pairs kept (0 keeps all).
std::vector<PreferencePair> select_divpo_pairs(std::span<const PromptPool> pools, const LogprobScorer& scorer,
                                               std::size_t max_pairs);

}  // namespace prefdata::pairing
