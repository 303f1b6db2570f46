#include "prefdata/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "prefdata/hash.hpp"
#include "prefdata/jsonl.hpp"

namespace prefdata::pairing {

namespace {

double score_of(const ResponseRecord& r) {
  if (!r.if_score) throw std::invalid_argument("pairing: response " + r.response_id + " has no if_score");
  return *r.if_score;
}

double diversity_of(const ResponseRecord& r) {
  if (!r.diversity_score) throw std::invalid_argument("pairing: response " + r.response_id + " has no diversity_score");
  return *r.diversity_score;
}

// Pool responses in id order, independent of how the caller sorted them.
std::vector<const ResponseRecord*> by_id(const PromptPool& pool) {
  std::vector<const ResponseRecord*> out;
  out.reserve(pool.responses.size());
  for (const auto& r : pool.responses) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->response_id < b->response_id; });
  return out;
}

double diversity_gap_or_zero(const ResponseRecord& a, const ResponseRecord& b) {
  if (!a.diversity_score || !b.diversity_score) return 0.0;
  return std::abs(*a.diversity_score - *b.diversity_score);
}

bool rank_before(const PreferencePair& a, const PreferencePair& b) {
  if (a.diversity_gap != b.diversity_gap) return a.diversity_gap > b.diversity_gap;
  if (a.chosen_id != b.chosen_id) return a.chosen_id < b.chosen_id;
  return a.rejected_id < b.rejected_id;
}

std::vector<PreferencePair> cap_sweep(const std::vector<PreferencePair>& ranked, int cap) {
  std::unordered_map<std::string, int> uses;
  std::vector<PreferencePair> accepted;
  for (const auto& p : ranked) {
    int& c = uses[p.chosen_id];
    int& r = uses[p.rejected_id];
    if (c >= cap || r >= cap) continue;
    ++c;
    ++r;
    accepted.push_back(p);
  }
  return accepted;
}

std::vector<PreferencePair> ranked_feasible(const PromptPool& pool, const RedipoOptions& options) {
  const auto sorted = by_id(pool);
  std::unordered_map<std::string_view, double> d;
  for (auto* r : sorted) d.emplace(r->response_id, diversity_of(*r));

  std::vector<PreferencePair> ranked;
  for (const auto& c : enumerate_epsilon_pairs(pool, options.epsilon)) {
    if (options.drop_zero_gap && c.diversity_gap == 0.0) continue;
    ranked.push_back(label_pair(pool.prompt_id, c, d.at(c.first_id), d.at(c.second_id)));
  }
  std::sort(ranked.begin(), ranked.end(), rank_before);
  return ranked;
}

}  // namespace

std::vector<CandidatePair> enumerate_epsilon_pairs(const PromptPool& pool, double epsilon) {
  const auto sorted = by_id(pool);
  std::vector<CandidatePair> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double si = score_of(*sorted[i]);
    const double di = diversity_of(*sorted[i]);
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      const double gap = std::abs(si - score_of(*sorted[j]));
      if (!(gap <= epsilon)) continue;
      out.push_back({sorted[i]->response_id, sorted[j]->response_id, gap, std::abs(di - diversity_of(*sorted[j]))});
    }
  }
  return out;
}

PreferencePair label_pair(const std::string& prompt_id, const CandidatePair& pair, double first_diversity,
                          double second_diversity) {
  PreferencePair p;
  p.prompt_id = prompt_id;
  p.reward_gap = pair.reward_gap;
  p.diversity_gap = pair.diversity_gap;
  p.strategy = Strategy::redipo;
  bool first_wins = first_diversity > second_diversity;
  if (first_diversity == second_diversity) first_wins = pair.first_id < pair.second_id;
  p.chosen_id = first_wins ? pair.first_id : pair.second_id;
  p.rejected_id = first_wins ? pair.second_id : pair.first_id;
  return p;
}

std::size_t alpha_keep_count(std::size_t count, double alpha_percent) {
  if (count == 0) return 0;
  // Multiply before dividing so 30% of 10 is exactly 3, not 3.0000000000000004.
  const double want = std::ceil(alpha_percent * static_cast<double>(count) / 100.0);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(want, 1.0)), 1, count);
}

std::vector<PreferencePair> select_redipo_pairs(const PromptPool& pool, const RedipoOptions& options) {
  if (options.cap < 1) throw std::invalid_argument("select_redipo_pairs: cap must be >= 1");
  auto ranked = ranked_feasible(pool, options);
  if (options.alpha_base == AlphaBase::pre_cap) {
    ranked.resize(alpha_keep_count(ranked.size(), options.alpha_percent));
    return cap_sweep(ranked, options.cap);
  }
  auto accepted = cap_sweep(ranked, options.cap);
  accepted.resize(alpha_keep_count(accepted.size(), options.alpha_percent));
  return accepted;
}

std::vector<PreferencePair> select_random_pairs(const PromptPool& pool, const RedipoOptions& options,
                                                std::uint64_t seed) {
  const std::size_t want = select_redipo_pairs(pool, options).size();
  auto feasible = enumerate_epsilon_pairs(pool, options.epsilon);
  if (options.drop_zero_gap) {
    std::erase_if(feasible, [](const CandidatePair& c) { return c.diversity_gap == 0.0; });
  }
  std::mt19937_64 rng(derive_seed(seed, stable_hash64({"random-pairs", pool.prompt_id})));
  // Partial Fisher-Yates: the first `want` slots become a uniform sample.
  std::vector<PreferencePair> out;
  for (std::size_t i = 0; i < want && i < feasible.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (feasible.size() - i));
    std::swap(feasible[i], feasible[j]);
    const auto& c = feasible[i];
    const bool first_wins = (rng() & 1u) == 0;
    PreferencePair p;
    p.prompt_id = pool.prompt_id;
    p.chosen_id = first_wins ? c.first_id : c.second_id;
    p.rejected_id = first_wins ? c.second_id : c.first_id;
    p.reward_gap = c.reward_gap;
    p.diversity_gap = c.diversity_gap;
    p.strategy = Strategy::random;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PreferencePair> vanilla_dpo_prompt_pairs(const PromptPool& pool, double top_fraction) {
  const auto sorted = by_id(pool);
  std::vector<PreferencePair> all;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      const auto& a = *sorted[i];
      const auto& b = *sorted[j];
      const double sa = score_of(a);
      const double sb = score_of(b);
      const bool a_wins = sa >= sb;  // ties: a has the smaller id
      PreferencePair p;
      p.prompt_id = pool.prompt_id;
      p.chosen_id = a_wins ? a.response_id : b.response_id;
      p.rejected_id = a_wins ? b.response_id : a.response_id;
      p.reward_gap = std::abs(sa - sb);
      p.diversity_gap = diversity_gap_or_zero(a, b);
      p.strategy = Strategy::vanilla_dpo;
      all.push_back(std::move(p));
    }
  }
  std::sort(all.begin(), all.end(), [](const PreferencePair& x, const PreferencePair& y) {
    if (x.reward_gap != y.reward_gap) return x.reward_gap > y.reward_gap;
    if (x.chosen_id != y.chosen_id) return x.chosen_id < y.chosen_id;
    return x.rejected_id < y.rejected_id;
  });
  all.resize(alpha_keep_count(all.size(), top_fraction * 100.0));
  return all;
}

std::vector<PreferencePair> select_vanilla_dpo_pairs(std::span<const PromptPool> pools, double top_fraction,
                                                     std::size_t max_pairs) {
  std::vector<PreferencePair> all;
  for (const auto& pool : pools) {
    auto part = vanilla_dpo_prompt_pairs(pool, top_fraction);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::stable_sort(all.begin(), all.end(), [](const PreferencePair& x, const PreferencePair& y) {
    if (x.reward_gap != y.reward_gap) return x.reward_gap > y.reward_gap;
    if (x.prompt_id != y.prompt_id) return x.prompt_id < y.prompt_id;
    if (x.chosen_id != y.chosen_id) return x.chosen_id < y.chosen_id;
    return x.rejected_id < y.rejected_id;
  });
  if (max_pairs > 0 && all.size() > max_pairs) all.resize(max_pairs);
  return all;
}

int whitespace_tokens(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

LogprobStat MockLogprobScorer::score(const ResponseRecord& response) const {
  const int tokens = std::max(1, counter_(response.text));
  const double f = hash_fraction({"mock-logprob", std::to_string(seed_), response.text});
  return {-static_cast<double>(tokens) * (0.5 + 2.0 * f), tokens};
}

TableLogprobScorer TableLogprobScorer::from_file(const std::string& path) {
  std::map<std::string, LogprobStat> table;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LogprobStat s{j.at("logprob").get<double>(), j.at("token_count").get<int>()};
      if (s.token_count < 1) throw ParseError(line_no, "token_count must be >= 1");
      table[j.at("response_id").get<std::string>()] = s;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return TableLogprobScorer(std::move(table));
}

LogprobStat TableLogprobScorer::score(const ResponseRecord& response) const {
  auto it = table_.find(response.response_id);
  if (it == table_.end()) throw std::out_of_range("no logprob entry for response " + response.response_id);
  return it->second;
}

double divpo_proxy(const LogprobStat& stat) { return -(stat.logprob / static_cast<double>(stat.token_count)); }

std::optional<PreferencePair> divpo_prompt_pair(const PromptPool& pool, const std::map<std::string, double>& proxies) {
  auto ranked = by_id(pool);
  std::stable_sort(ranked.begin(), ranked.end(), [](auto* a, auto* b) { return score_of(*a) > score_of(*b); });
  const std::size_t high_n = ranked.size() / 2;
  if (high_n == 0 || high_n == ranked.size()) {
    spdlog::warn("divpo: prompt {} has an empty reward group; skipped", pool.prompt_id);
    return std::nullopt;
  }
  auto proxy = [&](const ResponseRecord* r) {
    auto it = proxies.find(r->response_id);
    if (it == proxies.end()) throw std::out_of_range("divpo: no proxy for response " + r->response_id);
    return it->second;
  };
  // Scan in id order so ties fall to the smaller id.
  auto pick = [&](std::size_t lo, std::size_t hi, bool want_max) {
    std::vector<const ResponseRecord*> group(ranked.begin() + lo, ranked.begin() + hi);
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->response_id < b->response_id; });
    const ResponseRecord* best = group.front();
    for (auto* r : group) {
      if (want_max ? proxy(r) > proxy(best) : proxy(r) < proxy(best)) best = r;
    }
    return best;
  };
  const ResponseRecord* chosen = pick(0, high_n, true);
  const ResponseRecord* rejected = pick(high_n, ranked.size(), false);
  PreferencePair p;
  p.prompt_id = pool.prompt_id;
  p.chosen_id = chosen->response_id;
  p.rejected_id = rejected->response_id;
  p.reward_gap = std::abs(score_of(*chosen) - score_of(*rejected));
  p.diversity_gap = diversity_gap_or_zero(*chosen, *rejected);
  p.strategy = Strategy::divpo;
  return p;
}

std::vector<PreferencePair> select_divpo_pairs(std::span<const PromptPool> pools, const LogprobScorer& scorer,
                                               std::size_t max_pairs) {
  struct Ranked {
    PreferencePair pair;
    double proxy_gap;
  };
  std::vector<Ranked> all;
  for (const auto& pool : pools) {
    std::map<std::string, double> proxies;
    for (const auto& r : pool.responses) proxies[r.response_id] = divpo_proxy(scorer.score(r));
    if (auto p = divpo_prompt_pair(pool, proxies)) {
      const double gap = proxies.at(p->chosen_id) - proxies.at(p->rejected_id);
      all.push_back({std::move(*p), gap});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
    if (a.proxy_gap != b.proxy_gap) return a.proxy_gap > b.proxy_gap;
    return a.pair.prompt_id < b.pair.prompt_id;
  });
  if (max_pairs > 0 && all.size() > max_pairs) all.resize(max_pairs);
  std::vector<PreferencePair> out;
  out.reserve(all.size());
  for (auto& r : all) out.push_back(std::move(r.pair));
  return out;
}

}  // namespace prefdata::pairing
