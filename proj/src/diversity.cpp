#include "prefdata/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace prefdata::diversity {

namespace {

constexpr double kUnitTolerance = 1e-6;

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

// Identical embeddings are exactly similar; a rounded self dot product of a
// unit vector can land one ulp short of 1.
double similarity(std::span<const double> u, std::span<const double> v) {
  if (std::equal(u.begin(), u.end(), v.begin(), v.end())) return 1.0;
  return std::clamp(dot(u, v), -1.0, 1.0);
}

void check_unit(std::span<const double> v) {
  const double n = std::sqrt(dot(v, v));
  if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
    throw std::invalid_argument("cosine_similarity: vector is not unit length (norm " + std::to_string(n) + ")");
  }
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                                std::to_string(v.size()) + ")");
  }
  check_unit(u);
  check_unit(v);
  return similarity(u, v);
}

DiversityReport marginal_diversity(const std::string& prompt_id, std::span<const EmbeddedResponse> responses,
                                   bool keep_matrix) {
  const std::size_t n = responses.size();
  if (n < 2) throw std::invalid_argument("marginal_diversity: pool " + prompt_id + " has fewer than 2 responses");
  const std::size_t dim = responses.front().embedding.size();
  for (const auto& r : responses) {
    if (r.embedding.size() != dim) throw std::invalid_argument("marginal_diversity: dimension mismatch in " + prompt_id);
    check_unit(r.embedding);
  }

  // Symmetric matrix; each pair is computed once.
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = similarity(responses[i].embedding, responses[j].embedding);
      sim[i][j] = s;
      sim[j][i] = s;
    }
  }

  DiversityReport report;
  report.prompt_id = prompt_id;
  report.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_j = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s = sim[i][j];
      if (s > best || (s == best && responses[j].response_id < responses[best_j].response_id)) {
        best = s;
        best_j = j;
      }
    }
    report.entries.push_back({responses[i].response_id, 1.0 - best, responses[best_j].response_id});
  }
  if (keep_matrix) report.similarity = std::move(sim);
  return report;
}

void apply(const DiversityReport& report, PromptPool& pool) {
  std::unordered_map<std::string_view, double> by_id;
  for (const auto& e : report.entries) by_id.emplace(e.response_id, e.diversity);
  for (auto& r : pool.responses) {
    auto it = by_id.find(r.response_id);
    if (it == by_id.end()) {
      throw std::invalid_argument("diversity report for " + report.prompt_id + " lacks response " + r.response_id);
    }
    r.diversity_score = it->second;
  }
}

}  // namespace prefdata::diversity
