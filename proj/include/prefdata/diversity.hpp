#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefdata/types.hpp"

namespace prefdata::diversity {

// Dot product of two unit vectors, clamped to [-1, 1]. Throws
// std::invalid_argument on a dimension mismatch or when either vector is more
// than 1e-6 away from unit length.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct EmbeddedResponse {
  std::string response_id;
  std::span<const double> embedding;
};

struct DiversityEntry {
  std::string response_id;
  double diversity = 0.0;      // 1 - max similarity to any other response, in [0, 2]
  std::string neighbor_id;     // most similar other response; ties go to the smaller id
};

struct DiversityReport {
  std::string prompt_id;
  std::vector<DiversityEntry> entries;  // in input order
  // Full similarity matrix in input order; filled only when requested.
  std::vector<std::vector<double>> similarity;
};

// Marginal diversity of every response relative to the rest of its pool.
// Needs at least two responses.
DiversityReport marginal_diversity(const std::string& prompt_id, std::span<const EmbeddedResponse> responses,
                                   bool keep_matrix = false);

// Copy the report's scores onto the pool's records (matched by id).
void apply(const DiversityReport& report, PromptPool& pool);

}  // namespace prefdata::diversity
