#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prefdata/config.hpp"
#include "prefdata/genclient/endpoint.hpp"
#include "prefdata/genclient/transport.hpp"

namespace prefdata::genclient {

// In-process stand-ins for the model servers. Each speaks the same wire shape
// as the real endpoint and is a pure function of (seed, request).

enum class SamplerFlavor { base, instruct };

struct MockSamplerOptions {
  std::uint64_t seed = 0;
  SamplerFlavor flavor = SamplerFlavor::instruct;
  double truncation_rate = 0.3;
  double unsafe_rate = 0.04;
  double empty_rate = 0.0;  // only honoured for the base flavor
  std::string unsafe_marker = "[[unsafe]]";
};

// Seeded text generator. The instruct flavor draws every sample for a prompt
// from one topic and a small template set, so its samples cluster; the base
// flavor picks a fresh topic and free word order per sample.
// Serves /completions (prompt) and /chat/completions (messages).
class MockSampler : public Transport {
 public:
  explicit MockSampler(MockSamplerOptions options) : options_(std::move(options)) {}
  json post(const std::string& path, const json& body) override;

  // The text of sample `index` for `prompt`, before truncation cleanup.
  std::string generate(const std::string& model, const std::string& prompt, int index) const;

 private:
  MockSamplerOptions options_;
};

// identity returns the draft; prefix returns "REWRITTEN: " + draft.
class MockRewriter : public Transport {
 public:
  explicit MockRewriter(RewriterMock kind) : kind_(kind) {}
  json post(const std::string& path, const json& body) override;

 private:
  RewriterMock kind_;
};

// Feature-hashed bag of words: each lowercased word adds a seeded +/-1 to one
// of `dim` coordinates. Vectors are returned unnormalized. Identical texts get
// identical vectors; texts with no hashed coordinate in common are orthogonal.
class MockEmbedder : public Transport {
 public:
  MockEmbedder(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {}
  json post(const std::string& path, const json& body) override;

  std::vector<double> raw_embedding(const std::string& text) const;
  // Coordinate and sign a single word hashes to.
  std::pair<int, int> bucket(const std::string& word) const;

 private:
  std::uint64_t seed_;
  int dim_;
};

// score = scale * hash_fraction(seed, prompt, response) + offset.
class MockReward : public Transport {
 public:
  MockReward(std::uint64_t seed, double offset, double scale = 10.0) : seed_(seed), offset_(offset), scale_(scale) {}
  json post(const std::string& path, const json& body) override;

  double score(const std::string& prompt, const std::string& response) const;

 private:
  std::uint64_t seed_;
  double offset_;
  double scale_;
};

// Answers "No" when the judged response contains the marker, "Yes" otherwise.
// A forced answer overrides both (used to exercise malformed verdicts).
class MockSafetyJudge : public Transport {
 public:
  explicit MockSafetyJudge(std::string marker, std::optional<std::string> forced_answer = std::nullopt)
      : marker_(std::move(marker)), forced_(std::move(forced_answer)) {}
  json post(const std::string& path, const json& body) override;

 private:
  std::string marker_;
  std::optional<std::string> forced_;
};

// Build the mock transport for a role from pipeline settings.
std::shared_ptr<Transport> make_mock_transport(Role role, const PipelineConfig& config);

// Helpers shared by mocks and tests for the chat-completions shape.
json chat_completion_response(const std::vector<std::string>& contents);
std::string last_user_message(const json& body);

}  // namespace prefdata::genclient
