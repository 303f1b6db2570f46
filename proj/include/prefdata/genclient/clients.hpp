#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prefdata/config.hpp"
#include "prefdata/genclient/endpoint.hpp"
#include "prefdata/genclient/transport.hpp"
#include "prefdata/types.hpp"

namespace prefdata::genclient {

// Build the managed transport for an endpoint: the in-process mock when the
// spec says "mock" (or force_mock is set), HTTP otherwise.
std::shared_ptr<ManagedTransport> make_transport(const EndpointSpec& spec, const PipelineConfig& config,
                                                 bool force_mock);

// Samples n completions. generate_base uses the plain /completions shape,
// every other role uses /chat/completions. Each returned text has already been
// through cleanup_truncation; empty completions are kept as empty strings.
class SamplerClient {
 public:
  SamplerClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec);

  std::vector<std::string> sample(std::string_view prompt, int n, const DecodingParams& decoding,
                                  std::string_view system_prompt = {}) const;

  const EndpointSpec& spec() const { return spec_; }

 private:
  std::shared_ptr<ManagedTransport> transport_;
  EndpointSpec spec_;
};

class RewriterClient {
 public:
  RewriterClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec);

  // Sends the rewrite template with prompt and draft substituted and returns
  // the answer with surrounding whitespace removed. An empty draft is skipped
  // (nullopt, no request).
  std::optional<std::string> rewrite(std::string_view prompt, std::string_view draft) const;

 private:
  std::shared_ptr<ManagedTransport> transport_;
  EndpointSpec spec_;
};

// Thread-safe store of unit embeddings keyed by (model, text key). Persisted
// as JSONL sorted by key so the sidecar file is deterministic.
class EmbeddingCache {
 public:
  std::optional<std::vector<double>> get(const std::string& model, const std::string& key) const;
  void put(const std::string& model, const std::string& key, std::vector<double> vec);
  std::size_t size() const;

  void load(const std::string& path);  // missing file is not an error
  void save(const std::string& path) const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> entries_;
};

class EmbedderClient {
 public:
  EmbedderClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec,
                 std::shared_ptr<EmbeddingCache> cache);

  // One unit-length vector per text, in input order. Texts already cached (or
  // repeated within the batch) are not re-requested. Throws ClientError on an
  // empty text, a zero vector, or inconsistent dimensions.
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) const;

  // Cache key recorded as ResponseRecord::embedding_ref.
  static std::string key_for(std::string_view text);

  const EndpointSpec& spec() const { return spec_; }
  EmbeddingCache& cache() const { return *cache_; }

 private:
  std::shared_ptr<ManagedTransport> transport_;
  EndpointSpec spec_;
  std::shared_ptr<EmbeddingCache> cache_;
};

// Raw reward-model scalar from POST /reward {model, prompt, response} ->
// {"score": real}. No clamping or normalization.
class RewardClient {
 public:
  RewardClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec);
  double score(std::string_view prompt, std::string_view response) const;

 private:
  std::shared_ptr<ManagedTransport> transport_;
  EndpointSpec spec_;
};

// Sends the safety template; a leading "Yes" is safe, a leading "No" unsafe.
// Anything else is logged and treated as unsafe. An empty response has nothing
// to judge and is labelled unsafe without a request.
class SafetyJudgeClient {
 public:
  SafetyJudgeClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec);
  SafetyLabel judge(std::string_view prompt, std::string_view response) const;

  // Verdict parsing, exposed for tests.
  static std::optional<SafetyLabel> parse_verdict(std::string_view answer);

 private:
  std::shared_ptr<ManagedTransport> transport_;
  EndpointSpec spec_;
};

// Unit-normalize in place; throws ClientError on a zero or non-finite vector.
void normalize(std::vector<double>& v);

}  // namespace prefdata::genclient
