#include "prefdata/genclient/clients.hpp"

#include <spdlog/spdlog.h>

#include <cctype>
#include <cmath>
#include <unordered_map>

#include "prefdata/genclient/cleanup.hpp"
#include "prefdata/genclient/http_transport.hpp"
#include "prefdata/genclient/mocks.hpp"
#include "prefdata/genclient/templates.hpp"
#include "prefdata/hash.hpp"
#include "prefdata/jsonl.hpp"

namespace prefdata::genclient {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

const json& choices_of(const json& response) {
  auto it = response.find("choices");
  if (it == response.end() || !it->is_array()) throw ClientError("response has no choices array");
  return *it;
}

std::string choice_text(const json& choice, bool chat) {
  if (chat) {
    auto m = choice.find("message");
    if (m == choice.end() || !m->is_object()) throw ClientError("choice has no message");
    auto c = m->find("content");
    if (c == m->end() || c->is_null()) return "";
    if (!c->is_string()) throw ClientError("message content is not a string");
    return c->get<std::string>();
  }
  auto t = choice.find("text");
  if (t == choice.end() || t->is_null()) return "";
  if (!t->is_string()) throw ClientError("choice text is not a string");
  return t->get<std::string>();
}

json chat_body(const EndpointSpec& spec, std::string_view content, std::string_view system_prompt) {
  json messages = json::array();
  if (!system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", system_prompt}});
  messages.push_back({{"role", "user"}, {"content", content}});
  return {{"model", spec.model_name}, {"messages", messages}};
}

}  // namespace

std::shared_ptr<ManagedTransport> make_transport(const EndpointSpec& spec, const PipelineConfig& config,
                                                 bool force_mock) {
  validate(spec);
  std::shared_ptr<Transport> inner;
  if (force_mock || spec.is_mock()) {
    inner = make_mock_transport(spec.role, config);
  } else {
    inner = std::make_shared<HttpTransport>(spec.base_url, resolve_api_key(spec), spec.timeout_seconds);
  }
  return std::make_shared<ManagedTransport>(
      std::move(inner), spec.max_in_flight, spec.max_retries,
      std::chrono::milliseconds(static_cast<long long>(spec.retry_backoff_ms)));
}

void normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ClientError("embedding has zero or non-finite norm");
  for (double& x : v) x /= norm;
}

// ---------------------------------------------------------------------------
// Sampler

SamplerClient::SamplerClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec)
    : transport_(std::move(transport)), spec_(std::move(spec)) {}

std::vector<std::string> SamplerClient::sample(std::string_view prompt, int n, const DecodingParams& decoding,
                                               std::string_view system_prompt) const {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const bool chat = spec_.role != Role::generate_base;
  json body;
  std::string path;
  if (chat) {
    body = chat_body(spec_, prompt, system_prompt);
    path = "/chat/completions";
  } else {
    body = {{"model", spec_.model_name}, {"prompt", prompt}};
    path = "/completions";
  }
  body["n"] = n;
  body["temperature"] = decoding.temperature;
  body["top_p"] = decoding.top_p;
  body["max_tokens"] = decoding.max_tokens;

  std::vector<std::string> texts;
  transport_->post_validated(path, body, [&](const json& response) {
    const json& choices = choices_of(response);
    if (choices.size() != static_cast<std::size_t>(n)) {
      throw ClientError("expected " + std::to_string(n) + " choices, got " + std::to_string(choices.size()));
    }
    std::vector<std::string> out;
    out.reserve(choices.size());
    for (const auto& c : choices) out.push_back(cleanup_truncation(choice_text(c, chat)));
    texts = std::move(out);
  });
  return texts;
}

// ---------------------------------------------------------------------------
// Rewriter

RewriterClient::RewriterClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec)
    : transport_(std::move(transport)), spec_(std::move(spec)) {}

std::optional<std::string> RewriterClient::rewrite(std::string_view prompt, std::string_view draft) const {
  if (trim(draft).empty()) {
    spdlog::warn("rewrite: empty draft skipped");
    return std::nullopt;
  }
  json body = chat_body(spec_, render_template(rewrite_template(), prompt, draft), {});
  body["n"] = 1;
  body["temperature"] = 0.0;
  std::string text;
  transport_->post_validated("/chat/completions", body, [&](const json& response) {
    const json& choices = choices_of(response);
    if (choices.empty()) throw ClientError("rewrite returned no choices");
    text = std::string(trim(choice_text(choices.front(), true)));
  });
  return text;
}

// ---------------------------------------------------------------------------
// Embeddings

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& model, const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find({model, key});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& model, const std::string& key, std::vector<double> vec) {
  std::unique_lock lock(mutex_);
  entries_.insert_or_assign({model, key}, std::move(vec));
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void EmbeddingCache::load(const std::string& path) {
  std::string contents;
  try {
    contents = read_file(path);
  } catch (const IoError&) {
    return;
  }
  std::unique_lock lock(mutex_);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string::npos) end = contents.size();
    ++line_no;
    const std::string_view line(contents.data() + pos, end - pos);
    pos = end + 1;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      entries_.insert_or_assign({j.at("model").get<std::string>(), j.at("key").get<std::string>()},
                                j.at("embedding").get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw ParseError(line_no, path + ": bad embedding cache entry: " + e.what());
    }
  }
}

void EmbeddingCache::save(const std::string& path) const {
  std::string out;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [key, vec] : entries_) {
      ojson j;
      j["model"] = key.first;
      j["key"] = key.second;
      j["embedding"] = vec;
      out += j.dump();
      out += '\n';
    }
  }
  write_file_atomic(path, out);
}

EmbedderClient::EmbedderClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec,
                               std::shared_ptr<EmbeddingCache> cache)
    : transport_(std::move(transport)),
      spec_(std::move(spec)),
      cache_(cache ? std::move(cache) : std::make_shared<EmbeddingCache>()) {}

std::string EmbedderClient::key_for(std::string_view text) { return text_key(text); }

std::vector<std::vector<double>> EmbedderClient::embed(std::span<const std::string> texts) const {
  if (texts.empty()) throw std::invalid_argument("embed: empty batch");
  std::vector<std::vector<double>> out(texts.size());
  std::vector<std::string> keys(texts.size());
  std::vector<std::string> missing;
  std::unordered_map<std::string, std::size_t> missing_index;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) throw ClientError("embed: text " + std::to_string(i) + " is empty");
    keys[i] = key_for(texts[i]);
    if (auto hit = cache_->get(spec_.model_name, keys[i])) {
      out[i] = std::move(*hit);
    } else if (!missing_index.count(keys[i])) {
      missing_index.emplace(keys[i], missing.size());
      missing.push_back(texts[i]);
    }
  }
  if (!missing.empty()) {
    json body = {{"model", spec_.model_name}, {"input", missing}};
    std::vector<std::vector<double>> fetched;
    transport_->post_validated("/embeddings", body, [&](const json& response) {
      auto data = response.find("data");
      if (data == response.end() || !data->is_array()) throw ClientError("embeddings response has no data array");
      if (data->size() != missing.size()) {
        throw ClientError("expected " + std::to_string(missing.size()) + " embeddings, got " +
                          std::to_string(data->size()));
      }
      std::vector<std::vector<double>> vecs(missing.size());
      for (std::size_t pos = 0; pos < data->size(); ++pos) {
        const json& item = (*data)[pos];
        const std::size_t idx = item.contains("index") ? item.at("index").get<std::size_t>() : pos;
        if (idx >= vecs.size() || !vecs[idx].empty()) throw ClientError("embeddings response has bad index");
        vecs[idx] = item.at("embedding").get<std::vector<double>>();
      }
      fetched = std::move(vecs);
    });
    for (std::size_t m = 0; m < fetched.size(); ++m) {
      normalize(fetched[m]);
      cache_->put(spec_.model_name, key_for(missing[m]), fetched[m]);
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (out[i].empty()) out[i] = fetched[missing_index.at(keys[i])];
    }
  }
  const std::size_t dim = out.front().size();
  for (const auto& v : out) {
    if (v.size() != dim || dim == 0) throw ClientError("embed: inconsistent embedding dimensions in batch");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reward

RewardClient::RewardClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec)
    : transport_(std::move(transport)), spec_(std::move(spec)) {}

double RewardClient::score(std::string_view prompt, std::string_view response) const {
  const json body = {{"model", spec_.model_name}, {"prompt", prompt}, {"response", response}};
  const json result = transport_->post("/reward", body);
  auto it = result.find("score");
  if (it == result.end() || !it->is_number()) throw ClientError("reward response has no numeric score");
  const double s = it->get<double>();
  if (!std::isfinite(s)) throw ClientError("reward score is not finite");
  return s;
}

// ---------------------------------------------------------------------------
// Safety judge

SafetyJudgeClient::SafetyJudgeClient(std::shared_ptr<ManagedTransport> transport, EndpointSpec spec)
    : transport_(std::move(transport)), spec_(std::move(spec)) {}

std::optional<SafetyLabel> SafetyJudgeClient::parse_verdict(std::string_view answer) {
  answer = trim(answer);
  while (!answer.empty() && (answer.front() == '"' || answer.front() == '\'' || answer.front() == '*')) {
    answer.remove_prefix(1);
  }
  std::string word;
  for (char c : answer) {
    if (!std::isalpha(static_cast<unsigned char>(c))) break;
    word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (word == "yes") return SafetyLabel::safe;
  if (word == "no") return SafetyLabel::unsafe;
  return std::nullopt;
}

SafetyLabel SafetyJudgeClient::judge(std::string_view prompt, std::string_view response) const {
  if (trim(response).empty()) return SafetyLabel::unsafe;
  json body = chat_body(spec_, render_template(safety_template(), prompt, response), {});
  body["n"] = 1;
  body["temperature"] = 0.0;
  body["max_tokens"] = 1;
  const json result = transport_->post("/chat/completions", body);
  const json& choices = choices_of(result);
  if (choices.empty()) throw ClientError("safety judge returned no choices");
  const std::string answer = choice_text(choices.front(), true);
  if (auto label = parse_verdict(answer)) return *label;
  spdlog::warn("safety judge answered '{}'; treating response as unsafe", answer.substr(0, 40));
  return SafetyLabel::unsafe;
}

}  // namespace prefdata::genclient
