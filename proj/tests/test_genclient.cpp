#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "prefdata/genclient/cleanup.hpp"
#include "prefdata/genclient/clients.hpp"
#include "prefdata/genclient/mocks.hpp"
#include "prefdata/genclient/templates.hpp"
#include "prefdata/jsonl.hpp"
#include "support/tmpdir.hpp"

using namespace prefdata;
using namespace prefdata::genclient;

namespace {

EndpointSpec spec_for(Role role) {
  EndpointSpec s;
  s.role = role;
  s.model_name = "m";
  s.retry_backoff_ms = 0;
  return s;
}

std::shared_ptr<ManagedTransport> managed(std::shared_ptr<Transport> inner, int retries = 3, int in_flight = 8) {
  return std::make_shared<ManagedTransport>(std::move(inner), in_flight, retries, std::chrono::milliseconds(0));
}

std::shared_ptr<ManagedTransport> mock_for(Role role, const PipelineConfig& cfg = {}) {
  return managed(make_mock_transport(role, cfg));
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Captures warnings logged while alive.
struct LogCapture {
  std::ostringstream out;
  std::shared_ptr<spdlog::logger> previous = spdlog::default_logger();
  LogCapture() {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(out);
    spdlog::set_default_logger(std::make_shared<spdlog::logger>("capture", sink));
  }
  ~LogCapture() { spdlog::set_default_logger(previous); }
};

}  // namespace

TEST_CASE("cleanup_truncation") {
  CHECK(cleanup_truncation("A full sentence. And then it was cut of") == "A full sentence.");
  CHECK(cleanup_truncation("A full sentence.") == "A full sentence.");
  CHECK(cleanup_truncation("no terminator anywhere") == "no terminator anywhere");
  CHECK(cleanup_truncation("He said \"stop.\" Then the") == "He said \"stop.\"");
  CHECK(cleanup_truncation("Really? (Yes!) and") == "Really? (Yes!)");
  CHECK(cleanup_truncation("It costs 3.5 dollars") == "It costs 3.5 dollars");
  CHECK(cleanup_truncation("Done!  ") == "Done!  ");
  CHECK(cleanup_truncation("") == "");
}

TEST_CASE("mock sampler returns n deterministic distinct texts") {
  SamplerClient s(mock_for(Role::generate_instruct), spec_for(Role::generate_instruct));
  const auto a = s.sample("Tell me about tea.", 3, {});
  const auto b = s.sample("Tell me about tea.", 3, {});
  REQUIRE(a.size() == 3);
  CHECK(a == b);
  CHECK(std::set<std::string>(a.begin(), a.end()).size() == 3);
  CHECK(s.sample("Tell me about tea.", 1, {}) == s.sample("Tell me about tea.", 1, {}));
  CHECK(s.sample("Tell me about tea.", PipelineConfig{}.k, {}).size() == 16);
  for (const auto& t : a) CHECK(cleanup_truncation(t) == t);
}

TEST_CASE("base sampler uses plain completions") {
  std::string seen_path;
  auto inner = std::make_shared<LambdaTransport>([&](const std::string& path, const json& body) {
    seen_path = path;
    CHECK(body.at("prompt") == "hi");
    CHECK(body.at("n") == 2);
    return json{{"choices", json::array({{{"text", "One. Two"}}, {{"text", "Three."}}})}};
  });
  SamplerClient s(managed(inner), spec_for(Role::generate_base));
  CHECK(s.sample("hi", 2, {}) == std::vector<std::string>{"One.", "Three."});
  CHECK(seen_path == "/completions");
}

TEST_CASE("empty completions are kept as empty strings") {
  auto inner = std::make_shared<LambdaTransport>([](const std::string&, const json&) {
    return chat_completion_response({"", "Fine."});
  });
  SamplerClient s(managed(inner), spec_for(Role::generate_instruct));
  CHECK(s.sample("q", 2, {}) == std::vector<std::string>{"", "Fine."});
}

TEST_CASE("wrong choice counts are retried, never padded or truncated") {
  std::atomic<int> calls{0};
  auto inner = std::make_shared<LambdaTransport>([&](const std::string&, const json& body) {
    const int n = body.at("n").get<int>();
    std::vector<std::string> texts(static_cast<std::size_t>(++calls == 1 ? n + 1 : n), "Same.");
    return chat_completion_response(texts);
  });
  auto t = managed(inner);
  SamplerClient s(t, spec_for(Role::generate_instruct));
  CHECK(s.sample("q", 4, {}).size() == 4);
  CHECK(t->attempts() == 2);

  auto always_short = std::make_shared<LambdaTransport>(
      [](const std::string&, const json&) { return chat_completion_response({"only one."}); });
  SamplerClient s2(managed(always_short, 2), spec_for(Role::generate_instruct));
  CHECK_THROWS_AS(s2.sample("q", 3, {}), TransportError);
}

TEST_CASE("retryable transport failures are retried up to the limit") {
  std::atomic<int> calls{0};
  auto flaky = std::make_shared<LambdaTransport>([&](const std::string&, const json&) -> json {
    if (++calls < 3) throw TransportError("503", true);
    return chat_completion_response({"ok."});
  });
  auto t = managed(flaky, 3);
  SamplerClient s(t, spec_for(Role::generate_instruct));
  CHECK(s.sample("q", 1, {}) == std::vector<std::string>{"ok."});
  CHECK(t->attempts() == 3);

  calls = 0;
  auto t1 = managed(flaky, 1);
  SamplerClient s1(t1, spec_for(Role::generate_instruct));
  CHECK_THROWS_AS(s1.sample("q", 1, {}), TransportError);
  CHECK(t1->attempts() == 2);

  auto fatal = std::make_shared<LambdaTransport>([&](const std::string&, const json&) -> json {
    throw TransportError("400", false);
  });
  auto t2 = managed(fatal, 5);
  SamplerClient s2(t2, spec_for(Role::generate_instruct));
  CHECK_THROWS_AS(s2.sample("q", 1, {}), TransportError);
  CHECK(t2->attempts() == 1);
}

TEST_CASE("in-flight requests never exceed the endpoint limit") {
  std::atomic<int> now{0}, peak{0};
  auto slow = std::make_shared<LambdaTransport>([&](const std::string&, const json&) {
    const int v = ++now;
    int p = peak.load();
    while (v > p && !peak.compare_exchange_weak(p, v)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --now;
    return chat_completion_response({"x."});
  });
  auto t = managed(slow, 0, 3);
  SamplerClient s(t, spec_for(Role::generate_instruct));
  std::vector<std::jthread> threads;
  for (int i = 0; i < 12; ++i) threads.emplace_back([&] { s.sample("q", 1, {}); });
  threads.clear();
  CHECK(peak.load() <= 3);
  CHECK(t->peak_in_flight() <= 3);
  CHECK(t->attempts() == 12);
}

TEST_CASE("rewriter mocks") {
  PipelineConfig cfg;
  cfg.mock.rewriter = RewriterMock::identity;
  RewriterClient id(mock_for(Role::rewrite, cfg), spec_for(Role::rewrite));
  CHECK(id.rewrite("p", "Some draft.") == std::optional<std::string>("Some draft."));
  cfg.mock.rewriter = RewriterMock::prefix;
  RewriterClient pre(mock_for(Role::rewrite, cfg), spec_for(Role::rewrite));
  CHECK(pre.rewrite("p", "X") == std::optional<std::string>("REWRITTEN: X"));
}

TEST_CASE("empty drafts are skipped without a request") {
  auto t = mock_for(Role::rewrite);
  RewriterClient r(t, spec_for(Role::rewrite));
  CHECK_FALSE(r.rewrite("p", "").has_value());
  CHECK_FALSE(r.rewrite("p", "   ").has_value());
  CHECK(t->attempts() == 0);
}

TEST_CASE("rewrite sends the template with both fields substituted and trims the answer") {
  std::string sent;
  auto inner = std::make_shared<LambdaTransport>([&](const std::string&, const json& body) {
    sent = last_user_message(body);
    return chat_completion_response({"  cleaned text \n"});
  });
  RewriterClient r(managed(inner), spec_for(Role::rewrite));
  CHECK(r.rewrite("Why is the sky blue?", "Because of {prompt} scattering.") ==
        std::optional<std::string>("cleaned text"));
  const std::string expected = render_template(rewrite_template(), "Why is the sky blue?", "Because of {prompt} scattering.");
  CHECK(sent == expected);
  CHECK(sent.find("User Prompt: Why is the sky blue?\nDraft Response: Because of {prompt} scattering.") !=
        std::string::npos);
}

TEST_CASE("templates ship verbatim") {
  auto shipped = [](const char* name) {
    std::string s = read_file(testing::data_file(std::string("templates/") + name));
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
  };
  CHECK(rewrite_template() == shipped("rewrite_prompt.txt"));
  CHECK(safety_template() == shipped("safety_prompt.txt"));
  CHECK(diversity_system_prompts()[2] == shipped("sys3.txt"));
  CHECK(safety_template().find("Answer with exactly \"Yes\" or \"No\".") != std::string_view::npos);
  CHECK(diversity_system_prompts().size() == 3);
  for (auto p : diversity_system_prompts()) CHECK_FALSE(p.empty());
  CHECK(render_template("{prompt}|{response}|{other}", "A{response}", "B") == "A{response}|B|{other}");
}

TEST_CASE("embeddings are unit length and cached by content") {
  auto t = mock_for(Role::embed);
  EmbedderClient e(t, spec_for(Role::embed), nullptr);
  const std::vector<std::string> texts{"the same words", "the same words", "other words entirely"};
  const auto v = e.embed(texts);
  REQUIRE(v.size() == 3);
  for (const auto& x : v) CHECK(std::abs(norm(x) - 1.0) <= 1e-9);
  CHECK(v[0] == v[1]);
  CHECK(t->attempts() == 1);
  CHECK(e.cache().size() == 2);
  const auto again = e.embed(std::vector<std::string>{"the same words"});
  CHECK(again[0] == v[0]);
  CHECK(t->attempts() == 1);

  double dot = 0;
  for (std::size_t i = 0; i < v[0].size(); ++i) dot += v[0][i] * v[2][i];
  CHECK(dot >= -1.0);
  CHECK(dot <= 1.0);
}

TEST_CASE("mock embedding is the normalized hashed vector") {
  MockEmbedder raw(0, 256);
  const auto r = raw.raw_embedding("alpha beta gamma");
  EmbedderClient e(mock_for(Role::embed), spec_for(Role::embed), nullptr);
  const auto v = e.embed(std::vector<std::string>{"alpha beta gamma"})[0];
  const double n = norm(r);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(v[i] == doctest::Approx(r[i] / n).epsilon(1e-12));
}

TEST_CASE("embedding errors") {
  auto zero = std::make_shared<LambdaTransport>([](const std::string&, const json&) {
    return json{{"data", json::array({{{"index", 0}, {"embedding", {0.0, 0.0}}}})}};
  });
  EmbedderClient ez(managed(zero, 0), spec_for(Role::embed), nullptr);
  CHECK_THROWS_AS(ez.embed(std::vector<std::string>{"a"}), ClientError);

  auto ragged = std::make_shared<LambdaTransport>([](const std::string&, const json&) {
    return json{{"data", json::array({{{"index", 0}, {"embedding", {1.0, 0.0}}},
                                      {{"index", 1}, {"embedding", {1.0, 0.0, 0.0}}}})}};
  });
  EmbedderClient er(managed(ragged, 0), spec_for(Role::embed), nullptr);
  CHECK_THROWS_AS(er.embed(std::vector<std::string>{"a", "b"}), ClientError);

  EmbedderClient ok(mock_for(Role::embed), spec_for(Role::embed), nullptr);
  CHECK_THROWS_AS(ok.embed(std::vector<std::string>{"fine", ""}), ClientError);
}

TEST_CASE("embedding cache persists deterministically") {
  testing::TempDir dir;
  auto cache = std::make_shared<EmbeddingCache>();
  EmbedderClient e(mock_for(Role::embed), spec_for(Role::embed), cache);
  e.embed(std::vector<std::string>{"zeta", "alpha", "mid"});
  cache->save(dir.file("a.jsonl"));
  EmbeddingCache back;
  back.load(dir.file("a.jsonl"));
  CHECK(back.size() == 3);
  back.save(dir.file("b.jsonl"));
  CHECK(read_file(dir.file("a.jsonl")) == read_file(dir.file("b.jsonl")));
  CHECK(back.get("m", EmbedderClient::key_for("alpha")) == cache->get("m", EmbedderClient::key_for("alpha")));
}

TEST_CASE("mock reward is deterministic, bounded, and shifts with the offset") {
  PipelineConfig cfg;
  RewardClient r(mock_for(Role::reward, cfg), spec_for(Role::reward));
  cfg.mock.reward_offset = 2.0;
  RewardClient shifted(mock_for(Role::reward, cfg), spec_for(Role::reward));
  for (int i = 0; i < 50; ++i) {
    const std::string resp = "response " + std::to_string(i);
    const double s = r.score("p", resp);
    CHECK(s >= 0.0);
    CHECK(s <= 10.0);
    CHECK(s == r.score("p", resp));
    CHECK(shifted.score("p", resp) == s + 2.0);
  }
}

TEST_CASE("reward payloads must be numeric") {
  auto bad = std::make_shared<LambdaTransport>([](const std::string&, const json&) { return json{{"score", "high"}}; });
  RewardClient r(managed(bad, 0), spec_for(Role::reward));
  CHECK_THROWS(r.score("p", "r"));
  auto neg = std::make_shared<LambdaTransport>([](const std::string&, const json&) { return json{{"score", -123.5}}; });
  RewardClient n(managed(neg, 0), spec_for(Role::reward));
  CHECK(n.score("p", "r") == -123.5);
}

TEST_CASE("safety judge") {
  PipelineConfig cfg;
  SafetyJudgeClient j(mock_for(Role::safety, cfg), spec_for(Role::safety));
  CHECK(j.judge("p", "A kind answer.") == SafetyLabel::safe);
  CHECK(j.judge("p", "Do this [[unsafe]] thing.") == SafetyLabel::unsafe);

  LogCapture log;
  SafetyJudgeClient maybe(managed(std::make_shared<MockSafetyJudge>("[[unsafe]]", "Maybe")), spec_for(Role::safety));
  CHECK(maybe.judge("p", "A kind answer.") == SafetyLabel::unsafe);
  CHECK(log.out.str().find("warn") != std::string::npos);
}

TEST_CASE("verdict parsing") {
  CHECK(SafetyJudgeClient::parse_verdict("Yes") == SafetyLabel::safe);
  CHECK(SafetyJudgeClient::parse_verdict("yes.") == SafetyLabel::safe);
  CHECK(SafetyJudgeClient::parse_verdict("**No**") == SafetyLabel::unsafe);
  CHECK(SafetyJudgeClient::parse_verdict(" \"No\" because") == SafetyLabel::unsafe);
  CHECK_FALSE(SafetyJudgeClient::parse_verdict("Maybe"));
  CHECK_FALSE(SafetyJudgeClient::parse_verdict(""));
  CHECK_FALSE(SafetyJudgeClient::parse_verdict("Yesterday"));
}

TEST_CASE("API keys resolve from the environment") {
  EndpointSpec s = spec_for(Role::reward);
  ::setenv("PREFDATA_API_KEY", "global", 1);
  ::unsetenv("PREFDATA_API_KEY_REWARD");
  CHECK(resolve_api_key(s) == "global");
  ::setenv("PREFDATA_API_KEY_REWARD", "role", 1);
  CHECK(resolve_api_key(s) == "role");
  ::setenv("MY_KEY", "custom", 1);
  s.api_key_env = "MY_KEY";
  CHECK(resolve_api_key(s) == "custom");
  ::unsetenv("PREFDATA_API_KEY");
  ::unsetenv("PREFDATA_API_KEY_REWARD");
  ::unsetenv("MY_KEY");
}
