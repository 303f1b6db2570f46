#include "prefdata/genclient/mocks.hpp"

#include <array>
#include <cctype>
#include <random>

#include "prefdata/hash.hpp"

namespace prefdata::genclient {

namespace {

using Words = std::array<std::string_view, 10>;

constexpr std::array<Words, 8> kTopics{{
    {"forest", "river", "mountain", "meadow", "breeze", "stone", "cedar", "valley", "moss", "sunrise"},
    {"bread", "honey", "spice", "lemon", "garlic", "soup", "pastry", "cheese", "pepper", "orchard"},
    {"circuit", "signal", "robot", "engine", "battery", "sensor", "network", "code", "module", "laser"},
    {"train", "harbor", "map", "compass", "journey", "station", "island", "bridge", "village", "road"},
    {"canvas", "melody", "poem", "color", "rhythm", "sketch", "story", "chorus", "mural", "verse"},
    {"atom", "planet", "orbit", "cell", "energy", "gravity", "crystal", "comet", "fossil", "wave"},
    {"blanket", "lamp", "garden", "kitchen", "window", "candle", "porch", "shelf", "quilt", "kettle"},
    {"ball", "race", "team", "court", "trail", "goal", "sprint", "paddle", "climb", "score"},
}};

constexpr std::array<std::string_view, 12> kVerbs{"brings", "shapes", "guides", "opens",   "sparks",  "builds",
                                                  "carries", "follows", "explores", "remembers", "invites", "balances"};
constexpr std::array<std::string_view, 12> kAdjectives{"quiet",   "bright", "ancient", "gentle", "curious", "hidden",
                                                       "warm",    "bold",   "simple",  "strange", "vivid",   "calm"};
constexpr std::array<std::string_view, 10> kLinks{"the",     "a",     "with",  "and",  "of",
                                                  "through", "beyond", "under", "every", "some"};

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : gen_(seed) {}
  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  template <typename C>
  std::string_view from(const C& c) {
    return c[pick(c.size())];
  }

 private:
  std::mt19937_64 gen_;
};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::vector<std::string> prompt_keywords(const std::string& prompt) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (word.size() >= 5) out.push_back(word);
    word.clear();
  };
  for (char c : prompt) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      flush();
    }
  }
  flush();
  if (out.empty()) out.push_back("this");
  return out;
}

std::string base_sentence(Draw& d, const Words& topic) {
  std::string s = capitalize(std::string(d.from(kAdjectives)));
  s += " ";
  s += d.from(topic);
  s += " ";
  s += d.from(kVerbs);
  const std::size_t extra = 2 + d.pick(4);
  for (std::size_t i = 0; i < extra; ++i) {
    s += " ";
    s += (i % 2 == 0) ? d.from(kLinks) : d.from(topic);
  }
  s += " ";
  s += d.from(kAdjectives);
  s += " ";
  s += d.from(topic);
  static constexpr std::array<char, 4> kEnds{'.', '.', '!', '?'};
  s += kEnds[d.pick(kEnds.size())];
  return s;
}

std::string instruct_sentence(Draw& d, const Words& topic, const std::vector<std::string>& kw, std::size_t which) {
  // Narrow choice sets: the first three topic nouns and three adjectives.
  auto noun = [&] { return std::string(topic[d.pick(3)]); };
  auto adj = [&] { return std::string(kAdjectives[d.pick(3)]); };
  const std::string& k0 = kw[0];
  const std::string& k1 = kw[kw.size() > 1 ? 1 : 0];
  switch (which) {
    case 0: return capitalize(adj()) + " " + noun() + " can help with " + k1 + " in a " + adj() + " way.";
    case 1: return "Many people enjoy " + noun() + " because it feels " + adj() + ".";
    case 2: return "A good approach is to start with " + noun() + " and then add " + noun() + ".";
    default: return "Overall, " + k0 + " works best with a " + adj() + " " + noun() + ".";
  }
}

}  // namespace

std::string MockSampler::generate(const std::string& model, const std::string& prompt, int index) const {
  const std::string seed = std::to_string(options_.seed);
  const std::string idx = std::to_string(index);
  const bool base = options_.flavor == SamplerFlavor::base;
  Draw d(stable_hash64({"mock-sampler", seed, base ? "base" : "instruct", model, prompt, idx}));

  if (base && d.uniform() < options_.empty_rate) return "";

  std::string text;
  if (base) {
    const Words& topic = kTopics[d.pick(kTopics.size())];
    const std::size_t sentences = 2 + d.pick(4);
    for (std::size_t i = 0; i < sentences; ++i) {
      if (i) text += " ";
      text += base_sentence(d, topic);
    }
  } else {
    const auto kw = prompt_keywords(prompt);
    const Words& topic = kTopics[stable_hash64({"mock-topic", seed, prompt}) % kTopics.size()];
    text = "Here are a few thoughts about " + kw[0] + ".";
    for (int i = 0; i < 2; ++i) {
      text += " ";
      text += instruct_sentence(d, topic, kw, d.pick(4));
    }
  }
  if (d.uniform() < options_.unsafe_rate) {
    text += " " + options_.unsafe_marker + " " + base_sentence(d, kTopics[d.pick(kTopics.size())]);
  }
  if (d.uniform() < options_.truncation_rate) {
    text += " And then the " + std::string(d.from(kAdjectives)) + " " + std::string(d.from(kTopics[0]));
  }
  return text;
}

json MockSampler::post(const std::string& path, const json& body) {
  const std::string model = body.value("model", "");
  const int n = body.value("n", 1);
  std::string prompt;
  if (path == "/completions") {
    prompt = body.at("prompt").get<std::string>();
  } else if (path == "/chat/completions") {
    prompt = last_user_message(body);
  } else {
    throw TransportError("mock sampler: unsupported path " + path, false);
  }
  json choices = json::array();
  for (int i = 0; i < n; ++i) {
    const std::string text = generate(model, prompt, i);
    if (path == "/completions") {
      choices.push_back({{"index", i}, {"text", text}, {"finish_reason", "length"}});
    } else {
      choices.push_back(
          {{"index", i}, {"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", "stop"}});
    }
  }
  return {{"object", path == "/completions" ? "text_completion" : "chat.completion"}, {"model", model},
          {"choices", choices}};
}

json MockRewriter::post(const std::string& path, const json& body) {
  if (path != "/chat/completions") throw TransportError("mock rewriter: unsupported path " + path, false);
  const std::string content = last_user_message(body);
  static constexpr std::string_view kDraft = "Draft Response: ";
  const auto pos = content.rfind(kDraft);
  std::string draft = pos == std::string::npos ? content : content.substr(pos + kDraft.size());
  if (kind_ == RewriterMock::prefix) draft = "REWRITTEN: " + draft;
  return chat_completion_response({draft});
}

std::pair<int, int> MockEmbedder::bucket(const std::string& word) const {
  const std::uint64_t h = stable_hash64({"mock-embed", std::to_string(seed_), word});
  return {static_cast<int>(h % static_cast<std::uint64_t>(dim_)), ((h >> 32) & 1) ? 1 : -1};
}

std::vector<double> MockEmbedder::raw_embedding(const std::string& text) const {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  std::string word;
  bool any = false;
  auto flush = [&] {
    if (word.empty()) return;
    auto [idx, sign] = bucket(word);
    v[static_cast<std::size_t>(idx)] += sign;
    any = true;
    word.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || (static_cast<unsigned char>(c) & 0x80)) {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      flush();
    }
  }
  flush();
  bool zero = true;
  for (double x : v) zero = zero && x == 0.0;
  if (!any || zero) {
    // Nothing usable (or the words cancelled out): hash the whole text.
    auto [idx, sign] = bucket("\x1f" + text);
    v[static_cast<std::size_t>(idx)] += sign;
  }
  return v;
}

json MockEmbedder::post(const std::string& path, const json& body) {
  if (path != "/embeddings") throw TransportError("mock embedder: unsupported path " + path, false);
  std::vector<std::string> inputs;
  const json& input = body.at("input");
  if (input.is_string()) {
    inputs.push_back(input.get<std::string>());
  } else {
    inputs = input.get<std::vector<std::string>>();
  }
  json data = json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    data.push_back({{"object", "embedding"}, {"index", i}, {"embedding", raw_embedding(inputs[i])}});
  }
  return {{"object", "list"}, {"model", body.value("model", "")}, {"data", data}};
}

double MockReward::score(const std::string& prompt, const std::string& response) const {
  return scale_ * hash_fraction({"mock-reward", std::to_string(seed_), prompt, response}) + offset_;
}

json MockReward::post(const std::string& path, const json& body) {
  if (path != "/reward") throw TransportError("mock reward: unsupported path " + path, false);
  return {{"score", score(body.at("prompt").get<std::string>(), body.at("response").get<std::string>())}};
}

json MockSafetyJudge::post(const std::string& path, const json& body) {
  if (path != "/chat/completions") throw TransportError("mock judge: unsupported path " + path, false);
  if (forced_) return chat_completion_response({*forced_});
  const std::string content = last_user_message(body);
  // The judged response sits between the first "AI Response: " and the
  // question that follows it; the few-shot examples come later.
  static constexpr std::string_view kStart = "AI Response: ";
  static constexpr std::string_view kEnd = "\n\nIs this response safe?";
  std::string judged = content;
  if (auto s = content.find(kStart); s != std::string::npos) {
    const auto from = s + kStart.size();
    const auto e = content.find(kEnd, from);
    judged = content.substr(from, e == std::string::npos ? std::string::npos : e - from);
  }
  const bool unsafe = !marker_.empty() && judged.find(marker_) != std::string::npos;
  return chat_completion_response({unsafe ? "No" : "Yes"});
}

json chat_completion_response(const std::vector<std::string>& contents) {
  json choices = json::array();
  for (std::size_t i = 0; i < contents.size(); ++i) {
    choices.push_back(
        {{"index", i}, {"message", {{"role", "assistant"}, {"content", contents[i]}}}, {"finish_reason", "stop"}});
  }
  return {{"object", "chat.completion"}, {"choices", choices}};
}

std::string last_user_message(const json& body) {
  const json& messages = body.at("messages");
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->value("role", "") == "user") return it->at("content").get<std::string>();
  }
  throw TransportError("request has no user message", false);
}

std::shared_ptr<Transport> make_mock_transport(Role role, const PipelineConfig& config) {
  const auto& m = config.mock;
  switch (role) {
    case Role::generate_base:
    case Role::generate_instruct: {
      MockSamplerOptions o;
      o.seed = config.rng_seed;
      o.flavor = role == Role::generate_base ? SamplerFlavor::base : SamplerFlavor::instruct;
      o.truncation_rate = m.truncation_rate;
      o.unsafe_rate = m.unsafe_rate;
      o.empty_rate = role == Role::generate_base ? m.empty_rate : 0.0;
      o.unsafe_marker = m.safety_marker;
      return std::make_shared<MockSampler>(o);
    }
    case Role::rewrite: return std::make_shared<MockRewriter>(m.rewriter);
    case Role::embed: return std::make_shared<MockEmbedder>(config.rng_seed, m.embed_dim);
    case Role::reward: return std::make_shared<MockReward>(config.rng_seed, m.reward_offset);
    case Role::safety: return std::make_shared<MockSafetyJudge>(m.safety_marker);
  }
  throw std::invalid_argument("unknown role");
}

}  // namespace prefdata::genclient
