// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when any
// criterion fails. Tolerances and time limits are fixed here.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "prefdata/diversity.hpp"
#include "prefdata/dpolab.hpp"
#include "prefdata/evalkit.hpp"
#include "prefdata/filters.hpp"
#include "prefdata/genclient/clients.hpp"
#include "prefdata/genclient/mocks.hpp"
#include "prefdata/jsonl.hpp"
#include "prefdata/pairing.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace prefdata;

namespace {

constexpr double kPairingSeconds = 10.0;
constexpr double kDiversityTolerance = 1e-12;
constexpr int kPropertyCases = 200;
constexpr double kLn2Tolerance = 1e-12;
constexpr double kGradTolerance = 1e-5;
constexpr double kBootstrapRelTolerance = 0.10;
constexpr double kBootstrapSeconds = 1.0;
constexpr double kEndToEndSeconds = 60.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Check {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

pairing::RedipoOptions options_for(const oracle::RedipoParams& p) {
  pairing::RedipoOptions o;
  o.epsilon = p.epsilon;
  o.alpha_percent = p.alpha_percent;
  o.cap = p.cap;
  o.alpha_base = p.alpha_after_cap ? pairing::AlphaBase::post_cap : pairing::AlphaBase::pre_cap;
  o.drop_zero_gap = p.drop_zero_gap;
  return o;
}

oracle::RedipoParams random_params(std::mt19937_64& rng) {
  oracle::RedipoParams p;
  p.epsilon = 0.5 * static_cast<double>(rng() % 25);
  static constexpr int kAlphas[] = {10, 25, 50, 100};
  p.alpha_percent = kAlphas[rng() % 4];
  p.cap = 1 + static_cast<int>(rng() % 6);
  return p;
}

// Pools scored and embedded the way the pipeline does it: raw vectors,
// normalized, then marginal diversity.
PromptPool embedded_pool(std::mt19937_64& rng) {
  auto pool = oracle::random_pool(rng, {2, 8});
  std::vector<std::vector<double>> unit;
  for (std::size_t i = 0; i < pool.responses.size(); ++i) unit.push_back(oracle::unit(oracle::random_vector(rng, 8)));
  std::vector<diversity::EmbeddedResponse> er;
  for (std::size_t i = 0; i < unit.size(); ++i) er.push_back({pool.responses[i].response_id, unit[i]});
  diversity::apply(diversity::marginal_diversity(pool.prompt_id, er), pool);
  return pool;
}

Check criterion_pairing() {
  Check c;
  std::mt19937_64 rng(1);
  const auto start = Clock::now();
  int n = 0;
  for (; n < 500; ++n) {
    const auto pool = embedded_pool(rng);
    const auto params = random_params(rng);
    if (pairing::select_redipo_pairs(pool, options_for(params)) != oracle::redipo(pool, params)) {
      c.fail("pool " + std::to_string(n) + " differs from the exhaustive oracle");
    }
  }
  const double t = seconds_since(start);
  if (t >= kPairingSeconds) c.fail("took " + std::to_string(t) + " s");
  if (c.ok) c.detail = std::to_string(n) + " pools, " + std::to_string(t) + " s";
  return c;
}

ResponseRecord rec(const std::string& id, Origin o, double score) {
  ResponseRecord r;
  r.response_id = id;
  r.prompt_id = "p";
  r.origin = o;
  if (o == Origin::base_rewritten) r.parent_id = "raw" + id;
  r.text = id;
  r.safety_label = SafetyLabel::safe;
  r.if_score = score;
  return r;
}

PromptPool pool_with(int total, int base) {
  PromptPool p;
  p.prompt_id = "p";
  for (int i = 0; i < total; ++i) {
    p.responses.push_back(rec("r" + std::to_string(10 + i), i < base ? Origin::base_rewritten : Origin::instruct, 1));
  }
  p.filtered_through = FilterStage::quality;
  return p;
}

Check criterion_filters() {
  Check c;
  PromptPool p;
  p.prompt_id = "p";
  const std::vector<std::pair<std::string, double>> instruct{{"i1", 8.0}, {"i2", 12.0}, {"i3", 10.0}, {"i4", 10.0}};
  for (const auto& [id, s] : instruct) p.responses.push_back(rec(id, Origin::instruct, s));
  const std::vector<std::pair<std::string, double>> base{{"b1", 8.5}, {"b2", 8.4}, {"b3", 8.49999}, {"b4", 20.0}};
  for (const auto& [id, s] : base) p.responses.push_back(rec(id, Origin::base_rewritten, s));
  p.sort_responses();
  p.filtered_through = FilterStage::safety;
  const auto res = filters::filter_quality(p, 0.15);
  std::set<std::string> removed(res.outcome.removed_ids.begin(), res.outcome.removed_ids.end());
  if (!res.pool || res.pool->instruct_mean_if != 10.0) c.fail("mean is not 10");
  if (filters::quality_threshold(10.0, 0.15) != 8.5) c.fail("threshold is not 8.5");
  if (removed != std::set<std::string>{"i1", "b2", "b3"}) c.fail("wrong responses removed at the 8.5 boundary");

  if (!filters::filter_min_samples(pool_with(10, 2)).pool) c.fail("10 total / 2 base dropped");
  if (filters::filter_min_samples(pool_with(9, 2)).pool) c.fail("9 total kept");
  if (filters::filter_min_samples(pool_with(10, 1)).pool) c.fail("1 base kept");
  if (filters::filter_min_samples(pool_with(12, 1)).pool) c.fail("12 total / 1 base kept");
  if (c.ok) c.detail = "threshold 8.5 kept, 10/2 kept, 9/2 and 10/1 dropped";
  return c;
}

Check criterion_diversity() {
  Check c;
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng() % 31);
    std::vector<std::string> ids;
    std::vector<std::vector<double>> raw, unit;
    for (int i = 0; i < n; ++i) {
      ids.push_back("r" + std::to_string(100 + i));
      raw.push_back(oracle::random_vector(rng, 16));
      unit.push_back(oracle::unit(raw.back()));
    }
    std::vector<diversity::EmbeddedResponse> er;
    for (int i = 0; i < n; ++i) er.push_back({ids[static_cast<std::size_t>(i)], unit[static_cast<std::size_t>(i)]});
    const auto rep = diversity::marginal_diversity("p", er);
    const auto want = oracle::marginal_diversity(ids, raw);
    for (int i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(rep.entries[static_cast<std::size_t>(i)].diversity - want.d[static_cast<std::size_t>(i)]));
    }
  }
  if (!(worst <= kDiversityTolerance)) c.fail("max deviation " + std::to_string(worst));

  // Duplicate texts share one cached embedding, hence D = 0 exactly.
  auto t = std::make_shared<genclient::ManagedTransport>(
      genclient::make_mock_transport(genclient::Role::embed, {}), 4, 0, std::chrono::milliseconds(0));
  genclient::EndpointSpec spec;
  spec.role = genclient::Role::embed;
  genclient::EmbedderClient client(t, spec, nullptr);
  const auto vecs = client.embed(std::vector<std::string>{"a repeated answer", "something else", "a repeated answer"});
  std::vector<diversity::EmbeddedResponse> er{{"a", vecs[0]}, {"b", vecs[1]}, {"c", vecs[2]}};
  const auto rep = diversity::marginal_diversity("p", er);
  if (rep.entries[0].diversity != 0.0 || rep.entries[2].diversity != 0.0) c.fail("duplicate text has D != 0");
  if (c.ok) {
    std::ostringstream os;
    os << "100 pools, max deviation " << worst << ", duplicates D = 0";
    c.detail = os.str();
  }
  return c;
}

Check criterion_invariants() {
  Check c;
  std::mt19937_64 rng(4);
  int violations = 0;
  for (int t = 0; t < kPropertyCases; ++t) {
    auto pool = embedded_pool(rng);
    const auto params = random_params(rng);
    const auto before = pairing::select_redipo_pairs(pool, options_for(params));
    const double shift = static_cast<double>(static_cast<int>(rng() % 101) - 50);
    for (auto& r : pool.responses) *r.if_score += shift;
    if (pairing::select_redipo_pairs(pool, options_for(params)) != before) ++violations;
  }
  if (violations) c.fail(std::to_string(violations) + " reward-shift violations");

  violations = 0;
  for (int t = 0; t < kPropertyCases; ++t) {
    const auto pool = embedded_pool(rng);
    const double e1 = 0.5 * static_cast<double>(rng() % 30);
    const double e2 = e1 + 0.5 * static_cast<double>(rng() % 10);
    std::set<std::pair<std::string, std::string>> small, large;
    for (const auto& p : pairing::enumerate_epsilon_pairs(pool, e1)) small.insert({p.first_id, p.second_id});
    for (const auto& p : pairing::enumerate_epsilon_pairs(pool, e2)) large.insert({p.first_id, p.second_id});
    if (!std::includes(large.begin(), large.end(), small.begin(), small.end())) ++violations;
  }
  if (violations) c.fail(std::to_string(violations) + " epsilon-monotonicity violations");

  violations = 0;
  for (int t = 0; t < kPropertyCases; ++t) {
    const auto pool = embedded_pool(rng);
    auto params = random_params(rng);
    params.alpha_percent = 100;
    std::map<std::string, int> uses;
    for (const auto& p : pairing::select_redipo_pairs(pool, options_for(params))) {
      if (++uses[p.chosen_id] > params.cap || ++uses[p.rejected_id] > params.cap) ++violations;
    }
  }
  if (violations) c.fail(std::to_string(violations) + " cap violations");

  violations = 0;
  for (int t = 0; t < kPropertyCases; ++t) {
    const int n = 2 + static_cast<int>(rng() % 20);
    std::vector<std::string> ids;
    std::vector<std::vector<double>> unit;
    for (int i = 0; i < n; ++i) {
      ids.push_back(oracle::random_id(rng) + std::to_string(i));
      unit.push_back(oracle::unit(oracle::random_vector(rng, 6)));
    }
    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<diversity::EmbeddedResponse> a, b;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      a.push_back({ids[i], unit[i]});
      b.push_back({ids[perm[i]], unit[perm[i]]});
    }
    const auto ra = diversity::marginal_diversity("p", a);
    const auto rb = diversity::marginal_diversity("p", b);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      if (rb.entries[i].diversity != ra.entries[perm[i]].diversity) ++violations;
    }
  }
  if (violations) c.fail(std::to_string(violations) + " permutation violations");
  if (c.ok) c.detail = "4 properties x " + std::to_string(kPropertyCases) + " cases, 0 violations";
  return c;
}

Check criterion_dpo() {
  Check c;
  for (double ls : {0.0, 0.05, 0.3}) {
    const double loss = dpolab::dpo_loss({0, 0, 0, 0, 1.0}, 0.1, ls);
    if (!(std::abs(loss - std::log(2.0)) <= kLn2Tolerance)) c.fail("loss at zero margin off for ls " + std::to_string(ls));
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lp(-60.0, -0.5), u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const dpolab::PairLogits p{lp(rng), lp(rng), lp(rng), lp(rng), 2.0 * u(rng)};
    worst = std::max(worst, dpolab::dpo_grad_check(p, 0.01 + 0.5 * u(rng), 0.49 * u(rng)));
  }
  if (!(worst < kGradTolerance)) c.fail("gradient check error " + std::to_string(worst));

  const auto f = dpolab::load_toy_fixture(testing::data_file("fixtures/toy_single_pair.json"));
  const auto r = dpolab::toy_train(f.outcomes, f.pairs, f.options);
  const auto& m = r.margin_curves.at(0);
  for (std::size_t t = 2; t < m.size(); ++t) {
    if (!(m[t] > m[t - 1])) {
      c.fail("toy margin not increasing at step " + std::to_string(t));
      break;
    }
  }
  if (c.ok) {
    std::ostringstream os;
    os << "ln2 exact to 1e-12, grad check max rel err " << worst << ", toy margin " << m.front() << " -> " << m.back();
    c.detail = os.str();
  }
  return c;
}

Check criterion_checkpoint() {
  Check c;
  const dpolab::CheckpointMetrics baseline{0.20, 8.0, 0.90};
  const std::vector<dpolab::CheckpointMetrics> cands{{0.30, 7.5, 0.95}, {0.45, 6.0, 0.80}, {0.60, 7.9, 0.70}};
  const auto pick = dpolab::select_checkpoint(cands, baseline, 6.0, 0.15);
  if (pick != std::optional<std::size_t>(1)) c.fail("selected " + (pick ? std::to_string(*pick) : "none"));
  if (c.ok) c.detail = "diversity-best fails the safety gate; index 1 selected";
  return c;
}

Check criterion_bootstrap() {
  Check c;
  const std::vector<double> constant(50, 5.0);
  const auto cc = evalkit::bootstrap_ci(constant, 1000, 0.95, 1);
  if (cc.half_width != 0.0) c.fail("constant input has nonzero half width");

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<double> values(200);
  for (auto& v : values) v = u(rng);
  const auto start = Clock::now();
  const auto ci = evalkit::bootstrap_ci(values, 1000, 0.95, 7);
  const double t = seconds_since(start);
  const double want = oracle::bootstrap_half_width(values, 1000, 0.95, 7);
  const double rel = std::abs(ci.half_width - want) / want;
  if (!(rel <= kBootstrapRelTolerance)) c.fail("half width off by " + std::to_string(100 * rel) + "%");
  if (!(t < kBootstrapSeconds)) c.fail("1000 resamples took " + std::to_string(t) + " s");
  if (c.ok) {
    std::ostringstream os;
    os << "half width " << ci.half_width << " vs " << want << " (rel " << rel << "), " << t << " s";
    c.detail = os.str();
  }
  return c;
}

int shell(const std::string& cmd, std::string* out = nullptr) {
  FILE* p = ::popen((cmd + " 2>/dev/null").c_str(), "r");
  if (!p) return -1;
  std::array<char, 4096> buf{};
  std::string text;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) text.append(buf.data(), n);
  const int st = ::pclose(p);
  if (out) *out = text;
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Check criterion_end_to_end() {
  Check c;
  testing::TempDir dir;
  const std::string prompts = testing::data_file("fixtures/prompts_20.jsonl");
  const std::vector<std::pair<std::string, int>> runs{{"a", 1}, {"b", 1}, {"c", 8}};
  double slowest = 0.0;
  for (const auto& [name, workers] : runs) {
    const auto start = Clock::now();
    const int st = shell(std::string(PREFDATA_CLI_PATH) + " --mock --seed 7 --workers " + std::to_string(workers) +
                         " --prompts " + prompts + " --out-dir " + dir.file(name) + " all > /dev/null");
    slowest = std::max(slowest, seconds_since(start));
    if (st != 0) c.fail("run " + name + " exited with " + std::to_string(st));
  }
  if (!c.ok) return c;
  for (const char* f : {"pairs.jsonl", "manifest.json"}) {
    const std::string a = read_file(dir.file(std::string("a/") + f));
    if (a != read_file(dir.file(std::string("b/") + f))) c.fail(std::string(f) + " differs between reruns");
    if (a != read_file(dir.file(std::string("c/") + f))) c.fail(std::string(f) + " differs between 1 and 8 workers");
  }
  const auto m = read_manifest(dir.file("a/manifest.json"));
  if (!m.reconciles()) c.fail("manifest does not reconcile");
  if (m.surviving_pairs == 0) c.fail("no pairs produced");
  if (!(slowest < kEndToEndSeconds)) c.fail("slowest run took " + std::to_string(slowest) + " s");
  if (c.ok) {
    std::ostringstream os;
    os << m.surviving_pairs << " pairs, identical for workers {1, 8}, reconciles, slowest run " << slowest << " s";
    c.detail = os.str();
  }
  return c;
}

Check criterion_config() {
  Check c;
  std::string out;
  if (shell(std::string(PREFDATA_CLI_PATH) + " --show-config", &out) != 0) c.fail("--show-config failed");
  std::set<std::string> lines;
  std::istringstream in(out);
  for (std::string line; std::getline(in, line);) lines.insert(line);
  for (const char* want : {"k = 16", "delta = 0.15", "epsilon = 6.0", "alpha = 25.0", "baseline_top_fraction = 0.25"}) {
    if (!lines.count(want)) c.fail(std::string("missing line '") + want + "'");
  }
  if (c.ok) c.detail = "k = 16, delta = 0.15, epsilon = 6.0, alpha = 25.0, baseline_top_fraction = 0.25";
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
      {"1 pairing oracle equivalence", criterion_pairing},
      {"2 filter rule exactness", criterion_filters},
      {"3 diversity correctness", criterion_diversity},
      {"4 invariance suite", criterion_invariants},
      {"5 DPO math", criterion_dpo},
      {"6 checkpoint gating", criterion_checkpoint},
      {"7 bootstrap", criterion_bootstrap},
      {"8 end-to-end determinism", criterion_end_to_end},
      {"9 config fidelity", criterion_config},
  };
  spdlog::set_level(spdlog::level::err);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.fail(std::string("exception: ") + e.what());
    }
    failed += !c.ok;
    std::cout << (c.ok ? "PASS " : "FAIL ") << name << ": " << c.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
