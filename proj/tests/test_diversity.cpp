#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "prefdata/diversity.hpp"
#include "prefdata/genclient/clients.hpp"
#include "prefdata/genclient/mocks.hpp"
#include "support/oracles.hpp"

using namespace prefdata;
using namespace prefdata::diversity;

namespace {

struct Embedded {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> unit;

  std::vector<EmbeddedResponse> view() const {
    std::vector<EmbeddedResponse> v;
    for (std::size_t i = 0; i < ids.size(); ++i) v.push_back({ids[i], unit[i]});
    return v;
  }
};

Embedded random_embedded(std::mt19937_64& rng, int n, int dim) {
  Embedded e;
  std::set<std::string> used;
  for (int i = 0; i < n; ++i) {
    std::string id;
    do id = oracle::random_id(rng);
    while (!used.insert(id).second);
    e.ids.push_back(id);
    e.raw.push_back(oracle::random_vector(rng, dim));
    e.unit.push_back(oracle::unit(e.raw.back()));
  }
  return e;
}

std::vector<double> basis(int dim, int k) {
  std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
  v[static_cast<std::size_t>(k)] = 1.0;
  return v;
}

}  // namespace

TEST_CASE("cosine similarity examples") {
  const auto u = oracle::unit({1.0, 2.0, -3.0});
  std::vector<double> minus_u;
  for (double x : u) minus_u.push_back(-x);
  CHECK(cosine_similarity(u, u) == 1.0);
  CHECK(cosine_similarity(basis(3, 0), basis(3, 2)) == 0.0);
  CHECK(cosine_similarity(u, minus_u) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cosine_similarity(u, minus_u) >= -1.0);
  CHECK_THROWS_AS(cosine_similarity(basis(3, 0), basis(4, 0)), std::invalid_argument);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1.0, 1.0}, basis(2, 0)), std::invalid_argument);
}

TEST_CASE("marginal diversity examples") {
  const auto a = oracle::unit({0.3, -0.2, 0.9});
  std::vector<EmbeddedResponse> dup{{"a", a}, {"b", a}};
  auto rep = marginal_diversity("p", dup);
  CHECK(rep.entries[0].diversity == 0.0);
  CHECK(rep.entries[1].diversity == 0.0);
  CHECK(rep.entries[0].neighbor_id == "b");
  CHECK(rep.entries[1].neighbor_id == "a");

  const auto e0 = basis(3, 0), e1 = basis(3, 1), e2 = basis(3, 2);
  std::vector<EmbeddedResponse> ortho{{"x", e0}, {"y", e1}, {"z", e2}};
  rep = marginal_diversity("p", ortho, true);
  for (const auto& e : rep.entries) CHECK(e.diversity == 1.0);
  // Every similarity ties at 0, so the neighbor is the smallest other id.
  CHECK(rep.entries[0].neighbor_id == "y");
  CHECK(rep.entries[1].neighbor_id == "x");
  CHECK(rep.entries[2].neighbor_id == "x");
  CHECK(rep.similarity.size() == 3);
  CHECK(rep.similarity[1][1] == 1.0);

  std::vector<EmbeddedResponse> one{{"a", a}};
  CHECK_THROWS_AS(marginal_diversity("p", one), std::invalid_argument);
}

TEST_CASE("mock-embedded pool matches brute force") {
  genclient::MockEmbedder mock(0, 256);
  std::vector<std::string> texts{"the cat sat on the mat", "a dog ran in the park", "the cat sat on the mat today",
                                 "quantum physics for beginners", "an ode to the morning sun"};
  Embedded e;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    e.ids.push_back("r" + std::to_string(i));
    e.raw.push_back(mock.raw_embedding(texts[i]));
    e.unit.push_back(oracle::unit(e.raw.back()));
  }
  const auto rep = marginal_diversity("p", e.view());
  const auto want = oracle::marginal_diversity(e.ids, e.raw);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    CHECK(std::abs(rep.entries[i].diversity - want.d[i]) <= 1e-12);
    CHECK(rep.entries[i].neighbor_id == want.neighbor[i]);
  }
}

TEST_CASE("identical texts through the embedder score zero") {
  auto t = std::make_shared<genclient::ManagedTransport>(std::make_shared<genclient::MockEmbedder>(3, 64), 4, 0,
                                                         std::chrono::milliseconds(0));
  genclient::EndpointSpec spec;
  spec.role = genclient::Role::embed;
  spec.model_name = "e";
  genclient::EmbedderClient client(t, spec, nullptr);
  const std::vector<std::string> texts{"same words here", "different words entirely", "same words here"};
  const auto vecs = client.embed(texts);
  std::vector<EmbeddedResponse> v{{"a", vecs[0]}, {"b", vecs[1]}, {"c", vecs[2]}};
  const auto rep = marginal_diversity("p", v);
  CHECK(rep.entries[0].diversity == 0.0);
  CHECK(rep.entries[2].diversity == 0.0);
  CHECK(rep.entries[1].diversity > 0.0);
}

TEST_CASE("property: brute-force agreement, permutation invariance, supersets") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    CAPTURE(trial);
    const int n = 2 + static_cast<int>(rng() % 31);
    const int dim = 2 + static_cast<int>(rng() % 24);
    auto e = random_embedded(rng, n, dim);
    // Plant exact duplicates now and then.
    if (trial % 5 == 0) {
      e.raw[1] = e.raw[0];
      e.unit[1] = e.unit[0];
    }
    const auto rep = marginal_diversity("p", e.view());
    const auto want = oracle::marginal_diversity(e.ids, e.raw);
    for (int i = 0; i < n; ++i) {
      const auto& got = rep.entries[static_cast<std::size_t>(i)];
      CHECK(got.response_id == e.ids[static_cast<std::size_t>(i)]);
      CHECK(std::abs(got.diversity - want.d[static_cast<std::size_t>(i)]) <= 1e-12);
      CHECK(got.diversity >= 0.0);
      CHECK(got.diversity <= 2.0);
      CHECK(got.neighbor_id != got.response_id);
    }
    if (trial % 5 == 0) {
      CHECK(rep.entries[0].diversity == 0.0);
      CHECK(rep.entries[1].diversity == 0.0);
    }

    // Permutation: same id gets the same D and neighbor, bit for bit.
    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Embedded shuffled;
    for (auto k : perm) {
      shuffled.ids.push_back(e.ids[k]);
      shuffled.raw.push_back(e.raw[k]);
      shuffled.unit.push_back(e.unit[k]);
    }
    const auto rep2 = marginal_diversity("p", shuffled.view());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      CHECK(rep2.entries[i].diversity == rep.entries[perm[i]].diversity);
      CHECK(rep2.entries[i].neighbor_id == rep.entries[perm[i]].neighbor_id);
    }

    // Adding a response never raises an existing D.
    Embedded bigger = e;
    auto extra = random_embedded(rng, 1, dim);
    bigger.ids.push_back("zz" + extra.ids[0]);
    bigger.raw.push_back(extra.raw[0]);
    bigger.unit.push_back(extra.unit[0]);
    const auto rep3 = marginal_diversity("p", bigger.view());
    for (int i = 0; i < n; ++i) {
      CHECK(rep3.entries[static_cast<std::size_t>(i)].diversity <= rep.entries[static_cast<std::size_t>(i)].diversity);
    }
  }
}

TEST_CASE("apply copies scores by id") {
  PromptPool pool;
  pool.prompt_id = "p";
  for (const char* id : {"a", "b"}) {
    ResponseRecord r;
    r.response_id = id;
    r.prompt_id = "p";
    pool.responses.push_back(r);
  }
  DiversityReport rep{"p", {{"b", 0.25, "a"}, {"a", 0.5, "b"}}, {}};
  apply(rep, pool);
  CHECK(*pool.responses[0].diversity_score == 0.5);
  CHECK(*pool.responses[1].diversity_score == 0.25);
  DiversityReport partial{"p", {{"a", 0.5, "b"}}, {}};
  CHECK_THROWS_AS(apply(partial, pool), std::invalid_argument);
}
