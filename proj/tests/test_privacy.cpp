#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "deckg/privacy.hpp"
#include "helpers.hpp"

using namespace deckg;

namespace {

// Embedding table where poi p sits at angle table[p] on the unit circle, so
// cosine similarities are exact by construction.
struct CircleFixture {
  EntityLayout layout;
  std::vector<double> emb;

  explicit CircleFixture(const std::vector<double>& angles) {
    layout = EntityLayout{.n_pois = angles.size(), .n_categories = 0, .n_segments = 0,
                          .n_entities = angles.size()};
    for (double a : angles) {
      emb.push_back(std::cos(a));
      emb.push_back(std::sin(a));
    }
  }
};

}  // namespace

TEST_CASE("cosine similarity basics", "[privacy]") {
  REQUIRE(cosine_similarity(Vec{1, 2, 3}, Vec{1, 2, 3}) == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(cosine_similarity(Vec{1, 0}, Vec{0, 5}) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(cosine_similarity(Vec{1, 0}, Vec{1, 1}) ==
          Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  REQUIRE_THROWS_WITH(cosine_similarity(Vec{0, 0}, Vec{1, 0}),
                      Catch::Matchers::ContainsSubstring("degenerate embedding"));
}

TEST_CASE("zero sensitivity gives the uniform distribution", "[privacy]") {
  CircleFixture fx({0.0, 0.3, 1.2, 2.0, 2.5});
  const std::vector<PoiId> candidates{1, 2, 3, 4};
  const auto probs = selection_distribution(0, candidates, fx.layout, fx.emb, 0.0);
  for (double p : probs) REQUIRE(p == Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("two-candidate distribution matches the scalar softmax", "[privacy]") {
  // Candidate 1 at the target's angle (sim 1), candidate 2 orthogonal (sim 0).
  CircleFixture fx({0.0, 0.0, std::numbers::pi / 2});
  const std::vector<PoiId> candidates{1, 2};
  const auto probs = selection_distribution(0, candidates, fx.layout, fx.emb, 2.0);
  const double e2 = std::exp(2.0);
  REQUIRE(probs[0] == Catch::Approx(e2 / (e2 + 1.0)).epsilon(1e-10));
  REQUIRE(probs[1] == Catch::Approx(1.0 / (e2 + 1.0)).epsilon(1e-10));
  REQUIRE(probs[0] + probs[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("single candidate receives probability one", "[privacy]") {
  CircleFixture fx({0.0, 1.0});
  const auto probs = selection_distribution(0, std::vector<PoiId>{1}, fx.layout, fx.emb, 3.0);
  REQUIRE(probs == std::vector<double>{1.0});
}

TEST_CASE("empty candidate set is rejected", "[privacy]") {
  CircleFixture fx({0.0});
  REQUIRE_THROWS_AS(selection_distribution(0, std::vector<PoiId>{}, fx.layout, fx.emb, 1.0),
                    Error);
}

TEST_CASE("probabilities sum to one even at extreme sensitivity", "[privacy]") {
  CircleFixture fx({0.0, 0.1, 0.5, 1.0, 1.7, 2.9, 3.0});
  const std::vector<PoiId> candidates{1, 2, 3, 4, 5, 6};
  for (double eps : {0.0, 0.5, 2.0, 8.0, 50.0, 800.0}) {
    const auto probs = selection_distribution(0, candidates, fx.layout, fx.emb, eps);
    REQUIRE(std::accumulate(probs.begin(), probs.end(), 0.0) ==
            Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("the most similar candidate's probability increases with epsilon", "[privacy]") {
  CircleFixture fx({0.0, 0.2, 1.0, 2.2});
  const std::vector<PoiId> candidates{1, 2, 3};  // unique argmax: poi 1
  double prev = 0.0;
  for (double eps : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    const auto probs = selection_distribution(0, candidates, fx.layout, fx.emb, eps);
    if (eps > 0.0) REQUIRE(probs[0] > prev);
    prev = probs[0];
  }
}

TEST_CASE("desensitize keeps categories and excludes the target", "[privacy]") {
  // Categories: {0,1,2} in cat 0; {3} singleton in cat 1; {4,5} in cat 2.
  const auto catalog = register_catalog(
      {{0, 0, 0}, {1, 0, 0}, {2, 0, 1}, {3, 1, 0}, {4, 2, 1}, {5, 2, 1}});
  CircleFixture fx({0.0, 0.3, 0.6, 0.9, 1.2, 1.5});
  CheckInHistory hist{3, {0, 3, 4, 0, 5}};
  Rng rng(derive_seed(123, "desensitize", hist.user));
  const auto out = desensitize(hist, catalog, fx.layout, fx.emb, 2.0, rng);
  REQUIRE(out.user == hist.user);
  REQUIRE(out.pois.size() == hist.pois.size());
  for (std::size_t i = 0; i < out.pois.size(); ++i) {
    REQUIRE(catalog.category_of(out.pois[i]) == catalog.category_of(hist.pois[i]));
    if (catalog.pois_in_category(catalog.category_of(hist.pois[i])).size() >= 2)
      REQUIRE(out.pois[i] != hist.pois[i]);
    else
      REQUIRE(out.pois[i] == hist.pois[i]);
  }
}

TEST_CASE("all-singleton categories pass the history through", "[privacy]") {
  const auto catalog = register_catalog({{0, 0, 0}, {1, 1, 0}, {2, 2, 0}});
  CircleFixture fx({0.0, 1.0, 2.0});
  CheckInHistory hist{0, {2, 0, 1, 2}};
  Rng rng(1);
  const auto out = desensitize(hist, catalog, fx.layout, fx.emb, 4.0, rng);
  REQUIRE(out.pois == hist.pois);
}

TEST_CASE("empirical selection frequencies match the exact distribution", "[privacy]") {
  // One category holding the target and 5 candidates.
  const auto catalog = register_catalog(
      {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 0}, {5, 0, 0}});
  CircleFixture fx({0.0, 0.4, 0.9, 1.3, 2.0, 2.8});
  const std::vector<PoiId> candidates{1, 2, 3, 4, 5};
  const auto exact = selection_distribution(0, candidates, fx.layout, fx.emb, 2.0);
  CheckInHistory hist{0, {0}};
  Rng rng(777);
  std::vector<int> counts(6, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto out = desensitize(hist, catalog, fx.layout, fx.emb, 2.0, rng);
    ++counts[out.pois[0]];
  }
  double chi2 = 0.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double observed = counts[candidates[c]] / static_cast<double>(draws);
    REQUIRE(std::abs(observed - exact[c]) <= 0.01);
    const double expected = exact[c] * draws;
    chi2 += (counts[candidates[c]] - expected) * (counts[candidates[c]] - expected) / expected;
  }
  REQUIRE(chi2 < testutil::chi2_crit_001(candidates.size() - 1));
}

TEST_CASE("high sensitivity concentrates on the most similar candidate", "[privacy]") {
  // Candidate 1 aligned with the target, candidates 2 and 3 antipodal.
  CircleFixture fx({0.0, 0.0, std::numbers::pi, std::numbers::pi});
  const std::vector<PoiId> candidates{1, 2, 3};
  const auto probs = selection_distribution(0, candidates, fx.layout, fx.emb, 8.0);
  const double expected = std::exp(8.0) / (std::exp(8.0) + 2.0 * std::exp(-8.0));
  REQUIRE(probs[0] == Catch::Approx(expected).epsilon(1e-10));
  REQUIRE(probs[0] > 0.9999);
}

TEST_CASE("random response flip probabilities", "[privacy]") {
  REQUIRE(1.0 / (1.0 + std::exp(0.0)) == 0.5);
  REQUIRE(1.0 / (1.0 + std::exp(std::log(3.0))) == Catch::Approx(0.25).epsilon(1e-12));
  const std::uint64_t n_pois = 50;
  CheckInHistory hist{0, {1, 5, 7}};
  for (double eps : {0.0, std::log(3.0)}) {
    Rng rng(99);
    const double flip = 1.0 / (1.0 + std::exp(eps));
    std::uint64_t flips = 0, total = 0;
    for (int rep = 0; rep < 2000; ++rep) {
      const auto ind = random_response(hist, n_pois, eps, rng);
      for (PoiId p = 0; p < n_pois; ++p) {
        const bool truth = (p == 1 || p == 5 || p == 7);
        if (ind[p] != static_cast<std::uint8_t>(truth)) ++flips;
        ++total;
      }
    }
    const double rate = static_cast<double>(flips) / static_cast<double>(total);
    REQUIRE(std::abs(rate - flip) < 0.01);
  }
}
