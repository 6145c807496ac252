#include <catch2/catch_amalgamated.hpp>

#include "deckg/core.hpp"

using namespace deckg;

TEST_CASE("single-element catalog", "[domain]") {
  const auto cat = register_catalog({{0, 0, 0}});
  REQUIRE(cat.n_pois() == 1);
  REQUIRE(cat.category_of(0) == 0);
  REQUIRE(cat.segment_of(0) == 0);
  REQUIRE(cat.pois_in_category(0) == std::vector<PoiId>{0});
}

TEST_CASE("duplicate poi is rejected by name", "[domain]") {
  REQUIRE_THROWS_WITH(register_catalog({{0, 0, 0}, {0, 1, 0}}),
                      Catch::Matchers::ContainsSubstring("duplicate poi 0"));
}

TEST_CASE("dangling category and segment are rejected", "[domain]") {
  REQUIRE_THROWS_WITH(register_catalog({{0, 5, 0}}, 2, 2),
                      Catch::Matchers::ContainsSubstring("dangling category"));
  REQUIRE_THROWS_WITH(register_catalog({{0, 0, 7}}, 2, 2),
                      Catch::Matchers::ContainsSubstring("dangling segment"));
}

TEST_CASE("poi ids must be dense", "[domain]") {
  REQUIRE_THROWS_WITH(register_catalog({{5, 0, 0}}),
                      Catch::Matchers::ContainsSubstring("out of dense range"));
}

TEST_CASE("reverse indices group pois", "[domain]") {
  const auto cat = register_catalog({{0, 1, 0}, {1, 0, 1}, {2, 1, 1}});
  REQUIRE(cat.pois_in_category(1) == std::vector<PoiId>{0, 2});
  REQUIRE(cat.pois_in_segment(1) == std::vector<PoiId>{1, 2});
}

TEST_CASE("catalog scales to the Beijing poi count", "[domain]") {
  std::vector<std::tuple<PoiId, CategoryId, SegmentId>> rows;
  rows.reserve(177602);
  for (std::uint64_t p = 0; p < 177602; ++p) rows.push_back({p, p % 311, p % 97});
  const auto cat = register_catalog(rows);
  REQUIRE(cat.n_pois() == 177602);
}

TEST_CASE("derived categories are element-wise consistent", "[domain]") {
  const auto cat = register_catalog({{0, 3, 0}, {1, 1, 0}, {2, 3, 1}});
  CheckInHistory h{7, {2, 0, 0, 1}};
  const auto cats = cat.categories_of(h);
  REQUIRE(cats.size() == h.pois.size());
  for (std::size_t i = 0; i < h.pois.size(); ++i) REQUIRE(cats[i] == cat.category_of(h.pois[i]));
}

TEST_CASE("entity layout maps the three kinds disjointly", "[domain]") {
  EntityLayout layout{.n_pois = 10, .n_categories = 3, .n_segments = 2, .n_entities = 20};
  layout.validate();
  REQUIRE(layout.entity_of_poi(9) == 9);
  REQUIRE(layout.entity_of_category(0) == 10);
  REQUIRE(layout.entity_of_segment(0) == 13);
  REQUIRE(layout.entity_of_segment(1) == 14);
  EntityLayout bad{.n_pois = 10, .n_categories = 3, .n_segments = 2, .n_entities = 12};
  REQUIRE_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("hyperparameter invariants", "[domain]") {
  Hyperparams hp;
  REQUIRE_NOTHROW(hp.validate());
  Hyperparams bad = hp;
  bad.mu = 1.5;
  REQUIRE_THROWS_AS(bad.validate(), Error);
  bad = hp;
  bad.epsilon = -0.1;
  REQUIRE_THROWS_AS(bad.validate(), Error);
  bad = hp;
  bad.dim_entity = 0;
  REQUIRE_THROWS_AS(bad.validate(), Error);
  bad = hp;
  bad.layers = 0;
  REQUIRE_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("error kinds carry exit codes", "[domain]") {
  try {
    fail_data("boom");
    FAIL("unreachable");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::data);
    REQUIRE(e.exit_code() == 2);
  }
}
