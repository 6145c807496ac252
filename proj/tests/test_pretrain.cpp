#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "deckg/pretrain.hpp"
#include "helpers.hpp"

using namespace deckg;
using testutil::make_kg;

namespace {

Hyperparams small_hp() {
  Hyperparams hp;
  hp.dim_entity = 3;
  hp.dim_relation = 2;
  hp.dim_user = 3;
  hp.layers = 2;
  hp.seed = 42;
  return hp;
}

// Central finite difference of the batch loss with respect to *param.
double fd_probe(const PropGraph& graph, EmbeddingState& st,
                std::span<const std::pair<Triple, Triple>> pairs, Activation act, double* param) {
  const double h = 1e-5;
  const double saved = *param;
  *param = saved + h;
  const double up = kg_batch_loss(graph, st, pairs, act);
  *param = saved - h;
  const double down = kg_batch_loss(graph, st, pairs, act);
  *param = saved;
  return (up - down) / (2.0 * h);
}

bool rel_close(double analytic, double fd, double tol = 1e-4) {
  return std::abs(analytic - fd) <= tol * std::max({1.0, std::abs(analytic), std::abs(fd)});
}

}  // namespace

TEST_CASE("propagate with zero layers returns base embeddings", "[pretrain]") {
  const auto kg = make_kg(3, 1, {{0, 0, 1}});
  const auto st = init_embedding_state(3, 1, small_hp());
  REQUIRE(propagate(kg, st, 0) == st.entity_emb);
}

TEST_CASE("isolated entity with identity layer is a fixed point", "[pretrain]") {
  const auto kg = make_kg(1, 1, {});
  Hyperparams hp = small_hp();
  hp.layers = 1;
  auto st = init_embedding_state(1, 1, hp);
  // W = identity, b = 0 from init; identity activation.
  const auto out = propagate(kg, st, 1, Activation::identity);
  REQUIRE(out == st.entity_emb);
}

TEST_CASE("two-node propagation matches the hand computation", "[pretrain]") {
  // a -- b, both degree 1, eta = 1.
  const auto kg = make_kg(2, 1, {{0, 0, 1}});
  Hyperparams hp = small_hp();
  hp.dim_entity = 2;
  hp.layers = 1;
  auto st = init_embedding_state(2, 1, hp);
  st.entity_emb = {0.1, 0.2, 0.3, -0.1};
  st.layer[0].weight = Mat(2, 2);
  st.layer[0].weight(0, 0) = 1.0;
  st.layer[0].weight(0, 1) = 2.0;
  st.layer[0].weight(1, 0) = 0.0;
  st.layer[0].weight(1, 1) = 1.0;
  st.layer[0].bias = {0.05, -0.02};
  // s_a = e_a + e_b = (0.4, 0.1); W^T s_a = (0.4, 0.9); +b = (0.45, 0.88)
  const auto out = propagate(kg, st, 1, Activation::logistic);
  REQUIRE(out[0] == Catch::Approx(logistic(0.45)).epsilon(1e-12));
  REQUIRE(out[1] == Catch::Approx(logistic(0.88)).epsilon(1e-12));
  const auto ident = propagate(kg, st, 1, Activation::identity);
  REQUIRE(ident[0] == Catch::Approx(0.45).margin(1e-12));
  REQUIRE(ident[1] == Catch::Approx(0.88).margin(1e-12));
}

TEST_CASE("eta for degrees 4 and 9 is exactly one sixth", "[pretrain]") {
  // Entity 0 has 4 distinct neighbors (1,2,3,4); entity 1 has 9 (0,5..12).
  std::vector<Triple> triples;
  for (EntityId t : {1, 2, 3, 4}) triples.push_back({0, 0, t});
  for (EntityId t = 5; t <= 12; ++t) triples.push_back({1, 0, t});
  const auto kg = make_kg(13, 1, triples);
  REQUIRE(kg.degree(0) == 4);
  REQUIRE(kg.degree(1) == 9);
  const auto g = PropGraph::from_kg(kg);
  const auto nbrs = g.neighbors(0);
  const auto etas = g.etas(0);
  bool found = false;
  for (std::size_t i = 0; i < nbrs.size(); ++i)
    if (nbrs[i] == 1) {
      REQUIRE(etas[i] == 1.0 / 6.0);
      found = true;
    }
  REQUIRE(found);
}

TEST_CASE("score of a perfect translation is zero", "[pretrain]") {
  Hyperparams hp = small_hp();
  hp.layers = 1;
  auto st = init_embedding_state(2, 1, hp);
  std::copy(st.entity(0).begin(), st.entity(0).end(), st.entity(1).begin());
  std::fill(st.relation(0).begin(), st.relation(0).end(), 0.0);
  REQUIRE(score(st, st.entity_emb, 0, 0, 1) == 0.0);
}

TEST_CASE("scalar score matches hand arithmetic", "[pretrain]") {
  EmbeddingState st;
  st.n_entities = 2;
  st.n_relations = 1;
  st.dim_entity = 1;
  st.dim_relation = 1;
  st.entity_emb = {1.0, 0.0};
  st.relation_emb = {0.5};
  st.projection = {Mat::truncated_identity(1, 1)};
  REQUIRE(score(st, st.entity_emb, 0, 0, 1) == Catch::Approx(2.25).margin(1e-12));
  REQUIRE_THROWS_AS(score(st, st.entity_emb, 0, 3, 1), Error);
  REQUIRE_THROWS_AS(score(st, st.entity_emb, 5, 0, 1), Error);
}

TEST_CASE("score is head-tail symmetric exactly when the relation vector vanishes", "[pretrain]") {
  Hyperparams hp = small_hp();
  auto st = init_embedding_state(4, 2, hp);
  const auto layered = st.entity_emb;
  std::fill(st.relation(0).begin(), st.relation(0).end(), 0.0);
  REQUIRE(score(st, layered, 1, 0, 2) == Catch::Approx(score(st, layered, 2, 0, 1)).margin(1e-12));
  // Relation 1 keeps its random nonzero vector; swapping the endpoints moves the score.
  REQUIRE(score(st, layered, 1, 1, 2) != Catch::Approx(score(st, layered, 2, 1, 1)).margin(1e-9));
}

TEST_CASE("negative sampling avoids existing triples and the true tail", "[pretrain]") {
  const auto kg = make_kg(3, 1, {{0, 0, 1}});
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Triple neg = sample_negative(kg, {0, 0, 1}, rng);
    REQUIRE(neg.head == 0);
    REQUIRE(neg.relation == 0);
    REQUIRE(neg.tail != 1);
    REQUIRE_FALSE(kg.has_triple(neg));
    REQUIRE((neg.tail == 0 || neg.tail == 2));
  }
}

TEST_CASE("negative sampling is uniform over admissible tails", "[pretrain]") {
  // 10 entities, positives (0,0,1) and (0,0,2): admissible tails for the
  // first positive are {0,3,4,...,9} (excluding tail 1 and the edge to 2).
  const auto kg = make_kg(10, 1, {{0, 0, 1}, {0, 0, 2}});
  std::vector<EntityId> admissible{0, 3, 4, 5, 6, 7, 8, 9};
  const int draws = 10000;
  std::map<EntityId, int> counts;
  Rng rng(17);
  for (int i = 0; i < draws; ++i) ++counts[sample_negative(kg, {0, 0, 1}, rng).tail];
  const double p = 1.0 / static_cast<double>(admissible.size());
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (EntityId t : admissible) {
    const double dev = std::abs(counts[t] - draws * p);
    INFO("tail " << t << " count " << counts[t]);
    REQUIRE(dev <= 3.0 * sigma);
  }
}

TEST_CASE("pathologically dense graph exhausts negative sampling", "[pretrain]") {
  const auto kg = make_kg(3, 1, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}});
  Rng rng(1);
  REQUIRE_THROWS_WITH(sample_negative(kg, {0, 0, 1}, rng),
                      Catch::Matchers::ContainsSubstring("no negative available"));
}

TEST_CASE("equal positive and negative scores cost ln 2", "[pretrain]") {
  // Two entities with identical embeddings: both scores coincide.
  EmbeddingState st;
  st.n_entities = 3;
  st.n_relations = 1;
  st.dim_entity = 2;
  st.dim_relation = 2;
  st.entity_emb = {0.3, -0.2, 0.3, -0.2, 0.3, -0.2};
  st.relation_emb = {0.1, 0.4};
  st.projection = {Mat::truncated_identity(2, 2)};
  const auto kg = make_kg(3, 1, {{0, 0, 1}});
  const auto graph = PropGraph::from_kg(kg);
  std::vector<std::pair<Triple, Triple>> pairs{{{0, 0, 1}, {0, 0, 2}}};
  const double loss = kg_batch_loss(graph, st, pairs, Activation::logistic);
  REQUIRE(loss == Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match finite differences", "[pretrain]") {
  Rng rng(2024);
  const auto kg = testutil::random_kg(rng, 18, 60, 3);
  Hyperparams hp = small_hp();
  hp.layers = 2;
  auto st = init_embedding_state(kg.n_entities(), kg.n_relations(), hp);
  // Perturb layer parameters away from the identity so their gradients are generic.
  for (auto& lp : st.layer) {
    for (double& w : lp.weight.a) w += rng.uniform(-0.2, 0.2);
    for (double& b : lp.bias) b += rng.uniform(-0.1, 0.1);
  }
  const auto graph = PropGraph::from_kg(kg);
  std::vector<std::pair<Triple, Triple>> pairs;
  for (const Triple& t : kg.triples()) {
    if (pairs.size() >= 12) break;
    pairs.push_back({t, sample_negative(kg, t, rng)});
  }
  KgGradient grad;
  kg_batch_loss(graph, st, pairs, Activation::logistic, &grad);

  int probes = 0;
  auto check = [&](double* param, double analytic) {
    const double fd = fd_probe(graph, st, pairs, Activation::logistic, param);
    INFO("analytic " << analytic << " fd " << fd);
    REQUIRE(rel_close(analytic, fd));
    ++probes;
  };
  for (int i = 0; i < 8; ++i) {
    const std::size_t j = rng.below(st.entity_emb.size());
    check(&st.entity_emb[j], grad.entity_emb[j]);
  }
  for (int i = 0; i < 4; ++i) {
    const std::size_t j = rng.below(st.relation_emb.size());
    check(&st.relation_emb[j], grad.relation_emb[j]);
  }
  for (int i = 0; i < 4; ++i) {
    const std::size_t r = rng.below(st.n_relations);
    const std::size_t j = rng.below(st.projection[r].a.size());
    check(&st.projection[r].a[j], grad.projection[r].a[j]);
  }
  for (int i = 0; i < 4; ++i) {
    const std::size_t l = rng.below(st.layer.size());
    const std::size_t j = rng.below(st.layer[l].weight.a.size());
    check(&st.layer[l].weight.a[j], grad.layer_weight[l].a[j]);
  }
  for (int i = 0; i < 2; ++i) {
    const std::size_t l = rng.below(st.layer.size());
    const std::size_t j = rng.below(st.layer[l].bias.size());
    check(&st.layer[l].bias[j], grad.layer_bias[l][j]);
  }
  REQUIRE(probes >= 20);
}

TEST_CASE("pretraining is bitwise reproducible and reduces the loss", "[pretrain]") {
  Rng rng(33);
  const auto kg = testutil::sparse_random_kg(rng, 30, 100, 3);
  Hyperparams hp = small_hp();
  hp.dim_entity = 4;
  hp.dim_relation = 4;
  hp.layers = 1;
  hp.epochs_pretrain = 20;
  hp.gamma = 0.1;
  hp.batch_size = 32;
  const auto a = pretrain(kg, hp);
  const auto b = pretrain(kg, hp);
  REQUIRE(a.epoch_mean_loss == b.epoch_mean_loss);
  REQUIRE(a.state.entity_emb == b.state.entity_emb);
  REQUIRE(a.epoch_mean_loss.back() < a.epoch_mean_loss.front());
}

TEST_CASE("divergent pretraining aborts naming the epoch", "[pretrain]") {
  Rng rng(8);
  const auto kg = testutil::sparse_random_kg(rng, 20, 60, 2);
  Hyperparams hp = small_hp();
  hp.epochs_pretrain = 50;
  hp.gamma = 1e9;
  REQUIRE_THROWS_WITH(pretrain(kg, hp), Catch::Matchers::ContainsSubstring("epoch"));
}

TEST_CASE("empty knowledge graph is rejected", "[pretrain]") {
  const auto kg = make_kg(3, 1, {});
  REQUIRE_THROWS_AS(pretrain(kg, small_hp()), Error);
}

TEST_CASE("checkpoints round-trip bit-exactly", "[pretrain]") {
  Rng rng(12);
  const auto kg = testutil::random_kg(rng, 12, 40, 2);
  Hyperparams hp = small_hp();
  hp.epochs_pretrain = 2;
  const auto result = pretrain(kg, hp);
  const auto dir = std::filesystem::temp_directory_path() / "deckg_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "checkpoint.bin";
  save_checkpoint(path, result.state, hp);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.state.entity_emb == result.state.entity_emb);
  REQUIRE(loaded.state.relation_emb == result.state.relation_emb);
  REQUIRE(loaded.state.projection.size() == result.state.projection.size());
  for (std::size_t r = 0; r < loaded.state.projection.size(); ++r)
    REQUIRE(loaded.state.projection[r].a == result.state.projection[r].a);
  REQUIRE(loaded.state.layer.size() == result.state.layer.size());
  for (std::size_t l = 0; l < loaded.state.layer.size(); ++l) {
    REQUIRE(loaded.state.layer[l].weight.a == result.state.layer[l].weight.a);
    REQUIRE(loaded.state.layer[l].bias == result.state.layer[l].bias);
  }
  REQUIRE(loaded.hyperparams.dim_entity == hp.dim_entity);
  REQUIRE(loaded.hyperparams.seed == hp.seed);
  std::filesystem::remove_all(dir);
}
