#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "deckg/core.hpp"
#include "deckg/kg.hpp"
#include "deckg/rng.hpp"

namespace testutil {

using namespace deckg;

inline KnowledgeGraph make_kg(std::uint64_t n_entities, std::uint64_t n_relations,
                              std::vector<Triple> triples) {
  return KnowledgeGraph::build(n_entities, n_relations, std::move(triples));
}

// Random KG with unique triples; used by the property tests.
inline KnowledgeGraph random_kg(Rng& rng, std::uint64_t max_entities, std::uint64_t max_triples,
                                std::uint64_t n_relations = 4) {
  const std::uint64_t n = 2 + rng.below(max_entities - 1);
  const std::uint64_t want = 1 + rng.below(max_triples);
  std::set<Triple> triples;
  for (std::uint64_t i = 0; i < want * 3 && triples.size() < want; ++i)
    triples.insert(Triple{rng.below(n), rng.below(n_relations), rng.below(n)});
  return make_kg(n, n_relations, {triples.begin(), triples.end()});
}

// Random KG that keeps every (head, relation) slot under half-saturated so
// tail-corruption negative sampling always has room.
inline KnowledgeGraph sparse_random_kg(Rng& rng, std::uint64_t n_entities,
                                       std::uint64_t n_triples, std::uint64_t n_relations) {
  std::set<Triple> triples;
  std::map<std::pair<EntityId, RelationId>, std::uint64_t> out_count;
  for (std::uint64_t i = 0; i < n_triples * 5 && triples.size() < n_triples; ++i) {
    Triple t{rng.below(n_entities), rng.below(n_relations), rng.below(n_entities)};
    auto& cnt = out_count[{t.head, t.relation}];
    if (cnt >= n_entities / 2) continue;
    if (triples.insert(t).second) ++cnt;
  }
  return make_kg(n_entities, n_relations, {triples.begin(), triples.end()});
}

// Reachability oracle by boolean matrix powering (closure = sum of powers of
// the adjacency matrix applied to the seed indicator).
inline std::vector<EntityId> oracle_reachable(const KnowledgeGraph& kg,
                                              const std::vector<EntityId>& seeds) {
  const std::size_t n = kg.n_entities();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (const Triple& t : kg.triples()) adj[t.head][t.tail] = true;
  std::vector<bool> reach(n, false);
  for (EntityId s : seeds) reach[s] = true;
  // Power iteration: reach <- reach OR reach*A, n times (enough for any path).
  for (std::size_t step = 0; step < n; ++step) {
    std::vector<bool> next = reach;
    for (std::size_t i = 0; i < n; ++i)
      if (reach[i])
        for (std::size_t j = 0; j < n; ++j)
          if (adj[i][j]) next[j] = true;
    reach = next;
  }
  std::vector<EntityId> out;
  for (std::size_t i = 0; i < n; ++i)
    if (reach[i]) out.push_back(i);
  return out;
}

// Sub-KG oracle: repeated fixed-point expansion over the full triple list.
inline std::vector<Triple> oracle_partition(const KnowledgeGraph& kg,
                                            const std::vector<EntityId>& seeds) {
  std::set<EntityId> closure(seeds.begin(), seeds.end());
  std::set<Triple> picked;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const Triple& t : kg.triples()) {
      if (closure.count(t.head) && !picked.count(t)) {
        picked.insert(t);
        if (!closure.count(t.tail)) {
          closure.insert(t.tail);
        }
        changed = true;
      }
    }
  }
  return {picked.begin(), picked.end()};
}

// Upper critical values of the chi-square distribution at significance 0.01.
inline double chi2_crit_001(std::size_t df) {
  static const double table[] = {0.0,    6.635,  9.210,  11.345, 13.277, 15.086,
                                 16.812, 18.475, 20.090, 21.666, 23.209};
  if (df >= 1 && df <= 10) return table[df];
  // Wilson-Hilferty approximation for larger df.
  const double z = 2.3263;  // 99th percentile of N(0,1)
  const double d = static_cast<double>(df);
  const double t = 1.0 - 2.0 / (9.0 * d) + z * std::sqrt(2.0 / (9.0 * d));
  return d * t * t * t;
}

}  // namespace testutil
