#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "deckg/core.hpp"

namespace deckg {

// Immutable triple store over dense entity/relation ids. Triples are kept in
// canonical sorted order; the out index is a CSR view over that order and the
// undirected index (used for propagation degree) holds distinct adjacent
// entities per entity, both edge directions collapsed.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  static KnowledgeGraph build(std::uint64_t n_entities, std::uint64_t n_relations,
                              std::vector<Triple> triples) {
    KnowledgeGraph kg;
    kg.n_entities_ = n_entities;
    kg.n_relations_ = n_relations;
    std::sort(triples.begin(), triples.end());
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const Triple& t = triples[i];
      if (t.head >= n_entities || t.tail >= n_entities)
        fail_data("triple references unknown entity " +
                  std::to_string(t.head >= n_entities ? t.head : t.tail));
      if (t.relation >= n_relations)
        fail_data("triple references unknown relation " + std::to_string(t.relation));
      if (i > 0 && triples[i] == triples[i - 1])
        fail_data("duplicate triple (" + std::to_string(t.head) + "," +
                  std::to_string(t.relation) + "," + std::to_string(t.tail) + ")");
    }
    kg.triples_ = std::move(triples);

    kg.out_offsets_.assign(n_entities + 1, 0);
    for (const Triple& t : kg.triples_) ++kg.out_offsets_[t.head + 1];
    for (std::uint64_t e = 0; e < n_entities; ++e) kg.out_offsets_[e + 1] += kg.out_offsets_[e];

    // Undirected distinct-neighbor lists.
    std::vector<std::vector<EntityId>> adj(n_entities);
    for (const Triple& t : kg.triples_) {
      adj[t.head].push_back(t.tail);
      adj[t.tail].push_back(t.head);
    }
    kg.und_offsets_.assign(n_entities + 1, 0);
    for (std::uint64_t e = 0; e < n_entities; ++e) {
      auto& v = adj[e];
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      kg.und_offsets_[e + 1] = kg.und_offsets_[e] + v.size();
    }
    kg.und_.reserve(kg.und_offsets_[n_entities]);
    for (auto& v : adj) kg.und_.insert(kg.und_.end(), v.begin(), v.end());
    return kg;
  }

  std::uint64_t n_entities() const { return n_entities_; }
  std::uint64_t n_relations() const { return n_relations_; }
  const std::vector<Triple>& triples() const { return triples_; }

  // All triples with the given head, contiguous in canonical order.
  std::span<const Triple> out(EntityId head) const {
    check_entity(head);
    return {triples_.data() + out_offsets_[head],
            out_offsets_[head + 1] - out_offsets_[head]};
  }

  // Distinct entities adjacent to e, counting both edge directions.
  std::span<const EntityId> und_neighbors(EntityId e) const {
    check_entity(e);
    return {und_.data() + und_offsets_[e], und_offsets_[e + 1] - und_offsets_[e]};
  }

  // |G_e| in the propagation normalizer.
  std::uint64_t degree(EntityId e) const { return und_neighbors(e).size(); }

  bool has_triple(const Triple& t) const {
    return std::binary_search(triples_.begin(), triples_.end(), t);
  }

  void check_entity(EntityId e) const {
    if (e >= n_entities_) fail_data("unknown entity " + std::to_string(e));
  }

 private:
  std::uint64_t n_entities_ = 0;
  std::uint64_t n_relations_ = 0;
  std::vector<Triple> triples_;
  std::vector<std::size_t> out_offsets_;
  std::vector<std::size_t> und_offsets_;
  std::vector<EntityId> und_;
};

struct SubKnowledgeGraph {
  UserId owner = 0;
  std::vector<Triple> triples;     // sorted, subset of the parent graph
  std::vector<EntityId> entities;  // sorted distinct endpoints of triples
};

// Forward reachability closure: follow out-edges from the seeds, seeds
// included, visited-set BFS so cycles terminate. hop_limit bounds the number
// of edge traversals from any seed.
inline std::vector<EntityId> reachable_heads(const KnowledgeGraph& kg,
                                             std::span<const EntityId> seeds,
                                             std::optional<std::uint64_t> hop_limit = std::nullopt) {
  std::vector<char> visited(kg.n_entities(), 0);
  std::deque<std::pair<EntityId, std::uint64_t>> queue;
  for (EntityId s : seeds) {
    kg.check_entity(s);
    if (!visited[s]) {
      visited[s] = 1;
      queue.emplace_back(s, 0);
    }
  }
  while (!queue.empty()) {
    auto [e, depth] = queue.front();
    queue.pop_front();
    if (hop_limit && depth >= *hop_limit) continue;
    for (const Triple& t : kg.out(e)) {
      if (!visited[t.tail]) {
        visited[t.tail] = 1;
        queue.emplace_back(t.tail, depth + 1);
      }
    }
  }
  std::vector<EntityId> out;
  for (EntityId e = 0; e < kg.n_entities(); ++e)
    if (visited[e]) out.push_back(e);
  return out;
}

// KG_i: every triple whose head lies in the meta-path closure of the
// desensitized check-in entities. Tails are not re-expanded backwards; an
// empty history yields an empty sub-KG.
inline SubKnowledgeGraph partition_subkg(const KnowledgeGraph& kg, const EntityLayout& layout,
                                         const DesensitizedHistory& desensitized,
                                         std::optional<std::uint64_t> hop_limit = std::nullopt) {
  SubKnowledgeGraph sub;
  sub.owner = desensitized.user;
  if (desensitized.pois.empty()) return sub;

  std::vector<EntityId> seeds;
  seeds.reserve(desensitized.pois.size());
  for (PoiId p : desensitized.pois) {
    if (p >= layout.n_pois) fail_data("check-in poi " + std::to_string(p) + " has no entity mapping");
    seeds.push_back(layout.entity_of_poi(p));
  }
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  const std::vector<EntityId> closure = reachable_heads(kg, seeds, hop_limit);
  for (EntityId h : closure) {
    auto span = kg.out(h);
    sub.triples.insert(sub.triples.end(), span.begin(), span.end());
  }
  std::sort(sub.triples.begin(), sub.triples.end());
  for (const Triple& t : sub.triples) {
    sub.entities.push_back(t.head);
    sub.entities.push_back(t.tail);
  }
  std::sort(sub.entities.begin(), sub.entities.end());
  sub.entities.erase(std::unique(sub.entities.begin(), sub.entities.end()), sub.entities.end());
  return sub;
}

// One-hop variant (the w/o MP ablation): only triples headed directly at a
// desensitized check-in entity.
inline SubKnowledgeGraph partition_subkg_one_hop(const KnowledgeGraph& kg, const EntityLayout& layout,
                                                 const DesensitizedHistory& desensitized) {
  SubKnowledgeGraph sub;
  sub.owner = desensitized.user;
  std::vector<EntityId> seeds;
  for (PoiId p : desensitized.pois) {
    if (p >= layout.n_pois) fail_data("check-in poi " + std::to_string(p) + " has no entity mapping");
    seeds.push_back(layout.entity_of_poi(p));
  }
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  for (EntityId h : seeds) {
    auto span = kg.out(h);
    sub.triples.insert(sub.triples.end(), span.begin(), span.end());
  }
  std::sort(sub.triples.begin(), sub.triples.end());
  for (const Triple& t : sub.triples) {
    sub.entities.push_back(t.head);
    sub.entities.push_back(t.tail);
  }
  std::sort(sub.entities.begin(), sub.entities.end());
  sub.entities.erase(std::unique(sub.entities.begin(), sub.entities.end()), sub.entities.end());
  return sub;
}

}  // namespace deckg
