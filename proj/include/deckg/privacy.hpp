#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "deckg/core.hpp"
#include "deckg/rng.hpp"
#include "deckg/vec.hpp"

namespace deckg {

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) fail_data("degenerate embedding: zero norm in cosine similarity");
  return dot(a, b) / (na * nb);
}

// Pr(p_m) = exp(eps * sim(e_pm, e_pj)) / sum_k exp(eps * sim(e_pk, e_pj)),
// computed in log space with max subtraction. Candidates are the
// same-category POIs excluding the target. Probabilities align with the
// candidates span.
inline std::vector<double> selection_distribution(PoiId target, std::span<const PoiId> candidates,
                                                  const EntityLayout& layout,
                                                  std::span<const double> entity_emb,
                                                  double epsilon) {
  if (candidates.empty()) fail_data("selection_distribution: empty candidate set");
  const std::size_t d = entity_emb.size() / layout.n_entities;
  const auto emb_of = [&](PoiId p) {
    return std::span<const double>(entity_emb.data() + layout.entity_of_poi(p) * d, d);
  };
  const auto target_emb = emb_of(target);
  std::vector<double> logits(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    logits[i] = epsilon * cosine_similarity(emb_of(candidates[i]), target_emb);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    denom += l;
  }
  for (double& l : logits) l /= denom;
  return logits;
}

// X'(u_i): every position independently replaced by a same-category draw
// from the exponential mechanism. A POI whose category has no other member
// passes through unchanged (suppressing it would change the history length).
inline DesensitizedHistory desensitize(const CheckInHistory& history, const PoiCatalog& catalog,
                                       const EntityLayout& layout,
                                       std::span<const double> entity_emb, double epsilon,
                                       Rng& rng) {
  if (history.pois.empty()) fail_data("desensitize: empty check-in history");
  DesensitizedHistory out;
  out.user = history.user;
  out.pois.reserve(history.pois.size());
  std::vector<PoiId> candidates;
  for (PoiId p : history.pois) {
    const auto& peers = catalog.pois_in_category(catalog.category_of(p));
    candidates.clear();
    for (PoiId q : peers)
      if (q != p) candidates.push_back(q);
    if (candidates.empty()) {
      out.pois.push_back(p);
      continue;
    }
    const std::vector<double> probs =
        selection_distribution(p, candidates, layout, entity_emb, epsilon);
    out.pois.push_back(candidates[rng.discrete(probs)]);
  }
  return out;
}

// Random-response baseline over the full interaction indicator vector: each
// bit flips with probability 1/(1+e^eps). Kept for comparison experiments;
// the DecKG pipeline never calls it.
inline std::vector<std::uint8_t> random_response(const CheckInHistory& history,
                                                 std::uint64_t n_pois, double epsilon, Rng& rng) {
  if (epsilon < 0) fail_usage("random_response: epsilon must be >= 0");
  std::vector<std::uint8_t> indicator(n_pois, 0);
  for (PoiId p : history.pois) {
    if (p >= n_pois) fail_data("random_response: poi " + std::to_string(p) + " out of range");
    indicator[p] = 1;
  }
  const double flip = 1.0 / (1.0 + std::exp(epsilon));
  for (std::uint64_t p = 0; p < n_pois; ++p)
    if (rng.bernoulli(flip)) indicator[p] ^= 1;
  return indicator;
}

}  // namespace deckg
