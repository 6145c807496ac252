#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "deckg/core.hpp"
#include "deckg/util.hpp"
#include "deckg/vec.hpp"

namespace deckg {

// Server-side view of one user, computed exclusively from the desensitized
// upload: mean embedding of the uploaded check-ins plus segment visit counts.
struct UserProfile {
  UserId user = 0;
  Vec mean_emb;
  std::vector<std::uint64_t> segment_counts;  // indexed by SegmentId
  SegmentId primary_segment = 0;
};

inline UserProfile build_profile(const DesensitizedHistory& upload, const PoiCatalog& catalog,
                                 const EntityLayout& layout,
                                 std::span<const double> entity_emb, std::uint64_t n_segments) {
  if (upload.pois.empty()) fail_data("profile requires a non-empty upload");
  const std::size_t d = entity_emb.size() / layout.n_entities;
  UserProfile p;
  p.user = upload.user;
  p.mean_emb.assign(d, 0.0);
  p.segment_counts.assign(n_segments, 0);
  for (PoiId poi : upload.pois) {
    axpy(1.0, {entity_emb.data() + layout.entity_of_poi(poi) * d, d}, p.mean_emb);
    ++p.segment_counts[catalog.segment_of(poi)];
  }
  for (double& x : p.mean_emb) x /= static_cast<double>(upload.pois.size());
  // Modal segment; ties resolved toward the smallest id.
  std::uint64_t best = 0;
  for (SegmentId s = 0; s < n_segments; ++s)
    if (p.segment_counts[s] > best) {
      best = p.segment_counts[s];
      p.primary_segment = s;
    }
  return p;
}

// Squared L2 between mean upload embeddings. The paper labels this
// "similarity" but it is a distance: smaller means more similar.
inline double user_distance(const UserProfile& a, const UserProfile& b) {
  if (a.mean_emb.empty() || b.mean_emb.empty()) fail_data("user_distance on empty profile");
  double s = 0.0;
  for (std::size_t i = 0; i < a.mean_emb.size(); ++i) {
    const double diff = a.mean_emb[i] - b.mean_emb[i];
    s += diff * diff;
  }
  return s;
}

// u_j is a geographical neighbor of u_i iff u_j visited u_i's primary
// segment. Above the cap, candidates with the most visits in that segment
// win; ties go to the smaller user id.
inline std::vector<std::vector<UserId>> assign_geo_neighbors(std::span<const UserProfile> profiles,
                                                             std::uint64_t cap) {
  const std::size_t n = profiles.size();
  std::vector<std::vector<UserId>> geo(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SegmentId seg = profiles[i].primary_segment;
    std::vector<std::pair<std::uint64_t, UserId>> candidates;  // (visits, id)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const std::uint64_t visits = profiles[j].segment_counts[seg];
      if (visits > 0) candidates.push_back({visits, profiles[j].user});
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    if (candidates.size() > cap) candidates.resize(cap);
    for (const auto& [_, id] : candidates) geo[i].push_back(id);
    std::sort(geo[i].begin(), geo[i].end());
  }
  return geo;
}

// For each user: as many semantic neighbors as geographical ones, drawn from
// the remaining users by smallest profile distance (ties to the smaller id).
inline std::vector<std::vector<UserId>> assign_semantic_neighbors(
    std::span<const UserProfile> profiles, const std::vector<std::vector<UserId>>& geo,
    std::size_t threads = 1) {
  const std::size_t n = profiles.size();
  std::vector<std::vector<UserId>> sem(n);
  parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t want = geo[i].size();
      if (want == 0) continue;
      std::vector<std::pair<double, UserId>> candidates;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (std::binary_search(geo[i].begin(), geo[i].end(), profiles[j].user)) continue;
        candidates.push_back({user_distance(profiles[i], profiles[j]), profiles[j].user});
      }
      std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
      });
      if (candidates.size() > want) candidates.resize(want);
      for (const auto& [_, id] : candidates) sem[i].push_back(id);
      std::sort(sem[i].begin(), sem[i].end());
    }
  });
  return sem;
}

// w_j = exp(-distance_j) / sum_k exp(-distance_k), computed with max
// subtraction; aligned with the neighbors span.
inline std::vector<double> affinity_weights(const UserProfile& owner,
                                            std::span<const UserProfile> neighbors) {
  if (neighbors.empty()) fail_data("affinity_weights: empty neighbor list");
  std::vector<double> logits(neighbors.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j)
    logits[j] = -user_distance(owner, neighbors[j]);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    denom += l;
  }
  for (double& l : logits) l /= denom;
  return logits;
}

// N(u_i) = N_geo u N_sem with affinity weights over the union.
struct NeighborSet {
  UserId owner = 0;
  std::vector<UserId> geo;
  std::vector<UserId> sem;
  std::vector<std::pair<UserId, double>> weights;  // sorted by neighbor id

  std::vector<UserId> all() const {
    std::vector<UserId> out;
    out.reserve(weights.size());
    for (const auto& [id, _] : weights) out.push_back(id);
    return out;
  }
};

// profiles must be indexed by user id (dense users, ascending order).
inline std::vector<NeighborSet> assign_neighbors(std::span<const UserProfile> profiles,
                                                 std::uint64_t cap, std::size_t threads = 1) {
  if (profiles.size() < 2) fail_data("neighbor assignment requires at least 2 users");
  for (std::size_t i = 0; i < profiles.size(); ++i)
    if (profiles[i].user != i) fail_data("profiles must be dense and ordered by user id");
  const auto geo = assign_geo_neighbors(profiles, cap);
  const auto sem = assign_semantic_neighbors(profiles, geo, threads);
  std::vector<NeighborSet> out(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    NeighborSet& ns = out[i];
    ns.owner = profiles[i].user;
    ns.geo = geo[i];
    ns.sem = sem[i];
    std::vector<UserId> merged = geo[i];
    merged.insert(merged.end(), sem[i].begin(), sem[i].end());
    std::sort(merged.begin(), merged.end());
    if (merged.empty()) continue;
    std::vector<UserProfile> nbr_profiles;
    for (UserId id : merged) nbr_profiles.push_back(profiles[id]);
    const auto w = affinity_weights(profiles[i], nbr_profiles);
    for (std::size_t j = 0; j < merged.size(); ++j) ns.weights.push_back({merged[j], w[j]});
  }
  return out;
}

}  // namespace deckg
