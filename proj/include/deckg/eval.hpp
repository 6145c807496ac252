#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <span>
#include <vector>

#include "deckg/client.hpp"
#include "deckg/core.hpp"
#include "deckg/rng.hpp"
#include "deckg/util.hpp"

namespace deckg {

// Per-user 8:1:1 partition of the deduplicated history. Validation and test
// take floor(n/10) each; train keeps the remainder.
struct Split {
  std::vector<std::vector<PoiId>> train;
  std::vector<std::vector<PoiId>> val;
  std::vector<std::vector<PoiId>> test;

  std::size_t n_users() const { return train.size(); }
};

inline Split build_split(std::span<const CheckInHistory> histories, std::uint64_t seed) {
  Split split;
  split.train.resize(histories.size());
  split.val.resize(histories.size());
  split.test.resize(histories.size());
  for (std::size_t u = 0; u < histories.size(); ++u) {
    std::vector<PoiId> unique = histories[u].pois;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    Rng rng(derive_seed(seed, "split", u));
    rng.shuffle(unique);
    const std::size_t n = unique.size();
    const std::size_t n_val = n / 10;
    const std::size_t n_test = n / 10;
    split.val[u].assign(unique.begin(), unique.begin() + n_val);
    split.test[u].assign(unique.begin() + n_val, unique.begin() + n_val + n_test);
    split.train[u].assign(unique.begin() + n_val + n_test, unique.end());
    std::sort(split.val[u].begin(), split.val[u].end());
    std::sort(split.test[u].begin(), split.test[u].end());
    std::sort(split.train[u].begin(), split.train[u].end());
  }
  return split;
}

// DCG@k with binary gains over a 1-indexed ranking; IDCG fills the first
// min(k, |relevant|) ranks.
inline double ndcg_at_k(std::span<const PoiId> ranking, std::span<const PoiId> relevant,
                        std::uint64_t k) {
  if (k < 1) fail_usage("ndcg_at_k: k must be >= 1");
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  const std::size_t top = std::min<std::size_t>(k, ranking.size());
  for (std::size_t i = 0; i < top; ++i)
    if (std::binary_search(relevant.begin(), relevant.end(), ranking[i]))
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  double idcg = 0.0;
  const std::size_t ideal = std::min<std::size_t>(k, relevant.size());
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

inline double recall_at_k(std::span<const PoiId> ranking, std::span<const PoiId> relevant,
                          std::uint64_t k) {
  if (k < 1) fail_usage("recall_at_k: k must be >= 1");
  if (relevant.empty()) {
    std::cerr << "warning: recall_at_k over an empty relevant set, defined as 0\n";
    return 0.0;
  }
  std::size_t hits = 0;
  const std::size_t top = std::min<std::size_t>(k, ranking.size());
  for (std::size_t i = 0; i < top; ++i)
    if (std::binary_search(relevant.begin(), relevant.end(), ranking[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

struct MetricsReport {
  std::map<std::uint64_t, double> ndcg;    // k -> mean NDCG@k
  std::map<std::uint64_t, double> recall;  // k -> mean Recall@k
  std::uint64_t users_evaluated = 0;
};

struct EvalOptions {
  std::vector<std::uint64_t> ks{10, 20};
  // When set, rank against relevant + a seeded sample of this many
  // non-interacted candidates instead of the full catalog.
  std::optional<std::uint64_t> sampled_candidates;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Ranks every catalog POI except the user's training POIs by the client's
// prediction (ties broken by ascending poi id) and averages NDCG@k/Recall@k
// over users whose relevant set is non-empty.
inline MetricsReport evaluate(std::span<const ClientState> clients, const EmbeddingState& base,
                              const EntityLayout& layout,
                              const std::vector<std::vector<PoiId>>& train_pois,
                              const std::vector<std::vector<PoiId>>& relevant_pois,
                              const EvalOptions& opts = {}) {
  MetricsReport report;
  for (std::uint64_t k : opts.ks) {
    report.ndcg[k] = 0.0;
    report.recall[k] = 0.0;
  }
  const std::uint64_t n_pois = layout.n_pois;
  std::vector<std::map<std::uint64_t, std::pair<double, double>>> per_user(clients.size());
  std::vector<std::uint8_t> counted(clients.size(), 0);
  parallel_for(clients.size(), opts.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t u = lo; u < hi; ++u) {
      const auto& relevant = relevant_pois[u];
      if (relevant.empty()) continue;
      const ClientState& st = clients[u];
      const PropForward fwd = forward_local(st);
      const Vec uproj = projected_user(st);
      const auto& train = train_pois[u];

      std::vector<PoiId> candidates;
      if (opts.sampled_candidates) {
        candidates = relevant;
        Rng rng(derive_seed(opts.seed, "eval-candidates", u));
        std::vector<std::uint8_t> taken(n_pois, 0);
        for (PoiId p : relevant) taken[p] = 1;
        for (PoiId p : train) taken[p] = 1;
        std::uint64_t want = *opts.sampled_candidates;
        for (std::uint64_t attempt = 0; attempt < want * 50 && want > 0; ++attempt) {
          const PoiId p = rng.below(n_pois);
          if (!taken[p]) {
            taken[p] = 1;
            candidates.push_back(p);
            --want;
          }
        }
      } else {
        candidates.reserve(n_pois - train.size());
        for (PoiId p = 0; p < n_pois; ++p)
          if (!std::binary_search(train.begin(), train.end(), p)) candidates.push_back(p);
      }

      std::vector<std::pair<double, PoiId>> scored;
      scored.reserve(candidates.size());
      for (PoiId p : candidates) {
        const Prediction pr = predict_from(st, fwd.top(), uproj, base, layout, p);
        scored.push_back({pr.value, p});
      }
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      std::vector<PoiId> ranking;
      ranking.reserve(scored.size());
      for (const auto& [_, p] : scored) ranking.push_back(p);

      counted[u] = 1;
      for (std::uint64_t k : opts.ks)
        per_user[u][k] = {ndcg_at_k(ranking, relevant, k), recall_at_k(ranking, relevant, k)};
    }
  });
  for (std::size_t u = 0; u < clients.size(); ++u) {
    if (!counted[u]) continue;
    ++report.users_evaluated;
    for (std::uint64_t k : opts.ks) {
      report.ndcg[k] += per_user[u][k].first;
      report.recall[k] += per_user[u][k].second;
    }
  }
  if (report.users_evaluated > 0)
    for (std::uint64_t k : opts.ks) {
      report.ndcg[k] /= static_cast<double>(report.users_evaluated);
      report.recall[k] /= static_cast<double>(report.users_evaluated);
    }
  return report;
}

}  // namespace deckg
