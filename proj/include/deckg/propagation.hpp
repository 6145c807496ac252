#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "deckg/core.hpp"
#include "deckg/kg.hpp"
#include "deckg/util.hpp"
#include "deckg/vec.hpp"

namespace deckg {

struct LayerParams {
  Mat weight;  // d x d
  Vec bias;    // d
};

// Undirected aggregation graph over compact node indices, with the
// normalizer eta = 1/sqrt(|G_t|*|G_h|) precomputed per edge. Built either
// from the full KG (node == entity id) or from a sub-KG (nodes are the
// sub-KG's entities; degrees are sub-KG degrees).
struct PropGraph {
  std::size_t n = 0;
  std::vector<std::size_t> offsets;  // n + 1
  std::vector<std::uint32_t> nbr;
  std::vector<double> eta;

  std::span<const std::uint32_t> neighbors(std::size_t v) const {
    return {nbr.data() + offsets[v], offsets[v + 1] - offsets[v]};
  }
  std::span<const double> etas(std::size_t v) const {
    return {eta.data() + offsets[v], offsets[v + 1] - offsets[v]};
  }

  static PropGraph from_adjacency(std::vector<std::vector<std::uint32_t>> adj) {
    PropGraph g;
    g.n = adj.size();
    g.offsets.assign(g.n + 1, 0);
    for (std::size_t v = 0; v < g.n; ++v) {
      auto& lst = adj[v];
      std::sort(lst.begin(), lst.end());
      lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
      g.offsets[v + 1] = g.offsets[v] + lst.size();
    }
    g.nbr.reserve(g.offsets[g.n]);
    for (auto& lst : adj) g.nbr.insert(g.nbr.end(), lst.begin(), lst.end());
    g.eta.resize(g.nbr.size());
    for (std::size_t v = 0; v < g.n; ++v) {
      const double dv = static_cast<double>(g.offsets[v + 1] - g.offsets[v]);
      for (std::size_t i = g.offsets[v]; i < g.offsets[v + 1]; ++i) {
        const std::uint32_t u = g.nbr[i];
        const double du = static_cast<double>(g.offsets[u + 1] - g.offsets[u]);
        g.eta[i] = 1.0 / std::sqrt(dv * du);
      }
    }
    return g;
  }

  static PropGraph from_kg(const KnowledgeGraph& kg) {
    std::vector<std::vector<std::uint32_t>> adj(kg.n_entities());
    for (EntityId e = 0; e < kg.n_entities(); ++e) {
      auto nb = kg.und_neighbors(e);
      adj[e].assign(nb.begin(), nb.end());
    }
    return from_adjacency(std::move(adj));
  }

  // Nodes are positions in the (sorted) entity list of the sub-KG.
  static PropGraph from_subkg(const SubKnowledgeGraph& sub) {
    const auto& ents = sub.entities;
    auto index_of = [&ents](EntityId e) {
      return static_cast<std::uint32_t>(
          std::lower_bound(ents.begin(), ents.end(), e) - ents.begin());
    };
    std::vector<std::vector<std::uint32_t>> adj(ents.size());
    for (const Triple& t : sub.triples) {
      const std::uint32_t h = index_of(t.head);
      const std::uint32_t g = index_of(t.tail);
      adj[h].push_back(g);
      adj[g].push_back(h);
    }
    return from_adjacency(std::move(adj));
  }
};

// Cached activations of one forward pass, enough to run the exact backward.
struct PropForward {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> emb;  // layers+1 buffers of n*dim; emb[0] = base
  std::vector<std::vector<double>> agg;  // layers buffers of n*dim (pre-W aggregates)

  std::span<const double> top() const { return emb.back(); }
  std::span<const double> row(std::size_t layer, std::size_t v) const {
    return {emb[layer].data() + v * dim, dim};
  }
};

// e_t^l = act(W_l^T (e_t^{l-1} + sum_{h in G_t} eta_th e_h^{l-1}) + b_l).
// Degree-0 nodes have an empty neighbor sum and keep the self term only.
inline PropForward propagate_forward(const PropGraph& g, std::span<const double> base,
                                     std::span<const LayerParams> layers, Activation act,
                                     std::size_t threads = 1) {
  const std::size_t n = g.n;
  if (n == 0) return {};
  const std::size_t d = base.size() / n;
  PropForward f;
  f.n = n;
  f.dim = d;
  f.emb.emplace_back(base.begin(), base.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& prev = f.emb[l];
    std::vector<double> aggregate(n * d);
    std::vector<double> next(n * d);
    const Mat& w = layers[l].weight;
    const Vec& b = layers[l].bias;
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> z(d);
      for (std::size_t v = lo; v < hi; ++v) {
        double* s = aggregate.data() + v * d;
        const double* self = prev.data() + v * d;
        for (std::size_t i = 0; i < d; ++i) s[i] = self[i];
        const auto nbrs = g.neighbors(v);
        const auto etas = g.etas(v);
        for (std::size_t e = 0; e < nbrs.size(); ++e)
          axpy(etas[e], {prev.data() + nbrs[e] * d, d}, {s, d});
        matvec_transposed(w, {s, d}, z);
        double* out = next.data() + v * d;
        for (std::size_t i = 0; i < d; ++i) out[i] = activate(act, z[i] + b[i]);
      }
    });
    f.agg.push_back(std::move(aggregate));
    f.emb.push_back(std::move(next));
  }
  return f;
}

struct PropBackward {
  std::vector<double> base_grad;  // n*dim
  std::vector<Mat> weight_grad;   // one per layer
  std::vector<Vec> bias_grad;
};

// Pulls a cotangent at the top layer back to the base embeddings and the
// layer parameters. The neighbor spread uses the gather form over the
// symmetric adjacency, so it parallelizes without write races.
inline PropBackward propagate_backward(const PropGraph& g, const PropForward& f,
                                       std::span<const LayerParams> layers, Activation act,
                                       std::vector<double> top_cotangent,
                                       std::size_t threads = 1) {
  const std::size_t n = f.n;
  const std::size_t d = f.dim;
  PropBackward back;
  back.weight_grad.reserve(layers.size());
  back.bias_grad.reserve(layers.size());
  for (const LayerParams& lp : layers) {
    back.weight_grad.emplace_back(lp.weight.rows, lp.weight.cols);
    back.bias_grad.emplace_back(lp.bias.size(), 0.0);
  }
  std::vector<double> cot = std::move(top_cotangent);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Mat& w = layers[l].weight;
    const auto& out = f.emb[l + 1];
    const auto& aggregate = f.agg[l];
    std::vector<double> gz(n * d);
    std::vector<double> gs(n * d);
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t v = lo; v < hi; ++v) {
        const double* c = cot.data() + v * d;
        const double* y = out.data() + v * d;
        double* z = gz.data() + v * d;
        for (std::size_t i = 0; i < d; ++i) z[i] = c[i] * activate_grad_from_output(act, y[i]);
        matvec(w, {z, d}, {gs.data() + v * d, d});
      }
    });
    Mat& wg = back.weight_grad[l];
    Vec& bg = back.bias_grad[l];
    for (std::size_t v = 0; v < n; ++v) {
      const double* z = gz.data() + v * d;
      axpy(1.0, {z, d}, bg);
      outer_acc(wg, 1.0, {aggregate.data() + v * d, d}, {z, d});
    }
    std::vector<double> prev_cot(n * d);
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t v = lo; v < hi; ++v) {
        double* c = prev_cot.data() + v * d;
        const double* self = gs.data() + v * d;
        for (std::size_t i = 0; i < d; ++i) c[i] = self[i];
        const auto nbrs = g.neighbors(v);
        const auto etas = g.etas(v);
        for (std::size_t e = 0; e < nbrs.size(); ++e)
          axpy(etas[e], {gs.data() + nbrs[e] * d, d}, {c, d});
      }
    });
    cot = std::move(prev_cot);
  }
  back.base_grad = std::move(cot);
  return back;
}

}  // namespace deckg
