#pragma once

#include <algorithm>
#include <cstring>
#include <optional>
#include <span>
#include <vector>

#include "deckg/core.hpp"
#include "deckg/kg.hpp"
#include "deckg/pretrain.hpp"
#include "deckg/propagation.hpp"
#include "deckg/rng.hpp"
#include "deckg/vec.hpp"

namespace deckg {

// The only payload a client ever emits: sparse entity-embedding gradients.
// There is no field that could carry a user embedding or a raw check-in list.
struct GradientMessage {
  UserId sender = 0;
  std::uint64_t round = 0;
  std::uint64_t dim = 0;
  std::vector<std::pair<EntityId, Vec>> grads;  // sorted by entity id

  // Canonical little-endian form: sender, round, dim, count, then
  // (entity id, dim doubles) per entry in ascending entity order.
  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(32 + grads.size() * (8 + dim * 8));
    auto put_u64 = [&out](std::uint64_t v) {
      const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(&v);
      out.insert(out.end(), p, p + 8);
    };
    put_u64(sender);
    put_u64(round);
    put_u64(dim);
    put_u64(grads.size());
    for (const auto& [e, g] : grads) {
      put_u64(e);
      const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(g.data());
      out.insert(out.end(), p, p + g.size() * 8);
    }
    return out;
  }

  static GradientMessage parse(std::span<const std::uint8_t> bytes) {
    GradientMessage m;
    std::size_t off = 0;
    auto get_u64 = [&bytes, &off]() {
      if (off + 8 > bytes.size()) fail_data("gradient message truncated");
      std::uint64_t v;
      std::memcpy(&v, bytes.data() + off, 8);
      off += 8;
      return v;
    };
    m.sender = get_u64();
    m.round = get_u64();
    m.dim = get_u64();
    const std::uint64_t count = get_u64();
    m.grads.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const EntityId e = get_u64();
      if (off + m.dim * 8 > bytes.size()) fail_data("gradient message truncated");
      Vec g(m.dim);
      std::memcpy(g.data(), bytes.data() + off, m.dim * 8);
      off += m.dim * 8;
      m.grads.push_back({e, std::move(g)});
    }
    if (off != bytes.size()) fail_data("gradient message has trailing bytes");
    return m;
  }
};

// Per-user on-device state. local_emb covers exactly the sub-KG entities;
// the user embedding never leaves this struct.
struct ClientState {
  UserId user = 0;
  Vec user_emb;                    // K
  std::vector<EntityId> entities;  // sorted sub-KG entities (global ids)
  std::vector<double> local_emb;   // |entities| x d
  std::vector<LayerParams> theta;  // local propagation parameters
  std::optional<Mat> bridge;       // K x d when K != d
  PropGraph graph;                 // sub-KG undirected adjacency
  std::vector<PoiId> train_pois;   // O_i: deduped training positives
  std::vector<std::uint8_t> history_member;  // over all POIs; negative exclusion
  Activation activation = Activation::logistic;

  std::uint64_t dim() const { return bridge ? bridge->cols : user_emb.size(); }

  std::optional<std::size_t> local_index(EntityId e) const {
    const auto it = std::lower_bound(entities.begin(), entities.end(), e);
    if (it == entities.end() || *it != e) return std::nullopt;
    return static_cast<std::size_t>(it - entities.begin());
  }

  bool finite() const {
    if (!all_finite(user_emb) || !all_finite(local_emb)) return false;
    for (const auto& lp : theta)
      if (!all_finite(lp.weight.a) || !all_finite(lp.bias)) return false;
    if (bridge && !all_finite(bridge->a)) return false;
    return true;
  }
};

// Entity embeddings start from the pretrained checkpoint restricted to the
// sub-KG; theta starts from the pretrained layer parameters and fine-tunes
// locally from there.
inline ClientState init_client(UserId user, const SubKnowledgeGraph& subkg,
                               const EmbeddingState& pretrained,
                               std::span<const PoiId> train_pois,
                               std::span<const PoiId> full_history, std::uint64_t n_pois,
                               const Hyperparams& hp) {
  ClientState st;
  st.user = user;
  st.activation = hp.activation;
  st.entities = subkg.entities;
  const std::size_t d = pretrained.dim_entity;
  st.local_emb.resize(st.entities.size() * d);
  for (std::size_t i = 0; i < st.entities.size(); ++i) {
    const auto row = pretrained.entity(st.entities[i]);
    std::copy(row.begin(), row.end(), st.local_emb.begin() + i * d);
  }
  st.theta = pretrained.layer;
  st.graph = PropGraph::from_subkg(subkg);
  Rng rng(derive_seed(hp.seed, "user-emb", user));
  const double b = 0.5 / std::sqrt(static_cast<double>(hp.dim_user));
  st.user_emb.resize(hp.dim_user);
  for (double& x : st.user_emb) x = rng.uniform(-b, b);
  if (hp.dim_user != d) st.bridge = Mat::truncated_identity(hp.dim_user, d);
  st.train_pois.assign(train_pois.begin(), train_pois.end());
  std::sort(st.train_pois.begin(), st.train_pois.end());
  st.train_pois.erase(std::unique(st.train_pois.begin(), st.train_pois.end()),
                      st.train_pois.end());
  st.history_member.assign(n_pois, 0);
  for (PoiId p : full_history) {
    if (p >= n_pois) fail_data("history poi out of range");
    st.history_member[p] = 1;
  }
  return st;
}

// u_i mapped into entity space (identity when K == d).
inline Vec projected_user(const ClientState& st) {
  if (!st.bridge) return st.user_emb;
  Vec out(st.bridge->cols);
  matvec_transposed(*st.bridge, st.user_emb, out);
  return out;
}

inline PropForward forward_local(const ClientState& st, std::size_t threads = 1) {
  return propagate_forward(st.graph, st.local_emb, st.theta, st.activation, threads);
}

struct Prediction {
  double value = 0.0;
  bool cold = false;  // scored from the frozen pretrained embedding
};

// y_hat = logistic(u . e_p^L) with e_p^L from the sub-KG propagation; POIs
// outside the sub-KG fall back to the frozen pretrained base embedding.
inline Prediction predict_from(const ClientState& st, std::span<const double> layered_top,
                               std::span<const double> user_proj, const EmbeddingState& base,
                               const EntityLayout& layout, PoiId poi) {
  const EntityId e = layout.entity_of_poi(poi);
  const std::size_t d = base.dim_entity;
  if (const auto idx = st.local_index(e)) {
    return {logistic(dot(user_proj, {layered_top.data() + *idx * d, d})), false};
  }
  return {logistic(dot(user_proj, base.entity(e))), true};
}

inline Prediction predict_detail(const ClientState& st, const EmbeddingState& base,
                                 const EntityLayout& layout, PoiId poi) {
  if (poi >= layout.n_pois) fail_data("predict: unknown poi " + std::to_string(poi));
  const PropForward fwd = forward_local(st);
  return predict_from(st, fwd.top(), projected_user(st), base, layout, poi);
}

inline double predict(const ClientState& st, const EmbeddingState& base,
                      const EntityLayout& layout, PoiId poi) {
  return predict_detail(st, base, layout, poi).value;
}

struct ClientGradients {
  double loss = 0.0;
  Vec user_grad;                    // K
  std::vector<double> entity_grad;  // |entities| x d
  std::vector<Mat> theta_weight_grad;
  std::vector<Vec> theta_bias_grad;
  std::optional<Mat> bridge_grad;
};

// Mean pairwise logistic ranking loss over (positive, negative) POI pairs,
// with the full analytic gradient when grad_out is non-null. Gradients flow
// into the user embedding, the touched local entities (through the sub-KG
// propagation), theta, and the bridge; frozen cold embeddings contribute to
// the user gradient but receive none.
inline double local_loss_and_grad(const ClientState& st, const EmbeddingState& base,
                                  const EntityLayout& layout,
                                  std::span<const std::pair<PoiId, PoiId>> batch,
                                  ClientGradients* grad_out = nullptr, std::size_t threads = 1) {
  if (batch.empty()) fail_data("local loss: empty batch");
  const std::size_t d = base.dim_entity;
  const PropForward fwd = forward_local(st, threads);
  const Vec user_proj = projected_user(st);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  std::vector<double> cot;  // cotangent on layered local entities
  Vec user_proj_grad(d, 0.0);
  if (grad_out) cot.assign(st.local_emb.size(), 0.0);

  auto embedding_of = [&](PoiId p) -> std::pair<std::span<const double>, std::optional<std::size_t>> {
    const EntityId e = layout.entity_of_poi(p);
    if (const auto idx = st.local_index(e))
      return {{fwd.top().data() + *idx * d, d}, idx};
    return {base.entity(e), std::nullopt};
  };

  double loss = 0.0;
  std::vector<std::pair<PoiId, double>> pulls;  // (poi, dL/dz) per side, for bridge/user grads
  for (const auto& [pos, neg] : batch) {
    const auto [e_pos, idx_pos] = embedding_of(pos);
    const auto [e_neg, idx_neg] = embedding_of(neg);
    const double y_pos = logistic(dot(user_proj, e_pos));
    const double y_neg = logistic(dot(user_proj, e_neg));
    const double delta = y_pos - y_neg;
    const double sig = logistic(delta);
    loss += -std::log(sig) * inv_n;
    if (!grad_out) continue;
    const double c = (sig - 1.0) * inv_n;  // d(-ln sig)/d(delta)
    const double g_pos = c * y_pos * (1.0 - y_pos);
    const double g_neg = -c * y_neg * (1.0 - y_neg);
    axpy(g_pos, e_pos, user_proj_grad);
    axpy(g_neg, e_neg, user_proj_grad);
    if (idx_pos) axpy(g_pos, user_proj, {cot.data() + *idx_pos * d, d});
    if (idx_neg) axpy(g_neg, user_proj, {cot.data() + *idx_neg * d, d});
  }
  if (!grad_out) return loss;

  grad_out->loss = loss;
  if (st.bridge) {
    // z = (B^T u) . e: d/du = B e accumulated via user_proj_grad = sum g*e.
    grad_out->user_grad.assign(st.user_emb.size(), 0.0);
    matvec(*st.bridge, user_proj_grad, grad_out->user_grad);
    grad_out->bridge_grad = Mat(st.bridge->rows, st.bridge->cols);
    outer_acc(*grad_out->bridge_grad, 1.0, st.user_emb, user_proj_grad);
  } else {
    grad_out->user_grad = user_proj_grad;
  }
  PropBackward back =
      propagate_backward(st.graph, fwd, st.theta, st.activation, std::move(cot), threads);
  grad_out->entity_grad = std::move(back.base_grad);
  grad_out->theta_weight_grad = std::move(back.weight_grad);
  grad_out->theta_bias_grad = std::move(back.bias_grad);
  return loss;
}

inline double local_loss(const ClientState& st, const EmbeddingState& base,
                         const EntityLayout& layout,
                         std::span<const std::pair<PoiId, PoiId>> batch) {
  return local_loss_and_grad(st, base, layout, batch);
}

// The shareable part of the round's gradient: entity rows only, sparse over
// touched entities. The user embedding has no representation here.
inline GradientMessage compute_shared_gradients(const ClientState& st,
                                                const ClientGradients& grads,
                                                std::uint64_t round, std::uint64_t dim) {
  GradientMessage msg;
  msg.sender = st.user;
  msg.round = round;
  msg.dim = dim;
  for (std::size_t i = 0; i < st.entities.size(); ++i) {
    const double* row = grads.entity_grad.data() + i * dim;
    bool nonzero = false;
    for (std::size_t j = 0; j < dim; ++j)
      if (row[j] != 0.0) {
        nonzero = true;
        break;
      }
    if (nonzero) msg.grads.push_back({st.entities[i], Vec(row, row + dim)});
  }
  return msg;
}

// V_i[e] <- V_i[e] - gamma * ((1-mu) * own[e] + mu * sum_j w_j * inbox_j[e]),
// missing entries zero-filled; u_i and theta follow plain local descent.
inline void apply_update(ClientState& st, const ClientGradients& own,
                         std::span<const GradientMessage> inbox,
                         std::span<const std::pair<UserId, double>> weights,
                         const Hyperparams& hp) {
  if (inbox.size() != weights.size())
    fail_data("apply_update: inbox and weights disagree");
  const std::size_t d = st.dim();
  std::vector<double> blend(st.local_emb.size());
  for (std::size_t i = 0; i < blend.size(); ++i) blend[i] = (1.0 - hp.mu) * own.entity_grad[i];
  for (const GradientMessage& msg : inbox) {
    double w = -1.0;
    for (const auto& [id, weight] : weights)
      if (id == msg.sender) {
        w = weight;
        break;
      }
    if (w < 0.0)
      fail_data("apply_update: no weight for sender " + std::to_string(msg.sender));
    if (msg.dim != d) fail_data("apply_update: dimension mismatch in message");
    for (const auto& [entity, g] : msg.grads) {
      const auto idx = st.local_index(entity);
      if (!idx) continue;  // outside this client's sub-KG
      axpy(hp.mu * w, g, {blend.data() + *idx * d, d});
    }
  }
  axpy(-hp.gamma, blend, st.local_emb);
  axpy(-hp.gamma, own.user_grad, st.user_emb);
  for (std::size_t l = 0; l < st.theta.size(); ++l) {
    axpy(-hp.gamma, own.theta_weight_grad[l].a, st.theta[l].weight.a);
    axpy(-hp.gamma, own.theta_bias_grad[l], st.theta[l].bias);
  }
  if (st.bridge && own.bridge_grad) axpy(-hp.gamma, own.bridge_grad->a, st.bridge->a);
}

// Pairs each training positive with negatives_per_positive uniform draws
// from the POIs the user never interacted with.
inline std::vector<std::pair<PoiId, PoiId>> make_local_batch(const ClientState& st, Rng& rng,
                                                             std::uint64_t negatives_per_positive,
                                                             std::uint64_t n_pois) {
  std::vector<std::pair<PoiId, PoiId>> batch;
  batch.reserve(st.train_pois.size() * negatives_per_positive);
  for (PoiId pos : st.train_pois) {
    for (std::uint64_t k = 0; k < negatives_per_positive; ++k) {
      PoiId neg = 0;
      bool found = false;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        neg = rng.below(n_pois);
        if (!st.history_member[neg]) {
          found = true;
          break;
        }
      }
      if (!found) fail_data("no negative poi available for user " + std::to_string(st.user));
      batch.push_back({pos, neg});
    }
  }
  return batch;
}

}  // namespace deckg
