#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "deckg/core.hpp"
#include "deckg/json_io.hpp"
#include "deckg/kg.hpp"
#include "deckg/propagation.hpp"
#include "deckg/rng.hpp"
#include "deckg/vec.hpp"

namespace deckg {

// Server-side state: base entity/relation embeddings, per-relation projection
// matrices W_r (d x k), and the propagation layer parameters.
struct EmbeddingState {
  std::uint64_t n_entities = 0;
  std::uint64_t n_relations = 0;
  std::uint64_t dim_entity = 0;    // d
  std::uint64_t dim_relation = 0;  // k

  std::vector<double> entity_emb;    // |E| x d, row per entity id
  std::vector<double> relation_emb;  // |R| x k
  std::vector<Mat> projection;       // |R| matrices of d x k
  std::vector<LayerParams> layer;    // L

  std::span<const double> entity(EntityId e) const {
    return {entity_emb.data() + e * dim_entity, dim_entity};
  }
  std::span<double> entity(EntityId e) {
    return {entity_emb.data() + e * dim_entity, dim_entity};
  }
  std::span<const double> relation(RelationId r) const {
    return {relation_emb.data() + r * dim_relation, dim_relation};
  }
  std::span<double> relation(RelationId r) {
    return {relation_emb.data() + r * dim_relation, dim_relation};
  }

  std::uint64_t n_layers() const { return layer.size(); }

  bool finite() const {
    if (!all_finite(entity_emb) || !all_finite(relation_emb)) return false;
    for (const Mat& m : projection)
      if (!all_finite(m.a)) return false;
    for (const LayerParams& lp : layer)
      if (!all_finite(lp.weight.a) || !all_finite(lp.bias)) return false;
    return true;
  }
};

// Base embeddings uniform in [-0.5/sqrt(dim), 0.5/sqrt(dim)]; projections
// start as the truncated identity and layer weights as the identity so early
// scores are well-conditioned.
inline EmbeddingState init_embedding_state(std::uint64_t n_entities, std::uint64_t n_relations,
                                           const Hyperparams& hp) {
  EmbeddingState st;
  st.n_entities = n_entities;
  st.n_relations = n_relations;
  st.dim_entity = hp.dim_entity;
  st.dim_relation = hp.dim_relation;
  Rng rng(derive_seed(hp.seed, "embedding-init"));
  const double be = 0.5 / std::sqrt(static_cast<double>(hp.dim_entity));
  const double br = 0.5 / std::sqrt(static_cast<double>(hp.dim_relation));
  st.entity_emb.resize(n_entities * hp.dim_entity);
  for (double& x : st.entity_emb) x = rng.uniform(-be, be);
  st.relation_emb.resize(n_relations * hp.dim_relation);
  for (double& x : st.relation_emb) x = rng.uniform(-br, br);
  st.projection.assign(n_relations, Mat::truncated_identity(hp.dim_entity, hp.dim_relation));
  st.layer.resize(hp.layers);
  for (LayerParams& lp : st.layer) {
    lp.weight = Mat::identity(hp.dim_entity);
    lp.bias.assign(hp.dim_entity, 0.0);
  }
  return st;
}

// Layered embeddings for every entity; layers = 0 returns the base table.
inline std::vector<double> propagate(const KnowledgeGraph& kg, const EmbeddingState& emb,
                                     std::int64_t layers, Activation act = Activation::logistic,
                                     std::size_t threads = 1) {
  if (layers < 0) fail_usage("propagate: layer count must be >= 0");
  if (static_cast<std::uint64_t>(layers) > emb.n_layers())
    fail_usage("propagate: state holds only " + std::to_string(emb.n_layers()) + " layers");
  const PropGraph g = PropGraph::from_kg(kg);
  PropForward f = propagate_forward(
      g, emb.entity_emb, std::span<const LayerParams>(emb.layer.data(), static_cast<std::size_t>(layers)),
      act, threads);
  return std::move(f.emb.back());
}

// score(h,r,t) = || e_r + W_r^T e_h - W_r^T e_t ||_2^2 on the layered
// embeddings; lower means more plausible.
inline double score(const EmbeddingState& emb, std::span<const double> layered, EntityId h,
                    RelationId r, EntityId t) {
  if (h >= emb.n_entities || t >= emb.n_entities) fail_data("score: unknown entity");
  if (r >= emb.n_relations) fail_data("score: unknown relation");
  const std::size_t d = emb.dim_entity;
  const std::size_t k = emb.dim_relation;
  const Mat& wr = emb.projection[r];
  Vec v(emb.relation(r).begin(), emb.relation(r).end());
  Vec tmp(k);
  matvec_transposed(wr, {layered.data() + h * d, d}, tmp);
  axpy(1.0, tmp, v);
  matvec_transposed(wr, {layered.data() + t * d, d}, tmp);
  axpy(-1.0, tmp, v);
  return squared_norm(v);
}

// Tail corruption: t' uniform over E, resampled until (h,r,t') is absent from
// the graph and t' differs from the true tail. Bounded at 100 attempts.
inline Triple sample_negative(const KnowledgeGraph& kg, const Triple& positive, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const EntityId cand = rng.below(kg.n_entities());
    if (cand == positive.tail) continue;
    Triple neg{positive.head, positive.relation, cand};
    if (!kg.has_triple(neg)) return neg;
  }
  fail_data("no negative available for triple (" + std::to_string(positive.head) + "," +
            std::to_string(positive.relation) + "," + std::to_string(positive.tail) + ")");
}

struct KgGradient {
  std::vector<double> entity_emb;
  std::vector<double> relation_emb;
  std::vector<Mat> projection;
  std::vector<Mat> layer_weight;
  std::vector<Vec> layer_bias;
};

namespace detail {

// Mean pairwise ranking loss over (positive, negative) pairs evaluated on a
// given forward pass; optionally accumulates d(loss)/d(e^L) and the
// relation-side gradients.
inline double kg_pair_loss(const EmbeddingState& st, std::span<const double> layered,
                           std::span<const std::pair<Triple, Triple>> pairs,
                           KgGradient* grad, std::vector<double>* top_cotangent) {
  const std::size_t d = st.dim_entity;
  const std::size_t k = st.dim_relation;
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  double loss = 0.0;
  Vec v_pos(k), v_neg(k), tmp(k), u_pos(d), u_neg(d), pull(d);
  for (const auto& [pos, neg] : pairs) {
    const Mat& wr = st.projection[pos.relation];
    const auto er = st.relation(pos.relation);
    const double* eh = layered.data() + pos.head * d;
    const double* et = layered.data() + pos.tail * d;
    const double* etn = layered.data() + neg.tail * d;
    for (std::size_t i = 0; i < d; ++i) {
      u_pos[i] = eh[i] - et[i];
      u_neg[i] = eh[i] - etn[i];
    }
    matvec_transposed(wr, u_pos, v_pos);
    for (std::size_t i = 0; i < k; ++i) v_pos[i] += er[i];
    matvec_transposed(wr, u_neg, v_neg);
    for (std::size_t i = 0; i < k; ++i) v_neg[i] += er[i];
    const double delta = squared_norm(v_neg) - squared_norm(v_pos);
    const double sig = logistic(delta);
    loss += -std::log(sig) * inv_n;
    if (!grad) continue;

    // d(-ln sig(delta))/d(delta) = sig(delta) - 1
    const double c = (sig - 1.0) * inv_n;
    double* g_er = grad->relation_emb.data() + pos.relation * k;
    for (std::size_t i = 0; i < k; ++i) g_er[i] += 2.0 * c * (v_neg[i] - v_pos[i]);
    Mat& g_wr = grad->projection[pos.relation];
    outer_acc(g_wr, 2.0 * c, u_neg, v_neg);
    outer_acc(g_wr, -2.0 * c, u_pos, v_pos);

    double* cot = top_cotangent->data();
    // head: 2c * W_r (v_neg - v_pos)
    for (std::size_t i = 0; i < k; ++i) tmp[i] = v_neg[i] - v_pos[i];
    matvec(wr, tmp, pull);
    axpy(2.0 * c, pull, {cot + pos.head * d, d});
    // positive tail: +2c * W_r v_pos
    matvec(wr, v_pos, pull);
    axpy(2.0 * c, pull, {cot + pos.tail * d, d});
    // negative tail: -2c * W_r v_neg
    matvec(wr, v_neg, pull);
    axpy(-2.0 * c, pull, {cot + neg.tail * d, d});
  }
  return loss;
}

}  // namespace detail

// Loss of one mini-batch, with the full analytic gradient (through the
// propagation layers) when grad_out is non-null. Exposed at this granularity
// so finite-difference checks can probe it directly.
inline double kg_batch_loss(const PropGraph& graph, const EmbeddingState& st,
                            std::span<const std::pair<Triple, Triple>> pairs, Activation act,
                            KgGradient* grad_out = nullptr, std::size_t threads = 1) {
  if (pairs.empty()) fail_usage("empty pair batch");
  PropForward fwd = propagate_forward(graph, st.entity_emb, st.layer, act, threads);
  if (!grad_out) return detail::kg_pair_loss(st, fwd.top(), pairs, nullptr, nullptr);

  grad_out->entity_emb.assign(st.entity_emb.size(), 0.0);
  grad_out->relation_emb.assign(st.relation_emb.size(), 0.0);
  grad_out->projection.assign(st.n_relations, Mat(st.dim_entity, st.dim_relation));
  std::vector<double> cot(st.entity_emb.size(), 0.0);
  const double loss = detail::kg_pair_loss(st, fwd.top(), pairs, grad_out, &cot);
  PropBackward back = propagate_backward(graph, fwd, st.layer, act, std::move(cot), threads);
  grad_out->entity_emb = std::move(back.base_grad);
  grad_out->layer_weight = std::move(back.weight_grad);
  grad_out->layer_bias = std::move(back.bias_grad);
  return loss;
}

struct PretrainResult {
  EmbeddingState state;
  std::vector<double> epoch_mean_loss;
};

// Mini-batch SGD over the pairwise ranking loss with tail-corrupted
// negatives; deterministic for a fixed seed.
inline PretrainResult pretrain(const KnowledgeGraph& kg, const Hyperparams& hp,
                               std::size_t threads = 1) {
  hp.validate();
  if (kg.triples().empty()) fail_data("pretrain: knowledge graph has no triples");
  EmbeddingState st = init_embedding_state(kg.n_entities(), kg.n_relations(), hp);
  const PropGraph graph = PropGraph::from_kg(kg);
  Rng rng(derive_seed(hp.seed, "pretrain"));
  std::vector<std::size_t> order(kg.triples().size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  PretrainResult result;
  KgGradient grad;
  std::vector<std::pair<Triple, Triple>> pairs;
  for (std::uint64_t epoch = 0; epoch < hp.epochs_pretrain; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      pairs.clear();
      for (std::size_t i = start; i < end; ++i) {
        const Triple& pos = kg.triples()[order[i]];
        pairs.push_back({pos, sample_negative(kg, pos, rng)});
      }
      const double loss = kg_batch_loss(graph, st, pairs, hp.activation, &grad, threads);
      if (!std::isfinite(loss))
        fail_numeric("pretraining diverged (non-finite loss) at epoch " + std::to_string(epoch + 1));
      loss_sum += loss * static_cast<double>(pairs.size());

      axpy(-hp.gamma, grad.entity_emb, st.entity_emb);
      axpy(-hp.gamma, grad.relation_emb, st.relation_emb);
      for (std::uint64_t r = 0; r < st.n_relations; ++r)
        axpy(-hp.gamma, grad.projection[r].a, st.projection[r].a);
      for (std::uint64_t l = 0; l < st.n_layers(); ++l) {
        axpy(-hp.gamma, grad.layer_weight[l].a, st.layer[l].weight.a);
        axpy(-hp.gamma, grad.layer_bias[l], st.layer[l].bias);
      }
    }
    if (!st.finite())
      fail_numeric("pretraining diverged (non-finite parameters) at epoch " + std::to_string(epoch + 1));
    result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(kg.triples().size()));
  }
  result.state = std::move(st);
  return result;
}

// ---- checkpoint persistence ------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'D', 'E', 'C', 'K', 'G', 'E', 'M', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace detail {

inline void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_doubles(std::ofstream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
inline std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline void read_doubles(std::ifstream& in, std::span<double> v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const EmbeddingState& st,
                            const Hyperparams& hp) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  detail::write_u64(out, st.dim_entity);
  detail::write_u64(out, st.dim_relation);
  detail::write_u64(out, st.n_layers());
  detail::write_u64(out, st.n_entities);
  detail::write_u64(out, st.n_relations);
  detail::write_doubles(out, st.entity_emb);
  detail::write_doubles(out, st.relation_emb);
  for (const Mat& m : st.projection) detail::write_doubles(out, m.a);
  for (const LayerParams& lp : st.layer) {
    detail::write_doubles(out, lp.weight.a);
    detail::write_doubles(out, lp.bias);
  }
  if (!out) fail_data("short write on checkpoint " + path.string());
  out.close();

  std::ofstream meta(path.string() + ".meta.json", std::ios::trunc);
  if (!meta) fail_data("cannot write checkpoint sidecar for " + path.string());
  meta << hyperparams_to_json(hp).dump(2) << "\n";
}

struct Checkpoint {
  EmbeddingState state;
  Hyperparams hyperparams;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    fail_data("bad checkpoint magic in " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion)
    fail_data("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  EmbeddingState& st = ck.state;
  st.dim_entity = detail::read_u64(in);
  st.dim_relation = detail::read_u64(in);
  const std::uint64_t layers = detail::read_u64(in);
  st.n_entities = detail::read_u64(in);
  st.n_relations = detail::read_u64(in);
  st.entity_emb.resize(st.n_entities * st.dim_entity);
  detail::read_doubles(in, st.entity_emb);
  st.relation_emb.resize(st.n_relations * st.dim_relation);
  detail::read_doubles(in, st.relation_emb);
  st.projection.assign(st.n_relations, Mat(st.dim_entity, st.dim_relation));
  for (Mat& m : st.projection) detail::read_doubles(in, m.a);
  st.layer.resize(layers);
  for (LayerParams& lp : st.layer) {
    lp.weight = Mat(st.dim_entity, st.dim_entity);
    detail::read_doubles(in, lp.weight.a);
    lp.bias.assign(st.dim_entity, 0.0);
    detail::read_doubles(in, lp.bias);
  }
  if (!in) fail_data("truncated checkpoint " + path.string());

  std::ifstream meta(path.string() + ".meta.json");
  if (!meta) fail_data("missing checkpoint sidecar for " + path.string());
  Json j = Json::parse(meta, nullptr, true);
  ck.hyperparams = hyperparams_from_json(j, "checkpoint sidecar");
  return ck;
}

}  // namespace deckg
