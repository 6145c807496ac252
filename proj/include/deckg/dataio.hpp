#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deckg/core.hpp"
#include "deckg/eval.hpp"
#include "deckg/json_io.hpp"
#include "deckg/kg.hpp"
#include "deckg/neighbors.hpp"
#include "deckg/rng.hpp"

namespace deckg {

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::uint64_t parse_id(std::string_view token, const std::filesystem::path& path,
                              std::size_t lineno) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    fail_data(path.filename().string() + ":" + std::to_string(lineno) + ": non-integer id '" +
              std::string(token) + "'");
  return v;
}

inline double parse_real(std::string_view token, const std::filesystem::path& path,
                         std::size_t lineno) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    fail_data(path.filename().string() + ":" + std::to_string(lineno) + ": non-numeric field '" +
              std::string(token) + "'");
  return v;
}

// Streams non-empty, non-comment lines to the callback with 1-based numbers.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    fn(std::string_view(line), lineno);
  }
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

struct DatasetStats {
  std::uint64_t n_users = 0;
  std::uint64_t n_pois = 0;
  std::uint64_t n_checkins = 0;
  std::uint64_t n_entities = 0;
  std::uint64_t n_relations = 0;
  std::uint64_t n_triples = 0;
};

struct DatasetMeta {
  std::string name;
  std::uint64_t n_users = 0;
  std::uint64_t n_pois = 0;
  std::uint64_t n_categories = 0;
  std::uint64_t n_segments = 0;
  std::uint64_t n_entities = 0;
  std::uint64_t n_relations = 0;

  EntityLayout layout() const {
    EntityLayout l{.n_pois = n_pois, .n_categories = n_categories, .n_segments = n_segments,
                   .n_entities = n_entities};
    l.validate();
    return l;
  }
};

inline DatasetMeta load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    fail_data(path.filename().string() + ": invalid JSON: " + e.what());
  }
  require_known_keys(j,
                     {"name", "n_users", "n_pois", "n_categories", "n_segments", "n_entities",
                      "n_relations", "relations", "entity_blocks"},
                     path.filename().string());
  DatasetMeta m;
  for (const char* key : {"n_users", "n_pois", "n_categories", "n_segments", "n_entities",
                          "n_relations"})
    if (!j.contains(key)) fail_data(path.filename().string() + ": missing key '" + key + "'");
  m.name = j.value("name", "dataset");
  m.n_users = j["n_users"].get<std::uint64_t>();
  m.n_pois = j["n_pois"].get<std::uint64_t>();
  m.n_categories = j["n_categories"].get<std::uint64_t>();
  m.n_segments = j["n_segments"].get<std::uint64_t>();
  m.n_entities = j["n_entities"].get<std::uint64_t>();
  m.n_relations = j["n_relations"].get<std::uint64_t>();
  m.layout();  // validates
  return m;
}

// catalog.tsv: poi <TAB> category <TAB> segment <TAB> lat <TAB> lon
inline PoiCatalog load_catalog(const std::filesystem::path& path, const DatasetMeta& meta) {
  std::vector<std::tuple<PoiId, CategoryId, SegmentId>> rows;
  detail::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 5)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": expected 5 columns, got " + std::to_string(cols.size()));
    const PoiId p = detail::parse_id(cols[0], path, lineno);
    const CategoryId c = detail::parse_id(cols[1], path, lineno);
    const SegmentId s = detail::parse_id(cols[2], path, lineno);
    detail::parse_real(cols[3], path, lineno);
    detail::parse_real(cols[4], path, lineno);
    rows.push_back({p, c, s});
  });
  if (rows.size() != meta.n_pois)
    fail_data(path.filename().string() + ": " + std::to_string(rows.size()) +
              " rows but labels declare " + std::to_string(meta.n_pois) + " pois");
  return register_catalog(rows, meta.n_categories, meta.n_segments);
}

// kg.tsv: head <TAB> relation <TAB> tail
inline KnowledgeGraph load_kg(const std::filesystem::path& path, const DatasetMeta& meta) {
  std::vector<Triple> triples;
  std::set<Triple> seen;
  detail::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 3)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": expected 3 columns, got " + std::to_string(cols.size()));
    Triple t{detail::parse_id(cols[0], path, lineno), detail::parse_id(cols[1], path, lineno),
             detail::parse_id(cols[2], path, lineno)};
    if (t.head >= meta.n_entities || t.tail >= meta.n_entities)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": triple references unknown entity " +
                std::to_string(t.head >= meta.n_entities ? t.head : t.tail));
    if (t.relation >= meta.n_relations)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": triple references unknown relation " + std::to_string(t.relation));
    if (!seen.insert(t).second)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) + ": duplicate triple");
    triples.push_back(t);
  });
  return KnowledgeGraph::build(meta.n_entities, meta.n_relations, std::move(triples));
}

// checkins.tsv: user <TAB> poi, with an optional third timestamp column that
// is accepted and ignored.
inline std::vector<CheckInHistory> load_checkins(const std::filesystem::path& path,
                                                 const DatasetMeta& meta) {
  std::vector<CheckInHistory> histories(meta.n_users);
  for (std::uint64_t u = 0; u < meta.n_users; ++u) histories[u].user = u;
  std::size_t rows = 0;
  detail::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 2 && cols.size() != 3)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": expected 2 or 3 columns, got " + std::to_string(cols.size()));
    const UserId u = detail::parse_id(cols[0], path, lineno);
    const PoiId p = detail::parse_id(cols[1], path, lineno);
    if (u >= meta.n_users)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) + ": unknown user " +
                std::to_string(u));
    if (p >= meta.n_pois)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) + ": unknown poi " +
                std::to_string(p));
    histories[u].pois.push_back(p);
    ++rows;
  });
  if (rows == 0) fail_data(path.filename().string() + ": no users (empty check-in file)");
  std::vector<UserId> missing;
  for (std::uint64_t u = 0; u < meta.n_users; ++u)
    if (histories[u].pois.empty()) missing.push_back(u);
  if (!missing.empty()) {
    std::string msg = path.filename().string() + ": users without check-ins:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i)
      msg += " " + std::to_string(missing[i]);
    fail_data(msg);
  }
  return histories;
}

struct Dataset {
  DatasetMeta meta;
  PoiCatalog catalog;
  KnowledgeGraph kg;
  std::vector<CheckInHistory> histories;
  DatasetStats stats;

  EntityLayout layout() const { return meta.layout(); }
};

inline Dataset load_dataset(const std::filesystem::path& checkins_path,
                            const std::filesystem::path& kg_path,
                            const std::filesystem::path& catalog_path,
                            const std::filesystem::path& labels_path) {
  Dataset ds;
  ds.meta = load_labels(labels_path);
  ds.catalog = load_catalog(catalog_path, ds.meta);
  ds.kg = load_kg(kg_path, ds.meta);
  ds.histories = load_checkins(checkins_path, ds.meta);
  ds.stats.n_users = ds.meta.n_users;
  ds.stats.n_pois = ds.meta.n_pois;
  for (const auto& h : ds.histories) ds.stats.n_checkins += h.pois.size();
  ds.stats.n_entities = ds.meta.n_entities;
  ds.stats.n_relations = ds.meta.n_relations;
  ds.stats.n_triples = ds.kg.triples().size();
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  return load_dataset(dir / "checkins.tsv", dir / "kg.tsv", dir / "catalog.tsv",
                      dir / "labels.json");
}

// ---- synthetic dataset ------------------------------------------------------

// Relation ids in generated graphs. category-of, located-in and brand-of are
// always present; nearby-segment and similar-to appear when the vocabulary
// allows; anything above is free side-information vocabulary.
inline constexpr RelationId kRelCategoryOf = 0;
inline constexpr RelationId kRelLocatedIn = 1;
inline constexpr RelationId kRelBrandOf = 2;
inline constexpr RelationId kRelNearbySegment = 3;
inline constexpr RelationId kRelSimilarTo = 4;

struct SyntheticSpec {
  std::uint64_t n_users = 200;
  std::uint64_t n_pois = 300;
  std::uint64_t n_categories = 12;
  std::uint64_t n_segments = 9;
  std::uint64_t n_relations = 20;
  std::uint64_t n_triples = 2200;
  std::uint64_t checkins_per_user = 30;
  std::uint64_t preference_clusters = 4;
  std::uint64_t seed = 0;

  std::uint64_t n_brands() const { return std::max<std::uint64_t>(2, n_pois / 10); }
  std::uint64_t n_side_entities() const { return std::max<std::uint64_t>(2, n_pois / 5); }
  std::uint64_t n_entities() const {
    return n_pois + n_categories + n_segments + n_brands() + n_side_entities();
  }

  void validate() const {
    if (!n_users || !n_pois || !n_categories || !n_segments || !n_relations || !n_triples ||
        !checkins_per_user || !preference_clusters)
      fail_usage("synthetic spec: all counts must be positive");
    if (n_relations < 3) fail_usage("synthetic spec: needs at least 3 relations");
  }
};

inline SyntheticSpec synthetic_spec_from_json(const Json& j) {
  require_known_keys(j,
                     {"n_users", "n_pois", "n_categories", "n_segments", "n_relations",
                      "n_triples", "checkins_per_user", "preference_clusters", "seed"},
                     "synthetic spec");
  SyntheticSpec s;
  if (j.contains("n_users")) s.n_users = j["n_users"].get<std::uint64_t>();
  if (j.contains("n_pois")) s.n_pois = j["n_pois"].get<std::uint64_t>();
  if (j.contains("n_categories")) s.n_categories = j["n_categories"].get<std::uint64_t>();
  if (j.contains("n_segments")) s.n_segments = j["n_segments"].get<std::uint64_t>();
  if (j.contains("n_relations")) s.n_relations = j["n_relations"].get<std::uint64_t>();
  if (j.contains("n_triples")) s.n_triples = j["n_triples"].get<std::uint64_t>();
  if (j.contains("checkins_per_user"))
    s.checkins_per_user = j["checkins_per_user"].get<std::uint64_t>();
  if (j.contains("preference_clusters"))
    s.preference_clusters = j["preference_clusters"].get<std::uint64_t>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  s.validate();
  return s;
}

// Deterministic desk-scale dataset. POIs get uniform categories/segments; the
// KG holds the structural triples (category-of, located-in, brand-of, segment
// grid adjacency, same-category similarity cycles) topped up with random side
// triples; users come from preference clusters so collaborative and
// geographical signal both exist.
inline DatasetStats generate_synthetic(const SyntheticSpec& spec,
                                       const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  Rng rng(derive_seed(spec.seed, "synthetic"));

  const std::uint64_t P = spec.n_pois, C = spec.n_categories, S = spec.n_segments;
  const std::uint64_t B = spec.n_brands(), E = spec.n_entities();
  const std::uint64_t brand0 = P + C + S;
  const std::uint64_t side0 = brand0 + B;
  EntityLayout layout{.n_pois = P, .n_categories = C, .n_segments = S, .n_entities = E};

  std::vector<CategoryId> category(P);
  std::vector<SegmentId> segment(P);
  std::vector<std::uint64_t> brand(P);
  for (PoiId p = 0; p < P; ++p) {
    category[p] = rng.below(C);
    segment[p] = rng.below(S);
    brand[p] = rng.below(B);
  }

  // Structural triples.
  std::set<Triple> triples;
  for (PoiId p = 0; p < P; ++p) {
    triples.insert({p, kRelCategoryOf, layout.entity_of_category(category[p])});
    triples.insert({p, kRelLocatedIn, layout.entity_of_segment(segment[p])});
    triples.insert({p, kRelBrandOf, brand0 + brand[p]});
  }
  if (spec.n_relations > kRelNearbySegment) {
    // Segments form a row-major grid; 4-neighborhood adjacency, both directions.
    const std::uint64_t cols = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::sqrt(static_cast<double>(S))));
    for (SegmentId s = 0; s < S; ++s) {
      const std::uint64_t r = s / cols, c = s % cols;
      auto link = [&](SegmentId other) {
        triples.insert({layout.entity_of_segment(s), kRelNearbySegment,
                        layout.entity_of_segment(other)});
        triples.insert({layout.entity_of_segment(other), kRelNearbySegment,
                        layout.entity_of_segment(s)});
      };
      if (c + 1 < cols && s + 1 < S) link(s + 1);
      if (s + cols < S) link(s + cols);
    }
  }
  const std::uint64_t structural = triples.size();
  if (spec.n_triples < structural)
    fail_usage("synthetic spec: n_triples too small; minimum feasible is " +
               std::to_string(structural));

  // Same-category similarity cycles, one whole category at a time while the
  // budget lasts. A cycle makes every category member reach every other, so
  // meta-path partitions carry genuinely useful multi-hop structure.
  if (spec.n_relations > kRelSimilarTo) {
    std::vector<std::vector<PoiId>> by_cat(C);
    for (PoiId p = 0; p < P; ++p) by_cat[category[p]].push_back(p);
    for (CategoryId c = 0; c < C; ++c) {
      const auto& members = by_cat[c];
      if (members.size() < 2) continue;
      if (triples.size() + members.size() > spec.n_triples) break;
      for (std::size_t i = 0; i < members.size(); ++i)
        triples.insert({members[i], kRelSimilarTo, members[(i + 1) % members.size()]});
    }
  }

  // Random side-information triples up to the requested total: heads from the
  // non-POI entities, tails from brands and side entities, relations from the
  // free vocabulary (falling back to >= brand-of for tiny vocabularies).
  const std::uint64_t side_rel_lo = std::min<std::uint64_t>(kRelSimilarTo + 1, spec.n_relations - 1);
  std::uint64_t guard = 0;
  while (triples.size() < spec.n_triples && guard < spec.n_triples * 50) {
    ++guard;
    const EntityId head = P + rng.below(E - P);
    const EntityId tail = brand0 + rng.below(E - brand0);
    const RelationId rel = side_rel_lo + rng.below(spec.n_relations - side_rel_lo);
    if (head == tail) continue;
    triples.insert({head, rel, tail});
  }
  if (triples.size() < spec.n_triples)
    fail_usage("synthetic spec: could not place " + std::to_string(spec.n_triples) +
               " unique triples; got " + std::to_string(triples.size()));

  // Preference clusters: contiguous category blocks plus one home segment.
  const std::uint64_t G = spec.preference_clusters;
  std::vector<std::vector<PoiId>> cluster_pool(G);
  std::vector<SegmentId> cluster_segment(G);
  for (std::uint64_t g = 0; g < G; ++g) {
    const CategoryId lo = g * C / G;
    const CategoryId hi = std::max<CategoryId>(lo + 1, (g + 1) * C / G);
    for (PoiId p = 0; p < P; ++p)
      if (category[p] >= lo && category[p] < hi) cluster_pool[g].push_back(p);
    cluster_segment[g] = g % S;
  }
  std::vector<std::vector<PoiId>> segment_pool(S);
  for (PoiId p = 0; p < P; ++p) segment_pool[segment[p]].push_back(p);

  std::vector<CheckInHistory> histories(spec.n_users);
  for (UserId u = 0; u < spec.n_users; ++u) {
    Rng urng(derive_seed(spec.seed, "synthetic-user", u));
    const std::uint64_t g = u % G;
    histories[u].user = u;
    for (std::uint64_t i = 0; i < spec.checkins_per_user; ++i) {
      const double x = urng.uniform01();
      PoiId p;
      if (x < 0.65 && !cluster_pool[g].empty())
        p = cluster_pool[g][urng.below(cluster_pool[g].size())];
      else if (x < 0.85 && !segment_pool[cluster_segment[g]].empty())
        p = segment_pool[cluster_segment[g]][urng.below(segment_pool[cluster_segment[g]].size())];
      else
        p = urng.below(P);
      histories[u].pois.push_back(p);
    }
  }

  // catalog.tsv with grid-derived coordinates.
  {
    std::ofstream out(out_dir / "catalog.tsv", std::ios::trunc);
    if (!out) fail_data("cannot write " + (out_dir / "catalog.tsv").string());
    const std::uint64_t cols = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::sqrt(static_cast<double>(S))));
    for (PoiId p = 0; p < P; ++p) {
      const double lat = static_cast<double>(segment[p] / cols) + 0.5;
      const double lon = static_cast<double>(segment[p] % cols) + 0.5;
      out << p << '\t' << category[p] << '\t' << segment[p] << '\t'
          << detail::format_real(lat) << '\t' << detail::format_real(lon) << '\n';
    }
  }
  {
    std::ofstream out(out_dir / "kg.tsv", std::ios::trunc);
    if (!out) fail_data("cannot write " + (out_dir / "kg.tsv").string());
    for (const Triple& t : triples)
      out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  }
  {
    std::ofstream out(out_dir / "checkins.tsv", std::ios::trunc);
    if (!out) fail_data("cannot write " + (out_dir / "checkins.tsv").string());
    for (const auto& h : histories)
      for (PoiId p : h.pois) out << h.user << '\t' << p << '\n';
  }
  {
    Json labels;
    labels["name"] = "synthetic";
    labels["n_users"] = spec.n_users;
    labels["n_pois"] = P;
    labels["n_categories"] = C;
    labels["n_segments"] = S;
    labels["n_entities"] = E;
    labels["n_relations"] = spec.n_relations;
    Json rel;
    rel["0"] = "category-of";
    rel["1"] = "located-in-segment";
    rel["2"] = "brand-of";
    if (spec.n_relations > kRelNearbySegment) rel["3"] = "nearby-segment";
    if (spec.n_relations > kRelSimilarTo) rel["4"] = "similar-to";
    labels["relations"] = rel;
    Json blocks;
    blocks["pois"] = {0, P};
    blocks["categories"] = {P, P + C};
    blocks["segments"] = {P + C, P + C + S};
    blocks["brands"] = {brand0, brand0 + B};
    blocks["side"] = {side0, E};
    labels["entity_blocks"] = blocks;
    std::ofstream out(out_dir / "labels.json", std::ios::trunc);
    if (!out) fail_data("cannot write " + (out_dir / "labels.json").string());
    out << labels.dump(2) << '\n';
  }

  DatasetStats stats;
  stats.n_users = spec.n_users;
  stats.n_pois = P;
  stats.n_checkins = spec.n_users * spec.checkins_per_user;
  stats.n_entities = E;
  stats.n_relations = spec.n_relations;
  stats.n_triples = triples.size();
  return stats;
}

// ---- pipeline artifacts ------------------------------------------------------

// uploads.tsv: user <TAB> poi, one row per (possibly repeated) check-in.
inline void save_uploads(const std::filesystem::path& path,
                         std::span<const DesensitizedHistory> uploads) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_data("cannot write " + path.string());
  for (const auto& up : uploads)
    for (PoiId p : up.pois) out << up.user << '\t' << p << '\n';
}

inline std::vector<DesensitizedHistory> load_uploads(const std::filesystem::path& path,
                                                     const DatasetMeta& meta) {
  std::vector<DesensitizedHistory> uploads(meta.n_users);
  for (std::uint64_t u = 0; u < meta.n_users; ++u) uploads[u].user = u;
  detail::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 2)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": expected 2 columns, got " + std::to_string(cols.size()));
    const UserId u = detail::parse_id(cols[0], path, lineno);
    const PoiId p = detail::parse_id(cols[1], path, lineno);
    if (u >= meta.n_users)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) + ": unknown user " +
                std::to_string(u));
    if (p >= meta.n_pois)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) + ": unknown poi " +
                std::to_string(p));
    uploads[u].pois.push_back(p);
  });
  return uploads;
}

inline std::string subkg_filename(UserId user) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "user_%08llu.tsv", static_cast<unsigned long long>(user));
  return buf;
}

inline void save_subkg(const std::filesystem::path& path, const SubKnowledgeGraph& sub) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_data("cannot write " + path.string());
  out << "# owner=" << sub.owner << '\n';
  for (const Triple& t : sub.triples)
    out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

inline SubKnowledgeGraph load_subkg(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header) || header.rfind("# owner=", 0) != 0)
    fail_data(path.filename().string() + ": missing '# owner=' header");
  SubKnowledgeGraph sub;
  sub.owner = detail::parse_id(std::string_view(header).substr(8), path, 1);
  detail::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 3)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": expected 3 columns, got " + std::to_string(cols.size()));
    sub.triples.push_back({detail::parse_id(cols[0], path, lineno),
                           detail::parse_id(cols[1], path, lineno),
                           detail::parse_id(cols[2], path, lineno)});
  });
  std::sort(sub.triples.begin(), sub.triples.end());
  for (const Triple& t : sub.triples) {
    sub.entities.push_back(t.head);
    sub.entities.push_back(t.tail);
  }
  std::sort(sub.entities.begin(), sub.entities.end());
  sub.entities.erase(std::unique(sub.entities.begin(), sub.entities.end()), sub.entities.end());
  return sub;
}

inline void save_neighbors(const std::filesystem::path& path,
                           std::span<const NeighborSet> sets) {
  Json users;
  for (const NeighborSet& ns : sets) {
    Json entry;
    entry["geo"] = ns.geo;
    entry["sem"] = ns.sem;
    Json weights;
    for (const auto& [id, w] : ns.weights) weights[std::to_string(id)] = w;
    entry["weights"] = weights;
    users[std::to_string(ns.owner)] = entry;
  }
  Json root;
  root["version"] = 1;
  root["users"] = users;
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_data("cannot write " + path.string());
  out << root.dump(2) << '\n';
}

inline std::vector<NeighborSet> load_neighbors(const std::filesystem::path& path,
                                               std::uint64_t n_users) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open " + path.string());
  Json root;
  try {
    root = Json::parse(in);
  } catch (const std::exception& e) {
    fail_data(path.filename().string() + ": invalid JSON: " + e.what());
  }
  require_known_keys(root, {"version", "users"}, path.filename().string());
  std::vector<NeighborSet> sets(n_users);
  for (std::uint64_t u = 0; u < n_users; ++u) sets[u].owner = u;
  const Json& users = root["users"];
  for (auto it = users.begin(); it != users.end(); ++it) {
    const UserId u = std::stoull(it.key());
    if (u >= n_users) fail_data(path.filename().string() + ": unknown user " + it.key());
    const Json& entry = it.value();
    require_known_keys(entry, {"geo", "sem", "weights"}, path.filename().string());
    sets[u].geo = entry["geo"].get<std::vector<UserId>>();
    sets[u].sem = entry["sem"].get<std::vector<UserId>>();
    for (auto w = entry["weights"].begin(); w != entry["weights"].end(); ++w)
      sets[u].weights.push_back({std::stoull(w.key()), w.value().get<double>()});
    std::sort(sets[u].weights.begin(), sets[u].weights.end());
  }
  return sets;
}

// clients.bin: every client's on-device parameters, users ascending. The
// sub-KG adjacency is not duplicated here; loaders rebuild it from the
// partition stage's files.
inline constexpr char kClientsMagic[8] = {'D', 'E', 'C', 'K', 'G', 'C', 'L', 'S'};

inline void save_clients(const std::filesystem::path& path, std::span<const ClientState> clients,
                         std::uint64_t dim_entity) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot write " + path.string());
  out.write(kClientsMagic, sizeof(kClientsMagic));
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  auto put_u64 = [&out](std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  auto put_doubles = [&out](std::span<const double> v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  put_u64(clients.size());
  put_u64(dim_entity);
  for (const ClientState& st : clients) {
    put_u64(st.user);
    put_u64(st.user_emb.size());
    put_doubles(st.user_emb);
    put_u64(st.entities.size());
    for (EntityId e : st.entities) put_u64(e);
    put_doubles(st.local_emb);
    put_u64(st.theta.size());
    for (const LayerParams& lp : st.theta) {
      put_doubles(lp.weight.a);
      put_doubles(lp.bias);
    }
    put_u64(st.bridge ? 1 : 0);
    if (st.bridge) put_doubles(st.bridge->a);
  }
  if (!out) fail_data("short write on " + path.string());
}

// Rebuilds eval-ready client states; private training data (train positives,
// history bitmap) never touches this file and stays empty after a load.
inline std::vector<ClientState> load_clients(const std::filesystem::path& path,
                                             const std::filesystem::path& subkg_dir,
                                             Activation activation) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kClientsMagic, sizeof(magic)) != 0)
    fail_data("bad clients magic in " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1) fail_data("unsupported clients version " + std::to_string(version));
  auto get_u64 = [&in]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  auto get_doubles = [&in](std::span<double> v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  const std::uint64_t n_clients = get_u64();
  const std::uint64_t d = get_u64();
  std::vector<ClientState> clients(n_clients);
  for (std::uint64_t i = 0; i < n_clients; ++i) {
    ClientState& st = clients[i];
    st.activation = activation;
    st.user = get_u64();
    st.user_emb.resize(get_u64());
    get_doubles(st.user_emb);
    st.entities.resize(get_u64());
    for (EntityId& e : st.entities) e = get_u64();
    st.local_emb.resize(st.entities.size() * d);
    get_doubles(st.local_emb);
    st.theta.resize(get_u64());
    for (LayerParams& lp : st.theta) {
      lp.weight = Mat(d, d);
      get_doubles(lp.weight.a);
      lp.bias.assign(d, 0.0);
      get_doubles(lp.bias);
    }
    if (get_u64()) {
      st.bridge = Mat(st.user_emb.size(), d);
      get_doubles(st.bridge->a);
    }
    const auto sub = load_subkg(subkg_dir / subkg_filename(st.user));
    if (sub.entities != st.entities)
      fail_data("clients.bin entities disagree with sub-KG for user " + std::to_string(st.user));
    st.graph = PropGraph::from_subkg(sub);
  }
  if (!in) fail_data("truncated clients file " + path.string());
  return clients;
}

// split.tsv: user <TAB> poi <TAB> {train|val|test}
inline void save_split(const std::filesystem::path& path, const Split& split) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_data("cannot write " + path.string());
  for (std::size_t u = 0; u < split.n_users(); ++u) {
    for (PoiId p : split.train[u]) out << u << '\t' << p << "\ttrain\n";
    for (PoiId p : split.val[u]) out << u << '\t' << p << "\tval\n";
    for (PoiId p : split.test[u]) out << u << '\t' << p << "\ttest\n";
  }
}

inline Split load_split(const std::filesystem::path& path, std::uint64_t n_users) {
  Split split;
  split.train.resize(n_users);
  split.val.resize(n_users);
  split.test.resize(n_users);
  detail::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 3)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": expected 3 columns, got " + std::to_string(cols.size()));
    const UserId u = detail::parse_id(cols[0], path, lineno);
    const PoiId p = detail::parse_id(cols[1], path, lineno);
    if (u >= n_users)
      fail_data(path.filename().string() + ":" + std::to_string(lineno) + ": unknown user " +
                std::to_string(u));
    if (cols[2] == "train")
      split.train[u].push_back(p);
    else if (cols[2] == "val")
      split.val[u].push_back(p);
    else if (cols[2] == "test")
      split.test[u].push_back(p);
    else
      fail_data(path.filename().string() + ":" + std::to_string(lineno) +
                ": unknown split label '" + std::string(cols[2]) + "'");
  });
  return split;
}

}  // namespace deckg
