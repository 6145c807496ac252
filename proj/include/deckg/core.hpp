#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace deckg {

// Identifiers are dense integers assigned at load time in file order.
// External string labels live in the dataset's labels.json sidecar.
using UserId = std::uint64_t;
using PoiId = std::uint64_t;
using EntityId = std::uint64_t;
using RelationId = std::uint64_t;
using CategoryId = std::uint64_t;
using SegmentId = std::uint64_t;

enum class ErrorKind : int {
  usage = 1,
  data = 2,
  numeric = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrorKind::usage, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// POIs, categories and segments are all KG entities. The entity id space is
// laid out as contiguous blocks: [0, n_pois) POIs, then categories, then
// segments, then any side-information entities up to n_entities. The three
// mappings are therefore injective and disjoint by construction.
struct EntityLayout {
  std::uint64_t n_pois = 0;
  std::uint64_t n_categories = 0;
  std::uint64_t n_segments = 0;
  std::uint64_t n_entities = 0;

  EntityId entity_of_poi(PoiId p) const { return p; }
  EntityId entity_of_category(CategoryId c) const { return n_pois + c; }
  EntityId entity_of_segment(SegmentId s) const { return n_pois + n_categories + s; }

  bool is_poi_entity(EntityId e) const { return e < n_pois; }
  PoiId poi_of_entity(EntityId e) const { return e; }

  void validate() const {
    if (n_entities < n_pois + n_categories + n_segments)
      fail_data("entity layout: n_entities smaller than pois+categories+segments");
  }
};

struct CheckInRecord {
  UserId user = 0;
  PoiId poi = 0;
  CategoryId category = 0;
  SegmentId segment = 0;
};

// X(u_i): the ordered private check-in list of one user. The category list
// X^c(u_i) is derived through the catalog, never stored.
struct CheckInHistory {
  UserId user = 0;
  std::vector<PoiId> pois;
};

// X'(u_i): the perturbed list a client uploads; same length as the true
// history, element-wise same category.
struct DesensitizedHistory {
  UserId user = 0;
  std::vector<PoiId> pois;
};

class PoiCatalog {
 public:
  PoiCatalog() = default;

  std::uint64_t n_pois() const { return category_of_.size(); }
  std::uint64_t n_categories() const { return pois_by_category_.size(); }
  std::uint64_t n_segments() const { return pois_by_segment_.size(); }

  CategoryId category_of(PoiId p) const {
    check_poi(p);
    return category_of_[p];
  }
  SegmentId segment_of(PoiId p) const {
    check_poi(p);
    return segment_of_[p];
  }
  const std::vector<PoiId>& pois_in_category(CategoryId c) const {
    if (c >= pois_by_category_.size()) fail_data("unknown category " + std::to_string(c));
    return pois_by_category_[c];
  }
  const std::vector<PoiId>& pois_in_segment(SegmentId s) const {
    if (s >= pois_by_segment_.size()) fail_data("unknown segment " + std::to_string(s));
    return pois_by_segment_[s];
  }

  std::vector<CategoryId> categories_of(const CheckInHistory& h) const {
    std::vector<CategoryId> out;
    out.reserve(h.pois.size());
    for (PoiId p : h.pois) out.push_back(category_of(p));
    return out;
  }

  friend PoiCatalog register_catalog(const std::vector<std::tuple<PoiId, CategoryId, SegmentId>>& rows,
                                     std::optional<std::uint64_t> n_categories,
                                     std::optional<std::uint64_t> n_segments);

 private:
  void check_poi(PoiId p) const {
    if (p >= category_of_.size()) fail_data("unknown poi " + std::to_string(p));
  }

  std::vector<CategoryId> category_of_;
  std::vector<SegmentId> segment_of_;
  std::vector<std::vector<PoiId>> pois_by_category_;
  std::vector<std::vector<PoiId>> pois_by_segment_;
};

// Builds the total poi -> (category, segment) lookup. Poi ids must be dense
// (every id in [0, n) appears exactly once). When explicit category/segment
// counts are given, out-of-range references are rejected as dangling.
inline PoiCatalog register_catalog(const std::vector<std::tuple<PoiId, CategoryId, SegmentId>>& rows,
                                   std::optional<std::uint64_t> n_categories = std::nullopt,
                                   std::optional<std::uint64_t> n_segments = std::nullopt) {
  PoiCatalog cat;
  const std::uint64_t n = rows.size();
  cat.category_of_.assign(n, 0);
  cat.segment_of_.assign(n, 0);
  std::vector<bool> seen(n, false);
  std::uint64_t max_cat = 0, max_seg = 0;
  for (const auto& [p, c, s] : rows) {
    if (p >= n) fail_data("poi id " + std::to_string(p) + " out of dense range [0," + std::to_string(n) + ")");
    if (seen[p]) fail_data("duplicate poi " + std::to_string(p));
    seen[p] = true;
    if (n_categories && c >= *n_categories) fail_data("dangling category " + std::to_string(c) + " for poi " + std::to_string(p));
    if (n_segments && s >= *n_segments) fail_data("dangling segment " + std::to_string(s) + " for poi " + std::to_string(p));
    cat.category_of_[p] = c;
    cat.segment_of_[p] = s;
    max_cat = std::max(max_cat, c);
    max_seg = std::max(max_seg, s);
  }
  const std::uint64_t nc = n_categories ? *n_categories : (n ? max_cat + 1 : 0);
  const std::uint64_t ns = n_segments ? *n_segments : (n ? max_seg + 1 : 0);
  cat.pois_by_category_.assign(nc, {});
  cat.pois_by_segment_.assign(ns, {});
  for (PoiId p = 0; p < n; ++p) {
    cat.pois_by_category_[cat.category_of_[p]].push_back(p);
    cat.pois_by_segment_[cat.segment_of_[p]].push_back(p);
  }
  return cat;
}

enum class Activation { logistic, identity };

struct Hyperparams {
  double epsilon = 2.0;       // selection sensitivity of the exponential mechanism
  double mu = 0.5;            // blend between local and neighbor-distilled updates
  double gamma = 0.05;        // learning rate
  std::uint64_t dim_entity = 16;    // d
  std::uint64_t dim_relation = 16;  // k
  std::uint64_t dim_user = 16;      // K
  std::uint64_t layers = 1;         // L
  std::optional<std::uint64_t> hop_limit;  // unbounded by default
  std::uint64_t neighbor_cap = 10;
  std::uint64_t epochs_pretrain = 50;
  std::uint64_t rounds_train = 50;
  std::uint64_t negatives_per_positive = 2;
  std::uint64_t batch_size = 128;
  Activation activation = Activation::logistic;
  std::uint64_t seed = 0;

  void validate() const {
    if (epsilon < 0) fail_usage("epsilon must be >= 0");
    if (mu < 0 || mu > 1) fail_usage("mu must lie in [0,1]");
    if (gamma <= 0) fail_usage("gamma must be > 0");
    if (dim_entity < 1 || dim_relation < 1 || dim_user < 1) fail_usage("dimensions must be >= 1");
    if (layers < 1) fail_usage("layers must be >= 1");
    if (neighbor_cap < 1) fail_usage("neighbor_cap must be >= 1");
    if (negatives_per_positive < 1) fail_usage("negatives_per_positive must be >= 1");
    if (batch_size < 1) fail_usage("batch_size must be >= 1");
    if (hop_limit && *hop_limit < 1) fail_usage("hop_limit must be >= 1 when set");
  }
};

}  // namespace deckg
