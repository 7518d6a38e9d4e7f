#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seeker/random.hpp"

namespace seeker {

using Embedding = std::vector<float>;
using EmbeddingView = std::span<const float>;
using Metadata = std::map<std::string, std::string>;

class CatalogError : public std::runtime_error {
 public:
  CatalogError(std::optional<std::size_t> record, const std::string& what)
      : std::runtime_error(record ? "record " + std::to_string(*record) + ": " + what : what),
        record_(record) {}

  /// 0-based index of the offending item record, if the error is tied to one.
  std::optional<std::size_t> record() const noexcept { return record_; }

 private:
  std::optional<std::size_t> record_;
};

struct CatalogItem {
  std::string item_id;
  Embedding embedding;
  Metadata metadata;
};

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// Squared Euclidean distance, accumulated in double.
struct SquaredEuclidean {
  double operator()(EmbeddingView a, EmbeddingView b) const {
    if (a.size() != b.size()) {
      throw std::invalid_argument("squared_distance: length mismatch (" + std::to_string(a.size()) +
                                  " vs " + std::to_string(b.size()) + ")");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
      sum += diff * diff;
    }
    return sum;
  }
};

template <class Metric = SquaredEuclidean>
double squared_distance(EmbeddingView a, EmbeddingView b, const Metric& metric = {}) {
  return metric(a, b);
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Immutable item catalog. Item order is the canonical order used for every
/// tie-break downstream.
class Catalog {
 public:
  Catalog(std::size_t dimension, std::vector<CatalogItem> items) : dimension_(dimension), items_(std::move(items)) {
    if (dimension_ == 0) throw CatalogError(std::nullopt, "dimension must be positive");
    if (items_.empty()) throw CatalogError(std::nullopt, "empty catalog");
    index_.reserve(items_.size());
    for (std::size_t i = 0; i < items_.size(); ++i) {
      const auto& item = items_[i];
      if (item.embedding.size() != dimension_) {
        throw CatalogError(i, "dimension mismatch: expected " + std::to_string(dimension_) + ", got " +
                                  std::to_string(item.embedding.size()));
      }
      for (float v : item.embedding) {
        if (!std::isfinite(v)) throw CatalogError(i, "non-finite embedding component");
      }
      if (!index_.emplace(item.item_id, i).second) {
        throw CatalogError(i, "duplicate id '" + item.item_id + "'");
      }
    }
  }

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return items_.size(); }
  const std::vector<CatalogItem>& items() const noexcept { return items_; }
  const CatalogItem& operator[](std::size_t i) const { return items_[i]; }
  EmbeddingView embedding(std::size_t i) const { return items_[i].embedding; }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("unknown item id '" + id + "'");
    return it->second;
  }

 private:
  std::size_t dimension_;
  std::vector<CatalogItem> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Catalog file format
//
//   {"dimension": d, "count": N}
//   {"id": "...", "embedding": [...], "meta": {"k": "v"}}
//   ...
// ---------------------------------------------------------------------------

inline Catalog load_catalog(std::istream& in) {
  using nlohmann::json;
  std::string line;
  std::optional<std::size_t> dimension;
  std::size_t declared_count = 0;
  std::vector<CatalogItem> items;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    const std::optional<std::size_t> record =
        dimension ? std::optional<std::size_t>(items.size()) : std::nullopt;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CatalogError(record, dimension ? std::string("malformed record: ") + e.what()
                                           : std::string("malformed header: ") + e.what());
    }
    if (!obj.is_object()) throw CatalogError(record, "expected a JSON object");

    if (!dimension) {
      const auto d = obj.find("dimension");
      const auto n = obj.find("count");
      if (d == obj.end() || !d->is_number_unsigned() || d->get<std::size_t>() == 0) {
        throw CatalogError(std::nullopt, "header: 'dimension' must be a positive integer");
      }
      if (n == obj.end() || !n->is_number_unsigned()) {
        throw CatalogError(std::nullopt, "header: 'count' must be a nonnegative integer");
      }
      dimension = d->get<std::size_t>();
      declared_count = n->get<std::size_t>();
      items.reserve(declared_count);
      continue;
    }

    CatalogItem item;
    const auto id = obj.find("id");
    if (id == obj.end() || !id->is_string()) throw CatalogError(record, "missing string 'id'");
    item.item_id = id->get<std::string>();

    const auto emb = obj.find("embedding");
    if (emb == obj.end() || !emb->is_array()) throw CatalogError(record, "missing array 'embedding'");
    item.embedding.reserve(emb->size());
    for (const auto& v : *emb) {
      if (!v.is_number()) throw CatalogError(record, "embedding component is not a number");
      item.embedding.push_back(v.get<float>());
    }
    if (item.embedding.size() != *dimension) {
      throw CatalogError(record, "dimension mismatch: expected " + std::to_string(*dimension) + ", got " +
                                     std::to_string(item.embedding.size()));
    }

    if (const auto meta = obj.find("meta"); meta != obj.end()) {
      if (!meta->is_object()) throw CatalogError(record, "'meta' must be an object");
      for (const auto& [k, v] : meta->items()) {
        if (!v.is_string()) throw CatalogError(record, "meta value for '" + k + "' is not a string");
        item.metadata.emplace(k, v.get<std::string>());
      }
    }
    items.push_back(std::move(item));
  }

  if (!dimension) throw CatalogError(std::nullopt, "empty catalog");
  if (items.empty()) throw CatalogError(std::nullopt, "empty catalog");
  if (items.size() != declared_count) {
    throw CatalogError(std::nullopt, "header declares " + std::to_string(declared_count) + " items, found " +
                                         std::to_string(items.size()));
  }
  return Catalog(*dimension, std::move(items));
}

inline std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

inline void save_catalog(const Catalog& catalog, std::ostream& out) {
  using nlohmann::json;
  out << json{{"dimension", catalog.dimension()}, {"count", catalog.size()}}.dump() << '\n';
  for (const auto& item : catalog.items()) {
    out << "{\"id\":" << json(item.item_id).dump() << ",\"embedding\":[";
    for (std::size_t k = 0; k < item.embedding.size(); ++k) {
      if (k) out << ',';
      out << format_float(item.embedding[k]);
    }
    out << "],\"meta\":" << json(item.metadata).dump() << "}\n";
  }
}

// ---------------------------------------------------------------------------
// Synthetic catalogs
// ---------------------------------------------------------------------------

struct SyntheticCatalogParams {
  std::size_t n_items = 2000;
  std::size_t dim = 32;
  std::size_t n_clusters = 20;
  double spread = 0.25;
  std::uint64_t seed = 1;
};

/// Gaussian blobs around cluster centers drawn uniformly from [-1, 1]^d.
/// Item i belongs to cluster i mod n_clusters.
inline Catalog generate_synthetic_catalog(const SyntheticCatalogParams& p) {
  if (p.n_items == 0 || p.dim == 0 || p.n_clusters == 0) {
    throw std::invalid_argument("generate_synthetic_catalog: sizes must be positive");
  }
  if (p.n_clusters > p.n_items) throw std::invalid_argument("generate_synthetic_catalog: n_clusters > n_items");
  if (!(p.spread >= 0.0) || !std::isfinite(p.spread)) {
    throw std::invalid_argument("generate_synthetic_catalog: spread must be finite and nonnegative");
  }

  SplitMix64 center_rng(hash_combine(p.seed, 0x63656e74ULL));
  std::vector<std::vector<double>> centers(p.n_clusters, std::vector<double>(p.dim));
  for (auto& c : centers) {
    for (auto& v : c) v = 2.0 * uniform_open(center_rng) - 1.0;
  }

  SplitMix64 item_rng(hash_combine(p.seed, 0x6974656dULL));
  const int width = static_cast<int>(std::to_string(p.n_items - 1).size());
  std::vector<CatalogItem> items;
  items.reserve(p.n_items);
  for (std::size_t i = 0; i < p.n_items; ++i) {
    const std::size_t cluster = i % p.n_clusters;
    CatalogItem item;
    char id[48];
    std::snprintf(id, sizeof id, "item-%0*zu", width, i);
    item.item_id = id;
    item.embedding.resize(p.dim);
    for (std::size_t k = 0; k < p.dim; ++k) {
      const double noise = p.spread > 0.0 ? p.spread * standard_normal(item_rng) : 0.0;
      item.embedding[k] = static_cast<float>(centers[cluster][k] + noise);
    }
    item.metadata = {{"name", item.item_id}, {"cluster", std::to_string(cluster)}};
    items.push_back(std::move(item));
  }
  return Catalog(p.dim, std::move(items));
}

}  // namespace seeker
