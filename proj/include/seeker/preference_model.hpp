#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "seeker/embedding_store.hpp"

namespace seeker {

/// "liked is closer to the target than disliked".
struct PreferencePair {
  std::string liked_id;
  std::string disliked_id;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

enum class LikelihoodModel { pairwise, bipartite };

struct NoiseParams {
  double alpha = 1.0;   // pairwise confidence
  double alpha1 = 1.0;  // bipartite: like term
  double alpha2 = 1.0;  // bipartite: dislike term
  LikelihoodModel model = LikelihoodModel::pairwise;

  void validate() const {
    for (double a : {alpha, alpha1, alpha2}) {
      if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("noise parameters must be finite and >= 0");
    }
  }
};

struct PriorScores {
  std::vector<double> log_prior;

  static PriorScores uniform(std::size_t n) { return {std::vector<double>(n, 0.0)}; }

  void validate(std::size_t n) const {
    if (log_prior.size() != n) throw std::invalid_argument("prior length does not match catalog size");
    bool any_finite = false;
    for (double v : log_prior) {
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw std::invalid_argument("prior entries must be finite or -inf");
      }
      any_finite = any_finite || std::isfinite(v);
    }
    if (!any_finite) throw std::invalid_argument("prior excludes every item");
  }
};

/// Unnormalized log-posterior per catalog item. Never normalized.
struct PosteriorScores {
  std::vector<double> log_posterior;

  std::size_t size() const noexcept { return log_posterior.size(); }
  friend bool operator==(const PosteriorScores&, const PosteriorScores&) = default;
};

/// log(1 / (1 + exp(-x))) without overflow for large |x|.
inline double log_sigmoid(double x) noexcept {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

/// Full cross product likes x dislikes, liked-major. Callers pass both lists
/// in canonical catalog order.
inline std::vector<PreferencePair> make_preference_pairs(std::span<const std::string> likes,
                                                         std::span<const std::string> dislikes) {
  std::unordered_set<std::string_view> liked(likes.begin(), likes.end());
  for (const auto& d : dislikes) {
    if (liked.count(d)) throw std::invalid_argument("item '" + d + "' is both liked and disliked");
  }
  std::vector<PreferencePair> pairs;
  pairs.reserve(likes.size() * dislikes.size());
  for (const auto& a : likes) {
    for (const auto& b : dislikes) pairs.push_back({a, b});
  }
  return pairs;
}

/// log P(liked preferred over disliked | target) under the logistic triplet model.
template <class Metric = SquaredEuclidean>
double triplet_log_probability(EmbeddingView target, EmbeddingView liked, EmbeddingView disliked, double alpha,
                               const Metric& metric = {}) {
  if (liked.size() != target.size() || disliked.size() != target.size()) {
    throw std::invalid_argument("triplet_log_probability: dimension mismatch");
  }
  return log_sigmoid(alpha * (metric(disliked, target) - metric(liked, target)));
}

namespace detail {

/// Distances from every catalog item to each of `refs`, laid out
/// [candidate * refs.size() + r]. Evaluated once per update so the pair
/// sums below are scalar work.
template <class Metric>
std::vector<double> distance_table(const Catalog& catalog, std::span<const std::size_t> refs, const Metric& metric) {
  const std::size_t n = catalog.size();
  std::vector<double> table(n * refs.size());
  for (std::size_t t = 0; t < n; ++t) {
    const auto xt = catalog.embedding(t);
    for (std::size_t r = 0; r < refs.size(); ++r) table[t * refs.size() + r] = metric(catalog.embedding(refs[r]), xt);
  }
  return table;
}

inline std::size_t resolve(const Catalog& catalog, const std::string& id) {
  auto idx = catalog.find(id);
  if (!idx) throw std::out_of_range("unknown item id '" + id + "'");
  return *idx;
}

}  // namespace detail

/// Sum over pairs of the triplet log-probability, for every candidate target.
template <class Metric = SquaredEuclidean>
std::vector<double> log_likelihood_scores(const Catalog& catalog, std::span<const PreferencePair> pairs,
                                          const NoiseParams& params, const Metric& metric = {}) {
  const std::size_t n = catalog.size();
  std::vector<double> scores(n, 0.0);
  if (pairs.empty()) return scores;

  // Each distinct item referenced by any pair gets one column.
  std::vector<std::size_t> refs;
  std::vector<std::pair<std::size_t, std::size_t>> cols;
  cols.reserve(pairs.size());
  auto column = [&](const std::string& id) {
    const std::size_t idx = detail::resolve(catalog, id);
    auto it = std::find(refs.begin(), refs.end(), idx);
    if (it != refs.end()) return static_cast<std::size_t>(it - refs.begin());
    refs.push_back(idx);
    return refs.size() - 1;
  };
  for (const auto& p : pairs) cols.emplace_back(column(p.liked_id), column(p.disliked_id));

  const auto table = detail::distance_table(catalog, refs, metric);
  const std::size_t width = refs.size();
  for (std::size_t t = 0; t < n; ++t) {
    const double* row = table.data() + t * width;
    double score = 0.0;
    for (const auto& [liked, disliked] : cols) score += log_sigmoid(params.alpha * (row[disliked] - row[liked]));
    scores[t] = score;
  }
  return scores;
}

/// Bipartite model: likes contribute -alpha1 * d(a, t); each dislike is
/// compared against the nearest like. With no likes this reduces to the
/// pairwise model (which has no pairs, so every score is zero).
template <class Metric = SquaredEuclidean>
std::vector<double> bipartite_log_likelihood_scores(const Catalog& catalog, std::span<const std::string> likes,
                                                    std::span<const std::string> dislikes, const NoiseParams& params,
                                                    const Metric& metric = {}) {
  const std::size_t n = catalog.size();
  if (likes.empty()) {
    for (const auto& id : dislikes) detail::resolve(catalog, id);
    const auto pairs = make_preference_pairs(likes, dislikes);
    return log_likelihood_scores(catalog, pairs, params, metric);
  }

  std::vector<std::size_t> like_idx, dislike_idx;
  for (const auto& id : likes) like_idx.push_back(detail::resolve(catalog, id));
  for (const auto& id : dislikes) dislike_idx.push_back(detail::resolve(catalog, id));
  const auto like_d = detail::distance_table(catalog, like_idx, metric);
  const auto dislike_d = detail::distance_table(catalog, dislike_idx, metric);

  std::vector<double> scores(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double score = 0.0;
    double nearest_like = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < like_idx.size(); ++i) {
      const double d = like_d[t * like_idx.size() + i];
      score -= params.alpha1 * d;
      nearest_like = std::min(nearest_like, d);
    }
    for (std::size_t j = 0; j < dislike_idx.size(); ++j) {
      score += log_sigmoid(params.alpha2 * (dislike_d[t * dislike_idx.size() + j] - nearest_like));
    }
    scores[t] = score;
  }
  return scores;
}

/// Likelihood under the model selected in `params`.
template <class Metric = SquaredEuclidean>
std::vector<double> feedback_log_likelihood(const Catalog& catalog, std::span<const std::string> likes,
                                            std::span<const std::string> dislikes, const NoiseParams& params,
                                            const Metric& metric = {}) {
  if (params.model == LikelihoodModel::bipartite) {
    return bipartite_log_likelihood_scores(catalog, likes, dislikes, params, metric);
  }
  const auto pairs = make_preference_pairs(likes, dislikes);
  return log_likelihood_scores(catalog, pairs, params, metric);
}

inline PosteriorScores log_posterior(std::span<const double> likelihood, const PriorScores& prior) {
  if (likelihood.size() != prior.log_prior.size()) throw std::invalid_argument("log_posterior: length mismatch");
  PosteriorScores out;
  out.log_posterior.resize(likelihood.size());
  for (std::size_t i = 0; i < likelihood.size(); ++i) out.log_posterior[i] = likelihood[i] + prior.log_prior[i];
  return out;
}

// ---------------------------------------------------------------------------
// Prior file: one JSON object per line, {"id": "...", "log_prior": x}, where x
// is a number or the string "-inf". Ids absent from the file get 0.
// ---------------------------------------------------------------------------

inline PriorScores load_prior(std::istream& in, const Catalog& catalog) {
  using nlohmann::json;
  PriorScores prior = PriorScores::uniform(catalog.size());
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "prior record " + std::to_string(record) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(where + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("log_prior")) {
      throw std::invalid_argument(where + "expected {\"id\": string, \"log_prior\": number}");
    }
    const auto idx = catalog.find(obj["id"].get<std::string>());
    if (!idx) throw std::invalid_argument(where + "unknown item id '" + obj["id"].get<std::string>() + "'");
    const auto& v = obj["log_prior"];
    if (v.is_number()) {
      prior.log_prior[*idx] = v.get<double>();
    } else if (v.is_string() && v.get<std::string>() == "-inf") {
      prior.log_prior[*idx] = -std::numeric_limits<double>::infinity();
    } else {
      throw std::invalid_argument(where + "log_prior must be a number or \"-inf\"");
    }
    ++record;
  }
  prior.validate(catalog.size());
  return prior;
}

}  // namespace seeker
