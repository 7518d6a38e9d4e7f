#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "seeker/preference_model.hpp"
#include "seeker/random.hpp"

namespace seeker {

enum class StrategyKind { noiseless, random, epsilon_greedy, boltzmann };
enum class ScoreTransform { log_posterior, posterior };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::noiseless: return "noiseless";
    case StrategyKind::random: return "random";
    case StrategyKind::epsilon_greedy: return "epsilon_greedy";
    case StrategyKind::boltzmann: return "boltzmann";
  }
  return "?";
}

inline StrategyKind parse_strategy_kind(const std::string& s) {
  if (s == "noiseless") return StrategyKind::noiseless;
  if (s == "random") return StrategyKind::random;
  if (s == "epsilon_greedy") return StrategyKind::epsilon_greedy;
  if (s == "boltzmann") return StrategyKind::boltzmann;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

inline const char* to_string(ScoreTransform t) {
  return t == ScoreTransform::posterior ? "posterior" : "log_posterior";
}

inline ScoreTransform parse_score_transform(const std::string& s) {
  if (s == "log_posterior") return ScoreTransform::log_posterior;
  if (s == "posterior") return ScoreTransform::posterior;
  throw std::invalid_argument("unknown score_transform '" + s + "'");
}

/// Page-sampling strategy. For `boltzmann`, a present `eta` selects the
/// annealed variant (eta * g + Gumbel); otherwise per-item noise is scaled by
/// C / sqrt(n_j).
struct StrategyConfig {
  StrategyKind kind = StrategyKind::boltzmann;
  double epsilon = 0.1;
  std::optional<double> eta;
  std::optional<double> c_squared;
  ScoreTransform score_transform = ScoreTransform::log_posterior;
  std::size_t page_size = 12;

  /// 1/8 for posterior-probability scores (bounded rewards); 1 for log scores.
  double effective_c_squared() const {
    if (c_squared) return *c_squared;
    return score_transform == ScoreTransform::posterior ? 0.125 : 1.0;
  }

  void validate(std::size_t catalog_size) const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
    if (eta && !(*eta > 0.0 && std::isfinite(*eta))) throw std::invalid_argument("eta must be positive");
    if (c_squared && !(*c_squared > 0.0 && std::isfinite(*c_squared))) {
      throw std::invalid_argument("c_squared must be positive");
    }
    if (page_size == 0) throw std::invalid_argument("page_size must be positive");
    if (page_size > catalog_size) {
      throw std::invalid_argument("page_size " + std::to_string(page_size) + " exceeds catalog size " +
                                  std::to_string(catalog_size));
    }
  }

  friend bool operator==(const StrategyConfig&, const StrategyConfig&) = default;
};

inline void to_json(nlohmann::json& j, const StrategyConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"epsilon", c.epsilon},
                     {"eta", c.eta ? nlohmann::json(*c.eta) : nlohmann::json(nullptr)},
                     {"c_squared", c.c_squared ? nlohmann::json(*c.c_squared) : nlohmann::json(nullptr)},
                     {"score_transform", to_string(c.score_transform)},
                     {"page_size", c.page_size}};
}

inline void from_json(const nlohmann::json& j, StrategyConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("config must be an object");
  c = StrategyConfig{};
  auto number = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
    return it->get<double>();
  };
  if (auto it = j.find("kind"); it != j.end()) {
    if (!it->is_string()) throw std::invalid_argument("kind must be a string");
    c.kind = parse_strategy_kind(it->get<std::string>());
  }
  if (auto v = number("epsilon")) c.epsilon = *v;
  c.eta = number("eta");
  c.c_squared = number("c_squared");
  if (auto it = j.find("score_transform"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw std::invalid_argument("score_transform must be a string");
    c.score_transform = parse_score_transform(it->get<std::string>());
  }
  if (auto it = j.find("page_size"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() < 1) {
      throw std::invalid_argument("page_size must be a positive integer");
    }
    c.page_size = it->get<std::size_t>();
  }
}

/// n_j: 1 + number of like/dislike events on item j.
struct InteractionCounts {
  std::vector<std::uint64_t> n;

  static InteractionCounts ones(std::size_t size) { return {std::vector<std::uint64_t>(size, 1)}; }
  friend bool operator==(const InteractionCounts&, const InteractionCounts&) = default;
};

/// A full ranking of catalog indices; the page is its first `page_size` entries.
struct RankedPage {
  std::vector<std::size_t> full_ranking;
  std::size_t page_size = 0;

  std::span<const std::size_t> page() const { return std::span(full_ranking).first(page_size); }
  friend bool operator==(const RankedPage&, const RankedPage&) = default;
};

namespace detail {

inline void check_page_size(std::size_t n, std::size_t m) {
  if (m > n) throw std::invalid_argument("page size " + std::to_string(m) + " exceeds catalog size " + std::to_string(n));
}

/// Indices sorted by value descending; ties keep canonical order.
inline std::vector<std::size_t> argsort_descending(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

}  // namespace detail

inline bool is_permutation_of_catalog(const RankedPage& page, std::size_t n) {
  if (page.full_ranking.size() != n || page.page_size > n) return false;
  std::vector<char> seen(n, 0);
  for (std::size_t i : page.full_ranking) {
    if (i >= n || seen[i]) return false;
    seen[i] = 1;
  }
  return true;
}

inline RankedPage noiseless_page(const PosteriorScores& scores, std::size_t m) {
  detail::check_page_size(scores.size(), m);
  return {detail::argsort_descending(scores.log_posterior), m};
}

/// Uniform permutation by Fisher-Yates.
template <class Rng>
RankedPage random_page(std::size_t n, std::size_t m, Rng& rng) {
  detail::check_page_size(n, m);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(order[i - 1], order[j]);
  }
  return {std::move(order), m};
}

/// Walks the noiseless ranking; each of the M slots is replaced with
/// probability epsilon by a uniformly drawn catalog item. Draws that hit an
/// already placed item (or one with -inf score) are redrawn. Positions past
/// the page follow the residual noiseless order.
template <class Rng>
RankedPage epsilon_greedy_page(const PosteriorScores& scores, std::size_t m, double epsilon, Rng& rng) {
  const std::size_t n = scores.size();
  detail::check_page_size(n, m);
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");

  const auto noiseless = detail::argsort_descending(scores.log_posterior);
  const auto& s = scores.log_posterior;
  std::size_t eligible = static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](double v) { return v > -std::numeric_limits<double>::infinity(); }));

  std::vector<char> placed(n, 0);
  std::vector<std::size_t> ranking;
  ranking.reserve(n);
  auto place = [&](std::size_t i) {
    placed[i] = 1;
    if (std::isfinite(s[i])) --eligible;
    ranking.push_back(i);
  };

  std::size_t cursor = 0;
  for (std::size_t slot = 0; slot < m; ++slot) {
    while (cursor < n && placed[noiseless[cursor]]) ++cursor;
    const bool heads = epsilon > 0.0 && uniform_open(rng) < epsilon;
    if (heads && eligible > 0) {
      std::size_t pick;
      do {
        pick = static_cast<std::size_t>(uniform_index(rng, n));
      } while (placed[pick] || !std::isfinite(s[pick]));
      place(pick);
      ++cursor;
    } else if (cursor < n) {
      place(noiseless[cursor++]);
    } else {
      // Walk exhausted by earlier replacements; take the best unplaced item.
      place(*std::find_if(noiseless.begin(), noiseless.end(), [&](std::size_t i) { return !placed[i]; }));
    }
  }
  for (std::size_t i : noiseless) {
    if (!placed[i]) ranking.push_back(i);
  }
  return {std::move(ranking), m};
}

template <class Rng>
double sample_standard_gumbel(Rng& rng) {
  return gumbel_from_bits(rng());
}

/// g_j for the configured transform. `posterior` turns log scores into
/// probabilities through a max-shifted log-sum-exp.
inline std::vector<double> transform_scores(const PosteriorScores& scores, ScoreTransform transform) {
  if (transform == ScoreTransform::log_posterior) return scores.log_posterior;
  const auto& s = scores.log_posterior;
  const double peak = *std::max_element(s.begin(), s.end());
  double total = 0.0;
  for (double v : s) total += std::exp(v - peak);
  const double log_norm = peak + std::log(total);
  std::vector<double> g(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) g[i] = std::exp(s[i] - log_norm);
  return g;
}

namespace detail {

/// One key per invocation; item i's Gumbel draw comes from substream (key, i),
/// so the per-item loop is order-independent.
template <class Rng, class ZFn>
RankedPage perturbed_page(std::size_t n, std::size_t m, Rng& rng, ZFn&& z_of) {
  const std::uint64_t key = rng();
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 sub(hash_combine(key, i));
    z[i] = z_of(i, sample_standard_gumbel(sub));
  }
  return {argsort_descending(z), m};
}

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

}  // namespace detail

/// z_i = g_i + C * gamma_i / sqrt(n_i), sorted descending.
template <class Rng>
RankedPage boltzmann_page(const PosteriorScores& scores, const InteractionCounts& counts, const StrategyConfig& config,
                          std::size_t m, Rng& rng) {
  const std::size_t n = scores.size();
  detail::check_page_size(n, m);
  if (counts.n.size() != n) throw std::invalid_argument("boltzmann_page: counts length mismatch");
  for (auto c : counts.n) {
    if (c < 1) throw std::invalid_argument("boltzmann_page: interaction counts must be >= 1");
  }
  const auto g = transform_scores(scores, config.score_transform);
  const double c = std::sqrt(config.effective_c_squared());
  return detail::perturbed_page(n, m, rng, [&](std::size_t i, double gumbel) {
    if (scores.log_posterior[i] == detail::neg_inf) return detail::neg_inf;
    return g[i] + c * gumbel / std::sqrt(static_cast<double>(counts.n[i]));
  });
}

/// z_i = eta * g_i + gamma_i. eta = 0 is uniform exploration.
template <class Rng>
RankedPage annealed_boltzmann_page(const std::vector<double>& g, double eta, std::size_t m, Rng& rng) {
  detail::check_page_size(g.size(), m);
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
  return detail::perturbed_page(g.size(), m, rng, [&](std::size_t i, double gumbel) {
    if (g[i] == detail::neg_inf) return detail::neg_inf;
    return eta * g[i] + gumbel;
  });
}

template <class Rng>
RankedPage annealed_boltzmann_page(const PosteriorScores& scores, double eta, std::size_t m, Rng& rng) {
  return annealed_boltzmann_page(scores.log_posterior, eta, m, rng);
}

/// Dispatch on `config.kind`.
template <class Rng>
RankedPage sample_page(const PosteriorScores& scores, const InteractionCounts& counts, const StrategyConfig& config,
                       Rng& rng) {
  const std::size_t m = config.page_size;
  switch (config.kind) {
    case StrategyKind::noiseless: return noiseless_page(scores, m);
    case StrategyKind::random: return random_page(scores.size(), m, rng);
    case StrategyKind::epsilon_greedy: return epsilon_greedy_page(scores, m, config.epsilon, rng);
    case StrategyKind::boltzmann:
      if (config.eta) {
        auto g = transform_scores(scores, config.score_transform);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (scores.log_posterior[i] == detail::neg_inf) g[i] = detail::neg_inf;
        }
        return annealed_boltzmann_page(g, *config.eta, m, rng);
      }
      return boltzmann_page(scores, counts, config, m, rng);
  }
  throw std::logic_error("unreachable strategy kind");
}

}  // namespace seeker
