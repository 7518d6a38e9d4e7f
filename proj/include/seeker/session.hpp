#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seeker/embedding_store.hpp"
#include "seeker/preference_model.hpp"
#include "seeker/random.hpp"
#include "seeker/sampler.hpp"

namespace seeker {

enum class FeedbackAction { like, dislike, retract };

inline const char* to_string(FeedbackAction a) {
  switch (a) {
    case FeedbackAction::like: return "like";
    case FeedbackAction::dislike: return "dislike";
    case FeedbackAction::retract: return "retract";
  }
  return "?";
}

inline FeedbackAction parse_feedback_action(const std::string& s) {
  if (s == "like") return FeedbackAction::like;
  if (s == "dislike") return FeedbackAction::dislike;
  if (s == "retract") return FeedbackAction::retract;
  throw std::invalid_argument("unknown action '" + s + "'");
}

struct FeedbackEvent {
  std::string item_id;
  FeedbackAction action = FeedbackAction::like;
  std::size_t timestep = 0;

  friend bool operator==(const FeedbackEvent&, const FeedbackEvent&) = default;
};

class FeedbackError : public std::runtime_error {
 public:
  enum class Kind { unknown_item, conflicting_feedback, no_such_feedback };

  FeedbackError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline void to_json(nlohmann::json& j, const NoiseParams& p) {
  j = nlohmann::json{{"alpha", p.alpha},
                     {"alpha1", p.alpha1},
                     {"alpha2", p.alpha2},
                     {"model", p.model == LikelihoodModel::bipartite ? "bipartite" : "pairwise"}};
}

inline void from_json(const nlohmann::json& j, NoiseParams& p) {
  if (!j.is_object()) throw std::invalid_argument("noise must be an object");
  p = NoiseParams{};
  for (auto [key, field] : {std::pair{"alpha", &p.alpha}, {"alpha1", &p.alpha1}, {"alpha2", &p.alpha2}}) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
      if (!it->is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
      *field = it->get<double>();
    }
  }
  if (auto it = j.find("model"); it != j.end() && !it->is_null()) {
    const auto m = it->is_string() ? it->get<std::string>() : std::string();
    if (m == "pairwise") p.model = LikelihoodModel::pairwise;
    else if (m == "bipartite") p.model = LikelihoodModel::bipartite;
    else throw std::invalid_argument("model must be \"pairwise\" or \"bipartite\"");
  }
  p.validate();
}

/// Sparse prior encoding: only entries that differ from 0; -inf as null.
inline nlohmann::json prior_to_json(const Catalog& catalog, const PriorScores& prior) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t i = 0; i < prior.log_prior.size(); ++i) {
    const double v = prior.log_prior[i];
    if (v == 0.0) continue;
    out[catalog[i].item_id] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  }
  return out;
}

inline PriorScores prior_from_json(const Catalog& catalog, const nlohmann::json& j) {
  PriorScores prior = PriorScores::uniform(catalog.size());
  if (j.is_null()) return prior;
  if (!j.is_object()) throw std::invalid_argument("prior must be an object of id -> log prior");
  for (const auto& [id, v] : j.items()) {
    const auto idx = catalog.find(id);
    if (!idx) throw std::invalid_argument("prior: unknown item id '" + id + "'");
    if (v.is_null()) prior.log_prior[*idx] = -std::numeric_limits<double>::infinity();
    else if (v.is_number()) prior.log_prior[*idx] = v.get<double>();
    else throw std::invalid_argument("prior: value for '" + id + "' must be a number or null");
  }
  prior.validate(catalog.size());
  return prior;
}

/// Pure posterior from feedback sets (canonical index order) and the prior.
inline PosteriorScores compute_posterior(const Catalog& catalog, const std::set<std::size_t>& likes,
                                         const std::set<std::size_t>& dislikes, const PriorScores& prior,
                                         const NoiseParams& noise) {
  std::vector<std::string> a, b;
  a.reserve(likes.size());
  b.reserve(dislikes.size());
  for (auto i : likes) a.push_back(catalog[i].item_id);
  for (auto i : dislikes) b.push_back(catalog[i].item_id);
  const auto likelihood = feedback_log_likelihood(catalog, a, b, noise);
  return log_posterior(likelihood, prior);
}

/// One interactive search session: a serial fold over feedback batches.
/// Every applied batch produces exactly one new page (one timestep).
class Session {
 public:
  struct Step {
    std::vector<FeedbackEvent> events;
    RankedPage page;
  };

  Session(std::shared_ptr<const Catalog> catalog, std::string session_id, StrategyConfig config, NoiseParams noise,
          PriorScores prior, std::uint64_t seed)
      : catalog_(std::move(catalog)),
        session_id_(std::move(session_id)),
        config_(config),
        noise_(noise),
        prior_(std::move(prior)),
        seed_(seed),
        rng_(seed) {
    if (!catalog_) throw std::invalid_argument("session requires a catalog");
    config_.validate(catalog_->size());
    noise_.validate();
    prior_.validate(catalog_->size());
    counts_ = InteractionCounts::ones(catalog_->size());
    posterior_ = compute_posterior(*catalog_, likes_, dislikes_, prior_, noise_);
    history_.push_back({{}, sample_page(posterior_, counts_, config_, rng_)});
  }

  const std::string& id() const noexcept { return session_id_; }
  const Catalog& catalog() const noexcept { return *catalog_; }
  const std::shared_ptr<const Catalog>& catalog_ptr() const noexcept { return catalog_; }
  const StrategyConfig& config() const noexcept { return config_; }
  const NoiseParams& noise() const noexcept { return noise_; }
  const PriorScores& prior() const noexcept { return prior_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const SplitMix64& rng() const noexcept { return rng_; }
  const std::set<std::size_t>& likes() const noexcept { return likes_; }
  const std::set<std::size_t>& dislikes() const noexcept { return dislikes_; }
  const InteractionCounts& counts() const noexcept { return counts_; }
  const PosteriorScores& posterior() const noexcept { return posterior_; }
  const std::vector<Step>& history() const noexcept { return history_; }

  /// Pages served so far minus one; the initial page is timestep 0.
  std::size_t timestep() const noexcept { return history_.size() - 1; }
  const RankedPage& current_page() const noexcept { return history_.back().page; }
  const std::vector<std::size_t>& current_ranking() const noexcept { return current_page().full_ranking; }

  /// Slice [offset, offset + limit) of the current ranking, clamped at N.
  std::vector<std::size_t> explore_more(std::size_t offset, std::size_t limit) const {
    const auto& r = current_ranking();
    if (offset >= r.size()) return {};
    const std::size_t end = offset + std::min(limit, r.size() - offset);
    return {r.begin() + static_cast<std::ptrdiff_t>(offset), r.begin() + static_cast<std::ptrdiff_t>(end)};
  }

  /// 1-based position of catalog item `index` in the current ranking.
  std::size_t rank_of(std::size_t index) const {
    const auto& r = current_ranking();
    for (std::size_t pos = 0; pos < r.size(); ++pos) {
      if (r[pos] == index) return pos + 1;
    }
    throw std::out_of_range("item not ranked");
  }

  const RankedPage& apply_feedback(const FeedbackEvent& event) { return apply_feedback(std::span(&event, 1)); }

  /// Applies all events atomically (any invalid event leaves the session
  /// untouched), then recomputes the posterior and samples one new page.
  const RankedPage& apply_feedback(std::span<const FeedbackEvent> events) {
    auto likes = likes_;
    auto dislikes = dislikes_;
    auto counts = counts_;
    std::vector<FeedbackEvent> stamped;
    stamped.reserve(events.size());

    for (const auto& ev : events) {
      const auto idx = catalog_->find(ev.item_id);
      if (!idx) throw FeedbackError(FeedbackError::Kind::unknown_item, "unknown item id '" + ev.item_id + "'");
      switch (ev.action) {
        case FeedbackAction::like:
          if (dislikes.count(*idx)) {
            throw FeedbackError(FeedbackError::Kind::conflicting_feedback,
                                "item '" + ev.item_id + "' is disliked; retract it first");
          }
          likes.insert(*idx);
          ++counts.n[*idx];
          break;
        case FeedbackAction::dislike:
          if (likes.count(*idx)) {
            throw FeedbackError(FeedbackError::Kind::conflicting_feedback,
                                "item '" + ev.item_id + "' is liked; retract it first");
          }
          dislikes.insert(*idx);
          ++counts.n[*idx];
          break;
        case FeedbackAction::retract:
          // Retraction removes evidence; n_j keeps counting interactions.
          if (!likes.erase(*idx) && !dislikes.erase(*idx)) {
            throw FeedbackError(FeedbackError::Kind::no_such_feedback,
                                "item '" + ev.item_id + "' has no active feedback");
          }
          break;
      }
      stamped.push_back({ev.item_id, ev.action, timestep()});
    }

    auto posterior = compute_posterior(*catalog_, likes, dislikes, prior_, noise_);
    auto page = sample_page(posterior, counts, config_, rng_);

    likes_ = std::move(likes);
    dislikes_ = std::move(dislikes);
    counts_ = std::move(counts);
    posterior_ = std::move(posterior);
    history_.push_back({std::move(stamped), std::move(page)});
    return history_.back().page;
  }

  /// Everything needed to rebuild this session by replay.
  nlohmann::json snapshot() const {
    using nlohmann::json;
    json likes = json::array(), dislikes = json::array(), counts = json::object(), log = json::array();
    for (auto i : likes_) likes.push_back((*catalog_)[i].item_id);
    for (auto i : dislikes_) dislikes.push_back((*catalog_)[i].item_id);
    for (std::size_t i = 0; i < counts_.n.size(); ++i) {
      if (counts_.n[i] != 1) counts[(*catalog_)[i].item_id] = counts_.n[i];
    }
    for (std::size_t k = 1; k < history_.size(); ++k) log.push_back(events_to_json(history_[k].events));
    return json{{"session_id", session_id_},
                {"config", config_},
                {"noise", noise_},
                {"prior", prior_to_json(*catalog_, prior_)},
                {"likes", likes},
                {"dislikes", dislikes},
                {"counts", counts},
                {"timestep", timestep()},
                {"rng", {{"seed", seed_}, {"counter", rng_.counter()}}},
                {"events", log}};
  }

  /// Rebuilds a session from `snapshot()` output by replaying its event log,
  /// then checks the replayed state against the recorded one.
  static Session replay(std::shared_ptr<const Catalog> catalog, const nlohmann::json& snap) {
    const auto config = snap.at("config").get<StrategyConfig>();
    const auto noise = snap.at("noise").get<NoiseParams>();
    auto prior = prior_from_json(*catalog, snap.value("prior", nlohmann::json::object()));
    Session s(catalog, snap.at("session_id").get<std::string>(), config, noise, std::move(prior),
              snap.at("rng").at("seed").get<std::uint64_t>());
    for (const auto& batch : snap.at("events")) s.apply_feedback(events_from_json(batch));

    const auto again = s.snapshot();
    for (const char* key : {"likes", "dislikes", "counts", "timestep", "rng"}) {
      if (again.at(key) != snap.at(key)) {
        throw std::runtime_error(std::string("snapshot replay diverged on '") + key + "'");
      }
    }
    return s;
  }

  static nlohmann::json events_to_json(std::span<const FeedbackEvent> events) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : events) out.push_back({{"item_id", e.item_id}, {"action", to_string(e.action)}});
    return out;
  }

  static std::vector<FeedbackEvent> events_from_json(const nlohmann::json& j) {
    std::vector<FeedbackEvent> out;
    for (const auto& e : j) {
      out.push_back({e.at("item_id").get<std::string>(), parse_feedback_action(e.at("action").get<std::string>()), 0});
    }
    return out;
  }

 private:
  std::shared_ptr<const Catalog> catalog_;
  std::string session_id_;
  StrategyConfig config_;
  NoiseParams noise_;
  PriorScores prior_;
  std::uint64_t seed_;
  SplitMix64 rng_;
  std::set<std::size_t> likes_;
  std::set<std::size_t> dislikes_;
  InteractionCounts counts_;
  PosteriorScores posterior_;
  std::vector<Step> history_;
};

}  // namespace seeker
