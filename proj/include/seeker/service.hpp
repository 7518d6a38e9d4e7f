#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seeker/embedding_store.hpp"
#include "seeker/session.hpp"

namespace seeker {

/// An error carrying the HTTP status the API layer should answer with.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Catalog registry plus live sessions. Transport-agnostic: the HTTP binding
/// in http_api.hpp only decodes requests and encodes these JSON results.
///
/// With a data directory, catalogs are written under catalogs/ and every
/// session keeps an append-only event log under sessions/; constructing a
/// service on the same directory replays both.
class SeekerService {
 public:
  explicit SeekerService(std::optional<std::filesystem::path> data_dir = std::nullopt)
      : data_dir_(std::move(data_dir)) {
    if (data_dir_) {
      std::filesystem::create_directories(*data_dir_ / "catalogs");
      std::filesystem::create_directories(*data_dir_ / "sessions");
      restore();
    }
  }

  SeekerService(const SeekerService&) = delete;
  SeekerService& operator=(const SeekerService&) = delete;

  /// Parses and registers a catalog. Every upload gets a fresh id.
  nlohmann::json register_catalog(const std::string& content) {
    std::istringstream in(content);
    std::shared_ptr<const Catalog> catalog;
    try {
      catalog = std::make_shared<const Catalog>(load_catalog(in));
    } catch (const CatalogError& e) {
      throw ApiError(400, e.what());
    }
    std::unique_lock lock(registry_mutex_);
    const std::string id = "cat-" + std::to_string(++catalog_seq_);
    if (data_dir_) {
      std::ofstream out(catalog_path(id), std::ios::binary);
      save_catalog(*catalog, out);
      if (!out) throw ApiError(500, "failed to persist catalog " + id);
    }
    catalogs_.emplace(id, catalog);
    return {{"catalog_id", id}, {"count", catalog->size()}, {"dimension", catalog->dimension()}};
  }

  nlohmann::json list_catalogs() const {
    std::shared_lock lock(registry_mutex_);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, c] : catalogs_) {
      out.push_back({{"catalog_id", id}, {"count", c->size()}, {"dimension", c->dimension()}});
    }
    return out;
  }

  /// Body: {"config": {...}, "noise": {...}, "seed": n, "prior": {id: logp|null}}.
  nlohmann::json create_session(const std::string& catalog_id, const nlohmann::json& body) {
    auto catalog = find_catalog(catalog_id);
    if (!body.is_object()) throw ApiError(400, "request body must be a JSON object");

    StrategyConfig config;
    NoiseParams noise;
    PriorScores prior = PriorScores::uniform(catalog->size());
    std::uint64_t seed = 0;
    try {
      if (auto it = body.find("config"); it != body.end()) config = it->get<StrategyConfig>();
      if (auto it = body.find("noise"); it != body.end() && !it->is_null()) noise = it->get<NoiseParams>();
      if (auto it = body.find("seed"); it != body.end() && !it->is_null()) {
        const bool negative = it->is_number_integer() && !it->is_number_unsigned() && it->get<std::int64_t>() < 0;
        if (!it->is_number_integer() || negative) throw std::invalid_argument("seed must be a nonnegative integer");
        seed = it->get<std::uint64_t>();
      }
      if (auto it = body.find("prior"); it != body.end()) prior = prior_from_json(*catalog, *it);
      config.validate(catalog->size());
    } catch (const std::exception& e) {
      throw ApiError(422, e.what());
    }

    std::unique_lock lock(registry_mutex_);
    const std::string id = "ses-" + std::to_string(++session_seq_);
    auto entry = std::make_shared<Entry>(catalog_id, Session(catalog, id, config, noise, std::move(prior), seed));
    if (data_dir_) {
      entry->log.open(session_path(id), std::ios::binary | std::ios::app);
      nlohmann::json header{{"type", "create"},   {"session_id", id}, {"catalog_id", catalog_id},
                            {"config", config},   {"noise", noise},   {"seed", seed},
                            {"prior", prior_to_json(*catalog, entry->session.prior())}};
      append(*entry, header);
    }
    sessions_.emplace(id, entry);
    return view(entry->session);
  }

  /// Body: {"item_id": "...", "action": "like" | "dislike" | "retract"}.
  nlohmann::json feedback(const std::string& session_id, const nlohmann::json& body) {
    auto entry = find_session(session_id);
    FeedbackEvent event;
    try {
      event.item_id = body.at("item_id").get<std::string>();
      event.action = parse_feedback_action(body.at("action").get<std::string>());
    } catch (const std::exception& e) {
      throw ApiError(400, std::string("bad feedback body: ") + e.what());
    }

    std::lock_guard lock(entry->mutex);
    try {
      entry->session.apply_feedback(event);
    } catch (const FeedbackError& e) {
      switch (e.kind()) {
        case FeedbackError::Kind::unknown_item: throw ApiError(404, e.what());
        case FeedbackError::Kind::conflicting_feedback: throw ApiError(409, e.what());
        case FeedbackError::Kind::no_such_feedback: throw ApiError(410, e.what());
      }
      throw;
    }
    if (data_dir_) append(*entry, {{"type", "feedback"}, {"item_id", event.item_id}, {"action", to_string(event.action)}});
    return view(entry->session);
  }

  nlohmann::json session_view(const std::string& session_id) const {
    auto entry = find_session(session_id);
    std::lock_guard lock(entry->mutex);
    return view(entry->session);
  }

  nlohmann::json items(const std::string& session_id, std::size_t offset, std::size_t limit) const {
    auto entry = find_session(session_id);
    std::lock_guard lock(entry->mutex);
    const auto& s = entry->session;
    nlohmann::json list = nlohmann::json::array();
    std::size_t rank = offset + 1;
    for (std::size_t idx : s.explore_more(offset, limit)) list.push_back(item_view(s, idx, rank++));
    return {{"session_id", s.id()},
            {"timestep", s.timestep()},
            {"offset", offset},
            {"total_items", s.catalog().size()},
            {"items", list}};
  }

  /// 1-based rank of one item in the current full ranking.
  nlohmann::json rank(const std::string& session_id, const std::string& item_id) const {
    auto entry = find_session(session_id);
    std::lock_guard lock(entry->mutex);
    const auto& s = entry->session;
    const auto idx = s.catalog().find(item_id);
    if (!idx) throw ApiError(404, "unknown item id '" + item_id + "'");
    const auto r = s.rank_of(*idx);
    return {{"session_id", s.id()},
            {"timestep", s.timestep()},
            {"item_id", item_id},
            {"rank", r},
            {"normalized_rank", static_cast<double>(r) / static_cast<double>(s.catalog().size())}};
  }

  nlohmann::json snapshot(const std::string& session_id) const {
    auto entry = find_session(session_id);
    std::lock_guard lock(entry->mutex);
    return entry->session.snapshot();
  }

  std::vector<std::string> session_ids() const {
    std::shared_lock lock(registry_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, e] : sessions_) ids.push_back(id);
    return ids;
  }

  /// Flushes and closes every event log.
  void flush() {
    std::shared_lock lock(registry_mutex_);
    for (auto& [id, e] : sessions_) {
      std::lock_guard guard(e->mutex);
      if (e->log.is_open()) e->log.flush();
    }
  }

  static nlohmann::json view(const Session& s) {
    nlohmann::json page = nlohmann::json::array();
    std::size_t rank = 1;
    for (std::size_t idx : s.current_page().page()) page.push_back(item_view(s, idx, rank++));
    return {{"session_id", s.id()}, {"timestep", s.timestep()}, {"total_items", s.catalog().size()}, {"page", page}};
  }

 private:
  struct Entry {
    Entry(std::string catalog, Session s) : catalog_id(std::move(catalog)), session(std::move(s)) {}
    std::string catalog_id;
    Session session;
    std::ofstream log;
    mutable std::mutex mutex;
  };

  static nlohmann::json item_view(const Session& s, std::size_t idx, std::size_t rank) {
    const auto& item = s.catalog()[idx];
    const char* state = s.likes().count(idx) ? "liked" : s.dislikes().count(idx) ? "disliked" : "none";
    return {{"item_id", item.item_id}, {"rank", rank}, {"metadata", item.metadata}, {"feedback_state", state}};
  }

  std::shared_ptr<const Catalog> find_catalog(const std::string& id) const {
    std::shared_lock lock(registry_mutex_);
    auto it = catalogs_.find(id);
    if (it == catalogs_.end()) throw ApiError(404, "unknown catalog '" + id + "'");
    return it->second;
  }

  std::shared_ptr<Entry> find_session(const std::string& id) const {
    std::shared_lock lock(registry_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
    return it->second;
  }

  std::filesystem::path catalog_path(const std::string& id) const { return *data_dir_ / "catalogs" / (id + ".jsonl"); }
  std::filesystem::path session_path(const std::string& id) const { return *data_dir_ / "sessions" / (id + ".jsonl"); }

  static void append(Entry& e, const nlohmann::json& record) {
    e.log << record.dump() << '\n';
    e.log.flush();
    if (!e.log) throw ApiError(500, "failed to append to event log of " + e.session.id());
  }

  static std::uint64_t sequence_of(const std::string& id) {
    const auto dash = id.rfind('-');
    if (dash == std::string::npos) return 0;
    try {
      return std::stoull(id.substr(dash + 1));
    } catch (const std::exception&) {
      return 0;
    }
  }

  void restore() {
    namespace fs = std::filesystem;
    for (const auto& f : fs::directory_iterator(*data_dir_ / "catalogs")) {
      if (f.path().extension() != ".jsonl") continue;
      const std::string id = f.path().stem().string();
      std::ifstream in(f.path(), std::ios::binary);
      catalogs_.emplace(id, std::make_shared<const Catalog>(load_catalog(in)));
      catalog_seq_ = std::max(catalog_seq_, sequence_of(id));
    }

    for (const auto& f : fs::directory_iterator(*data_dir_ / "sessions")) {
      if (f.path().extension() != ".jsonl") continue;
      std::ifstream in(f.path(), std::ios::binary);
      std::string line;
      if (!std::getline(in, line)) continue;
      const auto header = nlohmann::json::parse(line);
      const auto catalog = catalogs_.at(header.at("catalog_id").get<std::string>());
      const std::string id = header.at("session_id").get<std::string>();
      auto entry = std::make_shared<Entry>(
          header.at("catalog_id").get<std::string>(),
          Session(catalog, id, header.at("config").get<StrategyConfig>(), header.at("noise").get<NoiseParams>(),
                  prior_from_json(*catalog, header.at("prior")), header.at("seed").get<std::uint64_t>()));
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        entry->session.apply_feedback(FeedbackEvent{rec.at("item_id").get<std::string>(),
                                                    parse_feedback_action(rec.at("action").get<std::string>()), 0});
      }
      entry->log.open(f.path(), std::ios::binary | std::ios::app);
      sessions_.emplace(id, entry);
      session_seq_ = std::max(session_seq_, sequence_of(id));
    }
  }

  std::optional<std::filesystem::path> data_dir_;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<const Catalog>> catalogs_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t catalog_seq_ = 0;
  std::uint64_t session_seq_ = 0;
};

}  // namespace seeker
