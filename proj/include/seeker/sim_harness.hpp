#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "seeker/embedding_store.hpp"
#include "seeker/preference_model.hpp"
#include "seeker/random.hpp"
#include "seeker/sampler.hpp"
#include "seeker/session.hpp"

namespace seeker {

// ---------------------------------------------------------------------------
// Simulated users
// ---------------------------------------------------------------------------

enum class SimUserKind { greedy_nearest, noisy_triplet };

inline SimUserKind parse_sim_user_kind(const std::string& s) {
  if (s == "greedy_nearest") return SimUserKind::greedy_nearest;
  if (s == "noisy_triplet") return SimUserKind::noisy_triplet;
  throw std::invalid_argument("unknown policy '" + s + "'");
}

inline const char* to_string(SimUserKind k) {
  return k == SimUserKind::noisy_triplet ? "noisy_triplet" : "greedy_nearest";
}

struct SimUserPolicy {
  SimUserKind kind = SimUserKind::greedy_nearest;
  double alpha_user = 1.0;
  std::size_t likes_per_step = 1;
  std::size_t dislikes_per_step = 1;

  void validate(std::size_t page_size) const {
    if (likes_per_step + dislikes_per_step > page_size) {
      throw std::invalid_argument("likes_per_step + dislikes_per_step exceeds page size");
    }
    if (!(alpha_user >= 0.0)) throw std::invalid_argument("alpha_user must be >= 0");
  }
};

namespace detail {

/// Top-k of `log_weights` under Gumbel perturbation: k draws without
/// replacement proportional to exp(log_weight).
template <class Rng>
std::vector<std::size_t> gumbel_top_k(std::span<const double> log_weights, std::size_t k, Rng& rng) {
  std::vector<double> z(log_weights.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = log_weights[i] + sample_standard_gumbel(rng);
  auto order = argsort_descending(z);
  order.resize(std::min(k, order.size()));
  return order;
}

}  // namespace detail

/// Feedback a simulated user gives on the displayed page. Items already in
/// the like or dislike set are never acted on again.
template <class Rng>
std::vector<FeedbackEvent> simulate_feedback(const Catalog& catalog, std::span<const std::size_t> page,
                                             EmbeddingView target, const std::set<std::size_t>& likes,
                                             const std::set<std::size_t>& dislikes, const SimUserPolicy& policy,
                                             Rng& rng) {
  if (target.size() != catalog.dimension()) throw std::invalid_argument("simulate_feedback: target dimension mismatch");

  std::vector<std::size_t> candidates;
  for (std::size_t i : page) {
    if (!likes.count(i) && !dislikes.count(i)) candidates.push_back(i);
  }
  if (candidates.empty()) return {};

  std::vector<double> dist(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) dist[c] = squared_distance(catalog.embedding(candidates[c]), target);

  std::vector<FeedbackEvent> events;
  std::vector<char> used(candidates.size(), 0);
  auto emit = [&](std::size_t c, FeedbackAction action) {
    used[c] = 1;
    events.push_back({catalog[candidates[c]].item_id, action, 0});
  };

  if (policy.kind == SimUserKind::greedy_nearest) {
    // Nearest first; equal distances fall back to catalog order.
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return candidates[a] < candidates[b];
    });
    const std::size_t n_likes = std::min(policy.likes_per_step, order.size());
    for (std::size_t k = 0; k < n_likes; ++k) emit(order[k], FeedbackAction::like);
    std::size_t n_dislikes = std::min(policy.dislikes_per_step, order.size() - n_likes);
    for (std::size_t k = order.size(); k-- > n_likes && n_dislikes > 0; --n_dislikes) {
      emit(order[k], FeedbackAction::dislike);
    }
    return events;
  }

  // noisy_triplet: like/dislike weights are the logistic triplet probability
  // of each item against the page's mean distance.
  double mean = 0.0;
  for (double d : dist) mean += d;
  mean /= static_cast<double>(dist.size());

  std::vector<double> like_w(dist.size());
  for (std::size_t c = 0; c < dist.size(); ++c) like_w[c] = log_sigmoid(policy.alpha_user * (mean - dist[c]));
  for (std::size_t c : detail::gumbel_top_k(like_w, policy.likes_per_step, rng)) emit(c, FeedbackAction::like);

  std::vector<std::size_t> rest;
  std::vector<double> dislike_w;
  for (std::size_t c = 0; c < dist.size(); ++c) {
    if (used[c]) continue;
    rest.push_back(c);
    dislike_w.push_back(log_sigmoid(policy.alpha_user * (dist[c] - mean)));
  }
  for (std::size_t r : detail::gumbel_top_k(dislike_w, policy.dislikes_per_step, rng)) {
    emit(rest[r], FeedbackAction::dislike);
  }
  return events;
}

// ---------------------------------------------------------------------------
// Sessions and benchmarks
// ---------------------------------------------------------------------------

struct SessionMetrics {
  std::string target_id;
  StrategyKind strategy = StrategyKind::noiseless;
  std::size_t catalog_size = 0;
  std::vector<std::size_t> rank_trajectory;  // 1-based rank per timestep
  double best_normalized_rank = 1.0;
  std::map<double, std::optional<std::size_t>> steps_to_cutoff;

  /// First timestep with rank / N <= rho.
  std::optional<std::size_t> first_timestep_within(double rho) const {
    for (std::size_t k = 0; k < rank_trajectory.size(); ++k) {
      if (static_cast<double>(rank_trajectory[k]) / static_cast<double>(catalog_size) <= rho) return k;
    }
    return std::nullopt;
  }
};

inline const std::vector<double>& default_cutoffs() {
  static const std::vector<double> cutoffs{0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  return cutoffs;
}

struct SessionSetup {
  StrategyConfig config;
  NoiseParams noise;
  std::optional<PriorScores> prior;  // uniform when absent
  SimUserPolicy policy;
  std::size_t steps = 15;  // K
  std::uint64_t seed = 0;
  std::vector<double> cutoffs = default_cutoffs();
};

/// Runs one simulated session for at most K feedback rounds. A greedy user
/// stops as soon as the target is on the displayed page.
inline SessionMetrics run_session(std::shared_ptr<const Catalog> catalog, const std::string& target_id,
                                  const SessionSetup& setup) {
  const auto target = catalog->find(target_id);
  if (!target) throw std::invalid_argument("unknown target '" + target_id + "'");
  setup.policy.validate(setup.config.page_size);

  Session session(catalog, "sim", setup.config, setup.noise,
                  setup.prior ? *setup.prior : PriorScores::uniform(catalog->size()), setup.seed);
  SplitMix64 user_rng(hash_combine(setup.seed, 0x75736572ULL));
  const auto target_embedding = catalog->embedding(*target);

  SessionMetrics m;
  m.target_id = target_id;
  m.strategy = setup.config.kind;
  m.catalog_size = catalog->size();
  for (std::size_t k = 0;; ++k) {
    const std::size_t rank = session.rank_of(*target);
    m.rank_trajectory.push_back(rank);
    if (setup.policy.kind == SimUserKind::greedy_nearest && rank <= setup.config.page_size) break;
    if (k == setup.steps) break;
    const auto events = simulate_feedback(*catalog, session.current_page().page(), target_embedding, session.likes(),
                                          session.dislikes(), setup.policy, user_rng);
    session.apply_feedback(events);
  }

  const auto best = *std::min_element(m.rank_trajectory.begin(), m.rank_trajectory.end());
  m.best_normalized_rank = static_cast<double>(best) / static_cast<double>(catalog->size());
  for (double rho : setup.cutoffs) m.steps_to_cutoff[rho] = m.first_timestep_within(rho);
  return m;
}

struct BenchmarkConfig {
  std::vector<StrategyConfig> strategies;
  SimUserPolicy policy;
  NoiseParams noise;
  std::size_t sessions_per_strategy = 200;
  std::size_t steps = 15;      // K
  std::size_t page_size = 12;  // M
  std::uint64_t seed = 1;
  std::vector<double> cutoffs = default_cutoffs();
  std::size_t threads = 1;
};

struct StrategyReport {
  std::string strategy;
  StrategyConfig config;
  std::vector<double> recall;                    // per cutoff
  std::vector<std::optional<double>> mean_steps;  // per cutoff, over sessions reaching it
  std::vector<std::size_t> censored;             // per cutoff, sessions never reaching it
  std::size_t sessions = 0;
};

struct SessionRecord {
  std::size_t strategy_index = 0;
  std::size_t session_index = 0;
  std::uint64_t seed = 0;
  SessionMetrics metrics;
};

struct BenchmarkReport {
  std::vector<double> cutoffs;
  std::vector<StrategyReport> strategies;
  std::vector<SessionRecord> sessions;
  std::size_t sessions_per_strategy = 0;
  std::size_t steps = 0;
  std::size_t page_size = 0;
  std::uint64_t seed = 0;
};

/// Target for session `index`, shared by every strategy so comparisons are paired.
inline std::size_t benchmark_target(std::uint64_t master_seed, std::size_t index, std::size_t catalog_size) {
  SplitMix64 rng(hash_combine(master_seed, index));
  return static_cast<std::size_t>(uniform_index(rng, catalog_size));
}

inline StrategyReport summarize(const std::string& name, const StrategyConfig& config,
                                std::span<const SessionMetrics* const> sessions, std::span<const double> cutoffs) {
  StrategyReport r;
  r.strategy = name;
  r.config = config;
  r.sessions = sessions.size();
  for (double rho : cutoffs) {
    std::size_t hits = 0, reached = 0, step_sum = 0;
    for (const auto* m : sessions) {
      if (m->best_normalized_rank <= rho) ++hits;
      if (auto k = m->first_timestep_within(rho)) {
        ++reached;
        step_sum += *k;
      }
    }
    const double n = static_cast<double>(sessions.size());
    r.recall.push_back(n > 0 ? static_cast<double>(hits) / n : 0.0);
    r.mean_steps.push_back(reached ? std::optional<double>(static_cast<double>(step_sum) / static_cast<double>(reached))
                                   : std::nullopt);
    r.censored.push_back(sessions.size() - reached);
  }
  return r;
}

inline BenchmarkReport run_benchmark(std::shared_ptr<const Catalog> catalog, const BenchmarkConfig& cfg) {
  if (cfg.sessions_per_strategy < 1) throw std::invalid_argument("sessions_per_strategy must be >= 1");
  if (cfg.strategies.empty()) throw std::invalid_argument("no strategies to benchmark");
  auto cutoffs = cfg.cutoffs;
  std::sort(cutoffs.begin(), cutoffs.end());

  std::vector<StrategyConfig> configs = cfg.strategies;
  for (auto& c : configs) {
    c.page_size = cfg.page_size;
    c.validate(catalog->size());
  }
  cfg.policy.validate(cfg.page_size);

  const std::size_t per = cfg.sessions_per_strategy;
  std::vector<SessionRecord> records(configs.size() * per);
  auto run_one = [&](std::size_t task) {
    const std::size_t s = task / per, i = task % per;
    SessionSetup setup;
    setup.config = configs[s];
    setup.noise = cfg.noise;
    setup.policy = cfg.policy;
    setup.steps = cfg.steps;
    setup.seed = hash_combine(hash_combine(cfg.seed, i), s + 1);
    setup.cutoffs = cutoffs;
    const auto target = benchmark_target(cfg.seed, i, catalog->size());
    records[task] = {s, i, setup.seed, run_session(catalog, (*catalog)[target].item_id, setup)};
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, records.size()));
  if (threads == 1) {
    for (std::size_t t = 0; t < records.size(); ++t) run_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < records.size();) run_one(t);
      });
    }
  }

  BenchmarkReport report;
  report.cutoffs = cutoffs;
  report.sessions_per_strategy = per;
  report.steps = cfg.steps;
  report.page_size = cfg.page_size;
  report.seed = cfg.seed;
  for (std::size_t s = 0; s < configs.size(); ++s) {
    std::vector<const SessionMetrics*> ms;
    for (std::size_t i = 0; i < per; ++i) ms.push_back(&records[s * per + i].metrics);
    report.strategies.push_back(summarize(to_string(configs[s].kind), configs[s], ms, cutoffs));
  }
  report.sessions = std::move(records);
  return report;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// strategy,rho_cutoff,recall,mean_steps,censored_count,sessions
inline void write_report_csv(const BenchmarkReport& report, std::ostream& out) {
  out << "strategy,rho_cutoff,recall,mean_steps,censored_count,sessions\n";
  for (const auto& s : report.strategies) {
    for (std::size_t c = 0; c < report.cutoffs.size(); ++c) {
      out << s.strategy << ',' << format_number(report.cutoffs[c]) << ',' << format_number(s.recall[c]) << ','
          << (s.mean_steps[c] ? format_number(*s.mean_steps[c]) : std::string()) << ',' << s.censored[c] << ','
          << s.sessions << '\n';
    }
  }
}

/// One JSON object per session: enough to rerun it through run_session.
inline void write_session_trace(const BenchmarkReport& report, std::ostream& out) {
  using nlohmann::json;
  for (const auto& r : report.sessions) {
    json steps = json::object();
    for (const auto& [rho, k] : r.metrics.steps_to_cutoff) {
      steps[format_number(rho)] = k ? json(*k) : json(nullptr);
    }
    json line{{"strategy", report.strategies[r.strategy_index].strategy},
              {"config", report.strategies[r.strategy_index].config},
              {"session_index", r.session_index},
              {"seed", r.seed},
              {"target_id", r.metrics.target_id},
              {"steps", report.steps},
              {"rank_trajectory", r.metrics.rank_trajectory},
              {"best_normalized_rank", r.metrics.best_normalized_rank},
              {"steps_to_cutoff", steps}};
    out << line.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Discretization gap on [0, 1]
// ---------------------------------------------------------------------------

struct Density1D {
  std::string name;
  std::function<double(double)> pdf;
};

inline Density1D uniform_density() {
  return {"uniform", [](double) { return 1.0; }};
}

/// f(x) = 2x, clamped to a tiny positive floor so it is strictly positive at 0.
inline Density1D linear_density() {
  return {"linear", [](double x) { return std::max(2.0 * x, 1e-12); }};
}

inline double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * 3.14159265358979323846));
}

/// 0.6 N(0.3, 0.08^2) + 0.4 N(0.72, 0.1^2), restricted to [0, 1].
inline Density1D gaussian_mixture_density() {
  return {"gaussian-mixture",
          [](double x) { return 0.6 * normal_pdf(x, 0.3, 0.08) + 0.4 * normal_pdf(x, 0.72, 0.1); }};
}

inline Density1D density_by_name(const std::string& name) {
  if (name == "uniform") return uniform_density();
  if (name == "linear") return linear_density();
  if (name == "gaussian-mixture") return gaussian_mixture_density();
  throw std::invalid_argument("unknown density '" + name + "'");
}

/// Sum over grid points of |P(snap a continuous draw to x_k) - P(draw x_k
/// from the normalized density on the grid)|. Grid points sit at cell
/// centers (k + 1/2)/n so every nearest-neighbor cell has measure 1/n.
inline double discretization_gap(const Density1D& density, std::size_t n_points, std::size_t subintervals = 128) {
  if (n_points < 2) throw std::invalid_argument("discretization_gap: n_points must be >= 2");
  if (subintervals < 2) subintervals = 2;
  if (subintervals % 2) ++subintervals;

  auto f = [&](double x) {
    const double v = density.pdf(x);
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("density '" + density.name + "' is not positive at x=" + std::to_string(x));
    }
    return v;
  };

  const double width = 1.0 / static_cast<double>(n_points);
  std::vector<double> cell_mass(n_points), point_density(n_points);
  double total_mass = 0.0, total_density = 0.0;
  for (std::size_t k = 0; k < n_points; ++k) {
    // Composite Simpson over the cell.
    const double lo = static_cast<double>(k) * width;
    const double h = width / static_cast<double>(subintervals);
    double acc = f(lo) + f(lo + width);
    for (std::size_t j = 1; j < subintervals; ++j) acc += (j % 2 ? 4.0 : 2.0) * f(lo + static_cast<double>(j) * h);
    cell_mass[k] = acc * h / 3.0;
    point_density[k] = f(lo + 0.5 * width);
    total_mass += cell_mass[k];
    total_density += point_density[k];
  }

  double gap = 0.0;
  for (std::size_t k = 0; k < n_points; ++k) {
    gap += std::abs(cell_mass[k] / total_mass - point_density[k] / total_density);
  }
  return gap;
}

}  // namespace seeker
