// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Every tolerance and runtime bound is a named constant.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "seeker/http_api.hpp"
#include "seeker/seeker.hpp"

using namespace seeker;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Runs a criterion, folding its runtime budget into the verdict.
bool report(const char* name, double budget_s, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = seconds_since(t0);
  const bool in_time = elapsed < budget_s;
  const bool pass = o.pass && in_time;
  std::printf("%s  %-28s %8.3fs (budget %gs)  %s%s\n", pass ? "PASS" : "FAIL", name, elapsed, budget_s,
              o.detail.c_str(), in_time ? "" : "  [over budget]");
  std::fflush(stdout);
  return pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Dyadic values keep t + o and t - o exact in float.
float dyadic(SplitMix64& rng) {
  return static_cast<float>(static_cast<double>(uniform_index(rng, 2049)) - 1024.0) / 256.0f;
}

// ---------------------------------------------------------------------------

constexpr double kTripletTolerance = 1e-12;
constexpr std::size_t kTriplets = 1000;

Outcome noise_model_exactness() {
  SplitMix64 rng(101);
  double worst = 0;
  for (std::size_t i = 0; i < kTriplets; ++i) {
    const std::size_t d = 1 + uniform_index(rng, 16);
    std::vector<float> t(d), a(d), b(d), x(d), y(d);
    for (std::size_t k = 0; k < d; ++k) {
      const float o = dyadic(rng);
      t[k] = dyadic(rng);
      a[k] = t[k] + o;
      b[k] = t[k] - o;
      x[k] = dyadic(rng);
      y[k] = dyadic(rng);
    }
    const double alpha = 0.01 + 10.0 * uniform_open(rng);
    worst = std::max(worst, std::abs(std::exp(triplet_log_probability(t, a, b, alpha)) - 0.5));
    worst = std::max(worst, std::abs(std::exp(triplet_log_probability(t, x, y, 0.0)) - 0.5));
  }
  return {worst < kTripletTolerance, fmt("max |p - 0.5| = %.3g over %zu equidistant + %zu alpha=0 triplets", worst,
                                         kTriplets, kTriplets)};
}

// ---------------------------------------------------------------------------

constexpr double kPosteriorTolerance = 1e-9;

Outcome posterior_oracle() {
  SplitMix64 rng(202);
  double worst = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 5 + uniform_index(rng, 46);
    const std::size_t d = 1 + uniform_index(rng, 8);
    const std::size_t n_like = 1 + uniform_index(rng, 3), n_dislike = 1 + uniform_index(rng, 2);
    std::vector<CatalogItem> items;
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> e(d);
      for (auto& v : e) v = static_cast<float>(standard_normal(rng));
      pts.emplace_back(e.begin(), e.end());
      items.push_back({"i" + std::to_string(i), std::move(e), {}});
    }
    const Catalog catalog(d, std::move(items));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
    const std::vector<std::size_t> a(order.begin(), order.begin() + n_like);
    const std::vector<std::size_t> b(order.begin() + n_like, order.begin() + n_like + n_dislike);
    std::vector<std::string> like_ids, dislike_ids;
    for (auto i : a) like_ids.push_back(catalog[i].item_id);
    for (auto i : b) dislike_ids.push_back(catalog[i].item_id);

    NoiseParams noise;
    noise.alpha = 0.1 + 2.0 * uniform_open(rng);
    const auto pairs = make_preference_pairs(like_ids, dislike_ids);
    const auto scores = log_likelihood_scores(catalog, pairs, noise);
    for (std::size_t t = 0; t < n; ++t) {
      const double direct = static_cast<double>(
          oracle::direct_likelihood(pts, t, a, b, static_cast<long double>(noise.alpha)));
      worst = std::max(worst, std::abs(std::exp(scores[t]) - direct));
    }
  }
  return {worst < kPosteriorTolerance, fmt("max |exp(score) - direct| = %.3g over 50 instances", worst)};
}

// ---------------------------------------------------------------------------

constexpr double kGumbelTv = 0.01;

Outcome gumbel_max() {
  const std::vector<double> g{0.3, -1.2, 1.5, 0.0, 0.9};
  const auto p = oracle::softmax(g);
  SplitMix64 rng(303);
  std::vector<std::size_t> counts(g.size(), 0);
  for (int i = 0; i < 200000; ++i) ++counts[annealed_boltzmann_page(g, 1.0, 1, rng).page()[0]];
  const double tv = oracle::total_variation(counts, p);
  return {tv < kGumbelTv, fmt("TV = %.5f over 2e5 single-pick draws", tv)};
}

// ---------------------------------------------------------------------------

constexpr double kUniformMarginalTolerance = 0.01;

Outcome boundary_equivalences() {
  SplitMix64 rng(404);
  bool eps_ok = true, eta_ok = true;
  for (int v = 0; v < 100; ++v) {
    const std::size_t n = 2 + uniform_index(rng, 60);
    PosteriorScores s;
    for (std::size_t i = 0; i < n; ++i) s.log_posterior.push_back(standard_normal(rng));
    const std::size_t m = 1 + uniform_index(rng, n);
    eps_ok = eps_ok && epsilon_greedy_page(s, m, 0.0, rng) == noiseless_page(s, m);
    // Distinct scores: standard normals are distinct with probability one.
    eta_ok = eta_ok && annealed_boltzmann_page(s, 1e9, m, rng) == noiseless_page(s, m);
  }

  const std::vector<double> g{2.0, -1.0, 0.5, 3.0, -2.5, 0.0};
  std::vector<std::size_t> first(g.size(), 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++first[annealed_boltzmann_page(g, 0.0, 1, rng).page()[0]];
  double worst = 0;
  for (auto c : first) worst = std::max(worst, std::abs(static_cast<double>(c) / draws - 1.0 / g.size()));
  const bool uniform_ok = worst < kUniformMarginalTolerance;
  return {eps_ok && eta_ok && uniform_ok,
          fmt("eps=0==noiseless %s, eta=1e9==noiseless %s, eta=0 max marginal dev %.4f", eps_ok ? "yes" : "no",
              eta_ok ? "yes" : "no", worst)};
}

// ---------------------------------------------------------------------------

constexpr double kQuadratureTolerance = 1e-9;

Outcome discretization_witness() {
  const std::vector<std::size_t> sizes{10, 40, 160, 640, 2560};
  std::vector<double> gaps;
  double worst = 0;
  for (auto n : sizes) {
    gaps.push_back(discretization_gap(gaussian_mixture_density(), n));
    worst = std::max(worst, std::abs(gaps.back() - oracle::exact_gap(oracle::mixture_cdf, oracle::mixture_pdf, n)));
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < gaps.size(); ++i) decreasing = decreasing && gaps[i] < gaps[i - 1];
  const bool tenfold = gaps.back() < gaps.front() / 10;
  return {decreasing && tenfold && worst < kQuadratureTolerance,
          fmt("D_10=%.3e D_2560=%.3e strictly decreasing %s, max |D - closed form| = %.2g", gaps.front(), gaps.back(),
              decreasing ? "yes" : "no", worst)};
}

// ---------------------------------------------------------------------------

constexpr double kRecallCheckRho = 0.02;
constexpr double kStepsCheckRho = 0.05;

Outcome benchmark_dominance() {
  auto catalog = std::make_shared<const Catalog>(generate_synthetic_catalog({2000, 32, 20, 0.25, 1}));
  BenchmarkConfig cfg;
  for (auto k : {StrategyKind::noiseless, StrategyKind::random, StrategyKind::epsilon_greedy, StrategyKind::boltzmann}) {
    StrategyConfig c;
    c.kind = k;
    cfg.strategies.push_back(c);
  }
  cfg.sessions_per_strategy = 200;
  cfg.steps = 15;
  cfg.page_size = 12;
  cfg.seed = 1;
  cfg.threads = 1;
  const auto report = run_benchmark(catalog, cfg);

  auto col = [&](double rho) {
    return static_cast<std::size_t>(std::find(report.cutoffs.begin(), report.cutoffs.end(), rho) - report.cutoffs.begin());
  };
  const auto& random = report.strategies[1];
  const auto& boltz = report.strategies[3];
  const double r_rand = random.recall[col(kRecallCheckRho)], r_boltz = boltz.recall[col(kRecallCheckRho)];
  const auto s_rand = random.mean_steps[col(kStepsCheckRho)], s_boltz = boltz.mean_steps[col(kStepsCheckRho)];
  const bool a = r_boltz > r_rand;
  // A strategy that never reaches the cutoff has no mean; Boltzmann must reach it.
  const bool b = s_boltz && (!s_rand || *s_boltz < *s_rand);
  bool c = true;
  for (const auto& s : report.strategies) {
    for (std::size_t i = 1; i < s.recall.size(); ++i) c = c && s.recall[i - 1] <= s.recall[i];
  }
  return {a && b && c, fmt("recall@0.02 boltzmann %.3f vs random %.3f; steps to 0.05 boltzmann %.3f vs random %.3f "
                           "(%zu censored); monotone %s",
                           r_boltz, r_rand, s_boltz.value_or(NAN), s_rand.value_or(NAN),
                           random.censored[col(kStepsCheckRho)], c ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

Outcome session_purity() {
  auto catalog = std::make_shared<const Catalog>(generate_synthetic_catalog({120, 6, 6, 0.3, 5}));
  SplitMix64 rng(707);
  const StrategyKind kinds[] = {StrategyKind::noiseless, StrategyKind::random, StrategyKind::epsilon_greedy,
                                StrategyKind::boltzmann};
  std::size_t mismatches = 0, conflicts = 0, retracts = 0;
  for (int seq = 0; seq < 500; ++seq) {
    StrategyConfig cfg;
    cfg.kind = kinds[seq % 4];
    cfg.epsilon = 0.25;
    if (seq % 8 == 7) cfg.eta = 0.5;
    cfg.page_size = 1 + uniform_index(rng, 15);
    NoiseParams noise;
    if (seq % 5 == 0) noise.model = LikelihoodModel::bipartite;
    const std::uint64_t seed = rng();
    Session live(catalog, "s", cfg, noise, PriorScores::uniform(catalog->size()), seed);

    const std::size_t steps = 1 + uniform_index(rng, 25);
    for (std::size_t k = 0; k < steps; ++k) {
      FeedbackEvent ev{(*catalog)[uniform_index(rng, catalog->size())].item_id, FeedbackAction::like, 0};
      const auto roll = uniform_index(rng, 10);
      ev.action = roll < 4 ? FeedbackAction::like : roll < 8 ? FeedbackAction::dislike : FeedbackAction::retract;
      try {
        live.apply_feedback(ev);
        if (ev.action == FeedbackAction::retract) ++retracts;
      } catch (const FeedbackError&) {
        ++conflicts;
      }
    }

    // Fresh fold over the logged batches only.
    Session again(catalog, "s", cfg, noise, PriorScores::uniform(catalog->size()), seed);
    for (std::size_t k = 1; k < live.history().size(); ++k) again.apply_feedback(live.history()[k].events);
    const auto replayed = Session::replay(catalog, json::parse(live.snapshot().dump()));
    for (const Session* r : {static_cast<const Session*>(&again), &replayed}) {
      const bool same = r->posterior().log_posterior == live.posterior().log_posterior && r->counts() == live.counts() &&
                        r->current_page() == live.current_page() && r->rng() == live.rng();
      if (!same) ++mismatches;
    }
  }
  return {mismatches == 0 && conflicts > 0 && retracts > 0,
          fmt("500 sequences, %zu replay mismatches, %zu rejected events, %zu retractions", mismatches, conflicts,
              retracts)};
}

// ---------------------------------------------------------------------------

constexpr int kConcurrentPosts = 50;

Outcome service_linearizability() {
  const auto dir = std::filesystem::temp_directory_path() / ("seeker-acceptance-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::string sid;
  json live_snapshot;
  std::vector<int> statuses(kConcurrentPosts, 0);
  {
    SeekerService service(dir);
    std::ostringstream cat_text;
    save_catalog(generate_synthetic_catalog({500, 16, 10, 0.3, 9}), cat_text);
    const auto cat = service.register_catalog(cat_text.str()).at("catalog_id").get<std::string>();
    sid = service.create_session(cat, {{"config", {{"kind", "boltzmann"}, {"page_size", 12}}}, {"seed", 8}})
              .at("session_id")
              .get<std::string>();

    httplib::Server server;
    mount_routes(server, service);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    // Posts collide on a handful of items so order decides which ones are
    // accepted (like vs dislike of the same item conflict).
    std::vector<std::thread> posters;
    for (int i = 0; i < kConcurrentPosts; ++i) {
      posters.emplace_back([&, i] {
        httplib::Client cli("127.0.0.1", port);
        cli.set_read_timeout(60);
        char id[16];
        std::snprintf(id, sizeof id, "item-%03d", i % 20);
        const char* action = (i / 20) % 2 ? "dislike" : "like";
        auto r = cli.Post("/sessions/" + sid + "/feedback", json{{"item_id", id}, {"action", action}}.dump(),
                          "application/json");
        statuses[i] = r ? r->status : -1;
      });
    }
    for (auto& t : posters) t.join();
    server.stop();
    listener.join();
    live_snapshot = service.snapshot(sid);
    service.flush();
  }

  std::size_t accepted = 0, rejected = 0, transport = 0;
  for (int s : statuses) (s == 200 ? accepted : s == 409 ? rejected : transport)++;

  // The logged order is a sequential application order; folding it again
  // has to land on the live state.
  const auto snap_events = live_snapshot.at("events");
  const bool logged_all = snap_events.size() == accepted;
  auto catalog = std::make_shared<const Catalog>(generate_synthetic_catalog({500, 16, 10, 0.3, 9}));
  StrategyConfig cfg;
  cfg.page_size = 12;
  Session sequential(catalog, sid, cfg, NoiseParams{}, PriorScores::uniform(catalog->size()), 8);
  for (const auto& batch : snap_events) sequential.apply_feedback(Session::events_from_json(batch));
  const bool sequential_ok = sequential.snapshot() == live_snapshot;

  bool restart_ok = false;
  {
    SeekerService restored(dir);
    restart_ok = restored.snapshot(sid) == live_snapshot;
  }
  std::filesystem::remove_all(dir);
  return {transport == 0 && logged_all && sequential_ok && restart_ok,
          fmt("%zu accepted, %zu conflicts, %zu transport errors; sequential replay %s; restart replay %s", accepted,
              rejected, transport, sequential_ok ? "identical" : "DIFFERS", restart_ok ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  int failed = 0;
  failed += !report("noise-model-exactness", 1.0, noise_model_exactness);
  failed += !report("posterior-oracle", 10.0, posterior_oracle);
  failed += !report("gumbel-max", 30.0, gumbel_max);
  failed += !report("boundary-equivalences", 30.0, boundary_equivalences);
  failed += !report("discretization-witness", 30.0, discretization_witness);
  failed += !report("benchmark-dominance", 300.0, benchmark_dominance);
  failed += !report("session-purity", 120.0, session_purity);
  failed += !report("service-linearizability", 60.0, service_linearizability);
  std::printf("%d of 8 criteria failed\n", failed);
  return failed ? 1 : 0;
}
