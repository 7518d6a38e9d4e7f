// seeker: catalog generation, simulated benchmarks, discretization-gap
// checks, and the interactive search service.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>

#include "seeker/http_api.hpp"
#include "seeker/seeker.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

void log_line(const std::string& msg) { std::cerr << seeker::iso8601_now() << ' ' << msg << std::endl; }

// ---------------------------------------------------------------------------

struct GenCatalogArgs {
  seeker::SyntheticCatalogParams params;
  std::string out = "-";
};

int gen_catalog(const GenCatalogArgs& a) {
  if (a.params.n_clusters > a.params.n_items) throw UsageError("--clusters must not exceed --items");
  const auto catalog = seeker::generate_synthetic_catalog(a.params);
  if (a.out == "-") {
    seeker::save_catalog(catalog, std::cout);
    return kOk;
  }
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + a.out + "' for writing");
  seeker::save_catalog(catalog, out);
  return out ? kOk : kRuntimeFailure;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string catalog;
  std::string strategies = "noiseless,random,epsilon_greedy,boltzmann";
  std::size_t sessions = 200;
  std::size_t steps = 15;
  std::size_t page_size = 12;
  std::string policy = "greedy_nearest";
  std::uint64_t seed = 1;
  std::string out_csv = "bench.csv";
  std::string trace;
  double epsilon = 0.1;
  double alpha = 1.0;
  std::size_t threads = 1;
};

int bench(const BenchArgs& a) {
  seeker::BenchmarkConfig cfg;
  for (const auto& name : split_csv(a.strategies)) {
    seeker::StrategyConfig sc;
    try {
      sc.kind = seeker::parse_strategy_kind(name);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    sc.epsilon = a.epsilon;
    cfg.strategies.push_back(sc);
  }
  if (cfg.strategies.empty()) throw UsageError("--strategies is empty");
  try {
    cfg.policy.kind = seeker::parse_sim_user_kind(a.policy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.epsilon < 0.0 || a.epsilon > 1.0) throw UsageError("--epsilon must be in [0, 1]");

  std::ifstream in(a.catalog, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read catalog '" + a.catalog + "'");
  auto catalog = std::make_shared<const seeker::Catalog>(seeker::load_catalog(in));

  cfg.sessions_per_strategy = a.sessions;
  cfg.steps = a.steps;
  cfg.page_size = a.page_size;
  cfg.seed = a.seed;
  cfg.noise.alpha = a.alpha;
  cfg.threads = a.threads;
  const auto report = seeker::run_benchmark(catalog, cfg);

  {
    std::ofstream csv(a.out_csv, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot open '" + a.out_csv + "'");
    seeker::write_report_csv(report, csv);
  }
  const std::string trace_path = a.trace.empty() ? a.out_csv + ".trace.jsonl" : a.trace;
  {
    std::ofstream trace(trace_path, std::ios::binary);
    if (!trace) throw std::runtime_error("cannot open '" + trace_path + "'");
    seeker::write_session_trace(report, trace);
  }

  const std::vector<double> shown{0.01, 0.02, 0.05, 0.1};
  std::printf("%-16s", "strategy");
  for (double rho : shown) std::printf("  recall@%-5g", rho);
  std::printf("  sessions\n");
  for (const auto& s : report.strategies) {
    std::printf("%-16s", s.strategy.c_str());
    for (double rho : shown) {
      double recall = 0.0;
      for (const auto& m : report.sessions) {
        if (&report.strategies[m.strategy_index] == &s && m.metrics.best_normalized_rank <= rho) recall += 1.0;
      }
      std::printf("  %-12.3f", recall / static_cast<double>(s.sessions));
    }
    std::printf("  %zu\n", s.sessions);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct GapArgs {
  std::string density = "gaussian-mixture";
  std::string grid_sizes = "10,40,160,640,2560";
};

int gap_test(const GapArgs& a) {
  seeker::Density1D density;
  try {
    density = seeker::density_by_name(a.density);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::vector<std::size_t> sizes;
  for (const auto& s : split_csv(a.grid_sizes)) {
    std::size_t used = 0;
    long long n = -1;
    try {
      n = std::stoll(s, &used);
    } catch (const std::exception&) {
    }
    if (used != s.size() || n < 2) throw UsageError("grid size '" + s + "' must be an integer >= 2");
    sizes.push_back(static_cast<std::size_t>(n));
  }
  if (sizes.empty()) throw UsageError("--grid-sizes is empty");
  std::sort(sizes.begin(), sizes.end());

  std::vector<double> gaps;
  std::printf("%10s  %s\n", "n", "D_n");
  for (auto n : sizes) {
    gaps.push_back(seeker::discretization_gap(density, n));
    std::printf("%10zu  %.6e\n", n, gaps.back());
  }

  // Densities whose gap is already zero at every size (up to quadrature
  // error) agree exactly; only a nonzero gap has to shrink.
  constexpr double exact = 1e-10;
  const bool all_exact = std::all_of(gaps.begin(), gaps.end(), [](double d) { return d < exact; });
  if (all_exact) return kOk;
  if (sizes.size() > 1 && !(gaps.back() < gaps.front())) {
    std::fprintf(stderr, "D_n did not decrease from n=%zu to n=%zu\n", sizes.front(), sizes.back());
    return kRuntimeFailure;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string addr;
  std::string data_dir;
  std::string catalog;
};

int serve(const ServeArgs& a) {
  const auto [host, port] = seeker::parse_bind_address(a.addr);

  std::optional<std::filesystem::path> data_dir;
  if (!a.data_dir.empty()) data_dir = a.data_dir;
  seeker::SeekerService service(data_dir);

  if (!a.catalog.empty()) {
    std::ifstream in(a.catalog, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read catalog '" + a.catalog + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const auto reg = service.register_catalog(buf.str());
    log_line("preloaded catalog " + reg.at("catalog_id").get<std::string>() + " (" +
             std::to_string(reg.at("count").get<std::size_t>()) + " items)");
  }

  // Signals go to a dedicated waiter thread that stops the server.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  httplib::Server server;
  std::optional<std::filesystem::path> ui_dir;
  if (const auto ui = env_or("SEEKER_UI_DIR", ""); !ui.empty()) ui_dir = ui;
  seeker::mount_routes(server, service, ui_dir);
  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    log_line(req.method + " " + req.path + " " + std::to_string(res.status));
  });

  if (!server.bind_to_port(host, port)) {
    log_line("failed to bind " + a.addr);
    return kRuntimeFailure;
  }
  std::thread waiter([&server, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    log_line("received signal " + std::to_string(sig) + ", shutting down");
    server.stop();
  });
  log_line("listening on " + host + ":" + std::to_string(port));
  const bool ok = server.listen_after_bind();
  service.flush();
  if (waiter.joinable()) {
    // listen can also end without a signal; wake the waiter so it exits.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  log_line("event logs flushed");
  return ok ? kOk : kRuntimeFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seeker: interactive target search over an embedded catalog"};
  app.require_subcommand(1);

  GenCatalogArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-catalog", "Generate a synthetic clustered catalog");
  gen_cmd->add_option("--items", gen.params.n_items, "Number of items")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--dim", gen.params.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--clusters", gen.params.n_clusters, "Number of clusters")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--spread", gen.params.spread, "Per-cluster standard deviation")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.params.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output file ('-' for stdout)");

  BenchArgs b;
  auto* bench_cmd = app.add_subcommand("bench", "Benchmark strategies with simulated users");
  bench_cmd->add_option("--catalog", b.catalog, "Catalog file")->required();
  bench_cmd->add_option("--strategies", b.strategies, "Comma-separated strategy names");
  bench_cmd->add_option("--sessions", b.sessions, "Sessions per strategy")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--steps", b.steps, "Feedback rounds per session (K)");
  bench_cmd->add_option("--page-size", b.page_size, "Items per page (M)")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--policy", b.policy, "Simulated user: greedy_nearest | noisy_triplet");
  bench_cmd->add_option("--seed", b.seed, "Master seed");
  bench_cmd->add_option("--out-csv", b.out_csv, "Report CSV path");
  bench_cmd->add_option("--trace", b.trace, "Per-session JSON-lines trace (default: <out-csv>.trace.jsonl)");
  bench_cmd->add_option("--epsilon", b.epsilon, "Epsilon for epsilon_greedy");
  bench_cmd->add_option("--alpha", b.alpha, "Triplet model confidence")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--threads", b.threads, "Worker threads")->check(CLI::PositiveNumber);

  GapArgs g;
  auto* gap_cmd = app.add_subcommand("gap-test", "Discretization gap D_n over grid sizes");
  gap_cmd->add_option("--density", g.density, "uniform | linear | gaussian-mixture");
  gap_cmd->add_option("--grid-sizes", g.grid_sizes, "Comma-separated grid sizes");

  ServeArgs s;
  s.addr = env_or("SEEKER_ADDR", "127.0.0.1:8080");
  s.data_dir = env_or("SEEKER_DATA_DIR", "");
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP/JSON service");
  serve_cmd->add_option("--addr", s.addr, "Bind address host:port (env SEEKER_ADDR)");
  serve_cmd->add_option("--data-dir", s.data_dir, "Persistence root (env SEEKER_DATA_DIR)");
  serve_cmd->add_option("--catalog", s.catalog, "Catalog file to preload");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen_cmd) return gen_catalog(gen);
    if (*bench_cmd) return bench(b);
    if (*gap_cmd) return gap_test(g);
    if (*serve_cmd) return serve(s);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsage;
}
