#pragma once

// Randomized campaigns: optimality gap against the exact oracle, iteration
// statistics, mu sweeps, and closed-loop restoration runs. Every campaign is a
// pure function of (spec, seed); cases run on a thread pool and are
// aggregated in case order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "osc/coordinator.hpp"
#include "osc/dynamics.hpp"
#include "osc/model.hpp"
#include "osc/opt.hpp"

namespace osc {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

struct InstanceSpec {
  std::size_t buses = 4;
  std::size_t loads_per_bus = 4;
  Range magnitude{0.0, 0.008};
  Range cost{0.0, 0.1};
  Range uncontrollable{0.0, 0.02};
  Range droop{0.002, 0.003};
  bool inverse_cost = true;  // q_j = 1 / kappa_j
  Range cost_coefficient{0.5, 2.0};  // used when inverse_cost is false
  Range inertia{2.0, 6.0};
  Range damping{0.5, 1.5};
  Range gen_time_constant{0.5, 2.0};
  Range command_time_constant{0.5, 2.0};
  Range susceptance{5.0, 20.0};
  Range comm_time_constant{0.5, 2.0};
  double extra_line_probability = 0.3;  // chords added on top of a random tree

  /// Small networks for the exact oracle (16 loads).
  static InstanceSpec oracle_tier() { return {}; }

  /// Coordinator-only campaigns: 20 buses x 500 loads.
  static InstanceSpec coordinator_tier() {
    InstanceSpec s;
    s.buses = 20;
    s.loads_per_bus = 500;
    s.droop = {0.1, 0.22};
    s.uncontrollable = {0.0, 0.4};
    return s;
  }

  std::size_t load_count() const { return buses * loads_per_bus; }
};

inline void validate_spec(const InstanceSpec& s) {
  auto check = [](const Range& r, const char* name, bool positive) {
    if (!(r.lo < r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
      throw std::invalid_argument(std::string("instance range '") + name + "' is degenerate");
    if (positive && r.lo < 0.0) throw std::invalid_argument(std::string("instance range '") + name + "' must be >= 0");
  };
  if (s.buses == 0) throw std::invalid_argument("instance needs at least one bus");
  check(s.magnitude, "magnitude", true);
  check(s.cost, "cost", true);
  check(s.uncontrollable, "uncontrollable", false);
  check(s.droop, "droop", true);
  check(s.cost_coefficient, "cost_coefficient", true);
  check(s.inertia, "inertia", true);
  check(s.damping, "damping", true);
  check(s.gen_time_constant, "gen_time_constant", true);
  check(s.command_time_constant, "command_time_constant", true);
  check(s.susceptance, "susceptance", true);
  check(s.comm_time_constant, "comm_time_constant", true);
}

/// Derives the seed of case `index` from a campaign seed.
inline std::uint64_t case_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index * 0xd1342543de82ef95ULL + 1));
}

namespace detail {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : gen_(seed) {}
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }  // [0, 1)
  double uniform(const Range& r) { return r.lo + (r.hi - r.lo) * unit(); }
  // Same, but redraws exact zeros (load magnitudes must be positive).
  double positive(const Range& r) {
    for (;;) {
      const double v = uniform(r);
      if (v > 0.0) return v;
    }
  }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(unit() * static_cast<double>(n)); }
  bool coin() { return (gen_() >> 63) != 0; }

 private:
  std::mt19937_64 gen_;
};

template <typename Edge, typename MakeEdge>
std::vector<Edge> random_topology(std::size_t n, double chord_probability, Sampler& rng, MakeEdge make) {
  std::vector<Edge> edges;
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t j = 1; j < n; ++j) {
    const std::size_t parent = rng.index(j);
    edges.push_back(make(parent, j));
    adj[parent][j] = adj[j][parent] = true;
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (!adj[a][b] && rng.unit() < chord_probability) {
        edges.push_back(make(a, b));
        adj[a][b] = adj[b][a] = true;
      }
  return edges;
}

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; !failed && (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace detail

/// Random connected network drawn from `spec`; deterministic in `seed`.
inline NetworkConfig gen_instance(const InstanceSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  detail::Sampler rng(seed);
  NetworkConfig cfg;
  cfg.buses.reserve(spec.buses);
  for (std::size_t j = 0; j < spec.buses; ++j) {
    BusParams b;
    b.inertia = rng.positive(spec.inertia);
    b.damping = rng.positive(spec.damping);
    b.droop = rng.positive(spec.droop);
    b.gen_time_constant = rng.positive(spec.gen_time_constant);
    b.command_time_constant = rng.positive(spec.command_time_constant);
    b.cost_coefficient = spec.inverse_cost ? 1.0 / b.droop : rng.positive(spec.cost_coefficient);
    b.uncontrollable_load = rng.uniform(spec.uncontrollable);
    cfg.buses.push_back(b);
  }
  cfg.power_lines = detail::random_topology<PowerLine>(
      spec.buses, spec.extra_line_probability, rng,
      [&](std::size_t a, std::size_t b) { return PowerLine{a, b, rng.positive(spec.susceptance)}; });
  cfg.comm_lines = detail::random_topology<CommLine>(
      spec.buses, spec.extra_line_probability, rng,
      [&](std::size_t a, std::size_t b) { return CommLine{a, b, rng.positive(spec.comm_time_constant)}; });
  cfg.loads.reserve(spec.load_count());
  for (std::size_t j = 0; j < spec.buses; ++j)
    for (std::size_t l = 0; l < spec.loads_per_bus; ++l) {
      OnOffLoad load;
      load.bus = j;
      load.magnitude = rng.positive(spec.magnitude);
      load.mismatch_cost = rng.uniform(spec.cost);
      load.desired = rng.coin() ? 1 : 0;
      cfg.loads.push_back(load);
    }
  return cfg;
}

// ---------------------------------------------------------------------------
// Gap campaign

struct CampaignOptions {
  std::optional<double> mu;      // fixed mu; otherwise drawn per case from mu_range
  Range mu_range{0.005, 0.995};
  ExactMethod method = ExactMethod::enumerate;
  unsigned threads = 0;
};

struct GapRow {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double mu = 0.0;
  double delta = 0.0;
  double beta = 0.0;
  double total_droop = 0.0;
  double coordinator_cost = 0.0;
  double optimal_cost = 0.0;
  double relaxed_cost = 0.0;
  double gap = 0.0;
  double bound = 0.0;  // 3 (beta + delta)^2 / (2K)
  bool within_bound = false;
  bool coincide = false;
  bool certified = false;   // witness at theta = beta + delta
  bool sandwich = false;    // non-guard termination sandwich, or guard exit
  std::size_t iterations = 0;
  bool guard = false;
  SwitchVector sigma;
  SwitchVector optimal_sigma;
};

struct GapStats {
  std::size_t cases = 0;
  double coincidence = 0.0;
  double max_gap = 0.0;
  double mean_gap = 0.0;
  double within_bound = 0.0;
  std::size_t violations = 0;
  std::size_t certificate_failures = 0;
  std::size_t sandwich_failures = 0;
  std::size_t relaxation_failures = 0;  // relaxed cost above the exact optimum
  std::size_t guard_exits = 0;
  std::vector<GapRow> rows;
};

inline constexpr double kGapTolerance = 1e-12;

inline bool terminal_sandwich(const CoordinatorResult& r, double total_droop) {
  return r.pc_hat - r.beta_bar / total_droop <= r.pc_set && r.pc_set <= r.pc_hat;
}

/// One case of the gap campaign on a given network.
inline GapRow gap_case(const NetworkConfig& cfg, double mu, std::uint64_t seed, ExactMethod method) {
  CoordinatorOptions copt;
  copt.mu = mu;
  copt.seed = seed;
  copt.record_trace = false;
  const auto res = run_coordinator(cfg, copt);
  const auto exact = solve_hosc_exact(cfg, method);
  const auto agg = aggregates(cfg);

  GapRow row;
  row.seed = seed;
  row.mu = mu;
  row.delta = res.delta;
  row.beta = agg.largest_load;
  row.total_droop = agg.total_droop;
  row.coordinator_cost = hosc_cost(cfg, res.sigma_bar).cost;
  row.optimal_cost = exact.cost;
  row.relaxed_cost = solve_rhosc(cfg).cost;
  row.gap = row.coordinator_cost - row.optimal_cost;
  row.bound = epsilon_bound(agg.total_droop, agg.largest_load + res.delta);
  row.within_bound = row.gap <= row.bound + kGapTolerance;
  row.coincide = res.sigma_bar == exact.sigma;
  row.certified = check_epsilon_conditions(cfg, res.sigma_bar, agg.largest_load + res.delta).has_value();
  row.sandwich = res.guard_triggered || terminal_sandwich(res, agg.total_droop);
  row.iterations = res.iterations;
  row.guard = res.guard_triggered;
  row.sigma = res.sigma_bar;
  row.optimal_sigma = exact.sigma;
  return row;
}

inline GapStats summarize_gaps(std::vector<GapRow> rows) {
  GapStats s;
  s.cases = rows.size();
  double sum = 0.0;
  std::size_t same = 0, within = 0;
  for (const auto& r : rows) {
    s.max_gap = std::max(s.max_gap, r.gap);
    sum += r.gap;
    same += r.coincide;
    within += r.within_bound;
    s.violations += !r.within_bound;
    s.certificate_failures += !r.certified;
    s.sandwich_failures += !r.sandwich;
    s.relaxation_failures += r.relaxed_cost > r.optimal_cost + kGapTolerance * (1.0 + std::abs(r.optimal_cost));
    s.guard_exits += r.guard;
  }
  if (s.cases > 0) {
    const auto n = static_cast<double>(s.cases);
    s.mean_gap = sum / n;
    s.coincidence = static_cast<double>(same) / n;
    s.within_bound = static_cast<double>(within) / n;
  }
  s.rows = std::move(rows);
  return s;
}

inline GapStats gap_experiment(const InstanceSpec& spec, std::size_t cases, std::uint64_t seed,
                               const CampaignOptions& opt = {}) {
  validate_spec(spec);
  if (opt.method == ExactMethod::enumerate && spec.load_count() > kEnumerationCap)
    throw OracleCapError("gap campaign with enumeration supports at most " + std::to_string(kEnumerationCap) +
                         " loads per instance");
  std::vector<GapRow> rows(cases);
  detail::parallel_for(
      cases,
      [&](std::size_t i) {
        const std::uint64_t s = case_seed(seed, i);
        detail::Sampler mu_rng(splitmix64(s ^ 0x5bd1e995ULL));
        const double mu = opt.mu.value_or(mu_rng.uniform(opt.mu_range));
        rows[i] = gap_case(gen_instance(spec, s), mu, s, opt.method);
        rows[i].index = i;
      },
      opt.threads);
  return summarize_gaps(std::move(rows));
}

// ---------------------------------------------------------------------------
// Iteration statistics

struct IterationRow {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double mu = 0.0;
  std::size_t iterations = 0;
  bool guard = false;
  bool certified = false;
  bool sandwich = false;
};

struct IterationStats {
  std::size_t cases = 0;
  double mean = 0.0;
  double p90 = 0.0;
  double within_50 = 0.0;
  double within_200 = 0.0;
  std::size_t max_iterations = 0;
  std::size_t guard_exits = 0;
  std::size_t certificate_failures = 0;
  std::size_t sandwich_failures = 0;
  std::vector<IterationRow> rows;
};

inline IterationRow iteration_case(const NetworkConfig& cfg, double mu, std::uint64_t seed, bool certify) {
  CoordinatorOptions copt;
  copt.mu = mu;
  copt.seed = seed;
  copt.record_trace = false;
  const auto res = run_coordinator(cfg, copt);
  IterationRow row;
  row.seed = seed;
  row.mu = mu;
  row.iterations = res.iterations;
  row.guard = res.guard_triggered;
  if (certify) {
    const auto agg = aggregates(cfg);
    row.certified = check_epsilon_conditions(cfg, res.sigma_bar, agg.largest_load + res.delta).has_value();
    row.sandwich = res.guard_triggered || terminal_sandwich(res, agg.total_droop);
  }
  return row;
}

inline IterationStats summarize_iterations(std::vector<IterationRow> rows, bool certified) {
  IterationStats s;
  s.cases = rows.size();
  std::vector<double> counts;
  counts.reserve(rows.size());
  std::size_t w50 = 0, w200 = 0;
  double sum = 0.0;
  for (const auto& r : rows) {
    counts.push_back(static_cast<double>(r.iterations));
    sum += static_cast<double>(r.iterations);
    w50 += r.iterations <= 50;
    w200 += r.iterations <= 200;
    s.max_iterations = std::max(s.max_iterations, r.iterations);
    s.guard_exits += r.guard;
    if (certified) {
      s.certificate_failures += !r.certified;
      s.sandwich_failures += !r.sandwich;
    }
  }
  if (s.cases > 0) {
    const auto n = static_cast<double>(s.cases);
    s.mean = sum / n;
    s.within_50 = static_cast<double>(w50) / n;
    s.within_200 = static_cast<double>(w200) / n;
    s.p90 = detail::percentile(counts, 0.9);
  }
  s.rows = std::move(rows);
  return s;
}

/// Coordinator-only campaign; mu is fixed or drawn per case.
inline IterationStats iteration_experiment(const InstanceSpec& spec, std::size_t cases, std::uint64_t seed,
                                           const CampaignOptions& opt = {}, bool certify = true) {
  validate_spec(spec);
  std::vector<IterationRow> rows(cases);
  detail::parallel_for(
      cases,
      [&](std::size_t i) {
        const std::uint64_t s = case_seed(seed, i);
        detail::Sampler mu_rng(splitmix64(s ^ 0x5bd1e995ULL));
        const double mu = opt.mu.value_or(mu_rng.uniform(opt.mu_range));
        rows[i] = iteration_case(gen_instance(spec, s), mu, s, certify);
        rows[i].index = i;
      },
      opt.threads);
  return summarize_iterations(std::move(rows), certify);
}

struct SweepStats {
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> p90;
  std::vector<std::vector<std::size_t>> iterations;  // per mu, per case
};

/// Mean and 90th-percentile iteration counts per mu. Case i uses the same
/// network at every grid point.
inline SweepStats mu_sweep(const InstanceSpec& spec, const std::vector<double>& grid, std::size_t per_mu,
                           std::uint64_t seed, unsigned threads = 0) {
  validate_spec(spec);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] < 1.0)) throw std::invalid_argument("mu grid must lie in (0, 1)");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw std::invalid_argument("mu grid must be strictly increasing");
  }
  SweepStats s;
  s.grid = grid;
  s.iterations.assign(grid.size(), std::vector<std::size_t>(per_mu, 0));
  detail::parallel_for(
      per_mu,
      [&](std::size_t i) {
        const std::uint64_t cs = case_seed(seed, i);
        const NetworkConfig cfg = gen_instance(spec, cs);
        for (std::size_t g = 0; g < grid.size(); ++g) s.iterations[g][i] = iteration_case(cfg, grid[g], cs, false).iterations;
      },
      threads);
  for (const auto& row : s.iterations) {
    std::vector<double> v(row.begin(), row.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean.push_back(v.empty() ? 0.0 : sum / static_cast<double>(v.size()));
    s.p90.push_back(detail::percentile(v, 0.9));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Closed loop

struct CostSample {
  double time = 0.0;
  double cost = 0.0;
};

struct ClosedLoopReport {
  Trajectory trajectory;
  double terminal_omega = 0.0;     // max_j |omega_j| at the horizon
  double terminal_spread = 0.0;    // max_ij |pc_i - pc_j| at the horizon
  std::vector<CostSample> cost_trace;  // H-OSC cost of sigma(t), per switch
  double terminal_cost = 0.0;
  std::optional<double> oracle_cost;   // exact optimum when the oracle can run
  double relaxed_cost = 0.0;
  double epsilon = 0.0;                // 3 (beta + delta)^2 / (2K)
  double delta = 0.0;
  bool within_bound = false;
  DescentReport descent;
};

struct ClosedLoopOptions {
  SimulationOptions sim;                // control is forced to the live coordinator
  LiveCoordinator coordinator;
  bool start_at_equilibrium = false;    // x0 = equilibrium for the initial sigma
  std::size_t oracle_cap = 64;          // branch-and-bound beyond the enumeration cap
};

inline ClosedLoopReport closed_loop_experiment(const NetworkConfig& cfg, const std::vector<Disturbance>& disturbances,
                                               const ClosedLoopOptions& opt) {
  require_valid(cfg);
  SimulationOptions sim = opt.sim;
  sim.control = opt.coordinator;
  sim.disturbances = disturbances;
  sim.record_lyapunov = true;
  const SwitchVector sigma0 = sim.initial_sigma.value_or(desired_states(cfg));
  const ContinuousState x0 = opt.start_at_equilibrium ? equilibrium_state(cfg, sigma0) : ContinuousState::zeros(cfg);

  ClosedLoopReport rep;
  rep.trajectory = simulate(cfg, x0, sim);
  const auto& traj = rep.trajectory;
  rep.terminal_omega = traj.final_state().omega().cwiseAbs().maxCoeff();
  rep.terminal_spread = traj.final_state().pc_spread();

  // Cost trace is evaluated against the demand in force at each instant.
  NetworkConfig live = cfg;
  std::size_t next_dist = 0;
  auto sorted = disturbances;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Disturbance& a, const Disturbance& b) { return a.time < b.time; });
  auto advance = [&](double t) {
    while (next_dist < sorted.size() && sorted[next_dist].time <= t) {
      live.buses[sorted[next_dist].bus].uncontrollable_load = sorted[next_dist].uncontrollable_load;
      ++next_dist;
    }
  };
  advance(0.0);
  rep.cost_trace.push_back({0.0, hosc_cost(live, sigma0).cost});
  for (const auto& ev : traj.switches) {
    advance(ev.time);
    rep.cost_trace.push_back({ev.time, hosc_cost(live, ev.sigma).cost});
  }

  const NetworkConfig& fin = traj.final_config;
  rep.terminal_cost = hosc_cost(fin, traj.final_sigma).cost;
  rep.relaxed_cost = solve_rhosc(fin).cost;
  const auto agg = aggregates(fin);
  rep.delta = resolve_delta(fin, opt.coordinator.options).delta;
  rep.epsilon = epsilon_bound(agg.total_droop, agg.largest_load + rep.delta);
  if (fin.loads.size() <= kEnumerationCap)
    rep.oracle_cost = solve_hosc_exact(fin, ExactMethod::enumerate).cost;
  else if (fin.loads.size() <= opt.oracle_cap)
    rep.oracle_cost = solve_hosc_exact(fin, ExactMethod::branch_and_bound).cost;
  rep.within_bound = rep.oracle_cost && rep.terminal_cost - *rep.oracle_cost <= rep.epsilon + kGapTolerance;

  double settle = traj.last_switch_time();
  for (const auto& d : disturbances) settle = std::max(settle, d.time);
  rep.descent = lyapunov_descent(traj, settle);
  return rep;
}

}  // namespace osc
