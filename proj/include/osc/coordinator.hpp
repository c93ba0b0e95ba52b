#pragma once

// Hierarchical load coordination. Each iteration:
//
//   coordinator --PriceBroadcast(p_set)--> loads
//   loads compute sigma-hat
//   loads --LoadReport--> host bus --BusReport(y_j)--> coordinator
//   coordinator estimates p-hat, moves a bound, decides phi
//   coordinator --BoundsBroadcast--> loads compute sigma-bar
//
// Aggregations sum in fixed index order so runs are bit-reproducible.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "osc/model.hpp"

namespace osc {

class CoordinatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultDelta = 1e-5;

struct CoordinatorOptions {
  double mu = 0.5;
  std::optional<double> delta;                            // default: see resolve_delta
  std::uint64_t seed = 1;
  std::size_t max_iterations = 100000;
  std::optional<std::pair<double, double>> initial_bounds;  // (p_min, p_max) override
  bool range_guard = true;
  bool record_trace = true;
  bool record_trace_sigmas = true;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace detail {

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ splitmix64(v)); }

inline std::uint64_t load_key(const OnOffLoad& l) {
  std::uint64_t h = mix(0x6a09e667f3bcc909ULL, l.bus);
  h = mix(h, std::bit_cast<std::uint64_t>(l.magnitude));
  h = mix(h, std::bit_cast<std::uint64_t>(l.mismatch_cost));
  return mix(h, l.desired);
}

// Uniform in the open interval (0, 1).
inline double open_unit(std::uint64_t h) { return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace detail

/// c-bar = c + r with r in (0, delta/2), pairwise distinct. r depends only on
/// the seed and the load's own data (plus its rank among identical loads), so
/// reordering loads permutes c-bar along with them.
///
/// With total_droop = K > 0 each draw is scaled by min(1, d-bar / K), which
/// keeps the unit-cost shift r / d-bar below delta / (2K). Without that, a
/// small load near the final price can end on the wrong side of its
/// unperturbed breakpoint by more than the certificate margin.
inline std::vector<double> perturb_costs(const std::vector<OnOffLoad>& loads, double delta, std::uint64_t seed,
                                         double total_droop = 0.0) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("delta must be positive");
  std::vector<double> out;
  out.reserve(loads.size());
  std::unordered_map<std::uint64_t, std::uint64_t> occurrences;
  std::unordered_set<double> used;
  used.reserve(loads.size() * 2);
  for (const auto& l : loads) {
    const std::uint64_t key = detail::load_key(l);
    const double scale = total_droop > 0.0 ? std::min(1.0, l.magnitude / total_droop) : 1.0;
    std::uint64_t h = detail::mix(detail::mix(splitmix64(seed), key), occurrences[key]++);
    double r = 0.0;
    do {
      r = detail::open_unit(h) * (0.5 * delta) * scale;
      h = splitmix64(h);
    } while (!(r > 0.0 && r < 0.5 * delta) || !used.insert(r).second);
    out.push_back(l.mismatch_cost + r);
  }
  return out;
}

struct ResolvedDelta {
  double delta = kDefaultDelta;
  std::vector<double> perturbed_costs;
};

/// Chooses delta and the perturbed costs. Without duplicate breakpoints
/// delta = min(1e-5, delta_max/2) and r in (0, delta/2). With duplicates
/// (delta_max = 0) the costs are perturbed first with r in (0, 5e-6) and delta
/// is picked against the perturbed spacing.
inline ResolvedDelta resolve_delta(const NetworkConfig& cfg, const CoordinatorOptions& opt) {
  ResolvedDelta out;
  if (cfg.loads.empty()) {
    out.delta = opt.delta.value_or(kDefaultDelta);
    if (!(out.delta > 0.0)) throw std::invalid_argument("delta must be positive");
    return out;
  }
  const auto agg = aggregates(cfg);
  if (agg.delta_max > 0.0) {
    out.delta = opt.delta.value_or(std::min(kDefaultDelta, agg.delta_max / 2.0));
    out.perturbed_costs = perturb_costs(cfg.loads, out.delta, opt.seed, agg.total_droop);
    return out;
  }
  out.perturbed_costs = perturb_costs(cfg.loads, kDefaultDelta, opt.seed, agg.total_droop);
  if (opt.delta) {
    out.delta = *opt.delta;
    return out;
  }
  std::vector<double> ratios;
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cfg.loads.size(); ++i) {
    ratios.push_back(out.perturbed_costs[i] / cfg.loads[i].magnitude);
    dmin = std::min(dmin, cfg.loads[i].magnitude);
  }
  std::sort(ratios.begin(), ratios.end());
  const double spacing = std::min(min_breakpoint_spacing(ratios), dmin);
  out.delta = std::min(kDefaultDelta, spacing / 2.0);
  if (!(out.delta > 0.0)) throw CoordinatorError("perturbed breakpoints still coincide; cannot choose delta");
  return out;
}

// ---------------------------------------------------------------------------
// Messages

struct PriceBroadcast {
  double pc_set = 0.0;
};

struct LoadReport {
  std::size_t bus = 0;
  double demand = 0.0;  // d-bar * sigma-hat
};

struct BusReport {
  std::size_t bus = 0;
  double y = 0.0;  // p^L_j + sum of its loads' reports
};

struct BoundsBroadcast {
  double pc_min = 0.0;
  double pc_max = 0.0;
  bool phi = false;
};

// ---------------------------------------------------------------------------
// State

struct CoordinatorState {
  std::size_t k = 0;
  double pc_min = 0.0;
  double pc_max = 0.0;
  double pc_set = 0.0;
  double pc_hat = 0.0;
  bool phi = false;
  SwitchVector sigma_hat;
  SwitchVector sigma_bar;

  double mu = 0.5;
  double delta = kDefaultDelta;
  double beta = 0.0;
  double beta_bar = 0.0;
  double total_droop = 0.0;
  double total_uncontrollable = 0.0;
  std::vector<double> perturbed_costs;
  bool guard_triggered = false;

  bool terminated() const { return phi || guard_triggered; }
};

/// Initialization block: p_min = ell/K, p_max = (ell + sum d-bar)/K unless
/// caller bounds are given; sigma-hat = rho is set by the caller.
inline CoordinatorState coordinator_init(double total_droop, double total_uncontrollable, double total_load,
                                         double mu, double delta, double beta,
                                         std::optional<std::pair<double, double>> bounds = std::nullopt) {
  if (!(total_droop > 0.0) || !std::isfinite(total_droop)) throw std::invalid_argument("K must be positive");
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("mu must lie in (0, 1)");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("delta must be positive");
  CoordinatorState s;
  s.mu = mu;
  s.delta = delta;
  s.beta = beta;
  s.beta_bar = beta + delta / 2.0;
  s.total_droop = total_droop;
  s.total_uncontrollable = total_uncontrollable;
  if (bounds) {
    if (!(bounds->first <= bounds->second)) throw std::invalid_argument("initial bounds must satisfy min <= max");
    s.pc_min = bounds->first;
    s.pc_max = bounds->second;
  } else {
    s.pc_min = total_uncontrollable / total_droop;
    s.pc_max = (total_uncontrollable + total_load) / total_droop;
  }
  return s;
}

inline CoordinatorState coordinator_init(const NetworkConfig& cfg, const CoordinatorOptions& opt) {
  const auto agg = aggregates(cfg);
  auto resolved = resolve_delta(cfg, opt);
  CoordinatorState s = coordinator_init(agg.total_droop, agg.total_uncontrollable, agg.total_load, opt.mu,
                                        resolved.delta, agg.largest_load, opt.initial_bounds);
  s.perturbed_costs = std::move(resolved.perturbed_costs);
  s.sigma_hat = desired_states(cfg);
  s.sigma_bar = s.sigma_hat;
  return s;
}

// ---------------------------------------------------------------------------
// Local rules

/// Off above the perturbed unit cost, on below its negative, otherwise
/// the desired state. Equality falls through to rho.
inline std::uint8_t load_update(const OnOffLoad& load, double perturbed_cost, double pc_set) {
  const double g = perturbed_cost / load.magnitude;
  if (pc_set > g) return 0;
  if (pc_set < -g) return 1;
  return load.desired;
}

/// Adopt sigma-hat on termination, otherwise commit only when the
/// bounds already decide the load.
inline std::uint8_t sigma_bar_update(const OnOffLoad& load, double perturbed_cost, double beta_bar,
                                     double total_droop, const BoundsBroadcast& b, std::uint8_t sigma_hat) {
  if (b.phi) return sigma_hat;
  const double g = perturbed_cost / load.magnitude;
  const double margin = beta_bar / total_droop;
  if (b.pc_max < -g - margin) return 1;
  if (b.pc_min > g + margin) return 0;
  return load.desired;
}

/// Next price probe inside [pc_min, pc_max].
inline double next_setpoint(const CoordinatorState& s) { return s.mu * s.pc_max + (1.0 - s.mu) * s.pc_min; }

/// Per-bus aggregation of load reports, in bus order.
inline std::vector<BusReport> aggregate_reports(const NetworkConfig& cfg, const std::vector<LoadReport>& reports) {
  std::vector<BusReport> out(cfg.buses.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = {j, cfg.buses[j].uncontrollable_load};
  std::vector<double> extra(cfg.buses.size(), 0.0);
  for (const auto& r : reports) extra.at(r.bus) += r.demand;
  for (std::size_t j = 0; j < out.size(); ++j) out[j].y += extra[j];
  return out;
}

/// Price estimate, bound update and stopping test, plus the range guard. `reports` must be the bus responses to
/// next_setpoint(s). Returns the new state; sigma vectors are left to the loads.
inline CoordinatorState coordinator_iterate(const CoordinatorState& s, const std::vector<BusReport>& reports,
                                            bool range_guard = true) {
  if (s.terminated()) throw CoordinatorError("coordinator_iterate called after termination");
  CoordinatorState n = s;
  n.k = s.k + 1;
  n.pc_set = next_setpoint(s);
  double total = 0.0;
  for (const auto& r : reports) total += r.y;
  n.pc_hat = total / s.total_droop;

  bool moved = false;
  if (n.pc_set < n.pc_hat - s.beta_bar / s.total_droop) {
    n.pc_min = n.pc_set;
    moved = true;
  }
  if (n.pc_set > n.pc_hat) {
    n.pc_max = n.pc_set;
    moved = true;
  }
  n.phi = !moved;
  if (!n.phi && range_guard &&
      n.pc_max - n.pc_min < s.delta / (4.0 * s.total_droop) * std::max(1.0, s.total_droop))
    n.guard_triggered = true;
  return n;
}

// ---------------------------------------------------------------------------
// Driver

struct CoordinatorSnapshot {
  std::size_t k = 0;
  double pc_min = 0.0;
  double pc_max = 0.0;
  double pc_set = 0.0;
  double pc_hat = 0.0;
  bool phi = false;
  bool guard = false;
  std::size_t sigma_hat_on = 0;
  std::size_t sigma_bar_mismatch = 0;  // loads with sigma-bar != rho
  SwitchVector sigma_hat;              // empty unless recorded
  SwitchVector sigma_bar;
};

struct CoordinatorResult {
  SwitchVector sigma_bar;
  double pc_set = 0.0;
  double pc_hat = 0.0;
  double pc_min = 0.0;
  double pc_max = 0.0;
  std::size_t iterations = 0;
  bool guard_triggered = false;
  double delta = 0.0;
  double beta_bar = 0.0;
  std::vector<double> perturbed_costs;
  std::vector<CoordinatorSnapshot> trace;
};

/// Steppable three-tier coordinator over a fixed network.
class Coordinator {
 public:
  Coordinator(const NetworkConfig& cfg, CoordinatorOptions opt)
      : cfg_(cfg), opt_(std::move(opt)), state_(coordinator_init(cfg_, opt_)) {}

  const CoordinatorState& state() const { return state_; }
  bool done() const { return state_.terminated(); }
  const std::vector<CoordinatorSnapshot>& trace() const { return trace_; }

  /// One full iteration; returns the sigma-bar the loads apply.
  const SwitchVector& step() {
    if (done()) throw CoordinatorError("coordinator already terminated");
    if (state_.k >= opt_.max_iterations)
      throw CoordinatorError("iteration cap " + std::to_string(opt_.max_iterations) + " exceeded");

    const PriceBroadcast price{next_setpoint(state_)};
    std::vector<LoadReport> load_reports;
    load_reports.reserve(cfg_.loads.size());
    SwitchVector sigma_hat(cfg_.loads.size());
    for (std::size_t i = 0; i < cfg_.loads.size(); ++i) {
      const auto& l = cfg_.loads[i];
      sigma_hat[i] = load_update(l, state_.perturbed_costs[i], price.pc_set);
      load_reports.push_back({l.bus, sigma_hat[i] ? l.magnitude : 0.0});
    }
    CoordinatorState next = coordinator_iterate(state_, aggregate_reports(cfg_, load_reports), opt_.range_guard);
    next.sigma_hat = std::move(sigma_hat);

    const BoundsBroadcast bounds{next.pc_min, next.pc_max, next.phi || next.guard_triggered};
    for (std::size_t i = 0; i < cfg_.loads.size(); ++i)
      next.sigma_bar[i] = sigma_bar_update(cfg_.loads[i], next.perturbed_costs[i], next.beta_bar,
                                           next.total_droop, bounds, next.sigma_hat[i]);
    state_ = std::move(next);
    if (opt_.record_trace) record();
    return state_.sigma_bar;
  }

  CoordinatorResult result() const {
    CoordinatorResult r;
    r.sigma_bar = state_.sigma_bar;
    r.pc_set = state_.pc_set;
    r.pc_hat = state_.pc_hat;
    r.pc_min = state_.pc_min;
    r.pc_max = state_.pc_max;
    r.iterations = state_.k;
    r.guard_triggered = state_.guard_triggered;
    r.delta = state_.delta;
    r.beta_bar = state_.beta_bar;
    r.perturbed_costs = state_.perturbed_costs;
    r.trace = trace_;
    return r;
  }

 private:
  void record() {
    CoordinatorSnapshot s;
    s.k = state_.k;
    s.pc_min = state_.pc_min;
    s.pc_max = state_.pc_max;
    s.pc_set = state_.pc_set;
    s.pc_hat = state_.pc_hat;
    s.phi = state_.phi;
    s.guard = state_.guard_triggered;
    for (std::size_t i = 0; i < cfg_.loads.size(); ++i) {
      s.sigma_hat_on += state_.sigma_hat[i];
      s.sigma_bar_mismatch += state_.sigma_bar[i] != cfg_.loads[i].desired;
    }
    if (opt_.record_trace_sigmas) {
      s.sigma_hat = state_.sigma_hat;
      s.sigma_bar = state_.sigma_bar;
    }
    trace_.push_back(std::move(s));
  }

  NetworkConfig cfg_;
  CoordinatorOptions opt_;
  CoordinatorState state_;
  std::vector<CoordinatorSnapshot> trace_;
};

/// Runs the coordinator to termination on a validated network.
inline CoordinatorResult run_coordinator(const NetworkConfig& cfg, const CoordinatorOptions& opt = {}) {
  require_valid(cfg);
  Coordinator c(cfg, opt);
  while (!c.done()) c.step();
  return c.result();
}

}  // namespace osc
