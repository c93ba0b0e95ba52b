#pragma once

// Network data model: buses, power/communication lines, on-off loads, plus the
// validation rules and aggregate quantities every other module builds on.
//
// Bus indices are 0-based in memory. Human-facing messages and configuration
// documents number buses from 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace osc {

struct BusParams {
  double inertia = 0.0;                // M_j
  double damping = 0.0;                // A_j
  double droop = 0.0;                  // kappa_j
  double gen_time_constant = 0.0;      // gamma_j
  double command_time_constant = 0.0;  // tau_j
  double cost_coefficient = 0.0;       // q_j
  double uncontrollable_load = 0.0;    // p^L_j

  friend bool operator==(const BusParams&, const BusParams&) = default;
};

struct PowerLine {
  std::size_t tail = 0;
  std::size_t head = 0;
  double susceptance = 0.0;

  friend bool operator==(const PowerLine&, const PowerLine&) = default;
};

struct CommLine {
  std::size_t tail = 0;
  std::size_t head = 0;
  double time_constant = 0.0;

  friend bool operator==(const CommLine&, const CommLine&) = default;
};

struct OnOffLoad {
  std::size_t bus = 0;
  double magnitude = 0.0;      // d-bar
  double mismatch_cost = 0.0;  // c, paid whenever the state differs from `desired`
  std::uint8_t desired = 0;    // rho

  /// Cost per unit demand c / d-bar.
  double unit_cost() const { return mismatch_cost / magnitude; }

  friend bool operator==(const OnOffLoad&, const OnOffLoad&) = default;
};

struct NetworkConfig {
  std::vector<BusParams> buses;
  std::vector<PowerLine> power_lines;
  std::vector<CommLine> comm_lines;
  std::vector<OnOffLoad> loads;

  std::size_t bus_count() const { return buses.size(); }
  std::size_t load_count() const { return loads.size(); }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Switch state per load, in NetworkConfig load order. Entries are 0 or 1.
using SwitchVector = std::vector<std::uint8_t>;

inline SwitchVector desired_states(const NetworkConfig& cfg) {
  SwitchVector rho(cfg.loads.size());
  std::transform(cfg.loads.begin(), cfg.loads.end(), rho.begin(),
                 [](const OnOffLoad& l) { return l.desired; });
  return rho;
}

struct ValidationReport {
  std::vector<std::string> entries;

  bool ok() const { return entries.empty(); }
  void add(std::string e) { entries.push_back(std::move(e)); }
  bool contains(std::string_view needle) const {
    return std::any_of(entries.begin(), entries.end(), [&](const std::string& e) {
      return e.find(needle) != std::string::npos;
    });
  }
};

/// Thrown by parse_config and anything that requires a valid network.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
  ConfigError(const std::string& what, ValidationReport report)
      : std::runtime_error(what), report_(std::move(report)) {}

  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

namespace detail {

inline bool positive(double v) { return std::isfinite(v) && v > 0.0; }

// Union-find connectivity over undirected edges.
template <typename Edges>
bool connected(std::size_t n, const Edges& edges) {
  if (n <= 1) return true;
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  std::size_t components = n;
  for (const auto& e : edges) {
    if (e.tail >= n || e.head >= n) continue;
    auto a = find(e.tail), b = find(e.head);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

template <typename Edges>
void check_edges(const Edges& edges, std::size_t n, const char* kind, ValidationReport& report) {
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    const std::string tag = std::string(kind) + " " + std::to_string(i + 1);
    if (e.tail >= n || e.head >= n) {
      report.add(tag + ": endpoint bus does not exist");
      continue;
    }
    if (e.tail == e.head) {
      report.add(tag + ": self-loop at bus " + std::to_string(e.tail + 1));
      continue;
    }
    for (const auto& [t, h] : seen) {
      if (t == e.tail && h == e.head) {
        report.add(tag + ": duplicate line (" + std::to_string(t + 1) + "," + std::to_string(h + 1) + ")");
      } else if (t == e.head && h == e.tail) {
        report.add(tag + ": antiparallel line (" + std::to_string(e.tail + 1) + "," +
                   std::to_string(e.head + 1) + ") duplicates (" + std::to_string(t + 1) + "," +
                   std::to_string(h + 1) + ")");
      }
    }
    seen.emplace_back(e.tail, e.head);
  }
}

}  // namespace detail

/// Checks every per-type invariant and both connectivity requirements.
/// Never throws; an empty report means the configuration is usable.
inline ValidationReport validate(const NetworkConfig& cfg) {
  ValidationReport report;
  const std::size_t n = cfg.buses.size();
  if (n == 0) report.add("network has no buses");

  for (std::size_t j = 0; j < n; ++j) {
    const auto& b = cfg.buses[j];
    const std::string tag = "bus " + std::to_string(j + 1);
    auto need = [&](double v, const char* name) {
      if (!detail::positive(v)) report.add(tag + ": " + name + " must be positive");
    };
    need(b.inertia, "inertia");
    need(b.damping, "damping");
    need(b.droop, "droop");
    need(b.gen_time_constant, "gen_time_constant");
    need(b.command_time_constant, "command_time_constant");
    need(b.cost_coefficient, "cost_coefficient");
    if (!std::isfinite(b.uncontrollable_load)) report.add(tag + ": uncontrollable_load must be finite");
  }

  for (std::size_t i = 0; i < cfg.power_lines.size(); ++i) {
    if (!detail::positive(cfg.power_lines[i].susceptance))
      report.add("power line " + std::to_string(i + 1) + ": susceptance must be positive");
  }
  for (std::size_t i = 0; i < cfg.comm_lines.size(); ++i) {
    if (!detail::positive(cfg.comm_lines[i].time_constant))
      report.add("comm line " + std::to_string(i + 1) + ": time_constant must be positive");
  }
  detail::check_edges(cfg.power_lines, n, "power line", report);
  detail::check_edges(cfg.comm_lines, n, "comm line", report);

  if (n > 0 && !detail::connected(n, cfg.power_lines)) report.add("power graph disconnected");
  if (n > 0 && !detail::connected(n, cfg.comm_lines)) report.add("communication graph disconnected");

  for (std::size_t i = 0; i < cfg.loads.size(); ++i) {
    const auto& l = cfg.loads[i];
    const std::string tag = "load " + std::to_string(i + 1);
    if (l.bus >= n) report.add(tag + ": host bus " + std::to_string(l.bus + 1) + " does not exist");
    if (!detail::positive(l.magnitude)) report.add(tag + ": magnitude must be positive");
    if (!(std::isfinite(l.mismatch_cost) && l.mismatch_cost >= 0.0))
      report.add(tag + ": mismatch_cost must be non-negative");
    if (l.desired > 1) report.add(tag + ": desired_state must be 0 or 1");
  }
  return report;
}

inline void require_valid(const NetworkConfig& cfg) {
  auto report = validate(cfg);
  if (!report.ok()) throw ConfigError("invalid network configuration: " + report.entries.front(), report);
}

struct Aggregates {
  double total_droop = 0.0;         // K
  double total_uncontrollable = 0.0;  // ell
  double largest_load = 0.0;        // beta; 0 when there are no loads
  double inverse_cost_sum = 0.0;    // Q = sum 1/q_j
  double total_load = 0.0;          // sum of all d-bar
  std::vector<double> unit_costs;   // gamma_{l,j}, ascending
  double delta_max = std::numeric_limits<double>::infinity();
};

/// Smallest gap within the multiset {+g, -g : g in unit_costs}; +inf for an
/// empty input. `sorted` must be ascending.
inline double min_breakpoint_spacing(const std::vector<double>& sorted) {
  std::vector<double> all;
  all.reserve(2 * sorted.size());
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) all.push_back(-*it);
  all.insert(all.end(), sorted.begin(), sorted.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < all.size(); ++i) best = std::min(best, all[i] - all[i - 1]);
  return best;
}

inline Aggregates aggregates(const NetworkConfig& cfg) {
  Aggregates a;
  for (const auto& b : cfg.buses) {
    a.total_droop += b.droop;
    a.total_uncontrollable += b.uncontrollable_load;
    a.inverse_cost_sum += 1.0 / b.cost_coefficient;
  }
  double min_magnitude = std::numeric_limits<double>::infinity();
  a.unit_costs.reserve(cfg.loads.size());
  for (const auto& l : cfg.loads) {
    a.largest_load = std::max(a.largest_load, l.magnitude);
    min_magnitude = std::min(min_magnitude, l.magnitude);
    a.total_load += l.magnitude;
    a.unit_costs.push_back(l.unit_cost());
  }
  std::sort(a.unit_costs.begin(), a.unit_costs.end());
  a.delta_max = std::min(min_breakpoint_spacing(a.unit_costs), min_magnitude);
  return a;
}

}  // namespace osc
