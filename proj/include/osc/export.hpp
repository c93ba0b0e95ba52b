#pragma once

// CSV and JSON writers. Numbers go through std::to_chars (shortest
// round-trip form, '.' decimal separator, independent of the C locale).
//
// trajectory.csv  t, omega_1..omega_N, pM_1..pM_N, pc_1..pc_N,
//                 eta_<tail>_<head> per power line, psi_<tail>_<head> per
//                 comm line, then V when Lyapunov samples exist
// switches.csv    t, k, run, sigma   (sigma as a bitstring in load order)
// trace.csv       k, pc_min, pc_max, pc_set, pc_hat, phi, n_sigma_hat_on,
//                 n_sigma_bar_mismatch
// gap.csv         case, seed, mu, delta, beta, K, coordinator_cost,
//                 optimal_cost, relaxed_cost, gap, bound, within_bound,
//                 coincide, certified, iterations, guard
// iterations.csv  case, seed, mu, iterations, guard, certified
// sweep.csv       mu, mean, p90, cases

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "osc/coordinator.hpp"
#include "osc/dynamics.hpp"
#include "osc/harness.hpp"
#include "osc/opt.hpp"

namespace osc {

inline constexpr const char* kToolName = "osc";
inline constexpr const char* kToolVersion = "0.1.0";

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), end);
}

inline std::string bitstring(const SwitchVector& sigma) {
  std::string s;
  s.reserve(sigma.size());
  for (auto b : sigma) s.push_back(b ? '1' : '0');
  return s;
}

/// Parses "0101" (commas and spaces ignored). Throws std::invalid_argument.
inline SwitchVector parse_bitstring(const std::string& text) {
  SwitchVector out;
  for (char c : text) {
    if (c == '0' || c == '1') out.push_back(static_cast<std::uint8_t>(c - '0'));
    else if (c != ',' && c != ' ' && c != '[' && c != ']')
      throw std::invalid_argument("switch vector must contain only 0 and 1");
  }
  return out;
}

namespace detail {

class CsvRow {
 public:
  explicit CsvRow(std::ostream& os) : os_(os) {}
  ~CsvRow() { os_ << '\n'; }
  CsvRow& operator<<(double v) { return put(format_number(v)); }
  CsvRow& operator<<(const std::string& s) { return put(s); }
  CsvRow& operator<<(const char* s) { return put(s); }
  CsvRow& num(std::size_t v) { return put(std::to_string(v)); }
  CsvRow& flag(bool v) { return put(v ? "1" : "0"); }

 private:
  CsvRow& put(const std::string& s) {
    if (!first_) os_ << ',';
    first_ = false;
    os_ << s;
    return *this;
  }
  std::ostream& os_;
  bool first_ = true;
};

inline std::string edge_tag(std::size_t tail, std::size_t head) {
  return std::to_string(tail + 1) + "_" + std::to_string(head + 1);
}

}  // namespace detail

inline void write_trajectory_csv(std::ostream& os, const NetworkConfig& cfg, const Trajectory& traj) {
  const bool with_v = traj.lyapunov.size() == traj.times.size() && !traj.times.empty();
  {
    detail::CsvRow h(os);
    h << "t";
    for (std::size_t j = 0; j < cfg.buses.size(); ++j) h << "omega_" + std::to_string(j + 1);
    for (std::size_t j = 0; j < cfg.buses.size(); ++j) h << "pM_" + std::to_string(j + 1);
    for (std::size_t j = 0; j < cfg.buses.size(); ++j) h << "pc_" + std::to_string(j + 1);
    for (const auto& e : cfg.power_lines) h << "eta_" + detail::edge_tag(e.tail, e.head);
    for (const auto& e : cfg.comm_lines) h << "psi_" + detail::edge_tag(e.tail, e.head);
    if (with_v) h << "V";
  }
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    detail::CsvRow r(os);
    r << traj.times[i];
    const auto& x = traj.rows[i];
    for (Eigen::Index j = 0; j < x.omega().size(); ++j) r << x.omega()[j];
    for (Eigen::Index j = 0; j < x.pm().size(); ++j) r << x.pm()[j];
    for (Eigen::Index j = 0; j < x.pc().size(); ++j) r << x.pc()[j];
    for (Eigen::Index j = 0; j < x.eta().size(); ++j) r << x.eta()[j];
    for (Eigen::Index j = 0; j < x.psi().size(); ++j) r << x.psi()[j];
    if (with_v) r << traj.lyapunov[i];
  }
}

inline void write_switches_csv(std::ostream& os, const Trajectory& traj) {
  { detail::CsvRow(os) << "t" << "k" << "run" << "sigma"; }
  for (const auto& e : traj.switches) {
    detail::CsvRow r(os);
    r << e.time;
    r.num(e.k).num(e.run) << bitstring(e.sigma);
  }
}

inline void write_trace_csv(std::ostream& os, const std::vector<CoordinatorSnapshot>& trace) {
  {
    detail::CsvRow(os) << "k" << "pc_min" << "pc_max" << "pc_set" << "pc_hat" << "phi" << "n_sigma_hat_on"
                       << "n_sigma_bar_mismatch";
  }
  for (const auto& s : trace) {
    detail::CsvRow r(os);
    r.num(s.k) << s.pc_min << s.pc_max << s.pc_set << s.pc_hat;
    r.flag(s.phi).num(s.sigma_hat_on).num(s.sigma_bar_mismatch);
  }
}

inline void write_gap_csv(std::ostream& os, const GapStats& stats) {
  {
    detail::CsvRow(os) << "case" << "seed" << "mu" << "delta" << "beta" << "K" << "coordinator_cost"
                       << "optimal_cost" << "relaxed_cost" << "gap" << "bound" << "within_bound" << "coincide"
                       << "certified" << "iterations" << "guard";
  }
  for (const auto& g : stats.rows) {
    detail::CsvRow r(os);
    r.num(g.index) << std::to_string(g.seed) << g.mu << g.delta << g.beta << g.total_droop << g.coordinator_cost
                   << g.optimal_cost << g.relaxed_cost << g.gap << g.bound;
    r.flag(g.within_bound).flag(g.coincide).flag(g.certified).num(g.iterations).flag(g.guard);
  }
}

inline void write_iterations_csv(std::ostream& os, const IterationStats& stats) {
  { detail::CsvRow(os) << "case" << "seed" << "mu" << "iterations" << "guard" << "certified"; }
  for (const auto& g : stats.rows) {
    detail::CsvRow r(os);
    r.num(g.index) << std::to_string(g.seed) << g.mu;
    r.num(g.iterations).flag(g.guard).flag(g.certified);
  }
}

inline void write_sweep_csv(std::ostream& os, const SweepStats& stats) {
  { detail::CsvRow(os) << "mu" << "mean" << "p90" << "cases"; }
  for (std::size_t i = 0; i < stats.grid.size(); ++i) {
    detail::CsvRow r(os);
    r << stats.grid[i] << stats.mean[i] << stats.p90[i];
    r.num(stats.iterations[i].size());
  }
}

// ---------------------------------------------------------------------------
// JSON documents

using nlohmann::json;

inline json tool_header() { return {{"name", kToolName}, {"version", kToolVersion}}; }

inline json to_json(const OscSolution& s) {
  return {{"sigma", bitstring(s.sigma)},
          {"cost", s.cost},
          {"generation", s.generation},
          {"certificate", to_string(s.kind)}};
}

inline json to_json(const RelaxedSolution& s) {
  return {{"lambda", s.multiplier}, {"sigma", s.sigma}, {"generation", s.generation}, {"cost", s.cost},
          {"certificate", to_string(CertificateKind::relaxed)}};
}

inline json to_json(const EpsilonWitness& w) {
  return {{"zeta", w.zeta}, {"theta", w.theta}, {"sigma", bitstring(w.sigma)}, {"equilibrium_pc", w.equilibrium_pc},
          {"interval", {w.lower, w.upper}}};
}

inline json to_json(const CoordinatorResult& r) {
  return {{"sigma", bitstring(r.sigma_bar)}, {"iterations", r.iterations}, {"guard_triggered", r.guard_triggered},
          {"pc_set", r.pc_set}, {"pc_hat", r.pc_hat}, {"pc_min", r.pc_min}, {"pc_max", r.pc_max},
          {"delta", r.delta}, {"beta_bar", r.beta_bar}};
}

inline json to_json(const InstanceSpec& s) {
  auto range = [](const Range& r) { return json::array({r.lo, r.hi}); };
  return {{"buses", s.buses},
          {"loads_per_bus", s.loads_per_bus},
          {"magnitude", range(s.magnitude)},
          {"cost", range(s.cost)},
          {"uncontrollable", range(s.uncontrollable)},
          {"droop", range(s.droop)},
          {"inverse_cost", s.inverse_cost},
          {"cost_coefficient", range(s.cost_coefficient)},
          {"inertia", range(s.inertia)},
          {"damping", range(s.damping)},
          {"gen_time_constant", range(s.gen_time_constant)},
          {"command_time_constant", range(s.command_time_constant)},
          {"susceptance", range(s.susceptance)},
          {"comm_time_constant", range(s.comm_time_constant)},
          {"extra_line_probability", s.extra_line_probability}};
}

inline json summary_json(const GapStats& s) {
  return {{"cases", s.cases},
          {"coincidence", s.coincidence},
          {"max_gap", s.max_gap},
          {"mean_gap", s.mean_gap},
          {"within_bound", s.within_bound},
          {"violations", s.violations},
          {"certificate_failures", s.certificate_failures},
          {"sandwich_failures", s.sandwich_failures},
          {"relaxation_failures", s.relaxation_failures},
          {"guard_exits", s.guard_exits}};
}

inline json summary_json(const IterationStats& s) {
  return {{"cases", s.cases},
          {"mean", s.mean},
          {"p90", s.p90},
          {"within_50", s.within_50},
          {"within_200", s.within_200},
          {"max_iterations", s.max_iterations},
          {"guard_exits", s.guard_exits},
          {"certificate_failures", s.certificate_failures},
          {"sandwich_failures", s.sandwich_failures}};
}

inline json summary_json(const SweepStats& s) {
  return {{"mu", s.grid}, {"mean", s.mean}, {"p90", s.p90}};
}

inline std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

template <typename Writer>
void write_csv_file(const std::string& path, Writer&& w) {
  std::ostringstream ss;
  w(ss);
  write_text_file(path, ss.str());
}

}  // namespace osc
