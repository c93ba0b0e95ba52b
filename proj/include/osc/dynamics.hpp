#pragma once

// Switched closed-loop dynamics and their fixed-step integration.
//
//   eta_ij'        = omega_i - omega_j
//   M_j omega_j'   = pM_j - pL_j - A_j omega_j - sum d-bar sigma
//                    - sum_out B eta + sum_in B eta
//   gamma_j pM_j'  = -(pM_j + kappa_j omega_j - kappa_j pc_j)
//   tau_ij psi_ij' = pc_i - pc_j
//   tau_j pc_j'    = -pM_j + pL_j + sum d-bar sigma + sum_in psi - sum_out psi
//
// "out" are lines whose tail is j, "in" those whose head is j.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "osc/coordinator.hpp"
#include "osc/model.hpp"
#include "osc/opt.hpp"
#include "osc/state.hpp"

namespace osc {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Derivative of the flat state with the per-bus switched demand precomputed.
inline void field_into(const NetworkConfig& cfg, const StateLayout& lay, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& demand, Eigen::VectorXd& dx) {
  dx.resize(x.size());
  const Eigen::Index eo = lay.eta(), wo = lay.omega(), mo = lay.pm(), co = lay.pc(), so = lay.psi();
  const std::size_t n = lay.buses;

  for (std::size_t j = 0; j < n; ++j) {
    const auto& b = cfg.buses[j];
    const auto jj = static_cast<Eigen::Index>(j);
    dx[wo + jj] = x[mo + jj] - b.uncontrollable_load - b.damping * x[wo + jj] - demand[jj];
    dx[co + jj] = -x[mo + jj] + b.uncontrollable_load + demand[jj];
    dx[mo + jj] = -(x[mo + jj] + b.droop * x[wo + jj] - b.droop * x[co + jj]) / b.gen_time_constant;
  }
  for (std::size_t e = 0; e < lay.lines; ++e) {
    const auto& l = cfg.power_lines[e];
    const auto ee = static_cast<Eigen::Index>(e);
    const auto t = static_cast<Eigen::Index>(l.tail), h = static_cast<Eigen::Index>(l.head);
    dx[eo + ee] = x[wo + t] - x[wo + h];
    const double flow = l.susceptance * x[eo + ee];
    dx[wo + t] -= flow;
    dx[wo + h] += flow;
  }
  for (std::size_t e = 0; e < lay.comm_lines; ++e) {
    const auto& l = cfg.comm_lines[e];
    const auto ee = static_cast<Eigen::Index>(e);
    const auto t = static_cast<Eigen::Index>(l.tail), h = static_cast<Eigen::Index>(l.head);
    dx[so + ee] = (x[co + t] - x[co + h]) / l.time_constant;
    dx[co + t] -= x[so + ee];
    dx[co + h] += x[so + ee];
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    dx[wo + jj] /= cfg.buses[j].inertia;
    dx[co + jj] /= cfg.buses[j].command_time_constant;
  }
}

}  // namespace detail

inline ContinuousState vector_field(const NetworkConfig& cfg, const ContinuousState& x, const SwitchVector& sigma) {
  require_layout(cfg, x);
  require_switches(cfg, sigma);
  ContinuousState dx(x.layout());
  detail::field_into(cfg, x.layout(), x.vector(), bus_switched_demand(cfg, sigma), dx.vector());
  return dx;
}

/// Classical fourth-order Runge-Kutta step of x' = f(x).
template <typename F>
Eigen::VectorXd rk4_step(F&& f, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd k1 = f(x);
  const Eigen::VectorXd k2 = f(Eigen::VectorXd(x + 0.5 * h * k1));
  const Eigen::VectorXd k3 = f(Eigen::VectorXd(x + 0.5 * h * k2));
  const Eigen::VectorXd k4 = f(Eigen::VectorXd(x + h * k3));
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline ContinuousState rk4_step(const NetworkConfig& cfg, const ContinuousState& x, const SwitchVector& sigma,
                                double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("step size must be positive");
  require_layout(cfg, x);
  require_switches(cfg, sigma);
  const Eigen::VectorXd demand = bus_switched_demand(cfg, sigma);
  const StateLayout lay = x.layout();
  Eigen::VectorXd scratch;
  auto f = [&](const Eigen::VectorXd& v) {
    detail::field_into(cfg, lay, v, demand, scratch);
    return scratch;
  };
  ContinuousState out(lay, rk4_step(f, x.vector(), h));
  if (!out.all_finite()) throw SimulationError("non-finite state after integration step");
  return out;
}

/// min(gamma_j, tau_j, tau_ij, M_j / A_j) / 20, capped at 1e-3 s.
inline double default_step(const NetworkConfig& cfg) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& b : cfg.buses)
    m = std::min({m, b.gen_time_constant, b.command_time_constant, b.inertia / b.damping});
  for (const auto& l : cfg.comm_lines) m = std::min(m, l.time_constant);
  return std::min(m / 20.0, 1e-3);
}

// ---------------------------------------------------------------------------
// Lyapunov monitor

inline double lyapunov(const NetworkConfig& cfg, const ContinuousState& x, const ContinuousState& x_eq) {
  require_layout(cfg, x);
  require_layout(cfg, x_eq);
  double v = 0.0;
  for (std::size_t j = 0; j < cfg.buses.size(); ++j) {
    const auto& b = cfg.buses[j];
    const auto jj = static_cast<Eigen::Index>(j);
    const double w = x.omega()[jj];
    const double dm = x.pm()[jj] - x_eq.pm()[jj];
    const double dc = x.pc()[jj] - x_eq.pc()[jj];
    v += 0.5 * b.inertia * w * w;
    v += b.gen_time_constant / (2.0 * b.droop) * dm * dm;
    v += 0.5 * b.command_time_constant * dc * dc;
  }
  for (std::size_t e = 0; e < cfg.power_lines.size(); ++e) {
    const double d = x.eta()[static_cast<Eigen::Index>(e)] - x_eq.eta()[static_cast<Eigen::Index>(e)];
    v += 0.5 * cfg.power_lines[e].susceptance * d * d;
  }
  for (std::size_t e = 0; e < cfg.comm_lines.size(); ++e) {
    const double d = x.psi()[static_cast<Eigen::Index>(e)] - x_eq.psi()[static_cast<Eigen::Index>(e)];
    v += 0.5 * cfg.comm_lines[e].time_constant * d * d;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Simulation

struct Disturbance {
  double time = 0.0;
  std::size_t bus = 0;
  double uncontrollable_load = 0.0;  // new p^L at `bus`
};

/// Fixed switching signal: sigma jumps to `sigma` at `time`.
struct ScheduledSwitch {
  double time = 0.0;
  SwitchVector sigma;
};

struct SwitchSchedule {
  std::vector<ScheduledSwitch> switches;
};

/// One coordinator iteration every `period` seconds; the coordinator restarts
/// with the updated demand at every disturbance.
struct LiveCoordinator {
  CoordinatorOptions options;
  double period = 0.3;
};

struct SimulationOptions {
  double horizon = 10.0;
  std::optional<double> step;            // default_step(cfg) when empty
  double sample_period = 0.1;
  std::optional<SwitchVector> initial_sigma;  // rho when empty
  std::variant<SwitchSchedule, LiveCoordinator> control = SwitchSchedule{};
  std::vector<Disturbance> disturbances;
  bool record_lyapunov = false;          // against the terminal equilibrium
};

struct SwitchEvent {
  double time = 0.0;
  std::size_t k = 0;    // coordinator iteration, or schedule position (1-based)
  SwitchVector sigma;
  std::size_t run = 0;  // coordinator run; bumps at each restart
};

struct CoordinatorRun {
  double start = 0.0;
  std::size_t iterations = 0;
  bool terminated = false;
  bool guard_triggered = false;
  SwitchVector sigma_bar;
  double pc_set = 0.0;
  double pc_hat = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<ContinuousState> rows;
  std::vector<SwitchEvent> switches;
  std::vector<double> lyapunov;
  std::vector<CoordinatorRun> coordinator_runs;
  NetworkConfig final_config;  // after disturbances
  SwitchVector final_sigma;
  double step = 0.0;

  const ContinuousState& final_state() const { return rows.back(); }
  double last_switch_time() const { return switches.empty() ? 0.0 : switches.back().time; }
};

namespace detail {

inline bool reached(double t, double target) {
  return std::isfinite(target) && target - t <= 1e-12 * std::max(1.0, std::abs(target));
}

}  // namespace detail

/// Integrates the closed loop with sigma piecewise constant. Steps are
/// shortened so that switch, disturbance and sample instants are hit exactly.
inline Trajectory simulate(const NetworkConfig& cfg0, const ContinuousState& x0, const SimulationOptions& opt) {
  require_valid(cfg0);
  require_layout(cfg0, x0);
  if (!(opt.horizon > 0.0) || !std::isfinite(opt.horizon)) throw std::invalid_argument("horizon must be positive");
  if (!(opt.sample_period > 0.0)) throw std::invalid_argument("sample period must be positive");
  const double h = opt.step.value_or(default_step(cfg0));
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("step size must be positive");

  NetworkConfig cfg = cfg0;
  SwitchVector sigma = opt.initial_sigma.value_or(desired_states(cfg));
  require_switches(cfg, sigma);

  std::vector<Disturbance> disturbances = opt.disturbances;
  std::stable_sort(disturbances.begin(), disturbances.end(),
                   [](const Disturbance& a, const Disturbance& b) { return a.time < b.time; });
  for (const auto& d : disturbances) {
    if (!(d.time >= 0.0 && d.time <= opt.horizon)) throw std::invalid_argument("disturbance time outside horizon");
    if (d.bus >= cfg.buses.size()) throw std::invalid_argument("disturbance bus does not exist");
  }

  const SwitchSchedule* schedule = std::get_if<SwitchSchedule>(&opt.control);
  const LiveCoordinator* live = std::get_if<LiveCoordinator>(&opt.control);
  std::vector<ScheduledSwitch> scheduled;
  if (schedule) {
    scheduled = schedule->switches;
    std::stable_sort(scheduled.begin(), scheduled.end(),
                     [](const ScheduledSwitch& a, const ScheduledSwitch& b) { return a.time < b.time; });
    for (const auto& s : scheduled) {
      if (!(s.time >= 0.0 && s.time <= opt.horizon)) throw std::invalid_argument("switch time outside horizon");
      require_switches(cfg, s.sigma);
    }
  }
  if (live && !(live->period > 0.0)) throw std::invalid_argument("coordinator period must be positive");

  Trajectory traj;
  traj.step = h;
  const StateLayout lay = x0.layout();
  Eigen::VectorXd x = x0.vector();
  Eigen::VectorXd demand = bus_switched_demand(cfg, sigma);
  Eigen::VectorXd scratch;
  auto f = [&](const Eigen::VectorXd& v) {
    detail::field_into(cfg, lay, v, demand, scratch);
    return scratch;
  };

  std::optional<Coordinator> coord;
  double coord_start = 0.0;
  std::size_t run = 0;
  auto start_coordinator = [&](double t) {
    if (!live) return;
    if (coord) run++;
    coord.emplace(cfg, live->options);
    coord_start = t;
    traj.coordinator_runs.push_back({t, 0, false, false, {}, 0.0, 0.0});
  };
  auto next_iteration_time = [&]() {
    if (!coord || coord->done()) return std::numeric_limits<double>::infinity();
    return coord_start + static_cast<double>(coord->state().k + 1) * live->period;
  };

  start_coordinator(0.0);
  std::size_t next_dist = 0, next_sched = 0, next_sample = 0;
  double t = 0.0;
  auto sample_time = [&](std::size_t i) { return std::min(opt.horizon, static_cast<double>(i) * opt.sample_period); };

  for (;;) {
    // Events at the current instant: disturbances, then switching, then sampling.
    bool restarted = false;
    while (next_dist < disturbances.size() && detail::reached(t, disturbances[next_dist].time)) {
      cfg.buses[disturbances[next_dist].bus].uncontrollable_load = disturbances[next_dist].uncontrollable_load;
      ++next_dist;
      restarted = true;
    }
    if (restarted) start_coordinator(t);
    while (next_sched < scheduled.size() && detail::reached(t, scheduled[next_sched].time)) {
      sigma = scheduled[next_sched].sigma;
      ++next_sched;
      traj.switches.push_back({t, next_sched, sigma, 0});
    }
    if (live && detail::reached(t, next_iteration_time())) {
      sigma = coord->step();
      const auto& s = coord->state();
      traj.switches.push_back({t, s.k, sigma, run});
      auto& r = traj.coordinator_runs.back();
      r.iterations = s.k;
      r.terminated = s.terminated();
      r.guard_triggered = s.guard_triggered;
      r.sigma_bar = s.sigma_bar;
      r.pc_set = s.pc_set;
      r.pc_hat = s.pc_hat;
    }
    demand = bus_switched_demand(cfg, sigma);
    if (detail::reached(t, sample_time(next_sample))) {
      if (traj.times.empty() || t > traj.times.back()) {
        traj.times.push_back(t);
        traj.rows.emplace_back(lay, x);
      }
      ++next_sample;
    }
    if (detail::reached(t, opt.horizon)) break;

    double target = std::min(opt.horizon, sample_time(next_sample));
    if (next_dist < disturbances.size()) target = std::min(target, disturbances[next_dist].time);
    if (next_sched < scheduled.size()) target = std::min(target, scheduled[next_sched].time);
    if (live) target = std::min(target, next_iteration_time());

    const double dt = std::min(h, target - t);
    x = rk4_step(f, x, dt);
    if (!x.allFinite()) throw SimulationError("non-finite state at t = " + std::to_string(t + dt));
    t = (target - t <= h) ? target : t + dt;
  }

  traj.final_config = cfg;
  traj.final_sigma = sigma;
  if (opt.record_lyapunov) {
    const ContinuousState x_eq = equilibrium_state(cfg, sigma);
    traj.lyapunov.reserve(traj.rows.size());
    for (const auto& row : traj.rows) traj.lyapunov.push_back(lyapunov(cfg, row, x_eq));
  }
  return traj;
}

inline Trajectory simulate(const NetworkConfig& cfg, const SimulationOptions& opt) {
  return simulate(cfg, ContinuousState::zeros(cfg), opt);
}

struct DescentReport {
  std::size_t samples = 0;
  double max_increase = 0.0;  // largest V(t_{i+1}) - V(t_i) over checked pairs
  bool ok = true;
};

/// Checks that V is non-increasing (with slack) over samples at or after `from`.
inline DescentReport lyapunov_descent(const Trajectory& traj, double from, double slack = 1e-9) {
  if (traj.lyapunov.size() != traj.times.size()) throw std::invalid_argument("trajectory has no Lyapunov samples");
  DescentReport r;
  r.max_increase = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < traj.times.size(); ++i) {
    if (traj.times[i] < from) continue;
    ++r.samples;
    const double inc = traj.lyapunov[i + 1] - traj.lyapunov[i];
    r.max_increase = std::max(r.max_increase, inc);
    if (inc > slack) r.ok = false;
  }
  if (r.samples == 0) r.max_increase = 0.0;
  return r;
}

}  // namespace osc
