#pragma once

// Command-line front end. Exit codes: 0 success, 1 runtime failure
// (non-finite state, oracle cap, coordinator cap, I/O), 2 configuration or
// usage error.
//
//   osc validate --config C
//   osc solve    --config C [--method enumerate|branch-and-bound|relaxed|algorithm]
//                [--mu M] [--delta D] [--seed S] [--json] [--out FILE] [--trace FILE]
//   osc verify   --config C --sigma BITS [--theta beta-hat|beta|NUMBER] [--delta D]
//   osc simulate --config C [--horizon T] [--step H] [--sample P] [--period P]
//                [--mu M] [--delta D] [--seed S] [--start zero|equilibrium]
//                [--sigma0 BITS] [--disturbance TIME:BUS:PL]... [--static] [--out DIR]
//   osc sweep    [--mu-grid 0.1,0.5,0.9] [--cases N] [--seed S] [--buses B]
//                [--loads-per-bus L] [--tier oracle|coordinator] [--out DIR]
//   osc gap      [--cases N] [--seed S] [--method enumerate|branch-and-bound]
//                [--mu M] [--buses B] [--loads-per-bus L] [--out DIR]
//
// C is a path to a configuration document or a builtin fixture name
// (i0, i1a, i1b, three_bus, broken).

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "osc/config_io.hpp"
#include "osc/coordinator.hpp"
#include "osc/dynamics.hpp"
#include "osc/export.hpp"
#include "osc/fixtures.hpp"
#include "osc/harness.hpp"
#include "osc/opt.hpp"

namespace osc {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cli_detail {

struct Loaded {
  NetworkConfig cfg;
  std::string source;
};

inline Loaded load_config(const std::string& name) {
  if (std::filesystem::is_regular_file(name)) {
    Loaded l{parse_config_unchecked(read_text_file(name)), name};
    require_valid(l.cfg);
    return l;
  }
  if (auto f = fixtures::by_name(name)) {
    require_valid(*f);
    return {*f, name};
  }
  throw ConfigError("'" + name + "' is neither a readable file nor a builtin fixture");
}

inline void check_mu(const std::optional<double>& mu) {
  if (mu && !(*mu > 0.0 && *mu < 1.0)) throw UsageError("--mu must lie in (0, 1)");
}
inline void check_positive(const std::optional<double>& v, const char* flag) {
  if (v && !(*v > 0.0 && std::isfinite(*v))) throw UsageError(std::string(flag) + " must be positive");
}

inline CoordinatorOptions coordinator_options(const std::optional<double>& mu, const std::optional<double>& delta,
                                              std::uint64_t seed) {
  CoordinatorOptions o;
  if (mu) o.mu = *mu;
  o.delta = delta;
  o.seed = seed;
  return o;
}

inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--mu-grid entries must be numbers, got '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--mu-grid is empty");
  return out;
}

inline Disturbance parse_disturbance(const std::string& text, std::size_t buses) {
  std::stringstream ss(text);
  std::string a, b, c;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
    throw UsageError("--disturbance expects TIME:BUS:PL, got '" + text + "'");
  try {
    Disturbance d;
    d.time = std::stod(a);
    const long bus = std::stol(b);
    if (bus < 1 || static_cast<std::size_t>(bus) > buses) throw UsageError("--disturbance bus out of range");
    d.bus = static_cast<std::size_t>(bus - 1);
    d.uncontrollable_load = std::stod(c);
    return d;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    throw UsageError("--disturbance expects TIME:BUS:PL, got '" + text + "'");
  }
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
}

inline std::string join(const std::string& dir, const char* file) {
  return (std::filesystem::path(dir) / file).string();
}

}  // namespace cli_detail

/// Runs one invocation; args excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Secondary frequency control with on-off loads: simulation, coordination and optimality oracles",
               "osc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config;
  std::string method = "enumerate";
  std::optional<double> mu, delta, horizon_opt, step, sample, period;
  std::uint64_t seed = 1;
  bool as_json = false, static_schedule = false;
  std::string out_path, trace_path, sigma_text, theta_text = "beta-hat", start = "zero", sigma0_text;
  std::vector<std::string> disturbance_text;
  std::string grid_text, tier = "coordinator";
  std::size_t cases = 100;
  std::optional<std::size_t> buses, loads_per_bus;

  auto* validate_cmd = app.add_subcommand("validate", "Check a configuration");
  validate_cmd->add_option("--config", config, "Configuration file or fixture name")->required();

  auto* solve_cmd = app.add_subcommand("solve", "Solve the supply problem");
  solve_cmd->add_option("--config", config)->required();
  solve_cmd->add_option("--method", method)
      ->check(CLI::IsMember({"enumerate", "branch-and-bound", "relaxed", "algorithm"}));
  solve_cmd->add_option("--mu", mu);
  solve_cmd->add_option("--delta", delta);
  solve_cmd->add_option("--seed", seed);
  solve_cmd->add_flag("--json", as_json, "Print the solution document instead of key: value lines");
  solve_cmd->add_option("--out", out_path, "Write the solution document to FILE");
  solve_cmd->add_option("--trace", trace_path, "Write the coordinator trace CSV (algorithm only)");

  auto* verify_cmd = app.add_subcommand("verify", "Search for an epsilon-optimality witness");
  verify_cmd->add_option("--config", config)->required();
  verify_cmd->add_option("--sigma", sigma_text)->required();
  verify_cmd->add_option("--theta", theta_text, "beta-hat (beta + delta), beta, or a number");
  verify_cmd->add_option("--delta", delta);
  verify_cmd->add_option("--seed", seed);
  verify_cmd->add_flag("--json", as_json);

  auto* sim_cmd = app.add_subcommand("simulate", "Integrate the closed loop");
  sim_cmd->add_option("--config", config)->required();
  sim_cmd->add_option("--horizon", horizon_opt);
  sim_cmd->add_option("--step", step);
  sim_cmd->add_option("--sample", sample);
  sim_cmd->add_option("--period", period, "Seconds per coordinator iteration");
  sim_cmd->add_option("--mu", mu);
  sim_cmd->add_option("--delta", delta);
  sim_cmd->add_option("--seed", seed);
  sim_cmd->add_option("--start", start)->check(CLI::IsMember({"zero", "equilibrium"}));
  sim_cmd->add_option("--sigma0", sigma0_text);
  sim_cmd->add_option("--disturbance", disturbance_text, "TIME:BUS:PL, bus numbered from 1");
  sim_cmd->add_flag("--static", static_schedule, "Hold sigma0 fixed instead of running the coordinator");
  sim_cmd->add_option("--out", out_path, "Directory for trajectory.csv, switches.csv, summary.json");

  auto* sweep_cmd = app.add_subcommand("sweep", "Iteration statistics (mu grid or random mu)");
  sweep_cmd->add_option("--mu-grid", grid_text);
  sweep_cmd->add_option("--cases", cases);
  sweep_cmd->add_option("--seed", seed);
  sweep_cmd->add_option("--buses", buses);
  sweep_cmd->add_option("--loads-per-bus", loads_per_bus);
  sweep_cmd->add_option("--tier", tier)->check(CLI::IsMember({"oracle", "coordinator"}));
  sweep_cmd->add_option("--out", out_path);

  auto* gap_cmd = app.add_subcommand("gap", "Optimality gap against the exact oracle");
  gap_cmd->add_option("--cases", cases);
  gap_cmd->add_option("--seed", seed);
  gap_cmd->add_option("--method", method)->check(CLI::IsMember({"enumerate", "branch-and-bound"}));
  gap_cmd->add_option("--mu", mu);
  gap_cmd->add_option("--buses", buses);
  gap_cmd->add_option("--loads-per-bus", loads_per_bus);
  gap_cmd->add_option("--out", out_path);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    check_mu(mu);
    check_positive(delta, "--delta");

    if (validate_cmd->parsed()) {
      NetworkConfig cfg;
      if (std::filesystem::is_regular_file(config)) cfg = parse_config_unchecked(read_text_file(config));
      else if (auto f = fixtures::by_name(config)) cfg = *f;
      else throw ConfigError("'" + config + "' is neither a readable file nor a builtin fixture");
      const auto report = validate(cfg);
      if (!report.ok()) {
        err << "invalid configuration '" << config << "':\n";
        for (const auto& e : report.entries) err << "  " << e << "\n";
        return 2;
      }
      const auto agg = aggregates(cfg);
      out << "ok: " << cfg.buses.size() << " buses, " << cfg.power_lines.size() << " power lines, "
          << cfg.comm_lines.size() << " comm lines, " << cfg.loads.size() << " loads\n";
      out << "K: " << format_number(agg.total_droop) << "\n";
      out << "ell: " << format_number(agg.total_uncontrollable) << "\n";
      out << "beta: " << format_number(agg.largest_load) << "\n";
      out << "delta_max: " << format_number(agg.delta_max) << "\n";
      return 0;
    }

    if (solve_cmd->parsed()) {
      const auto loaded = load_config(config);
      const auto& cfg = loaded.cfg;
      json doc{{"tool", tool_header()}, {"config", loaded.source}, {"method", method}};
      std::vector<std::pair<std::string, std::string>> lines;
      if (method == "relaxed") {
        const auto r = solve_rhosc(cfg);
        doc["solution"] = to_json(r);
        std::string frac;
        for (std::size_t i = 0; i < r.sigma.size(); ++i) frac += (i ? "," : "") + format_number(r.sigma[i]);
        lines = {{"sigma", frac}, {"cost", format_number(r.cost)}, {"certificate", "relaxed"},
                 {"lambda", format_number(r.multiplier)}};
      } else if (method == "algorithm") {
        const auto copt = coordinator_options(mu, delta, seed);
        const auto r = run_coordinator(cfg, copt);
        const auto sol = make_solution(cfg, r.sigma_bar, CertificateKind::algorithm);
        doc["parameters"] = {{"mu", copt.mu}, {"delta", r.delta}, {"seed", seed}};
        doc["solution"] = to_json(sol);
        doc["coordinator"] = to_json(r);
        lines = {{"sigma", bitstring(sol.sigma)}, {"cost", format_number(sol.cost)},
                 {"certificate", to_string(sol.kind)}, {"iterations", std::to_string(r.iterations)},
                 {"guard", r.guard_triggered ? "1" : "0"}};
        if (!trace_path.empty()) write_csv_file(trace_path, [&](std::ostream& os) { write_trace_csv(os, r.trace); });
      } else {
        const auto sol = solve_hosc_exact(cfg, method == "enumerate" ? ExactMethod::enumerate
                                                                     : ExactMethod::branch_and_bound);
        doc["solution"] = to_json(sol);
        lines = {{"sigma", bitstring(sol.sigma)}, {"cost", format_number(sol.cost)},
                 {"certificate", to_string(sol.kind)}};
      }
      if (!out_path.empty()) write_text_file(out_path, dump(doc));
      if (as_json) {
        out << dump(doc);
      } else {
        for (const auto& [k, v] : lines) out << k << ": " << v << "\n";
      }
      return 0;
    }

    if (verify_cmd->parsed()) {
      const auto loaded = load_config(config);
      const auto& cfg = loaded.cfg;
      SwitchVector sigma;
      try {
        sigma = parse_bitstring(sigma_text);
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--sigma: ") + e.what());
      }
      if (sigma.size() != cfg.loads.size())
        throw UsageError("--sigma has " + std::to_string(sigma.size()) + " entries, network has " +
                         std::to_string(cfg.loads.size()) + " loads");
      const auto agg = aggregates(cfg);
      CoordinatorOptions copt = coordinator_options(std::nullopt, delta, seed);
      const double d = resolve_delta(cfg, copt).delta;
      double theta = 0.0;
      if (theta_text == "beta-hat") theta = agg.largest_load + d;
      else if (theta_text == "beta") theta = agg.largest_load;
      else {
        try {
          std::size_t used = 0;
          theta = std::stod(theta_text, &used);
          if (used != theta_text.size()) throw std::invalid_argument(theta_text);
        } catch (const std::exception&) {
          throw UsageError("--theta must be beta-hat, beta, or a number");
        }
        if (!(theta >= 0.0)) throw UsageError("--theta must be non-negative");
      }
      const auto w = check_epsilon_conditions(cfg, sigma, theta);
      const double eps = epsilon_bound(agg.total_droop, theta);
      if (as_json) {
        json doc{{"tool", tool_header()}, {"config", loaded.source}, {"sigma", bitstring(sigma)},
                 {"theta", theta}, {"delta", d}, {"epsilon", eps}};
        doc["witness"] = w ? to_json(*w) : json(nullptr);
        out << dump(doc);
        return 0;
      }
      if (w) {
        out << "witness: zeta=" << format_number(w->zeta) << " interval=[" << format_number(w->lower) << ", "
            << format_number(w->upper) << "]\n";
      } else {
        out << "no-witness\n";
      }
      out << "theta: " << format_number(theta) << "\n";
      out << "epsilon: " << format_number(eps) << "\n";
      return 0;
    }

    if (sim_cmd->parsed()) {
      const auto loaded = load_config(config);
      const auto& cfg = loaded.cfg;
      check_positive(horizon_opt, "--horizon");
      check_positive(step, "--step");
      check_positive(sample, "--sample");
      check_positive(period, "--period");
      SimulationOptions so;
      so.horizon = horizon_opt.value_or(60.0);
      so.step = step;
      so.sample_period = sample.value_or(0.1);
      so.record_lyapunov = true;
      if (!sigma0_text.empty()) {
        try {
          so.initial_sigma = parse_bitstring(sigma0_text);
        } catch (const std::invalid_argument& e) {
          throw UsageError(std::string("--sigma0: ") + e.what());
        }
        if (so.initial_sigma->size() != cfg.loads.size()) throw UsageError("--sigma0 length does not match loads");
      }
      for (const auto& d : disturbance_text) {
        so.disturbances.push_back(parse_disturbance(d, cfg.buses.size()));
        if (!(so.disturbances.back().time >= 0.0 && so.disturbances.back().time <= so.horizon))
          throw UsageError("--disturbance time outside the horizon");
      }
      LiveCoordinator live{coordinator_options(mu, delta, seed), period.value_or(0.3)};
      if (!static_schedule) so.control = live;
      const SwitchVector sigma0 = so.initial_sigma.value_or(desired_states(cfg));
      const ContinuousState x0 =
          start == "equilibrium" ? equilibrium_state(cfg, sigma0) : ContinuousState::zeros(cfg);
      const Trajectory traj = simulate(cfg, x0, so);

      const auto& xf = traj.final_state();
      double settle = traj.last_switch_time();
      for (const auto& d : so.disturbances) settle = std::max(settle, d.time);
      const auto descent = lyapunov_descent(traj, settle);
      json summary{{"tool", tool_header()},
                   {"config", loaded.source},
                   {"parameters",
                    {{"horizon", so.horizon},
                     {"step", traj.step},
                     {"sample", so.sample_period},
                     {"period", live.period},
                     {"mu", live.options.mu},
                     {"delta", resolve_delta(cfg, live.options).delta},
                     {"seed", seed},
                     {"start", start},
                     {"static", static_schedule},
                     {"sigma0", bitstring(sigma0)}}},
                   {"final_sigma", bitstring(traj.final_sigma)},
                   {"switch_events", traj.switches.size()},
                   {"terminal_omega_inf", xf.omega().size() ? xf.omega().cwiseAbs().maxCoeff() : 0.0},
                   {"terminal_pc_spread", xf.pc_spread()},
                   {"terminal_cost", hosc_cost(traj.final_config, traj.final_sigma).cost},
                   {"lyapunov_max_increase", descent.max_increase},
                   {"lyapunov_descent", descent.ok}};
      if (!out_path.empty()) {
        ensure_dir(out_path);
        write_csv_file(join(out_path, "trajectory.csv"),
                       [&](std::ostream& os) { write_trajectory_csv(os, cfg, traj); });
        write_csv_file(join(out_path, "switches.csv"), [&](std::ostream& os) { write_switches_csv(os, traj); });
        write_text_file(join(out_path, "summary.json"), dump(summary));
      }
      out << "final_sigma: " << bitstring(traj.final_sigma) << "\n";
      out << "switch_events: " << traj.switches.size() << "\n";
      out << "terminal_omega_inf: " << format_number(summary["terminal_omega_inf"].get<double>()) << "\n";
      out << "terminal_pc_spread: " << format_number(xf.pc_spread()) << "\n";
      out << "terminal_cost: " << format_number(summary["terminal_cost"].get<double>()) << "\n";
      out << "lyapunov_descent: " << (descent.ok ? "ok" : "violated") << "\n";
      return 0;
    }

    if (sweep_cmd->parsed() || gap_cmd->parsed()) {
      const bool gap = gap_cmd->parsed();
      InstanceSpec spec = (gap || tier == "oracle") ? InstanceSpec::oracle_tier() : InstanceSpec::coordinator_tier();
      if (buses) spec.buses = *buses;
      if (loads_per_bus) spec.loads_per_bus = *loads_per_bus;
      if (spec.buses == 0) throw UsageError("--buses must be at least 1");
      json summary{{"tool", tool_header()}, {"instance", to_json(spec)}, {"cases", cases}, {"seed", seed}};
      if (!out_path.empty()) ensure_dir(out_path);

      if (gap) {
        CampaignOptions co;
        co.mu = mu;
        co.method = method == "enumerate" ? ExactMethod::enumerate : ExactMethod::branch_and_bound;
        if (co.method == ExactMethod::branch_and_bound && spec.load_count() > 64)
          throw OracleCapError("branch-and-bound campaign limited to 64 loads per instance");
        const auto stats = gap_experiment(spec, cases, seed, co);
        summary["parameters"] = {{"method", method},
                                 {"mu", mu ? json(*mu) : json({co.mu_range.lo, co.mu_range.hi})}};
        summary["results"] = summary_json(stats);
        if (!out_path.empty())
          write_csv_file(join(out_path, "gap.csv"), [&](std::ostream& os) { write_gap_csv(os, stats); });
        out << "cases: " << stats.cases << "\n";
        out << "coincidence: " << format_number(stats.coincidence) << "\n";
        out << "max_gap: " << format_number(stats.max_gap) << "\n";
        out << "violations: " << stats.violations << "\n";
        out << "certificate_failures: " << stats.certificate_failures << "\n";
      } else if (!grid_text.empty()) {
        const auto grid = parse_grid(grid_text);
        for (double g : grid) check_mu(g);
        const auto stats = mu_sweep(spec, grid, cases, seed);
        summary["results"] = summary_json(stats);
        if (!out_path.empty())
          write_csv_file(join(out_path, "sweep.csv"), [&](std::ostream& os) { write_sweep_csv(os, stats); });
        for (std::size_t i = 0; i < grid.size(); ++i)
          out << "mu=" << format_number(grid[i]) << " mean=" << format_number(stats.mean[i])
              << " p90=" << format_number(stats.p90[i]) << "\n";
      } else {
        CampaignOptions co;
        const auto stats = iteration_experiment(spec, cases, seed, co);
        summary["parameters"] = {{"mu", {co.mu_range.lo, co.mu_range.hi}}};
        summary["results"] = summary_json(stats);
        if (!out_path.empty())
          write_csv_file(join(out_path, "iterations.csv"), [&](std::ostream& os) { write_iterations_csv(os, stats); });
        out << "cases: " << stats.cases << "\n";
        out << "mean: " << format_number(stats.mean) << "\n";
        out << "p90: " << format_number(stats.p90) << "\n";
        out << "within_50: " << format_number(stats.within_50) << "\n";
        out << "within_200: " << format_number(stats.within_200) << "\n";
      }
      if (!out_path.empty()) write_text_file(join(out_path, "summary.json"), dump(summary));
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    for (std::size_t i = 1; i < e.report().entries.size(); ++i) err << "  " << e.report().entries[i] << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace osc
