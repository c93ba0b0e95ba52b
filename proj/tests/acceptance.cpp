// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "osc/osc.hpp"

using namespace osc;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail, double seconds) {
  std::printf("%s %d %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, name, detail.c_str(), seconds);
  std::fflush(stdout);
  failures += !ok;
}

template <typename Fn>
void criterion(int id, const char* name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    ok = fn(detail);
  } catch (const std::exception& e) {
    detail += std::string(" exception: ") + e.what();
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(id, name, ok, detail, s);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

constexpr std::uint64_t kGapSeed = 20240601;
constexpr std::uint64_t kIterSeed = 20240602;

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);

  // Shared campaigns.
  std::optional<GapStats> gap;
  std::optional<IterationStats> iters;
  std::string gap_error, iter_error;
  double gap_seconds = 0.0, iter_seconds = 0.0;
  auto timed = [](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  gap_seconds = timed([&] {
    try {
      gap = gap_experiment(InstanceSpec::oracle_tier(), 1000, kGapSeed);
    } catch (const std::exception& e) {
      gap_error = e.what();
    }
  });

  criterion(1, "epsilon-optimality", [&](std::string& d) {
    if (!gap) return d = "campaign failed: " + gap_error, false;
    d = std::to_string(gap->cases) + " cases, " + std::to_string(gap->violations) + " above bound, max gap " +
        fmt("%.3g", gap->max_gap) + ", campaign " + fmt("%.1f s", gap_seconds);
    return gap->cases == 1000 && gap->violations == 0;
  });

  criterion(2, "coincidence", [&](std::string& d) {
    if (!gap) return d = "campaign failed: " + gap_error, false;
    d = "sigma-bar equals oracle sigma in " + fmt("%.1f%%", 100.0 * gap->coincidence) + " of cases (need 85%)";
    return gap->coincidence >= 0.85;
  });

  iter_seconds = timed([&] {
    try {
      iters = iteration_experiment(InstanceSpec::coordinator_tier(), 5000, kIterSeed);
    } catch (const std::exception& e) {
      iter_error = e.what();
    }
  });

  criterion(3, "termination", [&](std::string& d) {
    if (!gap || !iters) return d = "a run did not terminate: " + gap_error + iter_error, false;
    const std::size_t runs = gap->cases + iters->cases;
    const std::size_t sandwich = gap->sandwich_failures + iters->sandwich_failures;
    const std::size_t cert = gap->certificate_failures + iters->certificate_failures;
    d = std::to_string(runs) + " runs terminated, " + std::to_string(gap->guard_exits + iters->guard_exits) +
        " guard exits, " + std::to_string(sandwich) + " sandwich failures, " + std::to_string(cert) +
        " missing witnesses";
    return sandwich == 0 && cert == 0;
  });

  criterion(4, "iteration statistics", [&](std::string& d) {
    if (!iters) return d = "campaign failed: " + iter_error, false;
    d = std::to_string(iters->cases) + " cases x 10000 loads: " + fmt("%.1f%%", 100.0 * iters->within_50) +
        " within 50, " + fmt("%.1f%%", 100.0 * iters->within_200) + " within 200, mean " + fmt("%.1f", iters->mean) +
        ", max " + std::to_string(iters->max_iterations) + ", campaign " + fmt("%.1f s", iter_seconds);
    return iters->cases == 5000 && iters->within_50 >= 0.80 && iters->within_200 >= 0.95;
  });

  criterion(5, "mu sweep", [&](std::string& d) {
    const auto s = mu_sweep(InstanceSpec::coordinator_tier(), {0.1, 0.5, 0.9}, 200, kIterSeed + 1);
    d = "mean iterations " + fmt("%.2f", s.mean[0]) + " / " + fmt("%.2f", s.mean[1]) + " / " +
        fmt("%.2f", s.mean[2]) + " at mu = 0.1 / 0.5 / 0.9";
    return s.mean[1] < s.mean[0] && s.mean[1] < s.mean[2];
  });

  std::vector<ClosedLoopReport> closed_loops;
  criterion(6, "frequency restoration", [&](std::string& d) {
    const auto cfg = fixtures::three_bus();
    ClosedLoopOptions opt;
    opt.sim.horizon = 120.0;
    opt.sim.sample_period = 0.1;
    opt.start_at_equilibrium = true;
    closed_loops.push_back(closed_loop_experiment(cfg, {{1.0, 1, cfg.buses[1].uncontrollable_load + 0.2}}, opt));
    const auto& r = closed_loops.back();
    d = "3-bus +0.2 step: |omega|inf " + fmt("%.2e", r.terminal_omega) + ", pc spread " +
        fmt("%.2e", r.terminal_spread) + " at 120 s";
    return r.terminal_omega < 1e-4 && r.terminal_spread < 1e-6;
  });

  criterion(7, "lyapunov descent", [&](std::string& d) {
    // More accepted runs: the two-bus fixture from rest and random networks
    // with a step, each with the live coordinator.
    {
      ClosedLoopOptions opt;
      opt.sim.horizon = 60.0;
      closed_loops.push_back(closed_loop_experiment(fixtures::i1b(), {}, opt));
    }
    InstanceSpec spec;
    spec.buses = 5;
    spec.loads_per_bus = 3;
    spec.magnitude = {0.0, 0.2};
    spec.cost = {0.0, 0.1};
    spec.droop = {0.5, 1.5};
    spec.uncontrollable = {0.0, 0.5};
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto cfg = gen_instance(spec, seed);
      ClosedLoopOptions opt;
      opt.sim.horizon = 40.0;
      opt.start_at_equilibrium = true;
      closed_loops.push_back(
          closed_loop_experiment(cfg, {{0.5, seed % 5, cfg.buses[seed % 5].uncontrollable_load + 0.1}}, opt));
    }
    std::size_t bad = 0, samples = 0;
    double worst = -INFINITY;
    for (const auto& r : closed_loops) {
      bad += !r.descent.ok;
      samples += r.descent.samples;
      worst = std::max(worst, r.descent.max_increase);
    }
    // Spot checks on perturbations around each terminal equilibrium.
    std::mt19937_64 g(7);
    std::normal_distribution<double> n(0.0, 1.0);
    std::size_t spot_bad = 0, spots = 0;
    for (const auto& r : closed_loops) {
      const auto& cfg = r.trajectory.final_config;
      const auto xe = equilibrium_state(cfg, r.trajectory.final_sigma);
      if (lyapunov(cfg, xe, xe) != 0.0) ++spot_bad;
      for (int k = 0; k < 20; ++k) {
        ContinuousState x = xe;
        for (Eigen::Index i = 0; i < x.vector().size(); ++i) x.vector()[i] += 1e-3 * n(g);
        spot_bad += !(lyapunov(cfg, x, xe) > 0.0);
        ++spots;
      }
    }
    d = std::to_string(closed_loops.size()) + " runs, " + std::to_string(samples) + " samples after last event, " +
        std::to_string(bad) + " with an increase (max " + fmt("%.2e", worst) + "), " + std::to_string(spots) +
        " spot checks, " + std::to_string(spot_bad) + " failed";
    return bad == 0 && spot_bad == 0 && samples > 0;
  });

  criterion(8, "oracle cross-validation", [&](std::string& d) {
    std::size_t mismatch = 0, above = 0, kkt = 0;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 500; ++i) {
      InstanceSpec spec;
      spec.loads_per_bus = 1 + i % 4;
      spec.inverse_cost = i % 3 != 0;
      const auto cfg = gen_instance(spec, case_seed(kGapSeed + 8, i));
      const auto e = solve_hosc_exact(cfg, ExactMethod::enumerate);
      const auto b = solve_hosc_exact(cfg, ExactMethod::branch_and_bound);
      mismatch += e.sigma != b.sigma || std::abs(e.cost - b.cost) > kCompareTolerance * (1 + std::abs(e.cost));
      const auto r = solve_rhosc(cfg);
      above += r.cost > e.cost + kCompareTolerance * (1 + std::abs(e.cost));
      const auto k = kkt_residuals(cfg, r);
      const double m = std::max({k.balance, k.stationarity, k.membership});
      worst = std::max(worst, m);
      kkt += m > 1e-10;
    }
    d = "500 instances: " + std::to_string(mismatch) + " B&B/enumeration mismatches, " + std::to_string(above) +
        " relaxations above optimum, max KKT residual " + fmt("%.2e", worst);
    return mismatch == 0 && above == 0 && kkt == 0;
  });

  criterion(9, "hand-traced fixtures", [&](std::string& d) {
    const auto a = fixtures::i1a();
    const auto b = fixtures::i1b();
    const auto ea = solve_hosc_exact(a);
    const auto ca = run_coordinator(a);
    const double ca_cost = hosc_cost(a, ca.sigma_bar).cost;
    const auto eb = solve_hosc_exact(b);
    const auto cb = run_coordinator(b);
    const double cb_cost = hosc_cost(b, cb.sigma_bar).cost;
    const double rb = solve_rhosc(b).cost;
    auto near = [](double x, double y) { return std::abs(x - y) <= 1e-12; };
    d = "I1a exact " + fmt("%.6g", ea.cost) + ", coordinator " + fmt("%.6g", ca_cost) +
        (ca.guard_triggered ? " (guard)" : " (sandwich)") + "; I1b exact " + fmt("%.6g", eb.cost) + ", coordinator " +
        fmt("%.6g", cb_cost) + " in " + std::to_string(cb.iterations) + " iterations, relaxed " + fmt("%.6g", rb);
    return near(ea.cost, 0.45) && ca.guard_triggered && ca.sigma_bar == ea.sigma && near(ca_cost, 0.45) &&
           near(eb.cost, 0.55) && near(cb_cost, 0.5625) && cb.iterations == 2 && near(rb, 0.54);
  });

  criterion(10, "equilibrium constructor", [&](std::string& d) {
    std::size_t ok = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
      InstanceSpec spec;
      if (i % 4 == 0) spec.uncontrollable = {-0.05, 0.0};
      const auto cfg = gen_instance(spec, case_seed(kGapSeed + 10, i));
      const auto c = construct_certified_equilibrium(cfg);
      ok += check_epsilon_conditions(cfg, c.sigma, aggregates(cfg).largest_load).has_value();
    }
    d = std::to_string(ok) + "/100 constructed equilibria certified at theta = beta";
    return ok == 100;
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
