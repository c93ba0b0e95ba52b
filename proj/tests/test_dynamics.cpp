#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "osc/dynamics.hpp"
#include "osc/fixtures.hpp"
#include "osc/harness.hpp"
#include "osc/opt.hpp"

using namespace osc;

namespace {

ContinuousState random_state(const NetworkConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ContinuousState x = ContinuousState::zeros(cfg);
  for (Eigen::Index i = 0; i < x.vector().size(); ++i) x.vector()[i] = u(g);
  return x;
}

}  // namespace

TEST(VectorField, ZeroStateTwoBus) {
  const auto cfg = fixtures::i1b();
  const auto dx = vector_field(cfg, ContinuousState::zeros(cfg), {1});
  // M omega' = -pL - d at bus 1, tau pc' = pL + d
  EXPECT_DOUBLE_EQ(dx.omega()[0], -1.5);
  EXPECT_DOUBLE_EQ(dx.omega()[1], 0.0);
  EXPECT_DOUBLE_EQ(dx.pc()[0], 1.5);
  EXPECT_EQ(dx.eta()[0], 0.0);
  EXPECT_EQ(dx.psi()[0], 0.0);
}

TEST(VectorField, DimensionChecks) {
  const auto cfg = fixtures::i1b();
  EXPECT_THROW(vector_field(cfg, ContinuousState::zeros(fixtures::three_bus()), {1}), DimensionError);
  EXPECT_THROW(vector_field(cfg, ContinuousState::zeros(cfg), {1, 0}), DimensionError);
}

TEST(VectorField, FlowsTelescope) {
  // Line terms cancel in the totals: sum M omega' + sum tau pc' = -sum A omega.
  InstanceSpec spec;
  spec.buses = 7;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto cfg = gen_instance(spec, seed);
    const auto x = random_state(cfg, seed);
    const auto sigma = desired_states(cfg);
    const auto dx = vector_field(cfg, x, sigma);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t j = 0; j < cfg.buses.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      lhs += cfg.buses[j].inertia * dx.omega()[jj] + cfg.buses[j].command_time_constant * dx.pc()[jj];
      rhs -= cfg.buses[j].damping * x.omega()[jj];
    }
    EXPECT_NEAR(lhs, rhs, 1e-12);
    double eta_dot = 0.0;
    for (Eigen::Index e = 0; e < dx.eta().size(); ++e) eta_dot += dx.eta()[e];
    EXPECT_TRUE(std::isfinite(eta_dot));
  }
}

TEST(Rk4, ScalarDecay) {
  auto f = [](const Eigen::VectorXd& v) { return Eigen::VectorXd(-v); };
  Eigen::VectorXd x(1);
  x << 1.0;
  const Eigen::VectorXd y = rk4_step(f, x, 0.1);
  EXPECT_NEAR(y[0], std::exp(-0.1), 1e-7);
  EXPECT_NEAR(y[0], 1 - 0.1 + 0.005 - 0.1 * 0.1 * 0.1 / 6 + 0.1 * 0.1 * 0.1 * 0.1 / 24, 1e-15);
}

TEST(Rk4, FourthOrderConvergence) {
  const auto cfg = fixtures::three_bus();
  const SwitchVector s = desired_states(cfg);
  auto run = [&](double h) {
    ContinuousState x = ContinuousState::zeros(cfg);
    const int steps = static_cast<int>(std::lround(1.0 / h));
    for (int i = 0; i < steps; ++i) x = rk4_step(cfg, x, s, h);
    return x.vector();
  };
  const Eigen::VectorXd ref = run(0.1 / 64);
  const double e1 = (run(0.1) - ref).cwiseAbs().maxCoeff();
  const double e2 = (run(0.05) - ref).cwiseAbs().maxCoeff();
  const double ratio = e1 / e2;
  EXPECT_GT(ratio, 13.0);
  EXPECT_LT(ratio, 19.0);
  EXPECT_THROW(rk4_step(cfg, ContinuousState::zeros(cfg), s, 0.0), std::invalid_argument);
}

TEST(Lyapunov, ZeroAtEquilibriumPositiveElsewhere) {
  InstanceSpec spec;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto cfg = gen_instance(spec, seed);
    const auto xe = equilibrium_state(cfg, desired_states(cfg));
    EXPECT_EQ(lyapunov(cfg, xe, xe), 0.0);
    const auto x = random_state(cfg, seed + 100);
    EXPECT_GT(lyapunov(cfg, x, xe), 0.0);
  }
}

TEST(Lyapunov, NonIncreasingAlongFlow) {
  // dV/dt = -sum A omega^2 - sum (pM - pM*)^2 / kappa <= 0 for fixed sigma.
  const auto cfg = fixtures::three_bus();
  const auto s = desired_states(cfg);
  const auto xe = equilibrium_state(cfg, s);
  ContinuousState x = random_state(cfg, 3);
  double v = lyapunov(cfg, x, xe);
  for (int i = 0; i < 5000; ++i) {
    x = rk4_step(cfg, x, s, 1e-3);
    const double vn = lyapunov(cfg, x, xe);
    ASSERT_LE(vn, v + 1e-12) << i;
    v = vn;
  }
}

TEST(Simulate, EquilibriumIsStationary) {
  const auto cfg = fixtures::three_bus();
  const auto s = desired_states(cfg);
  const auto xe = equilibrium_state(cfg, s);
  SimulationOptions opt;
  opt.horizon = 5.0;
  const auto traj = simulate(cfg, xe, opt);
  EXPECT_LE((traj.final_state().vector() - xe.vector()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Simulate, SamplesLandOnGrid) {
  SimulationOptions opt;
  opt.horizon = 1.0;
  opt.sample_period = 0.25;
  opt.step = 0.1;
  const auto traj = simulate(fixtures::i1b(), opt);
  ASSERT_EQ(traj.times.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(traj.times[i], 0.25 * static_cast<double>(i), 1e-12);
  EXPECT_EQ(traj.times.back(), 1.0);
}

TEST(Simulate, ScheduleSwitchesApplied) {
  SimulationOptions opt;
  opt.horizon = 2.0;
  opt.control = SwitchSchedule{{{0.5, {0}}, {1.5, {1}}}};
  const auto traj = simulate(fixtures::i1b(), opt);
  ASSERT_EQ(traj.switches.size(), 2u);
  EXPECT_NEAR(traj.switches[0].time, 0.5, 1e-12);
  EXPECT_EQ(traj.switches[0].sigma, SwitchVector{0});
  EXPECT_EQ(traj.final_sigma, SwitchVector{1});
  EXPECT_DOUBLE_EQ(traj.last_switch_time(), traj.switches[1].time);
}

TEST(Simulate, RejectsBadOptions) {
  const auto cfg = fixtures::i1b();
  SimulationOptions opt;
  opt.horizon = 0.0;
  EXPECT_THROW(simulate(cfg, opt), std::invalid_argument);
  opt.horizon = 1.0;
  opt.disturbances = {{2.0, 0, 0.1}};
  EXPECT_THROW(simulate(cfg, opt), std::invalid_argument);
  opt.disturbances = {{0.5, 5, 0.1}};
  EXPECT_THROW(simulate(cfg, opt), std::invalid_argument);
  opt.disturbances.clear();
  opt.control = SwitchSchedule{{{0.5, {0, 1}}}};
  EXPECT_THROW(simulate(cfg, opt), DimensionError);
  opt.control = LiveCoordinator{{}, 0.0};
  EXPECT_THROW(simulate(cfg, opt), std::invalid_argument);
  EXPECT_THROW(simulate(fixtures::broken(), SimulationOptions{}), ConfigError);
}

TEST(Simulate, TwoBusSettles) {
  SimulationOptions opt;
  opt.horizon = 120.0;
  opt.sample_period = 1.0;
  const auto traj = simulate(fixtures::i1b(), opt);
  const auto at60 = traj.rows[60];
  EXPECT_NEAR(traj.times[60], 60.0, 1e-9);
  EXPECT_LT(at60.omega().cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_EQ(traj.final_sigma, SwitchVector{1});
  EXPECT_LT(traj.final_state().pc_spread(), 1e-6);
  const auto xe = equilibrium_state(fixtures::i1b(), {1});
  EXPECT_LT((traj.final_state().vector() - xe.vector()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Simulate, LiveCoordinatorReachesSigmaBar) {
  SimulationOptions opt;
  opt.horizon = 60.0;
  opt.control = LiveCoordinator{};
  const auto traj = simulate(fixtures::i1b(), opt);
  ASSERT_EQ(traj.coordinator_runs.size(), 1u);
  EXPECT_TRUE(traj.coordinator_runs[0].terminated);
  EXPECT_EQ(traj.coordinator_runs[0].iterations, 2u);
  EXPECT_EQ(traj.final_sigma, SwitchVector{1});
  ASSERT_EQ(traj.switches.size(), 2u);
  EXPECT_NEAR(traj.switches[0].time, 0.3, 1e-12);
  EXPECT_NEAR(traj.switches[1].time, 0.6, 1e-12);
}

TEST(ClosedLoop, ThreeBusStep) {
  const auto cfg = fixtures::three_bus();
  ClosedLoopOptions opt;
  opt.sim.horizon = 120.0;
  opt.sim.sample_period = 0.5;
  opt.start_at_equilibrium = true;
  const auto rep = closed_loop_experiment(cfg, {{1.0, 1, cfg.buses[1].uncontrollable_load + 0.2}}, opt);
  EXPECT_LT(rep.terminal_omega, 1e-4);
  EXPECT_LT(rep.terminal_spread, 1e-6);
  EXPECT_TRUE(rep.descent.ok) << rep.descent.max_increase;
  EXPECT_GT(rep.descent.samples, 0u);
  EXPECT_TRUE(rep.within_bound);
  ASSERT_EQ(rep.trajectory.coordinator_runs.size(), 2u);
  EXPECT_TRUE(rep.trajectory.coordinator_runs[1].terminated);
  EXPECT_NEAR(rep.trajectory.final_config.buses[1].uncontrollable_load, 0.5, 1e-15);
}

TEST(Descent, FlagsIncrease) {
  Trajectory t;
  t.times = {0, 1, 2, 3};
  t.lyapunov = {3, 2, 2.5, 1};
  auto r = lyapunov_descent(t, 0.0);
  EXPECT_FALSE(r.ok);
  EXPECT_DOUBLE_EQ(r.max_increase, 0.5);
  r = lyapunov_descent(t, 2.0);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.samples, 1u);
  t.lyapunov.pop_back();
  EXPECT_THROW(lyapunov_descent(t, 0.0), std::invalid_argument);
}
