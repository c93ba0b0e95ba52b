#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "osc/dynamics.hpp"
#include "osc/fixtures.hpp"
#include "osc/harness.hpp"
#include "osc/opt.hpp"

using namespace osc;

TEST(EquilibriumPc, ReferenceValues) {
  EXPECT_DOUBLE_EQ(equilibrium_pc(fixtures::i1a(), {1}), 0.75);
  EXPECT_DOUBLE_EQ(equilibrium_pc(fixtures::i1a(), {0}), 0.5);
  EXPECT_DOUBLE_EQ(equilibrium_pc(fixtures::i0(), {}), 0.0);
  EXPECT_THROW(equilibrium_pc(fixtures::i1a(), {1, 0}), DimensionError);
}

TEST(EquilibriumState, TwoBusImportsIntoBusOne) {
  const auto x = equilibrium_state(fixtures::i1b(), {1});
  EXPECT_EQ(x.omega().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(x.pc()[0], 0.75);
  EXPECT_DOUBLE_EQ(x.pc()[1], 0.75);
  EXPECT_DOUBLE_EQ(x.pm()[0], 0.75);
  EXPECT_DOUBLE_EQ(x.pm()[1], 0.75);
  EXPECT_NEAR(x.eta()[0], -0.75, 1e-15);
}

TEST(EquilibriumState, NoLoadsIsOrigin) {
  const auto x = equilibrium_state(fixtures::i0(), {});
  EXPECT_EQ(x.vector().cwiseAbs().maxCoeff(), 0.0);
}

TEST(EquilibriumState, IsAFixedPointForEverySigma) {
  const auto cfg = fixtures::three_bus();
  for (unsigned mask = 0; mask < 32; ++mask) {
    SwitchVector s(5);
    for (int i = 0; i < 5; ++i) s[i] = (mask >> i) & 1U;
    const auto x = equilibrium_state(cfg, s);
    EXPECT_LE(vector_field(cfg, x, s).vector().cwiseAbs().maxCoeff(), 1e-10) << mask;
  }
  InstanceSpec spec;
  spec.buses = 6;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto g = gen_instance(spec, seed);
    const auto s = desired_states(g);
    EXPECT_LE(vector_field(g, equilibrium_state(g, s), s).vector().cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(EquilibriumState, PsiIsMinimumNormOnCycles) {
  // Triangle comm graph: psi must be orthogonal to the cycle space.
  auto cfg = fixtures::three_bus();
  cfg.comm_lines.push_back({0, 2, 0.7});
  const SwitchVector s = desired_states(cfg);
  const auto x = equilibrium_state(cfg, s);
  EXPECT_LE(vector_field(cfg, x, s).vector().cwiseAbs().maxCoeff(), 1e-10);
  // cycle 1->2->3 then back 3->1 along line (1,3) reversed
  const double circulation = x.psi()[0] + x.psi()[1] - x.psi()[2];
  EXPECT_NEAR(circulation, 0.0, 1e-12);
}

TEST(HoscCost, ReferenceValues) {
  EXPECT_NEAR(hosc_cost(fixtures::i1a(), {0}).cost, 0.45, 1e-15);
  EXPECT_NEAR(hosc_cost(fixtures::i1a(), {1}).cost, 0.5625, 1e-15);
  EXPECT_NEAR(hosc_cost(fixtures::i1b(), {0}).cost, 0.55, 1e-15);
  EXPECT_EQ(hosc_cost(fixtures::i0(), {}).cost, 0.0);
}

TEST(HoscCost, GenerationSplitBalancesAndMatchesCost) {
  const auto cfg = fixtures::three_bus();
  const SwitchVector s{1, 0, 1, 1, 0};
  const auto c = hosc_cost(cfg, s);
  double supply = 0.0;
  Eigen::VectorXd p(3);
  for (int j = 0; j < 3; ++j) supply += (p[j] = c.generation[j]);
  EXPECT_NEAR(supply, total_demand(cfg, s), 1e-12);
  EXPECT_NEAR(allocation_cost(cfg, p, s), c.cost, 1e-12);
  // Marginal costs equalize: q_j p_j is common.
  for (int j = 1; j < 3; ++j)
    EXPECT_NEAR(cfg.buses[j].cost_coefficient * p[j], cfg.buses[0].cost_coefficient * p[0], 1e-12);
}

TEST(Exact, ReferenceOptima) {
  for (auto m : {ExactMethod::enumerate, ExactMethod::branch_and_bound}) {
    const auto a = solve_hosc_exact(fixtures::i1a(), m);
    EXPECT_EQ(a.sigma, SwitchVector{0});
    EXPECT_NEAR(a.cost, 0.45, 1e-15);
    const auto b = solve_hosc_exact(fixtures::i1b(), m);
    EXPECT_EQ(b.sigma, SwitchVector{0});
    EXPECT_NEAR(b.cost, 0.55, 1e-15);
    const auto z = solve_hosc_exact(fixtures::i0(), m);
    EXPECT_TRUE(z.sigma.empty());
    EXPECT_EQ(z.cost, 0.0);
  }
  EXPECT_EQ(solve_hosc_exact(fixtures::i1a()).kind, CertificateKind::exact_enumeration);
  EXPECT_EQ(solve_hosc_exact(fixtures::i1a(), ExactMethod::branch_and_bound).kind,
            CertificateKind::branch_and_bound);
}

TEST(Exact, EnumerationCap) {
  InstanceSpec spec;
  spec.buses = 5;
  spec.loads_per_bus = 5;
  const auto cfg = gen_instance(spec, 3);
  EXPECT_THROW(solve_hosc_exact(cfg, ExactMethod::enumerate), OracleCapError);
  EXPECT_NO_THROW(solve_hosc_exact(cfg, ExactMethod::branch_and_bound));
}

TEST(Exact, BranchAndBoundMatchesEnumeration) {
  InstanceSpec spec;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    spec.loads_per_bus = 1 + seed % 4;
    const auto cfg = gen_instance(spec, seed);
    const auto e = solve_hosc_exact(cfg, ExactMethod::enumerate);
    const auto b = solve_hosc_exact(cfg, ExactMethod::branch_and_bound);
    EXPECT_EQ(e.sigma, b.sigma) << "seed " << seed;
    EXPECT_EQ(e.cost, b.cost) << "seed " << seed;
  }
}

TEST(Exact, SolutionInvariantsHold) {
  InstanceSpec spec;
  spec.inverse_cost = false;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto cfg = gen_instance(spec, seed);
    const auto s = solve_hosc_exact(cfg);
    double supply = 0.0;
    Eigen::VectorXd p(static_cast<Eigen::Index>(cfg.buses.size()));
    for (std::size_t j = 0; j < cfg.buses.size(); ++j) supply += (p[static_cast<Eigen::Index>(j)] = s.generation[j]);
    EXPECT_NEAR(supply, total_demand(cfg, s.sigma), 1e-12);
    EXPECT_NEAR(allocation_cost(cfg, p, s.sigma), s.cost, 1e-12);
  }
}

TEST(Exact, NegativeDemandSideForcesLoadsOn) {
  // Generation surplus: loads desired off are switched on when the price is
  // below -gamma.
  auto cfg = fixtures::i1(0.1);
  cfg.buses[0].uncontrollable_load = -2.0;
  cfg.loads[0].desired = 0;
  const auto e = solve_hosc_exact(cfg);
  EXPECT_EQ(e.sigma, SwitchVector{1});
  // (-2 + 0.5)^2 / 4 + 0.1 = 0.6625 < (-2)^2 / 4 = 1
  EXPECT_NEAR(e.cost, 0.6625, 1e-15);
  const auto r = solve_rhosc(cfg);
  EXPECT_LT(r.multiplier, 0.0);
  EXPECT_DOUBLE_EQ(r.sigma[0], 1.0);
  EXPECT_LE(r.cost, e.cost + 1e-15);
  const auto w = check_epsilon_conditions(cfg, {1}, aggregates(cfg).largest_load);
  ASSERT_TRUE(w.has_value());
  EXPECT_LE(w->zeta, -0.2);
}

TEST(Relaxed, ReferenceValues) {
  const auto b = solve_rhosc(fixtures::i1b());
  EXPECT_NEAR(b.multiplier, 0.6, 1e-15);
  EXPECT_NEAR(b.sigma[0], 0.4, 1e-12);
  EXPECT_NEAR(b.cost, 0.54, 1e-12);
  const auto a = solve_rhosc(fixtures::i1a());
  EXPECT_NEAR(a.multiplier, 0.5, 1e-15);
  EXPECT_EQ(a.sigma[0], 0.0);
  EXPECT_NEAR(a.cost, 0.45, 1e-15);
  const auto z = solve_rhosc(fixtures::i0());
  EXPECT_EQ(z.multiplier, 0.0);
  EXPECT_EQ(z.cost, 0.0);
}

TEST(Relaxed, KktAndLowerBound) {
  InstanceSpec spec;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    spec.inverse_cost = seed % 2 == 0;
    spec.uncontrollable = seed % 3 == 0 ? Range{-0.05, 0.0} : Range{0.0, 0.02};
    const auto cfg = gen_instance(spec, seed);
    const auto r = solve_rhosc(cfg);
    const auto k = kkt_residuals(cfg, r);
    EXPECT_LE(k.balance, 1e-12) << seed;
    EXPECT_LE(k.stationarity, 1e-10) << seed;
    EXPECT_LE(k.membership, 1e-10) << seed;
    EXPECT_LE(r.cost, solve_hosc_exact(cfg).cost + 1e-12) << seed;
    for (double s : r.sigma) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
  }
}

TEST(Relaxed, DuplicateBreakpointsFillInOrder) {
  // Two identical loads at the active breakpoint: only one is split.
  auto cfg = fixtures::i1b();
  cfg.loads.push_back(cfg.loads[0]);
  // demand 1 + s1*0.5 + s2*0.5 = 2*0.6 -> total fractional demand 0.2
  const auto r = solve_rhosc(cfg);
  EXPECT_NEAR(r.multiplier, 0.6, 1e-15);
  EXPECT_NEAR(r.sigma[0] * 0.5 + r.sigma[1] * 0.5, 0.2, 1e-12);
  const double lo = std::min(r.sigma[0], r.sigma[1]), hi = std::max(r.sigma[0], r.sigma[1]);
  EXPECT_EQ(lo, 0.0);
  EXPECT_NEAR(hi, 0.4, 1e-12);
}

TEST(Certificate, ReferenceWitnesses) {
  const double delta = 1e-5;
  const auto b = check_epsilon_conditions(fixtures::i1b(), {1}, 0.5 + delta);
  ASSERT_TRUE(b.has_value());
  EXPECT_GE(b->zeta, 0.5 - delta / 2 - 1e-15);
  EXPECT_LT(b->zeta, 0.6);
  EXPECT_NEAR(b->lower, 0.5 - delta / 2, 1e-15);
  EXPECT_NEAR(b->upper, 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(b->equilibrium_pc, 0.75);

  EXPECT_FALSE(check_epsilon_conditions(fixtures::i1b(), {0}, 0.5 + delta).has_value());

  const auto a = check_epsilon_conditions(fixtures::i1a(), {0}, 0.5 + delta);
  ASSERT_TRUE(a.has_value());
  EXPECT_NEAR(a->zeta, 0.45, 1e-15);
  EXPECT_GE(a->zeta, a->lower);
  EXPECT_LE(a->zeta, a->upper);
  EXPECT_THROW(check_epsilon_conditions(fixtures::i1a(), {0}, -1.0), std::invalid_argument);
}

TEST(Certificate, WitnessImpliesBound) {
  InstanceSpec spec;
  std::size_t witnessed = 0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const auto cfg = gen_instance(spec, seed);
    const auto agg = aggregates(cfg);
    const double opt = solve_hosc_exact(cfg).cost;
    const double theta = agg.largest_load;
    // Probe sigma = rho and a few flips of it.
    SwitchVector s = desired_states(cfg);
    for (std::size_t flip = 0; flip <= cfg.loads.size(); ++flip) {
      SwitchVector t = s;
      if (flip < t.size()) t[flip] ^= 1U;
      if (check_epsilon_conditions(cfg, t, theta)) {
        ++witnessed;
        EXPECT_LE(hosc_cost(cfg, t).cost - opt, epsilon_bound(agg.total_droop, theta) + 1e-12) << seed;
      }
    }
  }
  EXPECT_GT(witnessed, 0u);
}

TEST(ConstructedEquilibrium, ReferenceTraces) {
  const auto a = construct_certified_equilibrium(fixtures::i1a());
  EXPECT_EQ(a.sigma, SwitchVector{0});
  EXPECT_NEAR(a.zeta, 0.4, 1e-15);
  const auto b = construct_certified_equilibrium(fixtures::i1b());
  EXPECT_EQ(b.sigma, SwitchVector{1});
  EXPECT_NEAR(b.zeta, 0.5, 1e-15);
  const auto z = construct_certified_equilibrium(fixtures::i0());
  EXPECT_TRUE(z.sigma.empty());
  EXPECT_EQ(z.zeta, 0.0);
}

TEST(ConstructedEquilibrium, OutputCertifiesAtBeta) {
  InstanceSpec spec;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    spec.uncontrollable = seed % 4 == 0 ? Range{-0.08, -0.02} : Range{0.0, 0.02};
    const auto cfg = gen_instance(spec, seed);
    const auto c = construct_certified_equilibrium(cfg);
    const auto agg = aggregates(cfg);
    const double pc = equilibrium_pc(cfg, c.sigma);
    EXPECT_LE(pc - agg.largest_load / agg.total_droop, c.zeta + 1e-12) << seed;
    EXPECT_LE(c.zeta, pc + 1e-12) << seed;
    EXPECT_TRUE(check_epsilon_conditions(cfg, c.sigma, agg.largest_load).has_value()) << seed;
  }
}

TEST(EpsilonBound, ReferenceValues) {
  EXPECT_DOUBLE_EQ(epsilon_bound(fixtures::i1a(), 0.5), 0.1875);
  EXPECT_EQ(epsilon_bound(fixtures::i1a(), 0.0), 0.0);
  EXPECT_NEAR(epsilon_bound(10.0, 0.008), 9.6e-6, 1e-20);
}
