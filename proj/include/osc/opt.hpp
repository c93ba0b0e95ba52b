#pragma once

// Optimization oracles and certificates for the hybrid supply problem:
//
//   min  sum_j q_j/2 (p^M_j)^2 + sum_l c_l [sigma_l != rho_l]
//   s.t. sum_j p^M_j = ell + sum_l d-bar_l sigma_l,   sigma in {0,1}^L
//
// together with its convex relaxation (sigma in [0,1], mismatch cost linear in
// |sigma - rho|), equilibrium construction for the closed loop, and the
// epsilon-optimality certificate that links the two.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "osc/model.hpp"
#include "osc/state.hpp"

namespace osc {

class OracleCapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CertificateKind { exact_enumeration, branch_and_bound, relaxed, algorithm };

inline const char* to_string(CertificateKind k) {
  switch (k) {
    case CertificateKind::exact_enumeration: return "exact-enumeration";
    case CertificateKind::branch_and_bound: return "branch-and-bound";
    case CertificateKind::relaxed: return "relaxed";
    case CertificateKind::algorithm: return "algorithm";
  }
  return "unknown";
}

struct OscSolution {
  SwitchVector sigma;
  std::vector<double> generation;  // p^M per bus
  double cost = 0.0;
  CertificateKind kind = CertificateKind::exact_enumeration;
};

struct RelaxedSolution {
  double multiplier = 0.0;          // lambda
  std::vector<double> sigma;        // fractional load states in [0,1]
  std::vector<double> generation;   // lambda / q_j
  double cost = 0.0;
};

struct EpsilonWitness {
  double zeta = 0.0;
  double theta = 0.0;
  SwitchVector sigma;
  double equilibrium_pc = 0.0;
  double lower = 0.0;  // feasible zeta interval [lower, upper]
  double upper = 0.0;
};

/// Constructed equilibrium: switch vector plus its zeta.
struct ConstructedEquilibrium {
  SwitchVector sigma;
  double zeta = 0.0;
};

enum class ExactMethod { enumerate, branch_and_bound };

inline constexpr std::size_t kEnumerationCap = 24;
inline constexpr double kCompareTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Equilibria

/// Total demand ell + d-bar^T sigma, summed in bus then load index order.
inline double total_demand(const NetworkConfig& cfg, const SwitchVector& sigma) {
  double d = 0.0;
  for (const auto& b : cfg.buses) d += b.uncontrollable_load;
  for (std::size_t i = 0; i < cfg.loads.size(); ++i)
    if (sigma[i]) d += cfg.loads[i].magnitude;
  return d;
}

/// Common power command at equilibrium: (ell + d-bar^T sigma) / K.
inline double equilibrium_pc(const NetworkConfig& cfg, const SwitchVector& sigma) {
  require_switches(cfg, sigma);
  double droop = 0.0;
  for (const auto& b : cfg.buses) droop += b.droop;
  return total_demand(cfg, sigma) / droop;
}

namespace detail {

// Solves L x = rhs for a weighted graph Laplacian with x[0] = 0.
template <typename Edges, typename Weight>
Eigen::VectorXd grounded_laplacian_solve(std::size_t n, const Edges& edges, Weight weight,
                                         const Eigen::VectorXd& rhs) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (n <= 1) return x;
  const auto m = static_cast<Eigen::Index>(n - 1);
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(m, m);
  for (const auto& e : edges) {
    const double w = weight(e);
    const auto a = static_cast<Eigen::Index>(e.tail) - 1;
    const auto b = static_cast<Eigen::Index>(e.head) - 1;
    if (a >= 0) lap(a, a) += w;
    if (b >= 0) lap(b, b) += w;
    if (a >= 0 && b >= 0) {
      lap(a, b) -= w;
      lap(b, a) -= w;
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(lap);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw std::logic_error("reduced Laplacian is singular; network is not connected");
  x.tail(m) = ldlt.solve(rhs.tail(m));
  if (!x.allFinite()) throw std::logic_error("reduced Laplacian solve produced non-finite values");
  return x;
}

}  // namespace detail

/// Equilibrium x* of the closed loop for fixed sigma: omega = 0, uniform p^c,
/// p^M_j = kappa_j p^c, eta from bus-angle potentials (bus 1 reference), and
/// the minimum-norm psi balancing the power-command equations.
inline ContinuousState equilibrium_state(const NetworkConfig& cfg, const SwitchVector& sigma) {
  require_switches(cfg, sigma);
  const std::size_t n = cfg.buses.size();
  const double price = equilibrium_pc(cfg, sigma);
  const Eigen::VectorXd demand = bus_switched_demand(cfg, sigma);

  ContinuousState x = ContinuousState::zeros(cfg);
  Eigen::VectorXd injection(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    x.pc()[jj] = price;
    x.pm()[jj] = cfg.buses[j].droop * price;
    injection[jj] = x.pm()[jj] - cfg.buses[j].uncontrollable_load - demand[jj];
  }

  // Line flows: (L_B theta)_j = injection_j, eta_ij = theta_i - theta_j.
  const Eigen::VectorXd theta = detail::grounded_laplacian_solve(
      n, cfg.power_lines, [](const PowerLine& e) { return e.susceptance; }, injection);
  for (std::size_t i = 0; i < cfg.power_lines.size(); ++i) {
    const auto& e = cfg.power_lines[i];
    x.eta()[static_cast<Eigen::Index>(i)] =
        theta[static_cast<Eigen::Index>(e.tail)] - theta[static_cast<Eigen::Index>(e.head)];
  }

  // Command integrators: incoming minus outgoing psi must equal the injection,
  // so psi = phi_tail - phi_head with L phi = -injection.
  const Eigen::VectorXd phi =
      detail::grounded_laplacian_solve(n, cfg.comm_lines, [](const CommLine&) { return 1.0; }, -injection);
  for (std::size_t i = 0; i < cfg.comm_lines.size(); ++i) {
    const auto& e = cfg.comm_lines[i];
    x.psi()[static_cast<Eigen::Index>(i)] =
        phi[static_cast<Eigen::Index>(e.tail)] - phi[static_cast<Eigen::Index>(e.head)];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Costs

struct HoscCost {
  double cost = 0.0;
  std::vector<double> generation;
};

inline double mismatch_cost(const NetworkConfig& cfg, const SwitchVector& sigma) {
  double c = 0.0;
  for (std::size_t i = 0; i < cfg.loads.size(); ++i)
    if (sigma[i] != cfg.loads[i].desired) c += cfg.loads[i].mismatch_cost;
  return c;
}

/// Cost of sigma with the generation split chosen optimally:
/// p^M_j = D / (q_j Q), cost = D^2 / (2Q) + mismatch.
inline HoscCost hosc_cost(const NetworkConfig& cfg, const SwitchVector& sigma) {
  require_switches(cfg, sigma);
  const double demand = total_demand(cfg, sigma);
  double q_inv = 0.0;
  for (const auto& b : cfg.buses) q_inv += 1.0 / b.cost_coefficient;
  HoscCost out;
  out.generation.reserve(cfg.buses.size());
  for (const auto& b : cfg.buses) out.generation.push_back(demand / (b.cost_coefficient * q_inv));
  out.cost = demand * demand / (2.0 * q_inv) + mismatch_cost(cfg, sigma);
  return out;
}

/// Cost of an arbitrary allocation (p^M, sigma), balance not enforced.
inline double allocation_cost(const NetworkConfig& cfg, const Eigen::VectorXd& generation,
                              const SwitchVector& sigma) {
  double c = mismatch_cost(cfg, sigma);
  for (std::size_t j = 0; j < cfg.buses.size(); ++j) {
    const double p = generation[static_cast<Eigen::Index>(j)];
    c += 0.5 * cfg.buses[j].cost_coefficient * p * p;
  }
  return c;
}

inline double epsilon_bound(double total_droop, double theta) {
  return 3.0 * theta * theta / (2.0 * total_droop);
}

inline double epsilon_bound(const NetworkConfig& cfg, double theta) {
  return epsilon_bound(aggregates(cfg).total_droop, theta);
}

// ---------------------------------------------------------------------------
// Relaxation

namespace detail {

struct RelaxItem {
  std::size_t index;   // position in the caller's load vector
  double magnitude;
  double cost;
  std::uint8_t desired;
  double breakpoint;   // gamma if desired on, -gamma if desired off
};

inline double breakpoint_of(const OnOffLoad& l) {
  return l.desired ? l.unit_cost() : -l.unit_cost();
}

struct RelaxOutcome {
  double multiplier = 0.0;
  double demand = 0.0;  // ell + sum d-bar sigma~ over the supplied items
};

// Water-filling over the breakpoints of the relaxed demand curve. Items must be
// sorted by breakpoint. Each item's demand is d-bar for lambda below its
// breakpoint and 0 above it; at the breakpoint any fraction is admissible.
// Writes sigma~ into `frac[item.index]`.
inline RelaxOutcome relax(double q_inv, double base_demand, const std::vector<RelaxItem>& items,
                          std::vector<double>& frac) {
  double on_demand = base_demand;
  for (const auto& it : items) on_demand += it.magnitude;

  std::size_t g = 0;
  while (g < items.size()) {
    std::size_t end = g;
    double group = 0.0;
    while (end < items.size() && items[end].breakpoint == items[g].breakpoint) group += items[end++].magnitude;
    const double b = items[g].breakpoint;

    if (on_demand / q_inv <= b) {
      for (std::size_t i = g; i < items.size(); ++i) frac[items[i].index] = 1.0;
      return {on_demand / q_inv, on_demand};
    }
    const double rest = on_demand - group;
    double need = q_inv * b - rest;
    if (need >= 0.0) {
      for (std::size_t i = g; i < end; ++i) {
        const double take = std::clamp(need, 0.0, items[i].magnitude);
        frac[items[i].index] = take / items[i].magnitude;
        need -= take;
      }
      for (std::size_t i = end; i < items.size(); ++i) frac[items[i].index] = 1.0;
      return {b, 0.0};
    }
    for (std::size_t i = g; i < end; ++i) frac[items[i].index] = 0.0;
    on_demand = rest;
    g = end;
  }
  return {on_demand / q_inv, on_demand};
}

inline std::vector<RelaxItem> relax_items(const NetworkConfig& cfg) {
  std::vector<RelaxItem> items;
  items.reserve(cfg.loads.size());
  for (std::size_t i = 0; i < cfg.loads.size(); ++i) {
    const auto& l = cfg.loads[i];
    items.push_back({i, l.magnitude, l.mismatch_cost, l.desired, breakpoint_of(l)});
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const RelaxItem& a, const RelaxItem& b) { return a.breakpoint < b.breakpoint; });
  return items;
}

inline double relaxed_mismatch(const RelaxItem& it, double frac) {
  return it.desired ? it.cost * (1.0 - frac) : it.cost * frac;
}

}  // namespace detail

/// Global minimum of the relaxed problem via its KKT conditions.
inline RelaxedSolution solve_rhosc(const NetworkConfig& cfg) {
  const auto agg = aggregates(cfg);
  const auto items = detail::relax_items(cfg);
  RelaxedSolution sol;
  sol.sigma.assign(cfg.loads.size(), 0.0);
  const auto out = detail::relax(agg.inverse_cost_sum, agg.total_uncontrollable, items, sol.sigma);
  sol.multiplier = out.multiplier;

  double demand = agg.total_uncontrollable;
  double mismatch = 0.0;
  for (const auto& it : items) {
    demand += it.magnitude * sol.sigma[it.index];
    mismatch += detail::relaxed_mismatch(it, sol.sigma[it.index]);
  }
  for (const auto& b : cfg.buses) sol.generation.push_back(sol.multiplier / b.cost_coefficient);
  sol.cost = demand * demand / (2.0 * agg.inverse_cost_sum) + mismatch;
  return sol;
}

struct KktResiduals {
  double balance = 0.0;       // |sum p^M - ell - d-bar^T sigma~|
  double stationarity = 0.0;  // max_j |lambda - q_j p^M_j|
  double membership = 0.0;    // max_l distance of sigma~_l from its admissible set at lambda
};

/// Residuals of the relaxed KKT system; `tol` decides when lambda sits on a
/// breakpoint.
inline KktResiduals kkt_residuals(const NetworkConfig& cfg, const RelaxedSolution& sol, double tol = 1e-10) {
  KktResiduals r;
  double supply = 0.0;
  for (std::size_t j = 0; j < cfg.buses.size(); ++j) {
    supply += sol.generation[j];
    r.stationarity = std::max(r.stationarity, std::abs(sol.multiplier - cfg.buses[j].cost_coefficient * sol.generation[j]));
  }
  double demand = 0.0;
  for (const auto& b : cfg.buses) demand += b.uncontrollable_load;
  const double lam = sol.multiplier;
  for (std::size_t i = 0; i < cfg.loads.size(); ++i) {
    const auto& l = cfg.loads[i];
    const double s = sol.sigma[i];
    demand += l.magnitude * s;
    const double g = l.unit_cost();
    const double rho = l.desired;
    double lo = 0.0, hi = 1.0;
    if (std::abs(lam - g) <= tol && std::abs(lam + g) <= tol) {
      lo = 0.0, hi = 1.0;
    } else if (std::abs(lam - g) <= tol) {
      lo = 0.0, hi = rho;
    } else if (std::abs(lam + g) <= tol) {
      lo = rho, hi = 1.0;
    } else if (lam > g) {
      lo = hi = 0.0;
    } else if (lam < -g) {
      lo = hi = 1.0;
    } else {
      lo = hi = rho;
    }
    const double dist = s < lo ? lo - s : (s > hi ? s - hi : 0.0);
    r.membership = std::max(r.membership, dist);
  }
  r.balance = std::abs(supply - demand);
  return r;
}

// ---------------------------------------------------------------------------
// Exact solvers

namespace detail {

// Strict (cost, lexicographic sigma) order used by both exact methods.
inline bool better(double cost, const SwitchVector& sigma, double best_cost, const SwitchVector& best) {
  if (cost != best_cost) return cost < best_cost;
  return std::lexicographical_compare(sigma.begin(), sigma.end(), best.begin(), best.end());
}

inline double canonical_cost(const NetworkConfig& cfg, const SwitchVector& sigma, double q_inv) {
  const double d = total_demand(cfg, sigma);
  return d * d / (2.0 * q_inv) + mismatch_cost(cfg, sigma);
}

class BranchAndBound {
 public:
  explicit BranchAndBound(const NetworkConfig& cfg) : cfg_(cfg), agg_(aggregates(cfg)), order_(relax_items(cfg)) {
    fixed_.assign(cfg.loads.size(), -1);
    frac_.assign(cfg.loads.size(), 0.0);
    best_cost_ = std::numeric_limits<double>::infinity();
  }

  SwitchVector solve() {
    descend();
    return best_;
  }

  std::size_t nodes() const { return nodes_; }

 private:
  void descend() {
    ++nodes_;
    double base = agg_.total_uncontrollable;
    double fixed_mismatch = 0.0;
    std::vector<RelaxItem> free;
    free.reserve(order_.size());
    for (const auto& it : order_) {
      const int f = fixed_[it.index];
      if (f < 0) {
        free.push_back(it);
        continue;
      }
      if (f == 1) base += it.magnitude;
      if (f != it.desired) fixed_mismatch += it.cost;
      frac_[it.index] = f;
    }
    relax(agg_.inverse_cost_sum, base, free, frac_);

    double demand = base;
    double mismatch = fixed_mismatch;
    std::size_t fractional = free.size();
    for (std::size_t k = 0; k < free.size(); ++k) {
      const double s = frac_[free[k].index];
      demand += free[k].magnitude * s;
      mismatch += relaxed_mismatch(free[k], s);
      if (fractional == free.size() && s != 0.0 && s != 1.0) fractional = k;
    }
    const double bound = demand * demand / (2.0 * agg_.inverse_cost_sum) + mismatch;
    if (bound > best_cost_ + kCompareTolerance * (1.0 + std::abs(best_cost_))) return;

    if (fractional == free.size()) {
      SwitchVector sigma(cfg_.loads.size());
      for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = frac_[i] > 0.5 ? 1 : 0;
      const double c = canonical_cost(cfg_, sigma, agg_.inverse_cost_sum);
      if (best_.empty() || better(c, sigma, best_cost_, best_)) {
        best_cost_ = c;
        best_ = std::move(sigma);
      }
      return;
    }
    const std::size_t idx = free[fractional].index;
    for (int v : {0, 1}) {
      fixed_[idx] = v;
      descend();
    }
    fixed_[idx] = -1;
  }

  const NetworkConfig& cfg_;
  Aggregates agg_;
  std::vector<RelaxItem> order_;
  std::vector<int> fixed_;
  std::vector<double> frac_;
  SwitchVector best_;
  double best_cost_;
  std::size_t nodes_ = 0;
};

}  // namespace detail

inline OscSolution make_solution(const NetworkConfig& cfg, SwitchVector sigma, CertificateKind kind) {
  auto c = hosc_cost(cfg, sigma);
  return OscSolution{std::move(sigma), std::move(c.generation), c.cost, kind};
}

/// Global minimum over sigma in {0,1}^L. Enumeration is capped at
/// kEnumerationCap loads; branch-and-bound prunes with the relaxed bound.
inline OscSolution solve_hosc_exact(const NetworkConfig& cfg, ExactMethod method = ExactMethod::enumerate) {
  const std::size_t n = cfg.loads.size();
  if (method == ExactMethod::branch_and_bound) {
    detail::BranchAndBound bnb(cfg);
    return make_solution(cfg, bnb.solve(), CertificateKind::branch_and_bound);
  }
  if (n > kEnumerationCap)
    throw OracleCapError("enumeration supports at most " + std::to_string(kEnumerationCap) + " loads, got " +
                         std::to_string(n));
  const double q_inv = aggregates(cfg).inverse_cost_sum;
  SwitchVector sigma(n, 0), best;
  double best_cost = std::numeric_limits<double>::infinity();
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    for (std::size_t i = 0; i < n; ++i) sigma[i] = static_cast<std::uint8_t>((mask >> i) & 1U);
    const double c = detail::canonical_cost(cfg, sigma, q_inv);
    if (best.empty() || detail::better(c, sigma, best_cost, best)) {
      best_cost = c;
      best = sigma;
    }
  }
  return make_solution(cfg, std::move(best), CertificateKind::exact_enumeration);
}

// ---------------------------------------------------------------------------
// Certificates

/// Searches for zeta with p^c* - theta/K <= zeta <= p^c* under which every
/// load's state in sigma is admissible. Per load the admissible zeta form a
/// half-line (zeta >= gamma for a load switched off against its wish, zeta <=
/// gamma when on as desired, zeta >= -gamma when off as desired, zeta <= -gamma
/// when switched on against its wish), so the feasible set is one interval.
/// Sufficient only: no witness does not prove sigma suboptimal.
inline std::optional<EpsilonWitness> check_epsilon_conditions(const NetworkConfig& cfg, const SwitchVector& sigma,
                                                              double theta) {
  require_switches(cfg, sigma);
  if (theta < 0.0) throw std::invalid_argument("theta must be non-negative");
  const double droop = aggregates(cfg).total_droop;
  const double pc = equilibrium_pc(cfg, sigma);
  double lo = pc - theta / droop;
  double hi = pc;
  for (std::size_t i = 0; i < cfg.loads.size(); ++i) {
    const auto& l = cfg.loads[i];
    const double g = l.unit_cost();
    if (l.desired) {
      if (sigma[i]) hi = std::min(hi, g);
      else lo = std::max(lo, g);
    } else {
      if (sigma[i]) hi = std::min(hi, -g);
      else lo = std::max(lo, -g);
    }
  }
  if (lo > hi + kCompareTolerance) return std::nullopt;
  const double zeta = lo <= hi ? 0.5 * (lo + hi) : hi;
  return EpsilonWitness{zeta, theta, sigma, pc, lo, hi};
}

/// Builds (sigma, zeta) meeting the certificate with theta = beta: start at
/// zeta = 0 and walk zeta across the cheapest switchable load until the
/// equilibrium price band catches up, rolling the last switch back when zeta
/// overshoots the price.
inline ConstructedEquilibrium construct_certified_equilibrium(const NetworkConfig& cfg) {
  const auto agg = aggregates(cfg);
  const double band = agg.largest_load / agg.total_droop;
  const std::size_t n = cfg.loads.size();

  ConstructedEquilibrium out;
  out.sigma = desired_states(cfg);
  double zeta = 0.0;
  double pc = equilibrium_pc(cfg, out.sigma);
  auto within = [&](double z, double p) {
    const double tol = kCompareTolerance * (1.0 + std::abs(p));
    return p - band <= z + tol && z <= p + tol;
  };

  // Candidate pick: lowest unit cost among loads still in `state` whose desire
  // is `desired`; ties resolved by index.
  auto pick = [&](std::uint8_t state, std::uint8_t desired) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.sigma[i] != state || cfg.loads[i].desired != desired) continue;
      if (!best || cfg.loads[i].unit_cost() < cfg.loads[*best].unit_cost()) best = i;
    }
    return best;
  };

  for (std::size_t pass = 0; pass <= n && !within(zeta, pc); ++pass) {
    if (pc - band > zeta) {
      // Price too high: shed the cheapest desired-on load.
      auto l = pick(1, 1);
      if (!l) {
        zeta = pc;
        break;
      }
      out.sigma[*l] = 0;
      zeta = cfg.loads[*l].unit_cost();
      const double pc_off = equilibrium_pc(cfg, out.sigma);
      if (zeta > pc_off) {
        out.sigma[*l] = 1;
        zeta = pc_off;
        pc = equilibrium_pc(cfg, out.sigma);
      } else {
        pc = pc_off;
      }
    } else {
      // Price below zeta: pick up the cheapest desired-off load.
      auto l = pick(0, 0);
      if (!l) {
        zeta = pc;
        break;
      }
      const double pc_off = pc;
      out.sigma[*l] = 1;
      zeta = -cfg.loads[*l].unit_cost();
      const double pc_on = equilibrium_pc(cfg, out.sigma);
      if (zeta < pc_on - band) {
        out.sigma[*l] = 0;
        zeta = pc_off;
        pc = pc_off;
      } else {
        pc = pc_on;
      }
    }
  }
  out.zeta = zeta;
  return out;
}

}  // namespace osc
