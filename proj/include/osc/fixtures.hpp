#pragma once

// Small hand-checkable reference networks.
//
//   i1a / i1b  two unit buses joined by one power line and one comm line,
//              p^L = [1, 0], one load at bus 1 (d-bar 0.5, desired on) with
//              cost 0.2 (i1a, gamma 0.4) or 0.3 (i1b, gamma 0.6).
//   i0         same two buses, no loads, p^L = [0, 0].
//   three_bus  meshed power triangle, path communication graph, five loads.
//   broken     i1b with a negative susceptance; fails validation.

#include <optional>
#include <string_view>

#include "osc/model.hpp"

namespace osc::fixtures {

inline BusParams unit_bus(double uncontrollable_load) {
  return BusParams{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, uncontrollable_load};
}

inline NetworkConfig i0() {
  NetworkConfig cfg;
  cfg.buses = {unit_bus(0.0), unit_bus(0.0)};
  cfg.power_lines = {{0, 1, 1.0}};
  cfg.comm_lines = {{0, 1, 1.0}};
  return cfg;
}

inline NetworkConfig i1(double mismatch_cost) {
  NetworkConfig cfg;
  cfg.buses = {unit_bus(1.0), unit_bus(0.0)};
  cfg.power_lines = {{0, 1, 1.0}};
  cfg.comm_lines = {{0, 1, 1.0}};
  cfg.loads = {{0, 0.5, mismatch_cost, 1}};
  return cfg;
}

inline NetworkConfig i1a() { return i1(0.2); }
inline NetworkConfig i1b() { return i1(0.3); }

inline NetworkConfig three_bus() {
  NetworkConfig cfg;
  // q_j = 1 / kappa_j throughout.
  cfg.buses = {
      {2.0, 1.0, 1.0, 0.5, 1.0, 1.0, 0.6},
      {1.5, 0.8, 0.5, 0.8, 1.5, 2.0, 0.3},
      {1.0, 1.2, 0.8, 0.6, 1.2, 1.25, 0.4},
  };
  cfg.power_lines = {{0, 1, 5.0}, {1, 2, 4.0}, {0, 2, 3.0}};
  cfg.comm_lines = {{0, 1, 1.0}, {1, 2, 2.0}};
  cfg.loads = {
      {0, 0.10, 0.050, 1}, {0, 0.15, 0.120, 1}, {1, 0.08, 0.060, 0},
      {1, 0.12, 0.030, 1}, {2, 0.20, 0.210, 1},
  };
  return cfg;
}

inline NetworkConfig broken() {
  NetworkConfig cfg = i1b();
  cfg.power_lines[0].susceptance = -1.0;
  return cfg;
}

/// Builtin fixture by name; the result is not validated.
inline std::optional<NetworkConfig> by_name(std::string_view name) {
  if (name == "i0") return i0();
  if (name == "i1a") return i1a();
  if (name == "i1b") return i1b();
  if (name == "three_bus" || name == "three-bus") return three_bus();
  if (name == "broken") return broken();
  return std::nullopt;
}

}  // namespace osc::fixtures
