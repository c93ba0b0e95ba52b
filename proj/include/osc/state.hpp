#pragma once

#include <cstddef>
#include <stdexcept>

#include <Eigen/Dense>

#include "osc/model.hpp"

namespace osc {

/// Index layout of the flat continuous state x = (eta, omega, p^M, p^c, psi).
struct StateLayout {
  std::size_t lines = 0;
  std::size_t buses = 0;
  std::size_t comm_lines = 0;

  static StateLayout of(const NetworkConfig& cfg) {
    return {cfg.power_lines.size(), cfg.buses.size(), cfg.comm_lines.size()};
  }

  std::size_t size() const { return lines + 3 * buses + comm_lines; }
  Eigen::Index eta() const { return 0; }
  Eigen::Index omega() const { return static_cast<Eigen::Index>(lines); }
  Eigen::Index pm() const { return omega() + static_cast<Eigen::Index>(buses); }
  Eigen::Index pc() const { return pm() + static_cast<Eigen::Index>(buses); }
  Eigen::Index psi() const { return pc() + static_cast<Eigen::Index>(buses); }

  friend bool operator==(const StateLayout&, const StateLayout&) = default;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The switched system's continuous state. Storage is one contiguous vector;
/// the named accessors are views into it.
class ContinuousState {
 public:
  ContinuousState() = default;
  explicit ContinuousState(StateLayout layout)
      : layout_(layout), data_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()))) {}
  ContinuousState(StateLayout layout, Eigen::VectorXd data) : layout_(layout), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != layout_.size())
      throw DimensionError("state vector length does not match layout");
  }

  static ContinuousState zeros(const NetworkConfig& cfg) { return ContinuousState(StateLayout::of(cfg)); }

  const StateLayout& layout() const { return layout_; }
  const Eigen::VectorXd& vector() const { return data_; }
  Eigen::VectorXd& vector() { return data_; }

  auto eta() { return data_.segment(layout_.eta(), n(layout_.lines)); }
  auto omega() { return data_.segment(layout_.omega(), n(layout_.buses)); }
  auto pm() { return data_.segment(layout_.pm(), n(layout_.buses)); }
  auto pc() { return data_.segment(layout_.pc(), n(layout_.buses)); }
  auto psi() { return data_.segment(layout_.psi(), n(layout_.comm_lines)); }
  auto eta() const { return data_.segment(layout_.eta(), n(layout_.lines)); }
  auto omega() const { return data_.segment(layout_.omega(), n(layout_.buses)); }
  auto pm() const { return data_.segment(layout_.pm(), n(layout_.buses)); }
  auto pc() const { return data_.segment(layout_.pc(), n(layout_.buses)); }
  auto psi() const { return data_.segment(layout_.psi(), n(layout_.comm_lines)); }

  bool all_finite() const { return data_.allFinite(); }

  /// Largest pairwise power-command difference.
  double pc_spread() const {
    if (layout_.buses == 0) return 0.0;
    return pc().maxCoeff() - pc().minCoeff();
  }

 private:
  static Eigen::Index n(std::size_t v) { return static_cast<Eigen::Index>(v); }

  StateLayout layout_{};
  Eigen::VectorXd data_;
};

inline void require_layout(const NetworkConfig& cfg, const ContinuousState& x) {
  if (!(x.layout() == StateLayout::of(cfg))) throw DimensionError("state dimensions do not match the network");
}

inline void require_switches(const NetworkConfig& cfg, const SwitchVector& sigma) {
  if (sigma.size() != cfg.loads.size()) throw DimensionError("switch vector length does not match load count");
  for (auto s : sigma)
    if (s > 1) throw DimensionError("switch vector entries must be 0 or 1");
}

/// Per-bus switched demand sum_{l at j} d-bar * sigma.
inline Eigen::VectorXd bus_switched_demand(const NetworkConfig& cfg, const SwitchVector& sigma) {
  Eigen::VectorXd demand = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.buses.size()));
  for (std::size_t i = 0; i < cfg.loads.size(); ++i)
    if (sigma[i]) demand[static_cast<Eigen::Index>(cfg.loads[i].bus)] += cfg.loads[i].magnitude;
  return demand;
}

}  // namespace osc
