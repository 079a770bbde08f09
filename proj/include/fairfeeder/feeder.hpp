#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fairfeeder/common.hpp"

namespace fairfeeder {

// Radial single-line feeder. Node 0 is the grid connection; household h sits
// at node h, fed through branch h (node h-1 -> node h). Impedances are
// per-unit on the configured voltage/power base.
struct FeederNetwork {
  std::vector<double> branch_resistance_pu;
  std::vector<double> branch_reactance_pu;
  double base_voltage_v = 240.0;
  double base_power_kva = 10.0;

  std::size_t household_count() const { return branch_resistance_pu.size(); }

  void validate() const {
    require(!branch_resistance_pu.empty(), "feeder: no branches configured");
    require(branch_resistance_pu.size() == branch_reactance_pu.size(),
            "feeder: resistance/reactance lists differ in length");
    require(base_voltage_v > 0.0, "feeder: base voltage must be positive");
    require(base_power_kva > 0.0, "feeder: base power must be positive");
    for (std::size_t i = 0; i < branch_resistance_pu.size(); ++i) {
      require(branch_resistance_pu[i] > 0.0 && branch_reactance_pu[i] > 0.0,
              "feeder: branch " + std::to_string(i + 1) +
                  " impedance must be strictly positive");
    }
  }
};

// Net power exchanged between a household and the grid.
// Sign convention: positive = export, negative = import.
struct NodePower {
  double active_kw = 0.0;
  double reactive_kvar = 0.0;
};

// Solved branch flows and node voltages for one timestep.
// branch_* has one entry per branch 1..H; node_voltage_pu has H+1 entries
// with node 0 first, pinned at 1.0 p.u.
struct FlowState {
  std::vector<double> branch_active_kw;
  std::vector<double> branch_reactive_kvar;
  std::vector<double> node_voltage_pu;
};

// Head-of-feeder flow on branch 1, fixed by the boundary rule in use.
struct BoundaryCondition {
  double branch1_active_kw = 0.0;
  double branch1_reactive_kvar = 0.0;
};

// Piecewise-linear Volt-Var response. Full injection below v1, linear taper
// to zero at v2, dead band to v3, linear absorption ramp to v4, full
// absorption beyond.
struct VvcCurve {
  double v1 = 0.94;
  double v2 = 0.98;
  double v3 = 1.06;
  double v4 = 1.10;
  double q_max_kvar = 0.0;

  void validate() const {
    require(v1 < v2 && v2 < v3 && v3 < v4,
            "vvc: thresholds must satisfy v1 < v2 < v3 < v4");
    require(q_max_kvar >= 0.0, "vvc: q_max must be non-negative");
  }
};

// Apparent-power rating of one household's PV inverter.
struct InverterSpec {
  double s_max_kva = 0.0;
  double q_max_kvar = 0.0;

  void validate() const {
    require(s_max_kva >= 0.0, "inverter: s_max must be non-negative");
    require(q_max_kvar >= 0.0 && q_max_kvar <= s_max_kva,
            "inverter: q_max must lie in [0, s_max]");
  }
};

inline double net_power(double gen_kw, double load_kw, double alpha) {
  require(gen_kw >= 0.0, "net_power: generation must be non-negative");
  require(load_kw >= 0.0, "net_power: load must be non-negative");
  require(alpha >= 0.0 && alpha <= 1.0,
          "net_power: curtailment fraction outside [0, 1]");
  return gen_kw * (1.0 - alpha) - load_kw;
}

inline double vvc_reactive(double voltage_pu, const VvcCurve& curve) {
  require(voltage_pu > 0.0, "vvc_reactive: voltage must be positive");
  const double q = curve.q_max_kvar;
  if (voltage_pu <= curve.v1) return q;
  if (voltage_pu < curve.v2)
    return q * (curve.v2 - voltage_pu) / (curve.v2 - curve.v1);
  if (voltage_pu <= curve.v3) return 0.0;  // dead band
  if (voltage_pu < curve.v4)
    return -q * (voltage_pu - curve.v3) / (curve.v4 - curve.v3);
  return -q;
}

inline bool capacity_feasible(double gen_kw, double alpha, double reactive_kvar,
                              const InverterSpec& spec) {
  require(alpha >= 0.0 && alpha <= 1.0,
          "capacity_feasible: curtailment fraction outside [0, 1]");
  const double active = gen_kw * (1.0 - alpha);
  return spec.s_max_kva * spec.s_max_kva >=
         active * active + reactive_kvar * reactive_kvar;
}

// Shrink a reactive request so the (active, reactive) pair fits the inverter
// rating; sign is preserved.
inline double clamp_reactive_to_capacity(double gen_kw, double alpha,
                                         double q_requested_kvar,
                                         const InverterSpec& spec) {
  require(alpha >= 0.0 && alpha <= 1.0,
          "clamp_reactive_to_capacity: curtailment fraction outside [0, 1]");
  const double active = gen_kw * (1.0 - alpha);
  const double headroom_sq = spec.s_max_kva * spec.s_max_kva - active * active;
  const double bound = headroom_sq > 0.0 ? std::sqrt(headroom_sq) : 0.0;
  const double magnitude = std::min(std::abs(q_requested_kvar), bound);
  return q_requested_kvar < 0.0 ? -magnitude : magnitude;
}

// Sweep the feeder once: accumulate branch flows from the head boundary,
// then propagate the voltage drop branch by branch.
inline FlowState solve_flow(const FeederNetwork& network,
                            const std::vector<NodePower>& injections,
                            const BoundaryCondition& boundary) {
  network.validate();
  const std::size_t n = network.household_count();
  require(injections.size() == n,
          "solve_flow: expected " + std::to_string(n) + " injections, got " +
              std::to_string(injections.size()));

  FlowState flow;
  flow.branch_active_kw.resize(n);
  flow.branch_reactive_kvar.resize(n);
  flow.node_voltage_pu.resize(n + 1);

  flow.branch_active_kw[0] = boundary.branch1_active_kw;
  flow.branch_reactive_kvar[0] = boundary.branch1_reactive_kvar;
  for (std::size_t i = 1; i < n; ++i) {
    flow.branch_active_kw[i] =
        flow.branch_active_kw[i - 1] + injections[i - 1].active_kw;
    flow.branch_reactive_kvar[i] =
        flow.branch_reactive_kvar[i - 1] + injections[i - 1].reactive_kvar;
  }

  const double base = network.base_power_kva;
  flow.node_voltage_pu[0] = 1.0;
  const double v0 = flow.node_voltage_pu[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double p_pu = flow.branch_active_kw[i] / base;
    const double q_pu = flow.branch_reactive_kvar[i] / base;
    flow.node_voltage_pu[i + 1] =
        flow.node_voltage_pu[i] - (network.branch_resistance_pu[i] * p_pu +
                                   network.branch_reactance_pu[i] * q_pu) /
                                      v0;
  }
  return flow;
}

enum class VvcMode { PrevStep, FixedPoint };
enum class BoundaryMode { LoadSum, NetInjection };

struct FixedPointOptions {
  double tolerance_pu = 1e-6;
  int max_iterations = 100;
  double damping = 0.5;
};

// Feeder plus the conventions needed to run it one timestep at a time.
struct FeederConfig {
  FeederNetwork network;
  VvcCurve vvc;                  // q_max_kvar unused; per-household caps apply
  double vvc_q_ratio = 0.10;     // q_max as a fraction of inverter s_max
  VvcMode vvc_mode = VvcMode::PrevStep;
  BoundaryMode boundary_mode = BoundaryMode::LoadSum;
  FixedPointOptions fixed_point;

  void validate() const {
    network.validate();
    vvc.validate();
    require(vvc_q_ratio >= 0.0 && vvc_q_ratio <= 1.0,
            "feeder: vvc_q_ratio outside [0, 1]");
  }
};

struct TimestepResult {
  FlowState flow;
  std::vector<double> reactive_kvar;  // realized inverter output per household
  int fixed_point_iterations = 0;
  bool fixed_point_converged = true;
};

namespace detail {

inline BoundaryCondition head_boundary(BoundaryMode mode,
                                       std::span<const double> gen_kw,
                                       std::span<const double> load_kw,
                                       std::span<const double> alpha) {
  BoundaryCondition boundary;
  double total = 0.0;
  if (mode == BoundaryMode::LoadSum) {
    for (double load : load_kw) total += load;
  } else {
    for (std::size_t h = 0; h < gen_kw.size(); ++h)
      total += net_power(gen_kw[h], load_kw[h], alpha[h]);
  }
  boundary.branch1_active_kw = -total;
  boundary.branch1_reactive_kvar = 0.0;
  return boundary;
}

inline std::vector<NodePower> assemble_injections(
    std::span<const double> gen_kw, std::span<const double> load_kw,
    std::span<const double> alpha, std::span<const double> control_voltage_pu,
    const VvcCurve& thresholds, std::span<const InverterSpec> specs,
    std::vector<double>& reactive_out) {
  const std::size_t n = gen_kw.size();
  std::vector<NodePower> injections(n);
  reactive_out.resize(n);
  for (std::size_t h = 0; h < n; ++h) {
    VvcCurve curve = thresholds;
    curve.q_max_kvar = specs[h].q_max_kvar;
    const double requested = vvc_reactive(control_voltage_pu[h], curve);
    const double realized =
        clamp_reactive_to_capacity(gen_kw[h], alpha[h], requested, specs[h]);
    injections[h].active_kw = net_power(gen_kw[h], load_kw[h], alpha[h]);
    injections[h].reactive_kvar = realized;
    reactive_out[h] = realized;
  }
  return injections;
}

}  // namespace detail

// One simulated half-hour. In PrevStep mode the inverters respond to the
// voltages measured the step before; FixedPoint mode iterates the VVC/flow
// loop (damped) until node voltages settle.
inline TimestepResult simulate_timestep(const FeederConfig& config,
                                        std::span<const double> gen_kw,
                                        std::span<const double> load_kw,
                                        std::span<const double> alpha,
                                        std::span<const InverterSpec> specs,
                                        std::span<const double> prev_voltage_pu) {
  config.validate();
  const std::size_t n = config.network.household_count();
  require(gen_kw.size() == n && load_kw.size() == n && alpha.size() == n &&
              specs.size() == n && prev_voltage_pu.size() == n,
          "simulate_timestep: input lists must all have household_count entries");

  const BoundaryCondition boundary =
      detail::head_boundary(config.boundary_mode, gen_kw, load_kw, alpha);

  TimestepResult result;
  if (config.vvc_mode == VvcMode::PrevStep) {
    auto injections = detail::assemble_injections(
        gen_kw, load_kw, alpha, prev_voltage_pu, config.vvc, specs,
        result.reactive_kvar);
    result.flow = solve_flow(config.network, injections, boundary);
    return result;
  }

  // Fixed point: q depends on v and v on q; relax with damped updates.
  std::vector<double> control(prev_voltage_pu.begin(), prev_voltage_pu.end());
  const FixedPointOptions& fp = config.fixed_point;
  result.fixed_point_converged = false;
  for (int iter = 1; iter <= fp.max_iterations; ++iter) {
    auto injections = detail::assemble_injections(
        gen_kw, load_kw, alpha, control, config.vvc, specs,
        result.reactive_kvar);
    result.flow = solve_flow(config.network, injections, boundary);
    result.fixed_point_iterations = iter;
    double delta = 0.0;
    for (std::size_t h = 0; h < n; ++h) {
      delta = std::max(delta,
                       std::abs(result.flow.node_voltage_pu[h + 1] - control[h]));
    }
    if (delta < fp.tolerance_pu) {
      result.fixed_point_converged = true;
      break;
    }
    for (std::size_t h = 0; h < n; ++h) {
      control[h] += fp.damping * (result.flow.node_voltage_pu[h + 1] - control[h]);
    }
  }
  return result;
}

}  // namespace fairfeeder
