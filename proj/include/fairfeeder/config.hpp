#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfeeder/common.hpp"
#include "fairfeeder/dataset.hpp"
#include "fairfeeder/fairness.hpp"
#include "fairfeeder/feeder.hpp"
#include "fairfeeder/tariff.hpp"

namespace fairfeeder {

struct RewardWeights {
  double w1 = 100.0;  // per-p.u. voltage penalty weight
  double w2 = 1.0;    // fairness penalty weight

  void validate() const {
    require(w1 >= 0.0 && w2 >= 0.0, "reward: weights must be non-negative");
  }
};

struct DataConfig {
  std::string path;
  std::size_t households = 10;
  double train_fraction = 0.8;
  SplitMode split = SplitMode::SeededRandom;
  std::uint64_t seed = 1;
};

// Everything that defines one experimental setup. Training, evaluation and
// the oracle all run against the same resolved instance.
struct InstanceConfig {
  FeederConfig feeder;
  TariffSchedule tariff;
  CostOptions cost;
  FairnessCase fairness;
  RewardWeights reward;
  DataConfig data;

  void validate() const {
    feeder.validate();
    tariff.validate();
    fairness.validate();
    reward.validate();
    require(data.households == feeder.network.household_count(),
            "config: data.households must match the feeder size");
    require(data.train_fraction > 0.0 && data.train_fraction < 1.0,
            "config: train fraction must lie in (0, 1)");
  }
};

// --- enum <-> string -------------------------------------------------------

inline std::string to_string(FairnessDefinition d) {
  switch (d) {
    case FairnessDefinition::EgalitarianCurtailment: return "d1";
    case FairnessDefinition::ProportionalCurtailment: return "d2";
    case FairnessDefinition::EgalitarianOutput: return "d3";
  }
  return "d1";
}

inline FairnessDefinition fairness_definition_from(const std::string& s) {
  if (s == "d1") return FairnessDefinition::EgalitarianCurtailment;
  if (s == "d2") return FairnessDefinition::ProportionalCurtailment;
  if (s == "d3") return FairnessDefinition::EgalitarianOutput;
  throw std::invalid_argument("config: unknown fairness definition '" + s + "'");
}

inline std::string to_string(FairnessHorizon h) {
  return h == FairnessHorizon::Instant ? "instant" : "acc";
}

inline FairnessHorizon fairness_horizon_from(const std::string& s) {
  if (s == "instant") return FairnessHorizon::Instant;
  if (s == "acc" || s == "accumulative") return FairnessHorizon::Accumulative;
  throw std::invalid_argument("config: unknown fairness horizon '" + s + "'");
}

inline std::string case_tag(const FairnessCase& c) {
  return to_string(c.definition) + "_" + to_string(c.horizon);
}

inline std::string to_string(VvcMode m) {
  return m == VvcMode::PrevStep ? "prev-step" : "fixed-point";
}

inline VvcMode vvc_mode_from(const std::string& s) {
  if (s == "prev-step") return VvcMode::PrevStep;
  if (s == "fixed-point") return VvcMode::FixedPoint;
  throw std::invalid_argument("config: unknown vvc mode '" + s + "'");
}

inline std::string to_string(BoundaryMode m) {
  return m == BoundaryMode::LoadSum ? "load-sum" : "net-injection";
}

inline BoundaryMode boundary_mode_from(const std::string& s) {
  if (s == "load-sum") return BoundaryMode::LoadSum;
  if (s == "net-injection") return BoundaryMode::NetInjection;
  throw std::invalid_argument("config: unknown boundary mode '" + s + "'");
}

inline std::string to_string(PricingMode m) {
  return m == PricingMode::SplitPrice ? "split" : "literal";
}

inline PricingMode pricing_mode_from(const std::string& s) {
  if (s == "split") return PricingMode::SplitPrice;
  if (s == "literal") return PricingMode::LiteralNet;
  throw std::invalid_argument("config: unknown pricing mode '" + s + "'");
}

inline std::string to_string(SplitMode m) {
  return m == SplitMode::SeededRandom ? "random" : "chrono";
}

inline SplitMode split_mode_from(const std::string& s) {
  if (s == "random") return SplitMode::SeededRandom;
  if (s == "chrono") return SplitMode::Chronological;
  throw std::invalid_argument("config: unknown split mode '" + s + "'");
}

// --- JSON ------------------------------------------------------------------

inline nlohmann::json to_json(const InstanceConfig& config) {
  nlohmann::json j;
  const FeederConfig& f = config.feeder;
  j["network"] = {
      {"household_count", f.network.household_count()},
      {"branch_resistance_pu", f.network.branch_resistance_pu},
      {"branch_reactance_pu", f.network.branch_reactance_pu},
      {"base_voltage_v", f.network.base_voltage_v},
      {"base_power_kva", f.network.base_power_kva},
      {"vvc",
       {{"v1", f.vvc.v1},
        {"v2", f.vvc.v2},
        {"v3", f.vvc.v3},
        {"v4", f.vvc.v4},
        {"q_max_ratio", f.vvc_q_ratio}}},
      {"vvc_mode", to_string(f.vvc_mode)},
      {"boundary_mode", to_string(f.boundary_mode)},
      {"fixed_point",
       {{"tolerance_pu", f.fixed_point.tolerance_pu},
        {"max_iterations", f.fixed_point.max_iterations},
        {"damping", f.fixed_point.damping}}},
  };
  j["tariff"] = {
      {"offpeak_per_kwh", config.tariff.offpeak_per_kwh},
      {"peak_per_kwh", config.tariff.peak_per_kwh},
      {"shoulder_per_kwh", config.tariff.shoulder_per_kwh},
      {"feed_in_per_kwh", config.tariff.feed_in_per_kwh},
      {"pricing_mode", to_string(config.cost.mode)},
      {"include_step_hours", config.cost.include_step_hours},
  };
  j["fairness"] = {
      {"definition", to_string(config.fairness.definition)},
      {"horizon", to_string(config.fairness.horizon)},
      {"epsilon_kw", config.fairness.epsilon_kw},
      {"ratio_cap", config.fairness.ratio_cap},
      {"strict_eligibility", config.fairness.strict_eligibility},
  };
  j["reward"] = {{"w1", config.reward.w1}, {"w2", config.reward.w2}};
  j["data"] = {
      {"path", config.data.path},
      {"households", config.data.households},
      {"train_fraction", config.data.train_fraction},
      {"split", to_string(config.data.split)},
      {"seed", config.data.seed},
  };
  return j;
}

inline InstanceConfig instance_config_from_json(const nlohmann::json& j) {
  InstanceConfig config;
  const auto& n = j.at("network");
  config.feeder.network.branch_resistance_pu =
      n.at("branch_resistance_pu").get<std::vector<double>>();
  config.feeder.network.branch_reactance_pu =
      n.at("branch_reactance_pu").get<std::vector<double>>();
  config.feeder.network.base_voltage_v = n.value("base_voltage_v", 240.0);
  config.feeder.network.base_power_kva = n.value("base_power_kva", 10.0);
  if (n.contains("household_count")) {
    require(n.at("household_count").get<std::size_t>() ==
                config.feeder.network.household_count(),
            "config: household_count disagrees with branch list length");
  }
  if (n.contains("vvc")) {
    const auto& v = n.at("vvc");
    config.feeder.vvc.v1 = v.value("v1", 0.94);
    config.feeder.vvc.v2 = v.value("v2", 0.98);
    config.feeder.vvc.v3 = v.value("v3", 1.06);
    config.feeder.vvc.v4 = v.value("v4", 1.10);
    config.feeder.vvc_q_ratio = v.value("q_max_ratio", 0.10);
  }
  config.feeder.vvc_mode = vvc_mode_from(n.value("vvc_mode", "prev-step"));
  config.feeder.boundary_mode =
      boundary_mode_from(n.value("boundary_mode", "load-sum"));
  if (n.contains("fixed_point")) {
    const auto& fp = n.at("fixed_point");
    config.feeder.fixed_point.tolerance_pu = fp.value("tolerance_pu", 1e-6);
    config.feeder.fixed_point.max_iterations = fp.value("max_iterations", 100);
    config.feeder.fixed_point.damping = fp.value("damping", 0.5);
  }
  if (j.contains("tariff")) {
    const auto& t = j.at("tariff");
    config.tariff.offpeak_per_kwh = t.value("offpeak_per_kwh", 0.12);
    config.tariff.peak_per_kwh = t.value("peak_per_kwh", 0.52);
    config.tariff.shoulder_per_kwh = t.value("shoulder_per_kwh", 0.22);
    config.tariff.feed_in_per_kwh = t.value("feed_in_per_kwh", 0.10);
    config.cost.mode = pricing_mode_from(t.value("pricing_mode", "split"));
    config.cost.include_step_hours = t.value("include_step_hours", true);
  }
  if (j.contains("fairness")) {
    const auto& f = j.at("fairness");
    config.fairness.definition =
        fairness_definition_from(f.value("definition", "d1"));
    config.fairness.horizon = fairness_horizon_from(f.value("horizon", "instant"));
    config.fairness.epsilon_kw = f.value("epsilon_kw", 1e-3);
    config.fairness.ratio_cap = f.value("ratio_cap", 1e3);
    config.fairness.strict_eligibility = f.value("strict_eligibility", false);
  }
  if (j.contains("reward")) {
    config.reward.w1 = j.at("reward").value("w1", 100.0);
    config.reward.w2 = j.at("reward").value("w2", 1.0);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    config.data.path = d.value("path", "");
    config.data.households = d.value("households", std::size_t{10});
    config.data.train_fraction = d.value("train_fraction", 0.8);
    config.data.split = split_mode_from(d.value("split", "random"));
    config.data.seed = d.value("seed", std::uint64_t{1});
  }
  config.validate();
  return config;
}

inline InstanceConfig load_instance_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: parse error in '" + path + "': " + e.what());
  }
  return instance_config_from_json(j);
}

inline void save_instance_config(const std::string& path,
                                 const InstanceConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write '" + path + "'");
  out << to_json(config).dump(2) << '\n';
}

// Identifies the physical instance a checkpoint was trained on. The dataset
// path is excluded so artifacts can be relocated; everything that changes
// the MDP is included.
inline std::uint64_t config_hash(const InstanceConfig& config) {
  nlohmann::json j = to_json(config);
  j["data"].erase("path");
  return fnv1a64(j.dump());
}

// --- default instance and calibration --------------------------------------

inline InstanceConfig default_instance_config(std::size_t households = 10) {
  InstanceConfig config;
  config.feeder.network.branch_resistance_pu.assign(households, 0.003);
  config.feeder.network.branch_reactance_pu.assign(households, 0.001);
  // The bundled experiments need export-driven overvoltage at the feeder
  // end, which only the closed-circuit head flow produces.
  config.feeder.boundary_mode = BoundaryMode::NetInjection;
  config.data.households = households;
  return config;
}

// Max household voltage over the whole dataset with no curtailment, run in
// the instance's own VVC/boundary modes.
inline double uncurtailed_peak_voltage(const InstanceConfig& config,
                                       const Dataset& dataset) {
  const std::size_t n = config.feeder.network.household_count();
  std::vector<double> alpha(n, 0.0);
  std::vector<double> prev_voltage(n, 1.0);
  std::vector<InverterSpec> specs(n);
  double peak = 0.0;
  for (std::size_t day = 0; day < dataset.days(); ++day) {
    const EpisodeBatch batch = extract_day(dataset, day);
    std::fill(prev_voltage.begin(), prev_voltage.end(), 1.0);
    for (std::size_t slot = 0; slot < kSlotsPerDay; ++slot) {
      const auto gen = batch.gen_row(slot);
      const auto load = batch.load_row(slot);
      for (std::size_t h = 0; h < n; ++h) {
        specs[h].s_max_kva = gen[h];
        specs[h].q_max_kvar = config.feeder.vvc_q_ratio * gen[h];
      }
      const TimestepResult result = simulate_timestep(
          config.feeder, gen, load, alpha, specs, prev_voltage);
      for (std::size_t h = 0; h < n; ++h) {
        prev_voltage[h] = result.flow.node_voltage_pu[h + 1];
        peak = std::max(peak, prev_voltage[h]);
      }
    }
  }
  return peak;
}

// Scale branch impedances until uncurtailed operation peaks near the target
// voltage, so overvoltage genuinely occurs and curtailment can remove it.
inline InstanceConfig calibrate_network(InstanceConfig config,
                                        const Dataset& dataset,
                                        double target_peak_pu = 1.08,
                                        int iterations = 8) {
  require(target_peak_pu > kVoltageHighPu,
          "calibrate: target must exceed the safe band");
  for (int i = 0; i < iterations; ++i) {
    const double peak = uncurtailed_peak_voltage(config, dataset);
    const double rise = peak - 1.0;
    require(rise > 1e-6, "calibrate: dataset produces no voltage rise; "
                         "check boundary mode and PV sizing");
    double scale = (target_peak_pu - 1.0) / rise;
    scale = std::clamp(scale, 0.25, 4.0);
    for (auto& r : config.feeder.network.branch_resistance_pu) r *= scale;
    for (auto& x : config.feeder.network.branch_reactance_pu) x *= scale;
    if (std::abs(scale - 1.0) < 0.01) break;
  }
  return config;
}

}  // namespace fairfeeder
