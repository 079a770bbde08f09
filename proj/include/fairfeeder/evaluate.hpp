#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fairfeeder/common.hpp"
#include "fairfeeder/config.hpp"
#include "fairfeeder/dataset.hpp"
#include "fairfeeder/env.hpp"
#include "fairfeeder/oracle.hpp"
#include "fairfeeder/sac.hpp"
#include "fairfeeder/tariff.hpp"

namespace fairfeeder {

// Summaries classify a run as voltage-safe inside this band; raw maxima are
// always reported alongside.
constexpr double kSafeClassificationBandPu = 0.005;

struct EvalReport {
  std::vector<double> curtailed_kwh;  // per household, summed over test days
  std::vector<double> exported_kwh;
  double total_cost = 0.0;
  double import_cost = 0.0;
  double export_revenue = 0.0;
  double gini_curtailment = 0.0;
  double mean_step_reward = 0.0;
  double max_violation_pu = 0.0;
  double mean_violation_pu = 0.0;
  double max_voltage_pu = 0.0;
  double min_voltage_pu = std::numeric_limits<double>::infinity();
  std::size_t days_evaluated = 0;
  std::uint64_t config_hash = 0;
  std::string fairness_tag;

  double mean_total_curtailed_kwh() const {
    double total = 0.0;
    for (double c : curtailed_kwh) total += c;
    return curtailed_kwh.empty() ? 0.0
                                 : total / static_cast<double>(curtailed_kwh.size());
  }

  bool voltage_safe() const {
    return max_violation_pu <= kSafeClassificationBandPu;
  }
};

// Deterministic rollout of a policy over the given test days. Days are
// simulated independently; reduction order is fixed, so results do not
// depend on the worker count.
inline EvalReport evaluate_policy_fn(const Policy& policy,
                                     const InstanceConfig& config,
                                     const Dataset& dataset,
                                     std::span<const std::size_t> test_days,
                                     std::vector<Trajectory>* trajectories_out = nullptr,
                                     std::size_t workers = 1) {
  config.validate();
  require(!test_days.empty(), "evaluate: no test days");
  const std::size_t n = config.feeder.network.household_count();

  std::vector<Trajectory> trajectories(test_days.size());
  auto run_day = [&](std::size_t i) {
    Environment env(config.feeder, config.reward, config.fairness);
    const EpisodeBatch episode = extract_day(dataset, test_days[i]);
    trajectories[i] = rollout(env, policy, episode);
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < test_days.size(); ++i) run_day(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w]() {
        for (std::size_t i = w; i < test_days.size(); i += workers) run_day(i);
      });
    for (auto& thread : pool) thread.join();
  }

  EvalReport report;
  report.curtailed_kwh.assign(n, 0.0);
  report.exported_kwh.assign(n, 0.0);
  report.days_evaluated = test_days.size();
  report.config_hash = config_hash(config);
  report.fairness_tag = case_tag(config.fairness);

  double reward_sum = 0.0;
  double violation_sum = 0.0;
  std::size_t violation_samples = 0;
  for (const Trajectory& trajectory : trajectories) {
    const CurtailmentProfile& profile = trajectory.profile;
    const CostBreakdown cost =
        electricity_cost_breakdown(profile, config.tariff, config.cost);
    report.total_cost += cost.total();
    report.import_cost += cost.import_cost;
    report.export_revenue += cost.export_revenue;
    for (std::size_t t = 0; t < kSlotsPerDay; ++t) {
      reward_sum += trajectory.rewards[t];
      for (std::size_t h = 0; h < n; ++h) {
        const double v = trajectory.voltages_pu[t][h];
        report.max_voltage_pu = std::max(report.max_voltage_pu, v);
        report.min_voltage_pu = std::min(report.min_voltage_pu, v);
        const double g = voltage_penalty(v);
        report.max_violation_pu = std::max(report.max_violation_pu, g);
        violation_sum += g;
        ++violation_samples;
        report.curtailed_kwh[h] +=
            profile.alpha_at(t, h) * profile.gen_at(t, h) * kStepHours;
        const double net = profile.gen_at(t, h) * (1.0 - profile.alpha_at(t, h)) -
                           profile.load_at(t, h);
        if (net > 0.0) report.exported_kwh[h] += net * kStepHours;
      }
    }
  }
  report.mean_step_reward =
      reward_sum / static_cast<double>(test_days.size() * kSlotsPerDay);
  report.mean_violation_pu =
      violation_sum / static_cast<double>(violation_samples);
  report.gini_curtailment = gini_index(report.curtailed_kwh);
  if (trajectories_out) *trajectories_out = std::move(trajectories);
  return report;
}

// Trained-policy entry point: refuses checkpoints trained on a different
// instance.
inline EvalReport evaluate_policy(const Checkpoint& checkpoint,
                                  const InstanceConfig& config,
                                  const Dataset& dataset,
                                  std::span<const std::size_t> test_days,
                                  std::vector<Trajectory>* trajectories_out = nullptr,
                                  std::size_t workers = 1) {
  const std::uint64_t expected = config_hash(config);
  if (checkpoint.config_hash != expected) {
    throw std::runtime_error(
        "evaluate: checkpoint was trained on a different instance (hash " +
        std::to_string(checkpoint.config_hash) + ", evaluation config hash " +
        std::to_string(expected) + ")");
  }
  CheckpointPolicy policy(checkpoint);
  return evaluate_policy_fn([&policy](const EnvState& s) { return policy(s); },
                            config, dataset, test_days, trajectories_out,
                            workers);
}

// Mean per-day curtailed energy per [household x slot] cell over a slot
// window; slot_end is exclusive.
struct SlotMatrix {
  std::size_t slot_begin = 0;
  std::size_t slot_end = 0;
  std::size_t households = 0;
  std::vector<double> values;  // [household][slot - slot_begin]

  double at(std::size_t h, std::size_t slot) const {
    return values[h * (slot_end - slot_begin) + (slot - slot_begin)];
  }
};

inline SlotMatrix curtailment_matrix(std::span<const Trajectory> trajectories,
                                     std::size_t slot_begin, std::size_t slot_end) {
  require(!trajectories.empty(), "matrix: no trajectories");
  require(slot_begin < slot_end && slot_end <= kSlotsPerDay,
          "matrix: empty or invalid slot window");
  const std::size_t n = trajectories.front().profile.households;
  SlotMatrix matrix;
  matrix.slot_begin = slot_begin;
  matrix.slot_end = slot_end;
  matrix.households = n;
  matrix.values.assign(n * (slot_end - slot_begin), 0.0);
  const double scale = 1.0 / static_cast<double>(trajectories.size());
  for (const Trajectory& trajectory : trajectories) {
    const CurtailmentProfile& profile = trajectory.profile;
    for (std::size_t h = 0; h < n; ++h)
      for (std::size_t s = slot_begin; s < slot_end; ++s)
        matrix.values[h * (slot_end - slot_begin) + (s - slot_begin)] +=
            profile.alpha_at(s, h) * profile.gen_at(s, h) * kStepHours * scale;
  }
  return matrix;
}

inline SlotMatrix export_matrix(std::span<const Trajectory> trajectories,
                                std::size_t slot_begin, std::size_t slot_end) {
  require(!trajectories.empty(), "matrix: no trajectories");
  require(slot_begin < slot_end && slot_end <= kSlotsPerDay,
          "matrix: empty or invalid slot window");
  const std::size_t n = trajectories.front().profile.households;
  SlotMatrix matrix;
  matrix.slot_begin = slot_begin;
  matrix.slot_end = slot_end;
  matrix.households = n;
  matrix.values.assign(n * (slot_end - slot_begin), 0.0);
  const double scale = 1.0 / static_cast<double>(trajectories.size());
  for (const Trajectory& trajectory : trajectories) {
    const CurtailmentProfile& profile = trajectory.profile;
    for (std::size_t h = 0; h < n; ++h)
      for (std::size_t s = slot_begin; s < slot_end; ++s) {
        const double net = profile.gen_at(s, h) * (1.0 - profile.alpha_at(s, h)) -
                           profile.load_at(s, h);
        if (net > 0.0)
          matrix.values[h * (slot_end - slot_begin) + (s - slot_begin)] +=
              net * kStepHours * scale;
      }
  }
  return matrix;
}

inline void write_slot_matrix_csv(std::ostream& out, const SlotMatrix& matrix) {
  out << "household";
  for (std::size_t s = matrix.slot_begin; s < matrix.slot_end; ++s)
    out << ",slot" << s;
  out << '\n';
  for (std::size_t h = 0; h < matrix.households; ++h) {
    out << h;
    for (std::size_t s = matrix.slot_begin; s < matrix.slot_end; ++s)
      out << ',' << matrix.at(h, s);
    out << '\n';
  }
}

// Side-by-side policy/oracle summary on one instance.
struct ComparisonRow {
  std::string metric;
  double policy_value = 0.0;
  double oracle_value = 0.0;
  double gap = 0.0;  // policy - oracle
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

inline ComparisonTable compare(const EvalReport& policy_report,
                               const OracleSolution& oracle_solution,
                               const OracleProblem& problem,
                               std::span<const double> policy_alpha) {
  require(policy_report.config_hash == oracle_solution.config_hash,
          "compare: reports come from different instances");
  require(policy_report.fairness_tag == oracle_solution.fairness_tag,
          "compare: reports use different fairness cases");
  const ProfileEvaluation policy_eval = evaluate_profile(problem, policy_alpha);
  const auto oracle_totals = per_household_curtailed_kwh(oracle_solution.alpha);
  ComparisonTable table;
  table.rows.push_back({"cost_dollars", policy_eval.cost, oracle_solution.cost,
                        policy_eval.cost - oracle_solution.cost});
  table.rows.push_back({"gini", policy_report.gini_curtailment,
                        gini_index(oracle_totals),
                        policy_report.gini_curtailment - gini_index(oracle_totals)});
  table.rows.push_back({"max_violation_pu", policy_eval.max_violation,
                        oracle_solution.max_violation_pu,
                        policy_eval.max_violation - oracle_solution.max_violation_pu});
  table.rows.push_back({"penalized_objective", policy_eval.objective,
                        oracle_solution.objective,
                        policy_eval.objective - oracle_solution.objective});
  return table;
}

inline void write_comparison_csv(std::ostream& out, const ComparisonTable& table) {
  out << "metric,policy,oracle,gap\n";
  for (const auto& row : table.rows)
    out << row.metric << ',' << row.policy_value << ',' << row.oracle_value
        << ',' << row.gap << '\n';
}

inline nlohmann::json to_json(const EvalReport& report) {
  return {{"curtailed_kwh", report.curtailed_kwh},
          {"exported_kwh", report.exported_kwh},
          {"total_cost", report.total_cost},
          {"import_cost", report.import_cost},
          {"export_revenue", report.export_revenue},
          {"gini_curtailment", report.gini_curtailment},
          {"mean_step_reward", report.mean_step_reward},
          {"max_violation_pu", report.max_violation_pu},
          {"mean_violation_pu", report.mean_violation_pu},
          {"max_voltage_pu", report.max_voltage_pu},
          {"min_voltage_pu", report.min_voltage_pu},
          {"voltage_safe", report.voltage_safe()},
          {"days_evaluated", report.days_evaluated},
          {"config_hash", report.config_hash},
          {"fairness_tag", report.fairness_tag}};
}

inline void save_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write '" + path + "'");
  out << to_json(report).dump(2) << '\n';
}

}  // namespace fairfeeder
