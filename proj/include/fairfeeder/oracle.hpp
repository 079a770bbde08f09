#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fairfeeder/common.hpp"
#include "fairfeeder/config.hpp"
#include "fairfeeder/dataset.hpp"
#include "fairfeeder/env.hpp"
#include "fairfeeder/fairness.hpp"
#include "fairfeeder/feeder.hpp"
#include "fairfeeder/tariff.hpp"

namespace fairfeeder {

enum class OracleMode { Exhaustive, Descent };

// A curtailment scheduling problem with full network knowledge. The horizon
// may be shorter than a day; slot_offset aligns timestep 0 with a tariff
// slot. The oracle always resolves voltages with fixed-point VVC: it plans
// a whole timestep at once, so a previous-step convention has no meaning.
struct OracleProblem {
  InstanceConfig instance;
  std::size_t timesteps = 0;
  std::size_t households = 0;
  std::vector<double> gen_kw;   // [t][h]
  std::vector<double> load_kw;  // [t][h]
  std::size_t slot_offset = 0;
  double beta = 1.0;
  OracleMode mode = OracleMode::Exhaustive;
  std::size_t grid_levels = 11;
  std::size_t evaluation_budget = 6'000'000;
  bool literal_objective_sign = false;  // subtract beta*f instead of adding

  static OracleProblem from_episode(const InstanceConfig& instance,
                                    const EpisodeBatch& episode, double beta,
                                    OracleMode mode = OracleMode::Descent) {
    OracleProblem problem;
    problem.instance = instance;
    problem.timesteps = kSlotsPerDay;
    problem.households = episode.households;
    problem.gen_kw = episode.gen_kw;
    problem.load_kw = episode.load_kw;
    problem.beta = beta;
    problem.mode = mode;
    return problem;
  }

  void validate() const {
    instance.validate();
    require(timesteps > 0 && households > 0, "oracle: empty problem");
    require(households == instance.feeder.network.household_count(),
            "oracle: household count disagrees with the feeder");
    require(gen_kw.size() == timesteps * households &&
                load_kw.size() == timesteps * households,
            "oracle: scenario matrices have wrong size");
    require(beta >= 0.0, "oracle: beta must be non-negative");
    require(grid_levels >= 2, "oracle: need at least 2 grid levels");
  }

  FeederConfig oracle_feeder() const {
    FeederConfig feeder = instance.feeder;
    feeder.vvc_mode = VvcMode::FixedPoint;
    return feeder;
  }

  CurtailmentProfile make_profile(std::span<const double> alpha) const {
    CurtailmentProfile profile;
    profile.timesteps = timesteps;
    profile.households = households;
    profile.alpha.assign(alpha.begin(), alpha.end());
    profile.generation_kw = gen_kw;
    profile.load_kw = load_kw;
    profile.step_hours = kStepHours;
    return profile;
  }
};

struct OracleSolution {
  CurtailmentProfile alpha;
  double objective = 0.0;        // cost plus the signed fairness term
  double cost = 0.0;             // $ in the instance's pricing mode
  double fairness_penalty = 0.0;
  bool feasible = false;
  double max_violation_pu = 0.0;
  std::uint64_t evaluations = 0;
  std::size_t descent_sweeps = 0;
  std::size_t descent_accepted_moves = 0;
  bool descent_converged = true;
  std::uint64_t config_hash = 0;
  std::string fairness_tag;
  double beta = 0.0;
};

namespace oracle_detail {

constexpr double kFeasibilitySlack = 1e-9;

// Per-timestep simulation summary, the cache unit for descent.
struct StepEval {
  double cost = 0.0;
  double violation_sum = 0.0;     // sum of band exceedances
  double violation_sq_sum = 0.0;  // exterior penalty term
  double max_violation = 0.0;
  double instant_fairness = 0.0;
};

inline StepEval evaluate_step(const OracleProblem& problem,
                              const FeederConfig& feeder, std::size_t t,
                              std::span<const double> alpha_row) {
  const std::size_t n = problem.households;
  const std::span<const double> gen(problem.gen_kw.data() + t * n, n);
  const std::span<const double> load(problem.load_kw.data() + t * n, n);

  std::vector<InverterSpec> specs(n);
  for (std::size_t h = 0; h < n; ++h) {
    specs[h].s_max_kva = gen[h];
    specs[h].q_max_kvar = feeder.vvc_q_ratio * gen[h];
  }
  std::vector<double> start(n, 1.0);
  const TimestepResult sim =
      simulate_timestep(feeder, gen, load, alpha_row, specs, start);

  StepEval eval;
  for (std::size_t h = 0; h < n; ++h) {
    const double g = voltage_penalty(sim.flow.node_voltage_pu[h + 1]);
    eval.violation_sum += g;
    eval.violation_sq_sum += g * g;
    eval.max_violation = std::max(eval.max_violation, g);
  }

  const double price =
      price_at((t + problem.slot_offset) % kSlotsPerDay, problem.instance.tariff);
  const double delta =
      problem.instance.cost.include_step_hours ? kStepHours : 1.0;
  const auto& tariff = problem.instance.tariff;
  for (std::size_t h = 0; h < n; ++h) {
    const double net = gen[h] * (1.0 - alpha_row[h]) - load[h];
    if (problem.instance.cost.mode == PricingMode::LiteralNet) {
      eval.cost += price * (-net) * delta;
    } else if (net < 0.0) {
      eval.cost += price * (-net) * delta;
    } else {
      eval.cost -= tariff.feed_in_per_kwh * net * delta;
    }
  }

  const FairnessCase& fc = problem.instance.fairness;
  if (fc.horizon == FairnessHorizon::Instant) {
    switch (fc.definition) {
      case FairnessDefinition::EgalitarianCurtailment:
        eval.instant_fairness = f1_instant(gen, alpha_row);
        break;
      case FairnessDefinition::ProportionalCurtailment:
        eval.instant_fairness = f2_instant(gen, load, alpha_row, fc.epsilon_kw,
                                           fc.ratio_cap, fc.strict_eligibility);
        break;
      case FairnessDefinition::EgalitarianOutput:
        eval.instant_fairness =
            f3_instant(gen, load, alpha_row, fc.strict_eligibility);
        break;
    }
  }
  return eval;
}

inline double accumulative_fairness(const OracleProblem& problem,
                                    std::span<const double> alpha) {
  const FairnessCase& fc = problem.instance.fairness;
  if (fc.horizon != FairnessHorizon::Accumulative) return 0.0;
  const CurtailmentProfile profile = problem.make_profile(alpha);
  switch (fc.definition) {
    case FairnessDefinition::EgalitarianCurtailment:
      return f1_accumulative(profile);
    case FairnessDefinition::ProportionalCurtailment:
      return f2_accumulative(profile, fc.epsilon_kw, fc.ratio_cap,
                             fc.strict_eligibility);
    case FairnessDefinition::EgalitarianOutput:
      return f3_accumulative(profile, fc.strict_eligibility);
  }
  return 0.0;
}

inline double fairness_sign(const OracleProblem& problem) {
  return problem.literal_objective_sign ? -1.0 : 1.0;
}

}  // namespace oracle_detail

// Full re-simulation of a candidate schedule: cost, fairness, objective and
// an independent feasibility verdict.
struct ProfileEvaluation {
  double cost = 0.0;
  double fairness = 0.0;
  double objective = 0.0;
  double violation_sq_sum = 0.0;
  double max_violation = 0.0;
  bool feasible = false;
};

inline ProfileEvaluation evaluate_profile(const OracleProblem& problem,
                                          std::span<const double> alpha) {
  problem.validate();
  require(alpha.size() == problem.timesteps * problem.households,
          "oracle: alpha has wrong size");
  const FeederConfig feeder = problem.oracle_feeder();
  ProfileEvaluation out;
  double instant_total = 0.0;
  for (std::size_t t = 0; t < problem.timesteps; ++t) {
    const auto eval = oracle_detail::evaluate_step(
        problem, feeder, t,
        {alpha.data() + t * problem.households, problem.households});
    out.cost += eval.cost;
    out.violation_sq_sum += eval.violation_sq_sum;
    out.max_violation = std::max(out.max_violation, eval.max_violation);
    instant_total += eval.instant_fairness;
  }
  out.fairness =
      problem.instance.fairness.horizon == FairnessHorizon::Instant
          ? instant_total
          : oracle_detail::accumulative_fairness(problem, alpha);
  out.objective =
      out.cost + oracle_detail::fairness_sign(problem) * problem.beta * out.fairness;
  out.feasible = out.max_violation <= oracle_detail::kFeasibilitySlack;
  return out;
}

namespace oracle_detail {

struct Candidate {
  bool feasible = false;
  double violation = 0.0;
  double objective = 0.0;
  bool valid = false;
};

// Feasible beats infeasible; then objective; infeasible ties resolve by
// violation first. Equal scores keep the incumbent, which enumeration order
// makes the lexicographically smallest schedule.
inline bool improves(const Candidate& incumbent, bool feasible, double violation,
                     double objective) {
  if (!incumbent.valid) return true;
  if (feasible != incumbent.feasible) return feasible;
  if (!feasible && violation != incumbent.violation)
    return violation < incumbent.violation;
  return objective < incumbent.objective;
}

}  // namespace oracle_detail

// Globally optimal schedule over the curtailment grid {0, 1/(L-1), ..., 1}.
// Instant cases decompose per timestep; accumulative cases enumerate the
// joint grid, so the budget confines them to tiny instances.
inline OracleSolution solve_exhaustive(const OracleProblem& problem) {
  problem.validate();
  const std::size_t n = problem.households;
  const std::size_t levels = problem.grid_levels;
  const FeederConfig feeder = problem.oracle_feeder();
  const bool instant =
      problem.instance.fairness.horizon == FairnessHorizon::Instant;

  // candidate counts, overflow-safe against the budget
  double combos_per_block = 1.0;
  const std::size_t digits = instant ? n : n * problem.timesteps;
  for (std::size_t i = 0; i < digits; ++i) combos_per_block *= static_cast<double>(levels);
  const double total_evals =
      instant ? combos_per_block * static_cast<double>(problem.timesteps)
              : combos_per_block;
  if (total_evals > static_cast<double>(problem.evaluation_budget)) {
    throw std::invalid_argument(
        "oracle: exhaustive enumeration needs " + std::to_string(total_evals) +
        " evaluations, over the budget of " +
        std::to_string(problem.evaluation_budget));
  }

  std::vector<double> grid(levels);
  for (std::size_t i = 0; i < levels; ++i)
    grid[i] = static_cast<double>(i) / static_cast<double>(levels - 1);

  std::uint64_t evaluations = 0;
  std::vector<double> best_alpha(problem.timesteps * n, 0.0);

  // rightmost digit fastest: candidates appear in lexicographic order
  const auto advance = [levels](std::vector<std::size_t>& digit) -> bool {
    std::size_t pos = digit.size();
    while (pos > 0) {
      --pos;
      if (++digit[pos] < levels) return true;
      digit[pos] = 0;
    }
    return false;
  };

  if (instant) {
    std::vector<std::size_t> digit(n);
    std::vector<double> alpha_row(n);
    for (std::size_t t = 0; t < problem.timesteps; ++t) {
      std::fill(digit.begin(), digit.end(), 0);
      oracle_detail::Candidate best;
      std::vector<double> best_row(n, 0.0);
      while (true) {
        for (std::size_t h = 0; h < n; ++h) alpha_row[h] = grid[digit[h]];
        const auto eval =
            oracle_detail::evaluate_step(problem, feeder, t, alpha_row);
        ++evaluations;
        const bool feasible =
            eval.max_violation <= oracle_detail::kFeasibilitySlack;
        const double objective =
            eval.cost + oracle_detail::fairness_sign(problem) * problem.beta *
                            eval.instant_fairness;
        if (oracle_detail::improves(best, feasible, eval.violation_sum,
                                    objective)) {
          best = {feasible, eval.violation_sum, objective, true};
          best_row = alpha_row;
        }
        if (!advance(digit)) break;
      }
      std::copy(best_row.begin(), best_row.end(), best_alpha.begin() + t * n);
    }
  } else {
    const std::size_t total_digits = problem.timesteps * n;
    std::vector<std::size_t> digit(total_digits, 0);
    std::vector<double> alpha(total_digits);
    oracle_detail::Candidate best;
    while (true) {
      for (std::size_t i = 0; i < total_digits; ++i) alpha[i] = grid[digit[i]];
      double cost = 0.0, violation = 0.0, viol_max = 0.0;
      for (std::size_t t = 0; t < problem.timesteps; ++t) {
        const auto eval = oracle_detail::evaluate_step(
            problem, feeder, t, {alpha.data() + t * n, n});
        cost += eval.cost;
        violation += eval.violation_sum;
        viol_max = std::max(viol_max, eval.max_violation);
      }
      const double fairness = oracle_detail::accumulative_fairness(problem, alpha);
      ++evaluations;
      const bool feasible = viol_max <= oracle_detail::kFeasibilitySlack;
      const double objective =
          cost + oracle_detail::fairness_sign(problem) * problem.beta * fairness;
      if (oracle_detail::improves(best, feasible, violation, objective)) {
        best = {feasible, violation, objective, true};
        best_alpha = alpha;
      }
      if (!advance(digit)) break;
    }
  }

  OracleSolution solution;
  solution.alpha = problem.make_profile(best_alpha);
  const ProfileEvaluation verdict = evaluate_profile(problem, best_alpha);
  solution.objective = verdict.objective;
  solution.cost = verdict.cost;
  solution.fairness_penalty = verdict.fairness;
  solution.feasible = verdict.feasible;
  solution.max_violation_pu = verdict.max_violation;
  solution.evaluations = evaluations;
  solution.config_hash = config_hash(problem.instance);
  solution.fairness_tag = case_tag(problem.instance.fairness);
  solution.beta = problem.beta;
  return solution;
}

struct DescentOptions {
  double initial_step = 0.2;
  double min_step = 0.01;
  std::size_t max_sweeps = 400;
  double penalty_initial = 1e3;
  double penalty_growth = 10.0;
  std::size_t penalty_every = 50;
};

// Projected coordinate descent on alpha in [0,1]^(T*H). Voltage violations
// enter as an escalating quadratic exterior penalty; feasibility of the
// returned schedule is certified by re-simulation, never assumed.
inline OracleSolution solve_descent(const OracleProblem& problem,
                                    std::span<const double> init,
                                    const DescentOptions& options = {}) {
  problem.validate();
  const std::size_t n = problem.households;
  const std::size_t total = problem.timesteps * n;
  require(init.size() == total, "oracle: init has wrong size");
  const FeederConfig feeder = problem.oracle_feeder();
  const bool instant =
      problem.instance.fairness.horizon == FairnessHorizon::Instant;
  const double sign = oracle_detail::fairness_sign(problem);

  std::vector<double> alpha(init.begin(), init.end());
  for (auto& a : alpha) a = clamp01(a);

  std::vector<oracle_detail::StepEval> cache(problem.timesteps);
  for (std::size_t t = 0; t < problem.timesteps; ++t)
    cache[t] = oracle_detail::evaluate_step(problem, feeder, t,
                                            {alpha.data() + t * n, n});
  double fairness = instant ? 0.0
                            : oracle_detail::accumulative_fairness(problem, alpha);

  auto penalized = [&](double weight) {
    double cost = 0.0, viol_sq = 0.0, inst = 0.0;
    for (const auto& eval : cache) {
      cost += eval.cost;
      viol_sq += eval.violation_sq_sum;
      inst += eval.instant_fairness;
    }
    const double f = instant ? inst : fairness;
    return cost + sign * problem.beta * f + weight * viol_sq;
  };
  auto currently_feasible = [&]() {
    for (const auto& eval : cache)
      if (eval.max_violation > oracle_detail::kFeasibilitySlack) return false;
    return true;
  };
  auto plain_objective = [&]() {
    double cost = 0.0, inst = 0.0;
    for (const auto& eval : cache) {
      cost += eval.cost;
      inst += eval.instant_fairness;
    }
    return cost + sign * problem.beta * (instant ? inst : fairness);
  };

  double weight = options.penalty_initial;
  double step = options.initial_step;
  double current = penalized(weight);

  bool have_best = false;
  std::vector<double> best_alpha = alpha;
  double best_objective = 0.0;
  if (currently_feasible()) {
    have_best = true;
    best_objective = plain_objective();
  }

  OracleSolution solution;
  std::uint64_t evaluations = 0;
  std::size_t sweeps = 0;
  while (step >= options.min_step && sweeps < options.max_sweeps) {
    if (sweeps > 0 && sweeps % options.penalty_every == 0) {
      weight *= options.penalty_growth;
      current = penalized(weight);
    }
    bool accepted_any = false;
    for (std::size_t t = 0; t < problem.timesteps; ++t) {
      for (std::size_t h = 0; h < n; ++h) {
        const std::size_t idx = t * n + h;
        const double base = alpha[idx];
        double chosen_value = base;
        double chosen_obj = current;
        oracle_detail::StepEval chosen_eval = cache[t];
        double chosen_fairness = fairness;
        for (const double direction : {+1.0, -1.0}) {
          const double candidate = clamp01(base + direction * step);
          if (candidate == base) continue;
          alpha[idx] = candidate;
          const auto eval = oracle_detail::evaluate_step(
              problem, feeder, t, {alpha.data() + t * n, n});
          ++evaluations;
          const double cand_fairness =
              instant ? 0.0
                      : oracle_detail::accumulative_fairness(problem, alpha);
          // delta against the cached step contribution
          double obj = current;
          obj -= cache[t].cost + weight * cache[t].violation_sq_sum +
                 sign * problem.beta * (instant ? cache[t].instant_fairness : fairness);
          obj += eval.cost + weight * eval.violation_sq_sum +
                 sign * problem.beta * (instant ? eval.instant_fairness : cand_fairness);
          if (obj < chosen_obj - 1e-12) {
            chosen_obj = obj;
            chosen_value = candidate;
            chosen_eval = eval;
            chosen_fairness = cand_fairness;
          }
          alpha[idx] = base;
        }
        if (chosen_value != base) {
          alpha[idx] = chosen_value;
          cache[t] = chosen_eval;
          fairness = chosen_fairness;
          current = chosen_obj;
          accepted_any = true;
          ++solution.descent_accepted_moves;
          if (currently_feasible()) {
            const double objective = plain_objective();
            if (!have_best || objective < best_objective) {
              have_best = true;
              best_objective = objective;
              best_alpha = alpha;
            }
          }
        }
      }
    }
    ++sweeps;
    if (!accepted_any) step *= 0.5;
  }

  solution.descent_sweeps = sweeps;
  solution.descent_converged = step < options.min_step;
  const std::vector<double>& final_alpha = have_best ? best_alpha : alpha;
  const ProfileEvaluation verdict = evaluate_profile(problem, final_alpha);
  solution.alpha = problem.make_profile(final_alpha);
  solution.objective = verdict.objective;
  solution.cost = verdict.cost;
  solution.fairness_penalty = verdict.fairness;
  solution.feasible = verdict.feasible;
  solution.max_violation_pu = verdict.max_violation;
  solution.evaluations = evaluations;
  solution.config_hash = config_hash(problem.instance);
  solution.fairness_tag = case_tag(problem.instance.fairness);
  solution.beta = problem.beta;
  return solution;
}

inline OracleSolution solve(const OracleProblem& problem) {
  if (problem.mode == OracleMode::Exhaustive) return solve_exhaustive(problem);
  std::vector<double> init(problem.timesteps * problem.households, 0.0);
  return solve_descent(problem, init);
}

// Largest objective increase among schedules one grid level away from the
// exhaustive optimum in a single coordinate; the natural tolerance for
// comparing continuous solutions against the grid optimum.
inline double one_grid_level_gap(const OracleProblem& problem,
                                 const OracleSolution& exhaustive) {
  const std::size_t total = problem.timesteps * problem.households;
  const double level = 1.0 / static_cast<double>(problem.grid_levels - 1);
  std::vector<double> alpha = exhaustive.alpha.alpha;
  double gap = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    const double base = alpha[i];
    for (const double direction : {+1.0, -1.0}) {
      const double candidate = base + direction * level;
      if (candidate < -1e-12 || candidate > 1.0 + 1e-12) continue;
      alpha[i] = clamp01(candidate);
      const ProfileEvaluation eval = evaluate_profile(problem, alpha);
      gap = std::max(gap, eval.objective - exhaustive.objective);
      alpha[i] = base;
    }
  }
  return gap;
}

struct ParetoPoint {
  double weight = 0.0;
  double cost = 0.0;
  double gini = 0.0;
  bool feasible = false;
};

inline std::vector<double> per_household_curtailed_kwh(
    const CurtailmentProfile& profile) {
  std::vector<double> totals(profile.households, 0.0);
  for (std::size_t t = 0; t < profile.timesteps; ++t)
    for (std::size_t h = 0; h < profile.households; ++h)
      totals[h] += profile.alpha_at(t, h) * profile.gen_at(t, h) * profile.step_hours;
  return totals;
}

// Sweep the fairness weight and trace the cost/Gini frontier. Points are
// evaluated independently (parallel when workers > 1) and reported sorted
// by cost.
inline std::vector<ParetoPoint> pareto_sweep(const OracleProblem& problem,
                                             std::span<const double> weights,
                                             std::size_t workers = 1) {
  require(weights.size() >= 2, "pareto: need at least 2 weights");
  std::vector<ParetoPoint> points(weights.size());
  auto run_one = [&](std::size_t i) {
    OracleProblem local = problem;
    local.beta = weights[i];
    const OracleSolution solution = solve(local);
    const auto totals = per_household_curtailed_kwh(solution.alpha);
    points[i] = {weights[i], solution.cost, gini_index(totals),
                 solution.feasible};
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < weights.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t i = w; i < weights.size(); i += workers) run_one(i);
      });
    }
    for (auto& thread : pool) thread.join();
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const ParetoPoint& a, const ParetoPoint& b) {
                     return a.cost < b.cost;
                   });
  return points;
}

inline void write_pareto_csv(std::ostream& out,
                             std::span<const ParetoPoint> points) {
  out << "weight,cost_dollars,gini,feasible\n";
  for (const auto& point : points)
    out << point.weight << ',' << point.cost << ',' << point.gini << ','
        << (point.feasible ? 1 : 0) << '\n';
}

}  // namespace fairfeeder
