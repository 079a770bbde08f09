// Command-line front end: synthetic data, network calibration, SAC training,
// policy evaluation, oracle schedules and Pareto sweeps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairfeeder/config.hpp"
#include "fairfeeder/dataset.hpp"
#include "fairfeeder/env.hpp"
#include "fairfeeder/evaluate.hpp"
#include "fairfeeder/oracle.hpp"
#include "fairfeeder/sac.hpp"

namespace ff = fairfeeder;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("FAIRFEEDER_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 1;
}

ff::InstanceConfig load_config_or_die(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  return ff::load_instance_config(path);
}

ff::Dataset load_data_or_die(const ff::InstanceConfig& config) {
  if (config.data.path.empty())
    throw UsageError("config has no data.path; run synth and set it");
  if (!fs::exists(config.data.path))
    throw UsageError("dataset not found: " + config.data.path);
  return ff::load_dataset(config.data.path, config.data.households);
}

void apply_case_overrides(ff::InstanceConfig& config,
                          const std::string& fairness,
                          const std::string& horizon,
                          std::optional<double> w2) {
  if (!fairness.empty())
    config.fairness.definition = ff::fairness_definition_from(fairness);
  if (!horizon.empty())
    config.fairness.horizon = ff::fairness_horizon_from(horizon);
  if (w2) config.reward.w2 = *w2;
}

void write_resolved_config(const fs::path& dir, const ff::InstanceConfig& config) {
  ff::save_instance_config((dir / "resolved_config.json").string(), config);
}

std::vector<double> parse_weights(const std::string& csv) {
  std::vector<double> weights;
  std::stringstream stream(csv);
  std::string token;
  while (std::getline(stream, token, ',')) {
    if (token.empty()) continue;
    weights.push_back(std::stod(token));
  }
  if (weights.size() < 2)
    throw UsageError("--weights needs at least two comma-separated values");
  return weights;
}

int cmd_synth(const std::string& out, std::size_t households, std::size_t days,
              std::optional<std::uint64_t> seed) {
  const ff::Dataset dataset =
      ff::synth_dataset(households, days, resolve_seed(seed));
  ff::save_dataset(out, dataset);
  std::cout << "wrote " << out << " (" << households << " households, " << days
            << " days)\n";
  return kExitOk;
}

int cmd_calibrate(const std::string& data_path, std::size_t households,
                  double target, const std::string& out_config,
                  const std::string& base_config) {
  ff::InstanceConfig config = base_config.empty()
                                  ? ff::default_instance_config(households)
                                  : load_config_or_die(base_config);
  config.data.path = data_path;
  config.data.households = households;
  if (!fs::exists(data_path)) throw UsageError("dataset not found: " + data_path);
  const ff::Dataset dataset = ff::load_dataset(data_path, households);
  config = ff::calibrate_network(config, dataset, target);
  const double peak = ff::uncurtailed_peak_voltage(config, dataset);
  ff::save_instance_config(out_config, config);
  std::cout << "calibrated network written to " << out_config
            << " (uncurtailed peak voltage " << peak << " p.u.)\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& fairness,
              const std::string& horizon, std::optional<double> w2,
              std::optional<std::uint64_t> seed,
              std::optional<std::size_t> steps, std::optional<double> temp0,
              const std::string& out_dir) {
  ff::InstanceConfig config = load_config_or_die(config_path);
  apply_case_overrides(config, fairness, horizon, w2);
  const ff::Dataset dataset = load_data_or_die(config);

  ff::TrainConfig train_config;
  if (steps) train_config.total_steps = *steps;
  if (temp0) train_config.initial_temperature = *temp0;

  fs::create_directories(out_dir);
  write_resolved_config(out_dir, config);

  const std::uint64_t used_seed = resolve_seed(seed);
  const ff::TrainResult result =
      ff::train(config, dataset, train_config, used_seed);
  const fs::path dir(out_dir);
  ff::save_checkpoint((dir / "checkpoint.json").string(), result.checkpoint);
  ff::write_curve_csv((dir / "curve.csv").string(), result.curve);
  std::cout << "trained " << ff::case_tag(config.fairness) << " for "
            << train_config.total_steps << " steps (seed " << used_seed
            << "); final mean step reward "
            << result.curve.back().mean_step_reward << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::string& out_dir, std::size_t workers) {
  if (!fs::exists(checkpoint_path))
    throw UsageError("checkpoint not found: " + checkpoint_path);
  const ff::InstanceConfig config = load_config_or_die(config_path);
  const ff::Dataset dataset = load_data_or_die(config);
  const ff::Checkpoint checkpoint = ff::load_checkpoint(checkpoint_path);
  if (checkpoint.config_hash != ff::config_hash(config)) {
    throw UsageError("checkpoint config hash " +
                     std::to_string(checkpoint.config_hash) +
                     " does not match evaluation config " +
                     std::to_string(ff::config_hash(config)));
  }
  const ff::TrainTestSplit split =
      ff::split_train_test(dataset.days(), config.data.train_fraction,
                           config.data.seed, config.data.split);

  fs::create_directories(out_dir);
  write_resolved_config(out_dir, config);

  std::vector<ff::Trajectory> trajectories;
  const ff::EvalReport report = ff::evaluate_policy(
      checkpoint, config, dataset, split.test_days, &trajectories, workers);
  const fs::path dir(out_dir);
  const std::string tag = ff::case_tag(config.fairness);
  ff::save_report((dir / "report.json").string(), report);
  {
    std::ofstream out(dir / ("curtail_" + tag + ".csv"));
    ff::write_slot_matrix_csv(out, ff::curtailment_matrix(trajectories, 0, 48));
  }
  {
    std::ofstream out(dir / ("export_" + tag + ".csv"));
    ff::write_slot_matrix_csv(out, ff::export_matrix(trajectories, 0, 48));
  }
  {
    std::ofstream out(dir / ("trajectory_" + tag + ".csv"));
    ff::write_trajectory_csv(out, trajectories.front());
  }
  std::cout << "evaluated " << report.days_evaluated << " test days: cost $"
            << report.total_cost << ", gini " << report.gini_curtailment
            << ", max voltage " << report.max_voltage_pu << " p.u.\n";
  return kExitOk;
}

int cmd_oracle(const std::string& config_path, const std::string& fairness,
               const std::string& horizon, double beta, const std::string& mode,
               std::optional<std::size_t> day, const std::string& out_dir) {
  ff::InstanceConfig config = load_config_or_die(config_path);
  apply_case_overrides(config, fairness, horizon, std::nullopt);
  const ff::Dataset dataset = load_data_or_die(config);
  const ff::TrainTestSplit split =
      ff::split_train_test(dataset.days(), config.data.train_fraction,
                           config.data.seed, config.data.split);
  const std::size_t day_index = day.value_or(split.test_days.front());
  if (day_index >= dataset.days())
    throw UsageError("--day out of range for this dataset");

  ff::OracleProblem problem = ff::OracleProblem::from_episode(
      config, ff::extract_day(dataset, day_index), beta,
      mode == "exhaustive" ? ff::OracleMode::Exhaustive
                           : ff::OracleMode::Descent);
  const ff::OracleSolution solution = ff::solve(problem);

  fs::create_directories(out_dir);
  write_resolved_config(out_dir, config);
  const fs::path dir(out_dir);
  {
    nlohmann::json j{{"objective", solution.objective},
                     {"cost", solution.cost},
                     {"fairness_penalty", solution.fairness_penalty},
                     {"feasible", solution.feasible},
                     {"max_violation_pu", solution.max_violation_pu},
                     {"beta", solution.beta},
                     {"mode", mode},
                     {"day", day_index},
                     {"evaluations", solution.evaluations},
                     {"fairness_tag", solution.fairness_tag},
                     {"config_hash", solution.config_hash}};
    std::ofstream out(dir / "solution.json");
    out << j.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "alpha.csv");
    out << "step";
    for (std::size_t h = 0; h < problem.households; ++h) out << ",h" << h;
    out << '\n';
    for (std::size_t t = 0; t < problem.timesteps; ++t) {
      out << t;
      for (std::size_t h = 0; h < problem.households; ++h)
        out << ',' << solution.alpha.alpha_at(t, h);
      out << '\n';
    }
  }
  std::cout << "oracle " << mode << " on day " << day_index << ": cost $"
            << solution.cost << ", fairness " << solution.fairness_penalty
            << ", " << (solution.feasible ? "feasible" : "infeasible") << '\n';
  return kExitOk;
}

int cmd_pareto(const std::string& config_path, const std::string& weights_csv,
               const std::string& solver, const std::string& fairness,
               const std::string& horizon, const std::string& out_file,
               std::optional<std::size_t> day, std::optional<std::size_t> steps,
               std::optional<std::uint64_t> seed, std::size_t workers) {
  ff::InstanceConfig config = load_config_or_die(config_path);
  apply_case_overrides(config, fairness, horizon, std::nullopt);
  const ff::Dataset dataset = load_data_or_die(config);
  const std::vector<double> weights = parse_weights(weights_csv);
  const ff::TrainTestSplit split =
      ff::split_train_test(dataset.days(), config.data.train_fraction,
                           config.data.seed, config.data.split);

  std::vector<ff::ParetoPoint> points;
  if (solver == "oracle") {
    const std::size_t day_index = day.value_or(split.test_days.front());
    ff::OracleProblem problem = ff::OracleProblem::from_episode(
        config, ff::extract_day(dataset, day_index), 0.0,
        ff::OracleMode::Descent);
    points = ff::pareto_sweep(problem, weights, workers);
  } else if (solver == "policy") {
    ff::TrainConfig train_config;
    if (steps) train_config.total_steps = *steps;
    const std::uint64_t base_seed = resolve_seed(seed);
    points.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      ff::InstanceConfig weighted = config;
      weighted.reward.w2 = weights[i];
      const ff::TrainResult result =
          ff::train(weighted, dataset, train_config, base_seed);
      const ff::EvalReport report = ff::evaluate_policy(
          result.checkpoint, weighted, dataset, split.test_days, nullptr, workers);
      points[i] = {weights[i], report.total_cost, report.gini_curtailment,
                   report.voltage_safe()};
    }
    std::stable_sort(points.begin(), points.end(),
                     [](const ff::ParetoPoint& a, const ff::ParetoPoint& b) {
                       return a.cost < b.cost;
                     });
  } else {
    throw UsageError("--solver must be 'oracle' or 'policy'");
  }

  if (const fs::path parent = fs::path(out_file).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream out(out_file);
  if (!out) throw std::runtime_error("cannot write " + out_file);
  ff::write_pareto_csv(out, points);
  std::cout << "wrote " << points.size() << " sweep points to " << out_file << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair PV curtailment workbench: feeder simulation, fairness "
               "penalties, SAC training and an optimization oracle"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "data.csv";
  std::size_t synth_households = 10, synth_days = 30;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--out", synth_out, "output CSV path");
  synth->add_option("--households", synth_households, "number of households");
  synth->add_option("--days", synth_days, "number of days");
  synth->add_option("--seed", synth_seed, "rng seed (FAIRFEEDER_SEED fallback)");

  // calibrate
  auto* calibrate = app.add_subcommand(
      "calibrate", "scale impedances until uncurtailed overvoltage occurs");
  std::string cal_data, cal_out = "config.json", cal_base;
  std::size_t cal_households = 10;
  double cal_target = 1.08;
  calibrate->add_option("--data", cal_data, "dataset CSV")->required();
  calibrate->add_option("--households", cal_households, "number of households");
  calibrate->add_option("--target", cal_target, "uncurtailed peak voltage target");
  calibrate->add_option("--out-config", cal_out, "where to write the config");
  calibrate->add_option("--base-config", cal_base, "start from this config");

  // train
  auto* train = app.add_subcommand("train", "train a SAC curtailment policy");
  std::string train_config_path, train_fairness, train_horizon, train_out = "run";
  std::optional<double> train_w2, train_temp0;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> train_steps;
  train->add_option("--config", train_config_path, "instance config")->required();
  train->add_option("--fairness", train_fairness, "d1|d2|d3 override");
  train->add_option("--horizon", train_horizon, "instant|acc override");
  train->add_option("--w2", train_w2, "fairness weight override");
  train->add_option("--seed", train_seed, "rng seed (FAIRFEEDER_SEED fallback)");
  train->add_option("--steps", train_steps, "total environment steps");
  train->add_option("--temp0", train_temp0, "initial SAC temperature");
  train->add_option("--out", train_out, "output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on test days");
  std::string eval_checkpoint, eval_config, eval_out = "eval";
  std::size_t eval_workers = 1;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint.json")->required();
  eval->add_option("--config", eval_config, "instance config")->required();
  eval->add_option("--out", eval_out, "output directory");
  eval->add_option("--workers", eval_workers, "parallel day workers");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "solve one day with full knowledge");
  std::string oracle_config, oracle_fairness, oracle_horizon,
      oracle_mode = "descent", oracle_out = "oracle";
  double oracle_beta = 1.0;
  std::optional<std::size_t> oracle_day;
  oracle->add_option("--config", oracle_config, "instance config")->required();
  oracle->add_option("--fairness", oracle_fairness, "d1|d2|d3 override");
  oracle->add_option("--horizon", oracle_horizon, "instant|acc override");
  oracle->add_option("--beta", oracle_beta, "fairness weight");
  oracle->add_option("--mode", oracle_mode, "exhaustive|descent")
      ->check(CLI::IsMember({"exhaustive", "descent"}));
  oracle->add_option("--day", oracle_day, "dataset day (default: first test day)");
  oracle->add_option("--out", oracle_out, "output directory");

  // pareto
  auto* pareto = app.add_subcommand("pareto", "sweep the fairness weight");
  std::string pareto_config, pareto_weights = "0,0.5,1,5,10",
              pareto_solver = "oracle", pareto_fairness, pareto_horizon,
              pareto_out = "pareto.csv";
  std::optional<std::size_t> pareto_day, pareto_steps;
  std::optional<std::uint64_t> pareto_seed;
  std::size_t pareto_workers = 1;
  pareto->add_option("--config", pareto_config, "instance config")->required();
  pareto->add_option("--weights", pareto_weights, "comma-separated weights");
  pareto->add_option("--solver", pareto_solver, "oracle|policy")
      ->check(CLI::IsMember({"oracle", "policy"}));
  pareto->add_option("--fairness", pareto_fairness, "d1|d2|d3 override");
  pareto->add_option("--horizon", pareto_horizon, "instant|acc override");
  pareto->add_option("--day", pareto_day, "oracle day (default: first test day)");
  pareto->add_option("--steps", pareto_steps, "policy-solver training steps");
  pareto->add_option("--seed", pareto_seed, "policy-solver seed");
  pareto->add_option("--out", pareto_out, "output CSV");
  pareto->add_option("--workers", pareto_workers, "parallel workers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_households, synth_days, synth_seed);
    if (calibrate->parsed())
      return cmd_calibrate(cal_data, cal_households, cal_target, cal_out, cal_base);
    if (train->parsed())
      return cmd_train(train_config_path, train_fairness, train_horizon,
                       train_w2, train_seed, train_steps, train_temp0,
                       train_out);
    if (eval->parsed())
      return cmd_eval(eval_checkpoint, eval_config, eval_out, eval_workers);
    if (oracle->parsed())
      return cmd_oracle(oracle_config, oracle_fairness, oracle_horizon,
                        oracle_beta, oracle_mode, oracle_day, oracle_out);
    if (pareto->parsed())
      return cmd_pareto(pareto_config, pareto_weights, pareto_solver,
                        pareto_fairness, pareto_horizon, pareto_out, pareto_day,
                        pareto_steps, pareto_seed, pareto_workers);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
