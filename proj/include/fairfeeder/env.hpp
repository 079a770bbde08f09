#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "fairfeeder/common.hpp"
#include "fairfeeder/config.hpp"
#include "fairfeeder/dataset.hpp"
#include "fairfeeder/fairness.hpp"
#include "fairfeeder/feeder.hpp"

namespace fairfeeder {

// Amount by which a voltage leaves the safe band, in p.u.
inline double voltage_penalty(double voltage_pu) {
  require(voltage_pu > 0.0, "voltage_penalty: voltage must be positive");
  return std::max(kVoltageLowPu - voltage_pu, 0.0) +
         std::max(voltage_pu - kVoltageHighPu, 0.0);
}

// Observation for the central curtailment agent. The accumulative horizon
// appends each household's running curtailed power sum.
struct EnvState {
  std::vector<double> prev_net_kw;
  std::vector<double> load_kw;
  std::vector<double> gen_kw;
  std::vector<double> prev_voltage_pu;
  std::vector<double> accumulated_curtailment_kw;
  std::size_t t = 0;
  bool accumulative = false;

  std::size_t households() const { return load_kw.size(); }

  std::vector<double> observation() const {
    const std::size_t n = households();
    std::vector<double> obs;
    obs.reserve(accumulative ? 5 * n : 4 * n);
    obs.insert(obs.end(), prev_net_kw.begin(), prev_net_kw.end());
    obs.insert(obs.end(), load_kw.begin(), load_kw.end());
    obs.insert(obs.end(), gen_kw.begin(), gen_kw.end());
    obs.insert(obs.end(), prev_voltage_pu.begin(), prev_voltage_pu.end());
    if (accumulative)
      obs.insert(obs.end(), accumulated_curtailment_kw.begin(),
                 accumulated_curtailment_kw.end());
    return obs;
  }
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  std::vector<double> voltages_pu;    // household nodes 1..H
  std::vector<double> curtailed_kwh;  // alpha * gen * delta per household
  bool done = false;
};

// One 48-step day of the curtailment MDP. Not thread-safe; run one instance
// per rollout worker.
class Environment {
 public:
  Environment(const FeederConfig& feeder, const RewardWeights& weights,
              const FairnessCase& fairness)
      : feeder_(feeder), weights_(weights), fairness_(fairness) {
    feeder_.validate();
    weights_.validate();
    fairness_.validate();
  }

  std::size_t households() const { return feeder_.network.household_count(); }

  std::size_t observation_dim() const {
    return (fairness_.horizon == FairnessHorizon::Accumulative ? 5 : 4) *
           households();
  }

  std::size_t action_dim() const { return households(); }

  const CurtailmentProfile& profile() const { return profile_; }

  EnvState reset(const EpisodeBatch& episode) {
    require(episode.households == households(),
            "env: episode household count mismatch");
    require(episode.load_kw.size() == kSlotsPerDay * households(),
            "env: episode must cover 48 slots");
    episode_ = episode;
    const std::size_t n = households();
    state_.prev_net_kw.assign(n, 0.0);
    state_.prev_voltage_pu.assign(n, 1.0);
    state_.accumulated_curtailment_kw.assign(n, 0.0);
    state_.load_kw.assign(episode_.load_row(0).begin(), episode_.load_row(0).end());
    state_.gen_kw.assign(episode_.gen_row(0).begin(), episode_.gen_row(0).end());
    state_.t = 0;
    state_.accumulative = fairness_.horizon == FairnessHorizon::Accumulative;
    profile_.timesteps = kSlotsPerDay;
    profile_.households = n;
    profile_.alpha.assign(kSlotsPerDay * n, 0.0);
    profile_.generation_kw = episode_.gen_kw;
    profile_.load_kw = episode_.load_kw;
    profile_.step_hours = kStepHours;
    steps_taken_ = 0;
    return state_;
  }

  StepOutcome step(std::span<const double> action) {
    require(action.size() == households(), "env: wrong action length");
    require(steps_taken_ < kSlotsPerDay, "env: episode already finished");
    const std::size_t n = households();
    const std::size_t t = state_.t;

    std::vector<double> alpha(n);
    for (std::size_t h = 0; h < n; ++h) alpha[h] = clamp01(action[h]);

    const auto gen = episode_.gen_row(t);
    const auto load = episode_.load_row(t);
    std::vector<InverterSpec> specs(n);
    for (std::size_t h = 0; h < n; ++h) {
      specs[h].s_max_kva = gen[h];  // rated at the uncurtailed generation
      specs[h].q_max_kvar = feeder_.vvc_q_ratio * gen[h];
    }

    const TimestepResult sim = simulate_timestep(
        feeder_, gen, load, alpha, specs, state_.prev_voltage_pu);

    for (std::size_t h = 0; h < n; ++h) profile_.at_alpha(t, h) = alpha[h];

    StepOutcome outcome;
    outcome.voltages_pu.resize(n);
    outcome.curtailed_kwh.resize(n);
    double reward = 0.0;
    for (std::size_t h = 0; h < n; ++h) {
      const double v = sim.flow.node_voltage_pu[h + 1];
      outcome.voltages_pu[h] = v;
      outcome.curtailed_kwh[h] = alpha[h] * gen[h] * kStepHours;
      reward += (1.0 - alpha[h]) - weights_.w1 * voltage_penalty(v);
    }
    const bool terminal = t + 1 == kSlotsPerDay;
    if (fairness_.horizon == FairnessHorizon::Instant) {
      reward -= weights_.w2 * dispatch(fairness_, profile_, t);
    } else if (terminal) {
      reward -= weights_.w2 * dispatch(fairness_, profile_, t);
    }
    outcome.reward = reward;
    outcome.done = terminal;

    // advance the observation
    EnvState next = state_;
    next.t = t + 1;
    for (std::size_t h = 0; h < n; ++h) {
      next.prev_net_kw[h] = net_power(gen[h], load[h], alpha[h]);
      next.prev_voltage_pu[h] = outcome.voltages_pu[h];
      next.accumulated_curtailment_kw[h] += alpha[h] * gen[h];
    }
    if (!terminal) {
      next.load_kw.assign(episode_.load_row(t + 1).begin(),
                          episode_.load_row(t + 1).end());
      next.gen_kw.assign(episode_.gen_row(t + 1).begin(),
                         episode_.gen_row(t + 1).end());
    }
    state_ = next;
    ++steps_taken_;
    outcome.next_state = state_;
    return outcome;
  }

 private:
  FeederConfig feeder_;
  RewardWeights weights_;
  FairnessCase fairness_;
  EpisodeBatch episode_;
  EnvState state_;
  CurtailmentProfile profile_;
  std::size_t steps_taken_ = 0;
};

struct Trajectory {
  std::vector<std::vector<double>> observations;  // one per step, pre-action
  std::vector<std::vector<double>> actions;       // clamped curtailment
  std::vector<double> rewards;
  std::vector<std::vector<double>> voltages_pu;
  CurtailmentProfile profile;
  double total_reward = 0.0;
};

using Policy = std::function<std::vector<double>(const EnvState&)>;

inline Trajectory rollout(Environment& env, const Policy& policy,
                          const EpisodeBatch& episode) {
  Trajectory trajectory;
  EnvState state = env.reset(episode);
  for (std::size_t t = 0; t < kSlotsPerDay; ++t) {
    trajectory.observations.push_back(state.observation());
    std::vector<double> action = policy(state);
    for (auto& a : action) a = clamp01(a);
    StepOutcome outcome = env.step(action);
    trajectory.actions.push_back(action);
    trajectory.rewards.push_back(outcome.reward);
    trajectory.voltages_pu.push_back(outcome.voltages_pu);
    trajectory.total_reward += outcome.reward;
    state = outcome.next_state;
  }
  trajectory.profile = env.profile();
  return trajectory;
}

// `step,household,alpha,voltage,net_kw,reward` rows for downstream plotting.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "step,household,alpha,voltage,net_kw,reward\n";
  const auto& profile = trajectory.profile;
  for (std::size_t t = 0; t < trajectory.actions.size(); ++t) {
    for (std::size_t h = 0; h < profile.households; ++h) {
      const double net = profile.gen_at(t, h) * (1.0 - profile.alpha_at(t, h)) -
                         profile.load_at(t, h);
      out << t << ',' << h << ',' << profile.alpha_at(t, h) << ','
          << trajectory.voltages_pu[t][h] << ',' << net << ','
          << trajectory.rewards[t] << '\n';
    }
  }
}

}  // namespace fairfeeder
