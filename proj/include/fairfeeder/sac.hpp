#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "fairfeeder/common.hpp"
#include "fairfeeder/config.hpp"
#include "fairfeeder/dataset.hpp"
#include "fairfeeder/env.hpp"
#include "fairfeeder/nn.hpp"

namespace fairfeeder {

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

// Fixed-capacity ring with FIFO eviction and uniform sampling without
// replacement within a batch.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    require(capacity > 0, "replay: capacity must be positive");
    storage_.reserve(std::min<std::size_t>(capacity, 1 << 20));
  }

  void push(Transition transition) {
    if (state_dim_ == 0) {
      state_dim_ = transition.state.size();
      action_dim_ = transition.action.size();
    }
    require(transition.state.size() == state_dim_ &&
                transition.next_state.size() == state_dim_ &&
                transition.action.size() == action_dim_,
            "replay: transition dimensions changed");
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(transition));
    } else {
      storage_[next_] = std::move(transition);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return storage_[i]; }

  // Floyd's sampling: k distinct indices, order deterministic under the rng.
  std::vector<std::size_t> sample_indices(std::size_t k, RandomStream& rng) const {
    require(k <= storage_.size(), "replay: batch larger than buffer");
    std::vector<std::size_t> picked;
    picked.reserve(k);
    std::unordered_set<std::size_t> seen;
    for (std::size_t i = storage_.size() - k; i < storage_.size(); ++i) {
      const std::size_t j = rng.index(i + 1);
      if (seen.insert(j).second) picked.push_back(j);
      else {
        seen.insert(i);
        picked.push_back(i);
      }
    }
    return picked;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t next_ = 0;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
};

struct TrainConfig {
  double discount = 0.99;
  double learning_rate = 3e-4;
  std::size_t batch_size = 64;
  std::size_t total_steps = 30000;
  double tau = 5e-3;
  double entropy_target = std::numeric_limits<double>::quiet_NaN();  // -> -H
  std::size_t buffer_capacity = 100000;
  std::size_t warmup_steps = 1000;
  std::vector<std::size_t> hidden = {64, 64};
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  std::size_t updates_per_step = 1;
  double initial_temperature = 0.2;

  void validate() const {
    require(discount > 0.0 && discount < 1.0, "train: discount outside (0, 1)");
    require(learning_rate > 0.0, "train: learning rate must be positive");
    require(batch_size > 0 && total_steps > 0, "train: sizes must be positive");
    require(tau > 0.0 && tau <= 1.0, "train: tau outside (0, 1]");
    require(buffer_capacity >= batch_size, "train: buffer smaller than batch");
    require(!hidden.empty(), "train: need at least one hidden layer");
    require(initial_temperature > 0.0, "train: temperature must be positive");
  }
};

namespace detail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(fast_exp(-x)) : std::log1p(fast_exp(x));
}

// log(1 - tanh(u)^2), stable for large |u|
inline double log_one_minus_tanh_sq(double u) {
  return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace detail

// Diagonal Gaussian squashed into [0,1]^A through (tanh(u) + 1) / 2.
// The head matrix carries [mean | log_std] per row.
struct SquashedSample {
  nn::Matrix actions;   // B x A
  nn::Matrix tanh_u;    // cached squash value
  nn::Matrix sigma;     // post-clamp standard deviations
  nn::Matrix clamped;   // 1.0 where log_std hit its clamp (gradient mask)
  std::vector<double> log_prob;  // per row
};

inline SquashedSample squash_sample(const nn::Matrix& head,
                                    const nn::Matrix& noise,
                                    double log_std_min, double log_std_max) {
  const std::size_t batch = head.rows;
  const std::size_t dim = head.cols / 2;
  SquashedSample out;
  out.actions.resize(batch, dim);
  out.tanh_u.resize(batch, dim);
  out.sigma.resize(batch, dim);
  out.clamped.resize(batch, dim);
  out.log_prob.assign(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double lp = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double mean = head.at(b, d);
      double log_std = head.at(b, dim + d);
      if (log_std < log_std_min || log_std > log_std_max) {
        out.clamped.at(b, d) = 1.0;
        log_std = std::clamp(log_std, log_std_min, log_std_max);
      }
      const double sigma = fast_exp(log_std);
      const double xi = noise.at(b, d);
      const double u = mean + sigma * xi;
      const double t = fast_tanh(u);
      out.actions.at(b, d) = 0.5 * (t + 1.0);
      out.tanh_u.at(b, d) = t;
      out.sigma.at(b, d) = sigma;
      // log N(u; mean, sigma) - log |da/du|, with da/du = (1 - t^2)/2
      lp += -std::log(sigma) - 0.5 * xi * xi - detail::kHalfLog2Pi -
            detail::log_one_minus_tanh_sq(u) + std::log(2.0);
    }
    out.log_prob[b] = lp;
  }
  return out;
}

inline double squashed_log_density(double a, double mean, double sigma) {
  require(a > 0.0 && a < 1.0, "log_density: action outside (0, 1)");
  const double u = std::atanh(2.0 * a - 1.0);
  const double z = (u - mean) / sigma;
  return -std::log(sigma) - 0.5 * z * z - detail::kHalfLog2Pi -
         detail::log_one_minus_tanh_sq(u) + std::log(2.0);
}

struct UpdateLosses {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double mean_log_prob = 0.0;
  double temperature = 0.0;
};

// Soft actor-critic with twin critics, target networks and a learned
// temperature. One agent instance is single-threaded.
class SacAgent {
 public:
  SacAgent(std::size_t obs_dim, std::size_t action_dim, const TrainConfig& config,
           std::uint64_t seed)
      : config_(config),
        obs_dim_(obs_dim),
        action_dim_(action_dim),
        init_rng_(seed),
        policy_(obs_dim, config.hidden, 2 * action_dim, init_rng_),
        q1_(obs_dim + action_dim, config.hidden, 1, init_rng_),
        q2_(obs_dim + action_dim, config.hidden, 1, init_rng_),
        target_q1_(q1_),
        target_q2_(q2_),
        policy_opt_(config.learning_rate),
        q1_opt_(config.learning_rate),
        q2_opt_(config.learning_rate),
        alpha_opt_(config.learning_rate),
        log_alpha_(1, std::log(std::max(config.initial_temperature, 1e-8))),
        log_alpha_grad_(1, 0.0),
        obs_mean_(obs_dim, 0.0),
        obs_std_(obs_dim, 1.0) {
    config_.validate();
    entropy_target_ = std::isnan(config.entropy_target)
                          ? -static_cast<double>(action_dim)
                          : config.entropy_target;
  }

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  double temperature() const { return std::exp(log_alpha_[0]); }
  double entropy_target() const { return entropy_target_; }

  void set_normalization(std::vector<double> mean, std::vector<double> stddev) {
    require(mean.size() == obs_dim_ && stddev.size() == obs_dim_,
            "agent: normalization dimension mismatch");
    obs_mean_ = std::move(mean);
    obs_std_ = std::move(stddev);
    for (auto& s : obs_std_) s = std::max(s, 1e-8);
  }

  const std::vector<double>& obs_mean() const { return obs_mean_; }
  const std::vector<double>& obs_std() const { return obs_std_; }

  void normalize_row(std::span<const double> obs, double* out) const {
    for (std::size_t i = 0; i < obs_dim_; ++i)
      out[i] = (obs[i] - obs_mean_[i]) / obs_std_[i];
  }

  std::vector<double> select_action(std::span<const double> obs, bool stochastic,
                                    RandomStream& rng) {
    require(obs.size() == obs_dim_, "agent: observation dimension mismatch");
    nn::Matrix input(1, obs_dim_);
    normalize_row(obs, input.row(0));
    const nn::Matrix& head = policy_.forward(input);
    std::vector<double> action(action_dim_);
    if (stochastic) {
      nn::Matrix noise(1, action_dim_);
      for (auto& n : noise.d) n = rng.normal();
      const SquashedSample sample = squash_sample(
          head, noise, config_.log_std_min, config_.log_std_max);
      for (std::size_t d = 0; d < action_dim_; ++d)
        action[d] = sample.actions.at(0, d);
    } else {
      for (std::size_t d = 0; d < action_dim_; ++d)
        action[d] = 0.5 * (fast_tanh(head.at(0, d)) + 1.0);
    }
    return action;
  }

  // One gradient update on a replay batch: critics, actor, temperature,
  // then the polyak target move.
  UpdateLosses update(const ReplayBuffer& buffer,
                      std::span<const std::size_t> batch, RandomStream& rng) {
    const std::size_t n = batch.size();
    nn::Matrix states(n, obs_dim_);
    nn::Matrix next_states(n, obs_dim_);
    nn::Matrix actions(n, action_dim_);
    std::vector<double> rewards(n);
    std::vector<double> done(n);
    for (std::size_t b = 0; b < n; ++b) {
      const Transition& tr = buffer.at(batch[b]);
      normalize_row(tr.state, states.row(b));
      normalize_row(tr.next_state, next_states.row(b));
      for (std::size_t d = 0; d < action_dim_; ++d)
        actions.at(b, d) = tr.action[d];
      rewards[b] = tr.reward;
      done[b] = tr.done ? 1.0 : 0.0;
    }

    UpdateLosses losses;
    losses.critic_loss = critic_step(states, actions, rewards, done, next_states, rng);

    nn::Matrix noise(n, action_dim_);
    for (auto& x : noise.d) x = rng.normal();
    double mean_log_prob = 0.0;
    losses.actor_loss = actor_loss_grad(states, noise, true, &mean_log_prob);
    auto policy_refs = policy_.params();
    policy_opt_.step(policy_refs);
    losses.mean_log_prob = mean_log_prob;

    // temperature rises while entropy sits below target
    log_alpha_grad_[0] = -(mean_log_prob + entropy_target_);
    losses.temperature_loss = -log_alpha_[0] * (mean_log_prob + entropy_target_);
    nn::ParamRef alpha_ref{&log_alpha_, &log_alpha_grad_};
    alpha_opt_.step({&alpha_ref, 1});
    losses.temperature = temperature();

    nn::soft_target_update(q1_, target_q1_, config_.tau);
    nn::soft_target_update(q2_, target_q2_, config_.tau);
    return losses;
  }

  // Critic regression toward the entropy-regularized soft target.
  // Exposed with a deterministic noise path so gradients can be FD-checked.
  double critic_step(const nn::Matrix& states, const nn::Matrix& actions,
                     std::span<const double> rewards, std::span<const double> done,
                     const nn::Matrix& next_states, RandomStream& rng) {
    const std::size_t n = states.rows;
    nn::Matrix noise(n, action_dim_);
    for (auto& x : noise.d) x = rng.normal();
    const std::vector<double> targets =
        soft_targets(rewards, done, next_states, noise);
    const double loss = critic_loss_grad(states, actions, targets, true);
    auto q1_refs = q1_.params();
    auto q2_refs = q2_.params();
    q1_opt_.step(q1_refs);
    q2_opt_.step(q2_refs);
    return loss;
  }

  std::vector<double> soft_targets(std::span<const double> rewards,
                                   std::span<const double> done,
                                   const nn::Matrix& next_states,
                                   const nn::Matrix& noise) {
    const std::size_t n = next_states.rows;
    const nn::Matrix& head = policy_.forward(next_states);
    const SquashedSample sample =
        squash_sample(head, noise, config_.log_std_min, config_.log_std_max);
    nn::Matrix joint(n, obs_dim_ + action_dim_);
    join_state_action(next_states, sample.actions, joint);
    const nn::Matrix q1 = target_q1_.forward(joint);
    const nn::Matrix q2 = target_q2_.forward(joint);
    const double alpha = temperature();
    std::vector<double> targets(n);
    for (std::size_t b = 0; b < n; ++b) {
      const double soft_value =
          std::min(q1.at(b, 0), q2.at(b, 0)) - alpha * sample.log_prob[b];
      targets[b] = rewards[b] + config_.discount * (1.0 - done[b]) * soft_value;
    }
    return targets;
  }

  // Mean squared error of both critics against fixed targets. When
  // accumulate is set the parameter gradients are left in place.
  double critic_loss_grad(const nn::Matrix& states, const nn::Matrix& actions,
                          std::span<const double> targets, bool accumulate) {
    const std::size_t n = states.rows;
    nn::Matrix joint(n, obs_dim_ + action_dim_);
    join_state_action(states, actions, joint);
    const nn::Matrix q1 = q1_.forward(joint);
    nn::Matrix dq1(n, 1);
    double loss = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double err = q1.at(b, 0) - targets[b];
      loss += err * err / static_cast<double>(n);
      dq1.at(b, 0) = 2.0 * err / static_cast<double>(n);
    }
    if (accumulate) {
      q1_.zero_grad();
      q1_.backward(dq1);
    }
    const nn::Matrix q2 = q2_.forward(joint);
    nn::Matrix dq2(n, 1);
    for (std::size_t b = 0; b < n; ++b) {
      const double err = q2.at(b, 0) - targets[b];
      loss += err * err / static_cast<double>(n);
      dq2.at(b, 0) = 2.0 * err / static_cast<double>(n);
    }
    if (accumulate) {
      q2_.zero_grad();
      q2_.backward(dq2);
    }
    return loss;
  }

  // Policy objective mean(alpha * log_prob - min(Q1, Q2)) under fixed noise.
  // Gradients reach the policy through both the reparameterized action and
  // the log-density.
  double actor_loss_grad(const nn::Matrix& states, const nn::Matrix& noise,
                         bool accumulate, double* mean_log_prob_out = nullptr) {
    const std::size_t n = states.rows;
    const nn::Matrix& head = policy_.forward(states);
    const SquashedSample sample =
        squash_sample(head, noise, config_.log_std_min, config_.log_std_max);

    nn::Matrix joint(n, obs_dim_ + action_dim_);
    join_state_action(states, sample.actions, joint);
    const nn::Matrix q1 = q1_.forward(joint);
    const nn::Matrix q2 = q2_.forward(joint);

    const double alpha = temperature();
    double loss = 0.0;
    double mean_log_prob = 0.0;
    std::vector<char> q1_binding(n);
    for (std::size_t b = 0; b < n; ++b) {
      const double qmin = std::min(q1.at(b, 0), q2.at(b, 0));
      q1_binding[b] = q1.at(b, 0) <= q2.at(b, 0);
      loss += (alpha * sample.log_prob[b] - qmin) / static_cast<double>(n);
      mean_log_prob += sample.log_prob[b] / static_cast<double>(n);
    }
    if (mean_log_prob_out) *mean_log_prob_out = mean_log_prob;
    if (!accumulate) return loss;

    // dL/da via whichever critic binds the min, row by row
    nn::Matrix dq1(n, 1), dq2(n, 1);
    for (std::size_t b = 0; b < n; ++b) {
      const double g = -1.0 / static_cast<double>(n);
      dq1.at(b, 0) = q1_binding[b] ? g : 0.0;
      dq2.at(b, 0) = q1_binding[b] ? 0.0 : g;
    }
    const nn::Matrix& djoint1 = q1_.backward_input_only(dq1);
    nn::Matrix action_grad(n, action_dim_);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t d = 0; d < action_dim_; ++d)
        action_grad.at(b, d) = djoint1.at(b, obs_dim_ + d);
    const nn::Matrix& djoint2 = q2_.backward_input_only(dq2);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t d = 0; d < action_dim_; ++d)
        action_grad.at(b, d) += djoint2.at(b, obs_dim_ + d);

    nn::Matrix dhead(n, 2 * action_dim_);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t d = 0; d < action_dim_; ++d) {
        const double t = sample.tanh_u.at(b, d);
        const double sigma = sample.sigma.at(b, d);
        const double xi = noise.at(b, d);
        // d log_prob / du = 2 tanh(u); da/du = (1 - t^2)/2
        const double du = alpha * inv_n * 2.0 * t +
                          action_grad.at(b, d) * 0.5 * (1.0 - t * t);
        dhead.at(b, d) = du;
        double dlog_std = du * sigma * xi - alpha * inv_n;
        if (sample.clamped.at(b, d) != 0.0) dlog_std = 0.0;
        dhead.at(b, action_dim_ + d) = dlog_std;
      }
    }
    policy_.zero_grad();
    policy_.backward(dhead);
    return loss;
  }

  nn::Mlp& policy() { return policy_; }
  nn::Mlp& critic1() { return q1_; }
  nn::Mlp& critic2() { return q2_; }
  nn::Mlp& target1() { return target_q1_; }
  nn::Mlp& target2() { return target_q2_; }
  std::vector<double>& log_alpha() { return log_alpha_; }
  const TrainConfig& config() const { return config_; }

 private:
  static void join_state_action(const nn::Matrix& states,
                                const nn::Matrix& actions, nn::Matrix& joint) {
    for (std::size_t b = 0; b < states.rows; ++b) {
      double* row = joint.row(b);
      const double* s = states.row(b);
      const double* a = actions.row(b);
      std::copy(s, s + states.cols, row);
      std::copy(a, a + actions.cols, row + states.cols);
    }
  }

  TrainConfig config_;
  std::size_t obs_dim_;
  std::size_t action_dim_;
  double entropy_target_;
  RandomStream init_rng_;
  nn::Mlp policy_;
  nn::Mlp q1_;
  nn::Mlp q2_;
  nn::Mlp target_q1_;
  nn::Mlp target_q2_;
  nn::Adam policy_opt_;
  nn::Adam q1_opt_;
  nn::Adam q2_opt_;
  nn::Adam alpha_opt_;
  std::vector<double> log_alpha_;
  std::vector<double> log_alpha_grad_;
  std::vector<double> obs_mean_;
  std::vector<double> obs_std_;
};

// --- checkpoints -----------------------------------------------------------

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::string fairness_tag;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::uint64_t seed = 0;
  TrainConfig train_config;
  std::vector<double> obs_mean;
  std::vector<double> obs_std;
  nlohmann::json policy;
  nlohmann::json critic1, critic2, target1, target2;
  double log_alpha = 0.0;
};

inline nlohmann::json mlp_to_json(const nn::Mlp& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : mlp.layers()) {
    layers.push_back({{"in", layer.w.rows},
                      {"out", layer.w.cols},
                      {"w", layer.w.d},
                      {"b", layer.b}});
  }
  return layers;
}

inline void mlp_from_json(const nlohmann::json& j, nn::Mlp& mlp) {
  auto& layers = mlp.layers();
  require(j.is_array() && j.size() == layers.size(),
          "checkpoint: network layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& lj = j[i];
    require(lj.at("in").get<std::size_t>() == layers[i].w.rows &&
                lj.at("out").get<std::size_t>() == layers[i].w.cols,
            "checkpoint: network layer shape mismatch");
    layers[i].w.d = lj.at("w").get<std::vector<double>>();
    layers[i].b = lj.at("b").get<std::vector<double>>();
  }
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"discount", c.discount},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"tau", c.tau},
          {"entropy_target", std::isnan(c.entropy_target)
                                 ? nlohmann::json(nullptr)
                                 : nlohmann::json(c.entropy_target)},
          {"buffer_capacity", c.buffer_capacity},
          {"warmup_steps", c.warmup_steps},
          {"hidden", c.hidden},
          {"log_std_min", c.log_std_min},
          {"log_std_max", c.log_std_max},
          {"updates_per_step", c.updates_per_step},
          {"initial_temperature", c.initial_temperature}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.discount = j.value("discount", 0.99);
  c.learning_rate = j.value("learning_rate", 3e-4);
  c.batch_size = j.value("batch_size", std::size_t{64});
  c.total_steps = j.value("total_steps", std::size_t{30000});
  c.tau = j.value("tau", 5e-3);
  if (j.contains("entropy_target") && !j.at("entropy_target").is_null())
    c.entropy_target = j.at("entropy_target").get<double>();
  c.buffer_capacity = j.value("buffer_capacity", std::size_t{100000});
  c.warmup_steps = j.value("warmup_steps", std::size_t{1000});
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.log_std_min = j.value("log_std_min", -20.0);
  c.log_std_max = j.value("log_std_max", 2.0);
  c.updates_per_step = j.value("updates_per_step", std::size_t{1});
  c.initial_temperature = j.value("initial_temperature", 0.2);
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config_hash"] = ckpt.config_hash;
  j["fairness_tag"] = ckpt.fairness_tag;
  j["obs_dim"] = ckpt.obs_dim;
  j["action_dim"] = ckpt.action_dim;
  j["seed"] = ckpt.seed;
  j["train_config"] = to_json(ckpt.train_config);
  j["obs_mean"] = ckpt.obs_mean;
  j["obs_std"] = ckpt.obs_std;
  j["policy"] = ckpt.policy;
  j["critic1"] = ckpt.critic1;
  j["critic2"] = ckpt.critic2;
  j["target1"] = ckpt.target1;
  j["target2"] = ckpt.target2;
  j["log_alpha"] = ckpt.log_alpha;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
  out << j.dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: parse error in '" + path + "': " +
                             e.what());
  }
  Checkpoint ckpt;
  ckpt.config_hash = j.at("config_hash").get<std::uint64_t>();
  ckpt.fairness_tag = j.value("fairness_tag", "");
  ckpt.obs_dim = j.at("obs_dim").get<std::size_t>();
  ckpt.action_dim = j.at("action_dim").get<std::size_t>();
  ckpt.seed = j.value("seed", std::uint64_t{0});
  ckpt.train_config = train_config_from_json(j.at("train_config"));
  ckpt.obs_mean = j.at("obs_mean").get<std::vector<double>>();
  ckpt.obs_std = j.at("obs_std").get<std::vector<double>>();
  ckpt.policy = j.at("policy");
  ckpt.critic1 = j.value("critic1", nlohmann::json());
  ckpt.critic2 = j.value("critic2", nlohmann::json());
  ckpt.target1 = j.value("target1", nlohmann::json());
  ckpt.target2 = j.value("target2", nlohmann::json());
  ckpt.log_alpha = j.value("log_alpha", 0.0);
  return ckpt;
}

// Deterministic (squashed-mean) policy reconstructed from a checkpoint.
class CheckpointPolicy {
 public:
  explicit CheckpointPolicy(const Checkpoint& ckpt)
      : obs_dim_(ckpt.obs_dim),
        action_dim_(ckpt.action_dim),
        obs_mean_(ckpt.obs_mean),
        obs_std_(ckpt.obs_std) {
    RandomStream rng(0);
    policy_ = nn::Mlp(obs_dim_, ckpt.train_config.hidden, 2 * action_dim_, rng);
    mlp_from_json(ckpt.policy, policy_);
    for (auto& s : obs_std_) s = std::max(s, 1e-8);
  }

  std::vector<double> operator()(const EnvState& state) {
    return act(state.observation());
  }

  std::vector<double> act(std::span<const double> obs) {
    require(obs.size() == obs_dim_, "policy: observation dimension mismatch");
    nn::Matrix input(1, obs_dim_);
    for (std::size_t i = 0; i < obs_dim_; ++i)
      input.at(0, i) = (obs[i] - obs_mean_[i]) / obs_std_[i];
    const nn::Matrix& head = policy_.forward(input);
    std::vector<double> action(action_dim_);
    for (std::size_t d = 0; d < action_dim_; ++d)
      action[d] = 0.5 * (fast_tanh(head.at(0, d)) + 1.0);
    return action;
  }

 private:
  std::size_t obs_dim_;
  std::size_t action_dim_;
  std::vector<double> obs_mean_;
  std::vector<double> obs_std_;
  nn::Mlp policy_;
};

// --- training loop ---------------------------------------------------------

struct CurvePoint {
  std::size_t episode = 0;
  double mean_step_reward = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<CurvePoint> curve;
};

inline void write_curve_csv(const std::string& path,
                            std::span<const CurvePoint> curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("curve: cannot write '" + path + "'");
  out << "episode,mean_step_reward\n";
  for (const auto& point : curve)
    out << point.episode << ',' << point.mean_step_reward << '\n';
}

// Off-policy training: uniform-random warmup fills the buffer and fixes the
// observation normalization, then one gradient update follows every
// environment step. Deterministic for a fixed seed.
inline TrainResult train(const InstanceConfig& config, const Dataset& dataset,
                         const TrainConfig& train_config, std::uint64_t seed) {
  config.validate();
  train_config.validate();
  const TrainTestSplit split =
      split_train_test(dataset.days(), config.data.train_fraction,
                       config.data.seed, config.data.split);
  require(!split.train_days.empty(), "train: empty training split");

  Environment env(config.feeder, config.reward, config.fairness);
  const std::size_t obs_dim = env.observation_dim();
  const std::size_t action_dim = env.action_dim();

  RandomStream root(seed);
  const std::uint64_t agent_seed = root.fork();
  RandomStream episode_rng(root.fork());
  RandomStream action_rng(root.fork());
  RandomStream update_rng(root.fork());

  SacAgent agent(obs_dim, action_dim, train_config, agent_seed);
  ReplayBuffer buffer(train_config.buffer_capacity);

  TrainResult result;
  std::size_t steps = 0;
  std::size_t episode_index = 0;
  bool normalization_frozen = false;

  while (steps < train_config.total_steps) {
    const EpisodeBatch episode = sample_episode(dataset, split.train_days, episode_rng);
    EnvState state = env.reset(episode);
    double episode_reward = 0.0;
    for (std::size_t t = 0; t < kSlotsPerDay; ++t) {
      const std::vector<double> obs = state.observation();
      std::vector<double> action(action_dim);
      if (steps < train_config.warmup_steps) {
        for (auto& a : action) a = action_rng.uniform01();
      } else {
        action = agent.select_action(obs, true, action_rng);
      }
      StepOutcome outcome = env.step(action);
      Transition transition;
      transition.state = obs;
      transition.action = action;
      transition.reward = outcome.reward;
      transition.next_state = outcome.next_state.observation();
      transition.done = outcome.done;
      buffer.push(std::move(transition));
      episode_reward += outcome.reward;
      state = outcome.next_state;
      ++steps;

      if (!normalization_frozen && steps >= train_config.warmup_steps) {
        std::vector<double> mean(obs_dim, 0.0), stddev(obs_dim, 0.0);
        const double count = static_cast<double>(buffer.size());
        for (std::size_t i = 0; i < buffer.size(); ++i)
          for (std::size_t k = 0; k < obs_dim; ++k)
            mean[k] += buffer.at(i).state[k] / count;
        for (std::size_t i = 0; i < buffer.size(); ++i)
          for (std::size_t k = 0; k < obs_dim; ++k) {
            const double d = buffer.at(i).state[k] - mean[k];
            stddev[k] += d * d / count;
          }
        for (auto& s : stddev) s = std::sqrt(s);
        agent.set_normalization(std::move(mean), std::move(stddev));
        normalization_frozen = true;
      }

      if (steps >= train_config.warmup_steps &&
          buffer.size() >= train_config.batch_size) {
        for (std::size_t u = 0; u < train_config.updates_per_step; ++u) {
          const auto batch =
              buffer.sample_indices(train_config.batch_size, update_rng);
          agent.update(buffer, batch, update_rng);
        }
      }
    }
    result.curve.push_back(
        {episode_index, episode_reward / static_cast<double>(kSlotsPerDay)});
    ++episode_index;
  }

  Checkpoint ckpt;
  ckpt.config_hash = config_hash(config);
  ckpt.fairness_tag = case_tag(config.fairness);
  ckpt.obs_dim = obs_dim;
  ckpt.action_dim = action_dim;
  ckpt.seed = seed;
  ckpt.train_config = train_config;
  ckpt.obs_mean = agent.obs_mean();
  ckpt.obs_std = agent.obs_std();
  ckpt.policy = mlp_to_json(agent.policy());
  ckpt.critic1 = mlp_to_json(agent.critic1());
  ckpt.critic2 = mlp_to_json(agent.critic2());
  ckpt.target1 = mlp_to_json(agent.target1());
  ckpt.target2 = mlp_to_json(agent.target2());
  ckpt.log_alpha = agent.log_alpha()[0];
  result.checkpoint = std::move(ckpt);
  return result;
}

}  // namespace fairfeeder
