// Copyright 2026 The agentemb Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "agentemb/cartpole_env.hpp"
#include "agentemb/errors.hpp"
#include "agentemb/nn_core.hpp"
#include "agentemb/rng.hpp"

namespace agentemb {

inline constexpr std::size_t kStateDim = 4;
inline constexpr std::size_t kHiddenUnits = 30;
inline constexpr std::size_t kNumActions = 2;
/// 30*4 + 30 + 2*30 + 2.
inline constexpr std::size_t kWeightCount =
    kHiddenUnits * kStateDim + kHiddenUnits + kNumActions * kHiddenUnits + kNumActions;

/// Canonical flat serialization of one CartPoleNet.
using WeightVector = std::vector<double>;

using QValues = std::array<double, kNumActions>;

inline std::array<double, kStateDim> to_input(const CartState& s) {
  return {s.x, s.x_dot, s.theta, s.theta_dot};
}

/// 4 -> 30 (ELU) -> 2 (linear) Q-network.
class CartPoleNet {
 public:
  CartPoleNet() : hidden_(kStateDim, kHiddenUnits), output_(kHiddenUnits, kNumActions) {}

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static CartPoleNet random(Rng& rng) {
    CartPoleNet net;
    net.hidden_.init_uniform(rng);
    net.output_.init_uniform(rng);
    return net;
  }

  DenseLayer& hidden() { return hidden_; }
  const DenseLayer& hidden() const { return hidden_; }
  DenseLayer& output() { return output_; }
  const DenseLayer& output() const { return output_; }

  QValues qvalues(const CartState& s) const {
    std::array<double, kHiddenUnits> h;
    QValues q;
    activations(s, h, q);
    return q;
  }

  /// Post-ELU hidden activations and raw Q outputs for state s.
  void activations(const CartState& s, std::span<double, kHiddenUnits> hidden_out,
                   std::span<double, kNumActions> q_out) const {
    const auto x = to_input(s);
    hidden_.forward(x, hidden_out);
    for (double& h : hidden_out) h = elu(h);
    output_.forward(std::span<const double>(hidden_out.data(), kHiddenUnits), q_out);
  }

  bool all_finite() const { return hidden_.all_finite() && output_.all_finite(); }

  friend bool operator==(const CartPoleNet&, const CartPoleNet&) = default;

 private:
  DenseLayer hidden_;
  DenseLayer output_;
};

/// Layout: hidden W row-major (rows = hidden units), hidden b, output W
/// row-major, output b.
inline WeightVector vectorize(const CartPoleNet& net) {
  WeightVector v(kWeightCount);
  const std::size_t n1 = net.hidden().parameter_count();
  net.hidden().copy_parameters(std::span<double>(v).first(n1));
  net.output().copy_parameters(std::span<double>(v).subspan(n1));
  return v;
}

inline CartPoleNet devectorize(std::span<const double> v) {
  require(v.size() == kWeightCount, "devectorize: expected " + std::to_string(kWeightCount) +
                                        " weights, got " + std::to_string(v.size()));
  CartPoleNet net;
  const std::size_t n1 = net.hidden().parameter_count();
  net.hidden().load_parameters(v.first(n1));
  net.output().load_parameters(v.subspan(n1));
  return net;
}

/// Argmax over Q-values; ties go to Left.
inline Action greedy_action(const QValues& q) {
  return q[1] > q[0] ? Action::kRight : Action::kLeft;
}

/// With probability epsilon a uniformly random action, else greedy. No random
/// number is consumed when epsilon is 0.
inline Action act_epsilon(const QValues& q, double epsilon, Rng& rng) {
  require(epsilon >= 0.0 && epsilon <= 1.0, "act_epsilon: epsilon must lie in [0, 1]");
  if (epsilon > 0.0 && rng.uniform() < epsilon)
    return rng.index(2) == 0 ? Action::kLeft : Action::kRight;
  return greedy_action(q);
}

struct ReplayTransition {
  CartState state;
  Action action = Action::kLeft;
  double reward = 0.0;
  CartState next_state;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    require(capacity >= 1, "ReplayBuffer: capacity must be positive");
    data_.reserve(capacity);
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(const ReplayTransition& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[head_] = t;
    }
    head_ = (head_ + 1) % capacity_;
  }

  const ReplayTransition& operator[](std::size_t i) const { return data_[i]; }

  /// Indices of `batch` distinct transitions, uniformly chosen.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
    require(batch <= data_.size(), "ReplayBuffer::sample_indices: batch larger than buffer");
    std::vector<std::size_t> out;
    out.reserve(batch);
    // Floyd's algorithm: distinct indices with one draw per pick.
    const std::size_t n = data_.size();
    for (std::size_t j = n - batch; j < n; ++j) {
      const std::size_t t = static_cast<std::size_t>(rng.index(j + 1));
      if (std::find(out.begin(), out.end(), t) == out.end()) {
        out.push_back(t);
      } else {
        out.push_back(j);
      }
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<ReplayTransition> data_;
};

struct TrainConfig {
  /// Environment steps; one minibatch update per step once the buffer holds
  /// a full batch.
  std::uint64_t train_steps = 20000;
  double discount = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  /// Share of train_steps over which epsilon decays linearly.
  double epsilon_decay_fraction = 0.5;
  std::size_t buffer_capacity = 10000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;

  void validate() const {
    require(discount > 0.0 && discount <= 1.0, "TrainConfig: discount must lie in (0, 1]");
    require(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0,
            "TrainConfig: epsilon bounds must lie in [0, 1]");
    require(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0,
            "TrainConfig: epsilon_decay_fraction must lie in [0, 1]");
    require(buffer_capacity >= 1 && batch_size >= 1 && batch_size <= buffer_capacity,
            "TrainConfig: need 1 <= batch_size <= buffer_capacity");
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
  }

  double epsilon_at(std::uint64_t step) const {
    const double decay_steps = epsilon_decay_fraction * static_cast<double>(train_steps);
    if (decay_steps <= 0.0 || static_cast<double>(step) >= decay_steps) return epsilon_end;
    const double frac = static_cast<double>(step) / decay_steps;
    return epsilon_start + (epsilon_end - epsilon_start) * frac;
  }
};

/// Called with (steps completed, current net) at requested checkpoints.
using CheckpointFn = std::function<void(std::uint64_t, const CartPoleNet&)>;

namespace detail {

/// Accumulates d(0.5 * (q[a] - target)^2 * scale)/dtheta into `grad`.
inline void accumulate_td_gradient(const CartPoleNet& net, const CartState& s, Action a,
                                   double target, double scale, std::span<double> grad) {
  const auto x = to_input(s);
  std::array<double, kHiddenUnits> pre;
  std::array<double, kHiddenUnits> post;
  QValues q;
  net.hidden().forward(x, pre);
  for (std::size_t i = 0; i < kHiddenUnits; ++i) post[i] = elu(pre[i]);
  net.output().forward(post, q);

  QValues grad_q{0.0, 0.0};
  const std::size_t ai = static_cast<std::size_t>(a);
  grad_q[ai] = (q[ai] - target) * scale;

  const std::size_t n1 = net.hidden().parameter_count();
  std::array<double, kHiddenUnits> grad_h;
  net.output().backward(post, grad_q, grad.subspan(n1), grad_h);
  for (std::size_t i = 0; i < kHiddenUnits; ++i) grad_h[i] *= elu_grad(pre[i]);
  net.hidden().backward(x, grad_h, grad.first(n1), {});
}

}  // namespace detail

/// Q-learning with experience replay and a linearly decreasing epsilon-greedy
/// behaviour policy. Targets r + discount * max_a' q(s')[a'] come from the
/// network being trained; terminal next states contribute no bootstrap term.
/// Episodes cut at the step cap are not treated as terminal.
inline CartPoleNet train_agent(const TrainConfig& config, Rng& rng,
                               std::span<const std::uint64_t> checkpoint_steps = {},
                               const CheckpointFn& on_checkpoint = {},
                               const CartPole& env = CartPole()) {
  config.validate();
  CartPoleNet net = CartPoleNet::random(rng);
  ReplayBuffer buffer(config.buffer_capacity);
  AdamState adam(kWeightCount, AdamConfig{.learning_rate = config.learning_rate});
  WeightVector params = vectorize(net);
  WeightVector grad(kWeightCount);

  auto next_checkpoint = checkpoint_steps.begin();
  auto fire_checkpoints = [&](std::uint64_t done) {
    while (next_checkpoint != checkpoint_steps.end() && *next_checkpoint <= done) {
      if (on_checkpoint) on_checkpoint(done, net);
      ++next_checkpoint;
    }
  };
  fire_checkpoints(0);

  CartState s = env.reset(rng);
  int episode_steps = 0;
  const double scale = 1.0 / static_cast<double>(config.batch_size);
  for (std::uint64_t step = 0; step < config.train_steps; ++step) {
    const Action a = act_epsilon(net.qvalues(s), config.epsilon_at(step), rng);
    const StepResult next = env.step(s, a);
    buffer.push({s, a, next.reward, next.state, next.terminal});
    ++episode_steps;
    if (next.terminal || episode_steps >= env.config().max_steps) {
      s = env.reset(rng);
      episode_steps = 0;
    } else {
      s = next.state;
    }

    if (buffer.size() >= config.batch_size) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t idx : buffer.sample_indices(config.batch_size, rng)) {
        const auto& tr = buffer[idx];
        double target = tr.reward;
        if (!tr.terminal) {
          const QValues qn = net.qvalues(tr.next_state);
          target += config.discount * std::max(qn[0], qn[1]);
        }
        detail::accumulate_td_gradient(net, tr.state, tr.action, target, scale, grad);
      }
      try {
        adam_step(params, grad, adam);
      } catch (const PoisonedGradient& e) {
        throw NumericalFailure("train_agent: diverged at step " + std::to_string(step + 1) + ": " + e.what());
      }
      net = devectorize(params);
      if (!net.all_finite())
        throw NumericalFailure("train_agent: non-finite weights after step " + std::to_string(step + 1));
    }
    fire_checkpoints(step + 1);
  }
  return net;
}

/// One greedy (epsilon = 0) episode.
inline int greedy_episode(const CartPoleNet& net, Rng& rng, const CartPole& env = CartPole()) {
  return env.run_episode([&](const CartState& st) { return greedy_action(net.qvalues(st)); }, rng)
      .steps_survived;
}

/// Mean greedy episode length over `n_episodes` fresh resets.
inline double survival_time(const CartPoleNet& net, int n_episodes, Rng& rng,
                            const CartPole& env = CartPole()) {
  require(n_episodes >= 1, "survival_time: n_episodes must be >= 1");
  long total = 0;
  for (int e = 0; e < n_episodes; ++e) total += greedy_episode(net, rng, env);
  return static_cast<double>(total) / n_episodes;
}

inline double survival_time(std::span<const double> weights, int n_episodes, Rng& rng) {
  return survival_time(devectorize(weights), n_episodes, rng);
}

}  // namespace agentemb
