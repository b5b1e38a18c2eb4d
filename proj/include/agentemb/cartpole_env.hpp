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

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <vector>

#include "agentemb/errors.hpp"
#include "agentemb/rng.hpp"

namespace agentemb {

enum class Action : int { kLeft = 0, kRight = 1 };

struct CartState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;

  friend bool operator==(const CartState&, const CartState&) = default;
};

/// Physical constants of the classic Barto/Sutton/Anderson cart-pole, as used
/// by the OpenAI Gym CartPole environment.
struct CartPoleConfig {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_pole_length = 0.5;
  double force = 10.0;
  double dt = 0.02;
  double theta_threshold = 12.0 * std::numbers::pi / 180.0;
  double x_threshold = 2.4;
  double init_range = 0.05;
  int max_steps = 200;
};

struct StepResult {
  CartState state;
  double reward = 0.0;
  bool terminal = false;
};

struct Transition {
  CartState state;
  Action action = Action::kLeft;
  double reward = 0.0;
};

struct EpisodeResult {
  int steps_survived = 0;
  std::optional<std::vector<Transition>> trajectory;
};

using Policy = std::function<Action(const CartState&)>;

class CartPole {
 public:
  explicit CartPole(CartPoleConfig config = {}) : config_(config) {}

  const CartPoleConfig& config() const { return config_; }

  /// Each field uniform in [-init_range, init_range].
  CartState reset(Rng& rng) const {
    const double r = config_.init_range;
    CartState s;
    s.x = rng.uniform(-r, r);
    s.x_dot = rng.uniform(-r, r);
    s.theta = rng.uniform(-r, r);
    s.theta_dot = rng.uniform(-r, r);
    return s;
  }

  bool is_terminal(const CartState& s) const {
    return std::abs(s.x) > config_.x_threshold || std::abs(s.theta) > config_.theta_threshold;
  }

  /// Explicit Euler step. The terminal-causing step is still rewarded.
  StepResult step(const CartState& s, Action action) const {
    require(!is_terminal(s), "CartPole::step: cannot step a terminal state");
    const auto& c = config_;
    const double force = action == Action::kRight ? c.force : -c.force;
    const double total_mass = c.cart_mass + c.pole_mass;
    const double pole_mass_length = c.pole_mass * c.half_pole_length;
    const double cos_t = std::cos(s.theta);
    const double sin_t = std::sin(s.theta);
    const double temp = (force + pole_mass_length * s.theta_dot * s.theta_dot * sin_t) / total_mass;
    const double theta_acc =
        (c.gravity * sin_t - cos_t * temp) /
        (c.half_pole_length * (4.0 / 3.0 - c.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

    StepResult out;
    out.state.x = s.x + c.dt * s.x_dot;
    out.state.x_dot = s.x_dot + c.dt * x_acc;
    out.state.theta = s.theta + c.dt * s.theta_dot;
    out.state.theta_dot = s.theta_dot + c.dt * theta_acc;
    out.reward = 1.0;
    out.terminal = is_terminal(out.state);
    return out;
  }

  /// Runs one episode from a fresh reset until termination or `max_steps`
  /// (defaults to the configured cap of 200).
  template <typename PolicyFn>
  EpisodeResult run_episode(PolicyFn&& policy, Rng& rng, int max_steps = -1,
                            bool record_trajectory = false) const {
    if (max_steps < 0) max_steps = config_.max_steps;
    EpisodeResult result;
    if (record_trajectory) result.trajectory.emplace();
    CartState s = reset(rng);
    for (int t = 0; t < max_steps; ++t) {
      const Action a = policy(s);
      const StepResult next = step(s, a);
      result.steps_survived += 1;
      if (record_trajectory) result.trajectory->push_back({s, a, next.reward});
      if (next.terminal) break;
      s = next.state;
    }
    return result;
  }

 private:
  CartPoleConfig config_;
};

/// Writes a trajectory as JSON lines:
/// {"t":..,"x":..,"x_dot":..,"theta":..,"theta_dot":..,"action":..,"reward":..}
inline void write_trajectory_jsonl(std::ostream& os, const std::vector<Transition>& trajectory) {
  const auto old_precision = os.precision(17);
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const auto& tr = trajectory[t];
    os << "{\"t\":" << t << ",\"x\":" << tr.state.x << ",\"x_dot\":" << tr.state.x_dot
       << ",\"theta\":" << tr.state.theta << ",\"theta_dot\":" << tr.state.theta_dot
       << ",\"action\":" << static_cast<int>(tr.action) << ",\"reward\":" << tr.reward << "}\n";
  }
  os.precision(old_precision);
}

}  // namespace agentemb
