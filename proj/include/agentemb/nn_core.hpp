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
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "agentemb/errors.hpp"
#include "agentemb/rng.hpp"

namespace agentemb {

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

/// d elu / dx.
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

enum class Activation { kLinear, kElu };

inline double activate(Activation a, double x) {
  return a == Activation::kElu ? elu(x) : x;
}

inline double activate_grad(Activation a, double x) {
  return a == Activation::kElu ? elu_grad(x) : 1.0;
}

/// Fully connected layer y = W x + b with W stored row-major (out x in).
///
/// Parameters flatten as W (row-major) followed by b.
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in_(in_dim), out_(out_dim), weights_(in_dim * out_dim, 0.0), bias_(out_dim, 0.0) {}

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  std::size_t parameter_count() const { return weights_.size() + bias_.size(); }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> bias() { return bias_; }
  std::span<const double> bias() const { return bias_; }

  double& weight(std::size_t row, std::size_t col) { return weights_[row * in_ + col]; }
  double weight(std::size_t row, std::size_t col) const { return weights_[row * in_ + col]; }

  /// Uniform in [-1/sqrt(in), 1/sqrt(in)] for weights and biases.
  void init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (double& w : weights_) w = rng.uniform(-bound, bound);
    for (double& b : bias_) b = rng.uniform(-bound, bound);
  }

  /// Pre-activation output; the caller applies any nonlinearity.
  void forward(std::span<const double> x, std::span<double> y) const {
    require(x.size() == in_, "DenseLayer::forward: expected input of length " +
                                 std::to_string(in_) + ", got " + std::to_string(x.size()));
    require(y.size() == out_, "DenseLayer::forward: output buffer has wrong length");
    for (std::size_t r = 0; r < out_; ++r) {
      const double* row = weights_.data() + r * in_;
      double acc = bias_[r];
      for (std::size_t c = 0; c < in_; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
  }

  std::vector<double> forward(std::span<const double> x) const {
    std::vector<double> y(out_);
    forward(x, y);
    return y;
  }

  /// Accumulates dL/dW and dL/db into `grad_params` (same layout as the
  /// flattened parameters). When `grad_x` is non-empty it is overwritten with
  /// dL/dx = W^T grad_out.
  void backward(std::span<const double> x, std::span<const double> grad_out,
                std::span<double> grad_params, std::span<double> grad_x) const {
    require(x.size() == in_ && grad_out.size() == out_,
            "DenseLayer::backward: dimension mismatch");
    require(grad_params.size() == parameter_count(),
            "DenseLayer::backward: gradient buffer has wrong length");
    double* gw = grad_params.data();
    double* gb = gw + weights_.size();
    for (std::size_t r = 0; r < out_; ++r) {
      const double g = grad_out[r];
      gb[r] += g;
      if (g == 0.0) continue;
      double* grow = gw + r * in_;
      for (std::size_t c = 0; c < in_; ++c) grow[c] += g * x[c];
    }
    if (!grad_x.empty()) {
      require(grad_x.size() == in_, "DenseLayer::backward: input gradient buffer has wrong length");
      std::fill(grad_x.begin(), grad_x.end(), 0.0);
      for (std::size_t r = 0; r < out_; ++r) {
        const double g = grad_out[r];
        if (g == 0.0) continue;
        const double* row = weights_.data() + r * in_;
        for (std::size_t c = 0; c < in_; ++c) grad_x[c] += g * row[c];
      }
    }
  }

  void copy_parameters(std::span<double> out) const {
    require(out.size() == parameter_count(), "DenseLayer::copy_parameters: wrong length");
    std::copy(weights_.begin(), weights_.end(), out.begin());
    std::copy(bias_.begin(), bias_.end(), out.begin() + static_cast<std::ptrdiff_t>(weights_.size()));
  }

  void load_parameters(std::span<const double> in) {
    require(in.size() == parameter_count(), "DenseLayer::load_parameters: wrong length");
    std::copy(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(weights_.size()), weights_.begin());
    std::copy(in.begin() + static_cast<std::ptrdiff_t>(weights_.size()), in.end(), bias_.begin());
  }

  bool all_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(weights_.begin(), weights_.end(), finite) &&
           std::all_of(bias_.begin(), bias_.end(), finite);
  }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

/// Total parameter count of a sequence of layers.
inline std::size_t parameter_count(std::span<const DenseLayer> layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

/// Plain feed-forward stack: each layer followed by its activation.
class Mlp {
 public:
  /// Everything `backward` needs from one forward pass.
  struct Tape {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // pre-activation per layer
    std::vector<std::vector<double>> post;  // activation per layer
  };

  Mlp() = default;

  /// `dims` = {in, h1, ..., out}; `activations` has one entry per layer.
  Mlp(std::span<const std::size_t> dims, std::span<const Activation> activations)
      : activations_(activations.begin(), activations.end()) {
    require(dims.size() >= 2, "Mlp: need at least input and output dimensions");
    require(activations.size() + 1 == dims.size(), "Mlp: one activation per layer required");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers_.emplace_back(dims[i], dims[i + 1]);
  }

  std::span<DenseLayer> layers() { return layers_; }
  std::span<const DenseLayer> layers() const { return layers_; }
  std::span<const Activation> activations() const { return activations_; }
  std::size_t parameter_count() const { return agentemb::parameter_count(layers_); }

  void init_uniform(Rng& rng) {
    for (auto& l : layers_) l.init_uniform(rng);
  }

  std::vector<double> forward(std::span<const double> x) const { return record(x).post.back(); }

  Tape record(std::span<const double> x) const {
    Tape tape;
    tape.input.assign(x.begin(), x.end());
    std::span<const double> cur = tape.input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      tape.pre.push_back(layers_[i].forward(cur));
      auto& post = tape.post.emplace_back(tape.pre.back());
      for (double& v : post) v = activate(activations_[i], v);
      cur = tape.post.back();
    }
    return tape;
  }

  /// dLoss/dtheta in canonical flattened order, given dLoss/doutput.
  /// Throws if `tape` was not recorded for input `x` on this stack.
  std::vector<double> backward(const Tape& tape, std::span<const double> x,
                               std::span<const double> upstream) const {
    require(tape.pre.size() == layers_.size() && !tape.pre.empty(),
            "Mlp::backward: no forward pass recorded");
    require(std::equal(x.begin(), x.end(), tape.input.begin(), tape.input.end()),
            "Mlp::backward: recorded forward pass does not match input");
    require(upstream.size() == layers_.back().out_dim(), "Mlp::backward: upstream has wrong length");

    std::vector<double> grad(parameter_count(), 0.0);
    std::vector<std::size_t> offsets(layers_.size());
    for (std::size_t i = 0, off = 0; i < layers_.size(); ++i) {
      offsets[i] = off;
      off += layers_[i].parameter_count();
    }
    std::vector<double> delta(upstream.begin(), upstream.end());
    for (std::size_t li = layers_.size(); li-- > 0;) {
      for (std::size_t r = 0; r < delta.size(); ++r)
        delta[r] *= activate_grad(activations_[li], tape.pre[li][r]);
      std::span<const double> in = li == 0 ? std::span<const double>(tape.input)
                                           : std::span<const double>(tape.post[li - 1]);
      std::vector<double> grad_in(li == 0 ? 0 : in.size());
      layers_[li].backward(in, delta,
                           std::span<double>(grad).subspan(offsets[li], layers_[li].parameter_count()),
                           grad_in);
      delta = std::move(grad_in);
    }
    return grad;
  }

  std::vector<double> parameters() const {
    std::vector<double> out(parameter_count());
    std::size_t off = 0;
    for (const auto& l : layers_) {
      l.copy_parameters(std::span<double>(out).subspan(off, l.parameter_count()));
      off += l.parameter_count();
    }
    return out;
  }

  void set_parameters(std::span<const double> p) {
    require(p.size() == parameter_count(), "Mlp::set_parameters: wrong length");
    std::size_t off = 0;
    for (auto& l : layers_) {
      l.load_parameters(p.subspan(off, l.parameter_count()));
      off += l.parameter_count();
    }
  }

 private:
  std::vector<DenseLayer> layers_;
  std::vector<Activation> activations_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t n, AdamConfig config = {})
      : config_(config), m_(n, 0.0), v_(n, 0.0) {}

  const AdamConfig& config() const { return config_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }
  std::uint64_t step() const { return t_; }
  std::size_t size() const { return m_.size(); }

 private:
  friend void adam_step(std::span<double>, std::span<const double>, AdamState&);

  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

/// One bias-corrected ADAM update in place. A non-finite gradient entry
/// rejects the whole step and leaves params and state untouched.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.m_.size(),
          "adam_step: params, grads and optimizer state must have equal length");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw PoisonedGradient("adam_step: non-finite gradient at index " + std::to_string(i));
  }
  const auto& c = state.config_;
  state.t_ += 1;
  const double t = static_cast<double>(state.t_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.m_[i];
    double& v = state.v_[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace agentemb
