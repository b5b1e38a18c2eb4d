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

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "agentemb/agent.hpp"
#include "agentemb/cartpolegen.hpp"
#include "agentemb/errors.hpp"
#include "agentemb/parallel.hpp"
#include "agentemb/rng.hpp"

namespace agentemb {

/// Posterior mean of the encoder.
inline std::vector<double> embed(const GenModel& model, std::span<const double> weights,
                                 std::optional<Group> label = std::nullopt) {
  return model.encode(weights, label).mu;
}

/// (1 - alpha) a + alpha b; alpha > 1 extrapolates past b.
inline std::vector<double> lerp(std::span<const double> a, std::span<const double> b, double alpha) {
  require(a.size() == b.size(), "lerp: vectors differ in length");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - alpha) * a[i] + alpha * b[i];
  return out;
}

/// `count` evenly spaced values from lo to hi inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

/// The default sweep grid: 20 points over [0, 1.5].
inline std::vector<double> default_alphas() { return linspace(0.0, 1.5, 20); }

struct SweepRecord {
  double alpha = 0.0;
  double survival_latent = 0.0;
  double survival_weight = 0.0;
  double baseline_line = 0.0;
};

struct SweepResult {
  std::vector<SweepRecord> records;
  /// Survival of decode(embed(wA)) and decode(embed(wB)).
  double endpoint_a = 0.0;
  double endpoint_b = 0.0;
};

struct SweepOptions {
  int eval_episodes = 100;
  std::uint64_t eval_seed = 0;
  std::optional<Group> label;
  std::size_t workers = 1;
};

/// Survival along latent-space and weight-space interpolation paths.
///
/// Every network is evaluated on the same episode seeds (`eval_seed`), so
/// the alpha = 0 point reproduces endpoint_a exactly. baseline_line is the
/// straight line through (0, endpoint_a) and (1, endpoint_b).
inline SweepResult sweep(const GenModel& model, std::span<const double> wa, std::span<const double> wb,
                         std::span<const double> alphas, const SweepOptions& opt) {
  require(wa.size() == kWeightCount && wb.size() == kWeightCount, "sweep: endpoints must be weight vectors");
  const auto za = embed(model, wa, opt.label);
  const auto zb = embed(model, wb, opt.label);
  auto evaluate = [&](std::span<const double> w) {
    Rng rng(opt.eval_seed);
    return survival_time(w, opt.eval_episodes, rng);
  };
  SweepResult out;
  out.endpoint_a = evaluate(model.decode(za, opt.label));
  out.endpoint_b = evaluate(model.decode(zb, opt.label));
  out.records = parallel_map(alphas.size(), opt.workers, [&](std::size_t i) {
    const double alpha = alphas[i];
    SweepRecord r;
    r.alpha = alpha;
    r.survival_latent = evaluate(model.decode(lerp(za, zb, alpha), opt.label));
    r.survival_weight = evaluate(lerp(wa, wb, alpha));
    r.baseline_line = out.endpoint_a + alpha * (out.endpoint_b - out.endpoint_a);
    return r;
  });
  return out;
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRecord> records) {
  const auto old_precision = os.precision(10);
  os << "alpha,survival_latent,survival_weight,baseline_line\n";
  for (const auto& r : records)
    os << r.alpha << ',' << r.survival_latent << ',' << r.survival_weight << ',' << r.baseline_line << '\n';
  os.precision(old_precision);
}

}  // namespace agentemb
