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
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "agentemb/agent.hpp"
#include "agentemb/cartpolegen.hpp"
#include "agentemb/errors.hpp"
#include "agentemb/rng.hpp"
#include "agentemb/zoo.hpp"

namespace agentemb {

/// A network with some weights missing (zeroed) or untrusted.
struct DamagedNet {
  WeightVector weights;
  std::vector<bool> missing_mask;
  /// Survival of the undamaged network, measured on `eval_seed`.
  double original_survival = 0.0;
  std::uint64_t eval_seed = 0;
  int eval_episodes = 100;

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count(missing_mask.begin(), missing_mask.end(), true));
  }
};

/// Zeroes round(fraction * 212) positions chosen uniformly without
/// replacement. The original network's survival is measured on a seed drawn
/// from `rng` and stored alongside, so repaired networks can be scored on the
/// same test episodes.
inline DamagedNet degrade(std::span<const double> w, double fraction, Rng& rng, int eval_episodes = 100) {
  require(w.size() == kWeightCount, "degrade: expected a 212-element weight vector");
  require(fraction >= 0.0 && fraction <= 1.0, "degrade: fraction must lie in [0, 1]");
  DamagedNet d;
  d.weights.assign(w.begin(), w.end());
  d.missing_mask.assign(w.size(), false);
  d.eval_episodes = eval_episodes;
  const auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(w.size())));
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(idx.size() - i));
    std::swap(idx[i], idx[j]);
    d.missing_mask[idx[i]] = true;
    d.weights[idx[i]] = 0.0;
  }
  d.eval_seed = rng.next_u64();
  Rng eval(d.eval_seed);
  d.original_survival = survival_time(w, eval_episodes, eval);
  return d;
}

/// Wraps an arbitrary (e.g. corrupted-weight) mask. Masked entries are
/// zeroed in the stored weights.
inline DamagedNet with_mask(std::span<const double> original, std::vector<bool> mask, std::uint64_t eval_seed,
                            int eval_episodes = 100) {
  require(original.size() == kWeightCount && mask.size() == kWeightCount, "with_mask: wrong lengths");
  DamagedNet d;
  d.weights.assign(original.begin(), original.end());
  d.missing_mask = std::move(mask);
  for (std::size_t i = 0; i < d.weights.size(); ++i)
    if (d.missing_mask[i]) d.weights[i] = 0.0;
  d.eval_seed = eval_seed;
  d.eval_episodes = eval_episodes;
  Rng eval(eval_seed);
  d.original_survival = survival_time(original, eval_episodes, eval);
  return d;
}

/// Squared distance over the existing (unmasked) weights only.
inline double missing_criterion(const DamagedNet& d, std::span<const double> c) {
  require(c.size() == d.weights.size(), "missing_criterion: candidate has wrong length");
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (d.missing_mask[i]) continue;
    const double diff = d.weights[i] - c[i];
    s += diff * diff;
  }
  return s;
}

/// Squared distance over all weights; masked slots compare against zero.
inline double whole_criterion(const DamagedNet& d, std::span<const double> c) {
  require(c.size() == d.weights.size(), "whole_criterion: candidate has wrong length");
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double diff = d.weights[i] - c[i];
    s += diff * diff;
  }
  return s;
}

enum class Criterion { kMissing, kWhole };

inline std::string to_string(Criterion c) { return c == Criterion::kMissing ? "missing" : "whole"; }

inline double score(Criterion c, const DamagedNet& d, std::span<const double> candidate) {
  return c == Criterion::kMissing ? missing_criterion(d, candidate) : whole_criterion(d, candidate);
}

/// d's existing weights with the masked slots taken from `candidate`.
inline WeightVector patch(const DamagedNet& d, std::span<const double> candidate) {
  WeightVector out = d.weights;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (d.missing_mask[i]) out[i] = candidate[i];
  return out;
}

struct RepairOptions {
  /// Number of networks drawn from the generator.
  std::size_t sample_budget = 200;
  /// Candidates evaluated after ranking.
  std::size_t top_k = 10;
  double epsilon = 5.0;
  Criterion criterion = Criterion::kWhole;
  SampleMode sample_mode = SampleMode::kPosterior;
  std::optional<Group> label;
};

struct RepairOutcome {
  bool success = false;
  std::optional<WeightVector> candidate;
  double repaired_survival = 0.0;
  double st_error = std::numeric_limits<double>::infinity();
  std::size_t samples_used = 0;
};

/// Rejection-sampling repair: draw sample_budget networks, rank them by the
/// criterion (ascending, stable), and accept the first of the top_k whose
/// patched network survives within epsilon of the original. Patched
/// networks are scored on the damaged net's evaluation seed. On failure the
/// smallest observed error is reported and no candidate is returned.
inline RepairOutcome repair(const DamagedNet& d, const GenModel& model, const Zoo* source,
                            const RepairOptions& opt, Rng& rng) {
  require(d.weights.size() == kWeightCount && d.missing_mask.size() == kWeightCount,
          "repair: damaged net has wrong shape");
  RepairOutcome out;
  if (opt.sample_budget == 0) return out;
  const auto candidates = sample_networks(model, opt.sample_budget, opt.sample_mode, source, opt.label, rng);
  out.samples_used = candidates.size();

  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) scores[i] = score(opt.criterion, d, candidates[i]);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const std::size_t k = std::min(opt.top_k, order.size());
  for (std::size_t r = 0; r < k; ++r) {
    const WeightVector patched = patch(d, candidates[order[r]]);
    Rng eval(d.eval_seed);
    const double st = survival_time(patched, d.eval_episodes, eval);
    const double err = std::abs(st - d.original_survival);
    if (err < out.st_error) {
      out.st_error = err;
      out.repaired_survival = st;
    }
    if (err < opt.epsilon) {
      out.success = true;
      out.candidate = candidates[order[r]];
      out.st_error = err;
      out.repaired_survival = st;
      return out;
    }
  }
  return out;
}

struct RepairSweepRow {
  double fraction = 0.0;
  Criterion criterion = Criterion::kWhole;
  bool success = false;
  double st_error = 0.0;
  std::size_t samples_used = 0;
  double original_survival = 0.0;
  double repaired_survival = 0.0;
};

/// Degradation levels 0.1, 0.2, ..., 1.0.
inline std::vector<double> default_degradation_levels() {
  std::vector<double> out;
  for (int i = 1; i <= 10; ++i) out.push_back(i / 10.0);
  return out;
}

/// For each level: one degradation of `w`, then a repair under each
/// criterion with identical generator draws.
inline std::vector<RepairSweepRow> repair_sweep(std::span<const double> w, const GenModel& model, const Zoo* source,
                                                std::span<const double> levels, RepairOptions opt, std::uint64_t seed,
                                                int eval_episodes = 100) {
  std::vector<RepairSweepRow> rows;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    Rng degrade_rng(derive_seed(seed, 2 * li));
    const DamagedNet d = degrade(w, levels[li], degrade_rng, eval_episodes);
    for (Criterion c : {Criterion::kMissing, Criterion::kWhole}) {
      opt.criterion = c;
      Rng sample_rng(derive_seed(seed, 2 * li + 1));
      const RepairOutcome o = repair(d, model, source, opt, sample_rng);
      rows.push_back({levels[li], c, o.success, o.st_error, o.samples_used, d.original_survival,
                      o.repaired_survival});
    }
  }
  return rows;
}

inline void write_repair_csv(std::ostream& os, std::span<const RepairSweepRow> rows) {
  const auto old_precision = os.precision(10);
  os << "degradation_fraction,criterion,success,st_error,samples_used\n";
  for (const auto& r : rows)
    os << r.fraction << ',' << to_string(r.criterion) << ',' << (r.success ? 1 : 0) << ',' << r.st_error << ','
       << r.samples_used << '\n';
  os.precision(old_precision);
}

}  // namespace agentemb
