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
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "agentemb/agent.hpp"
#include "agentemb/cartpole_env.hpp"
#include "agentemb/errors.hpp"
#include "agentemb/rng.hpp"
#include "agentemb/zoo.hpp"
#include "json.hpp"

namespace agentemb {

enum class Layer { kHidden, kOutput };

inline std::string to_string(Layer l) { return l == Layer::kHidden ? "hidden" : "output"; }

inline std::size_t unit_count(Layer l) { return l == Layer::kHidden ? kHiddenUnits : kNumActions; }

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Matrix transposed() const {
    Matrix t(cols, rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct ReferenceSet {
  std::vector<CartState> states;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return states.size(); }
};

/// Visits states with a mix of uniform-random rollouts and greedy rollouts of
/// zoo agents (group chosen uniformly among non-empty groups, then an agent
/// uniformly within it). Every non-terminal visited state is kept until `n`
/// are collected. With an empty zoo only random rollouts are used and
/// provenance.random_only_fallback is set.
inline ReferenceSet collect_reference_states(const Zoo& zoo, std::size_t n, Rng& rng,
                                             const CartPole& env = CartPole()) {
  require(n >= 1, "collect_reference_states: n must be >= 1");
  std::array<std::vector<const AgentRecord*>, 4> by_group;
  for (const auto& r : zoo.records) by_group[group_index(r.group)].push_back(&r);
  std::vector<std::size_t> groups;
  for (std::size_t g = 0; g < 4; ++g)
    if (!by_group[g].empty()) groups.push_back(g);

  ReferenceSet refs;
  refs.states.reserve(n);
  std::size_t random_rollouts = 0;
  std::size_t agent_rollouts = 0;
  while (refs.states.size() < n) {
    const bool use_agent = !groups.empty() && rng.uniform() < 0.5;
    CartPoleNet net;
    if (use_agent) {
      const auto& pool = by_group[groups[static_cast<std::size_t>(rng.index(groups.size()))]];
      net = devectorize(pool[static_cast<std::size_t>(rng.index(pool.size()))]->weights);
      ++agent_rollouts;
    } else {
      ++random_rollouts;
    }
    CartState s = env.reset(rng);
    for (int t = 0; t < env.config().max_steps && refs.states.size() < n; ++t) {
      refs.states.push_back(s);
      const Action a = use_agent ? greedy_action(net.qvalues(s))
                                 : (rng.index(2) == 0 ? Action::kLeft : Action::kRight);
      const StepResult next = env.step(s, a);
      if (next.terminal) break;
      s = next.state;
    }
  }
  refs.provenance = {{"size", n},
                     {"seed", rng.seed()},
                     {"random_rollouts", random_rollouts},
                     {"agent_rollouts", agent_rollouts},
                     {"random_only_fallback", groups.empty()}};
  return refs;
}

/// |activation| of every unit of `layer` for every reference state
/// (n_states x units). Hidden units are taken after the ELU, output units
/// are the raw Q-values.
inline Matrix abs_activations(const CartPoleNet& net, std::span<const CartState> states, Layer layer) {
  Matrix m(states.size(), unit_count(layer));
  std::array<double, kHiddenUnits> h;
  QValues q;
  for (std::size_t s = 0; s < states.size(); ++s) {
    net.activations(states[s], h, q);
    if (layer == Layer::kHidden) {
      for (std::size_t u = 0; u < kHiddenUnits; ++u) m(s, u) = std::abs(h[u]);
    } else {
      for (std::size_t u = 0; u < kNumActions; ++u) m(s, u) = std::abs(q[u]);
    }
  }
  return m;
}

struct UnitStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Per-unit mean and population std of |activation|, single streaming pass
/// (Welford).
inline UnitStats activation_stats(const CartPoleNet& net, const ReferenceSet& refs, Layer layer) {
  require(refs.size() >= 1, "activation_stats: empty reference set");
  const std::size_t units = unit_count(layer);
  std::vector<double> mean(units, 0.0), m2(units, 0.0);
  std::array<double, kHiddenUnits> h;
  QValues q;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    net.activations(refs.states[s], h, q);
    const double count = static_cast<double>(s + 1);
    for (std::size_t u = 0; u < units; ++u) {
      const double x = std::abs(layer == Layer::kHidden ? h[u] : q[u]);
      const double delta = x - mean[u];
      mean[u] += delta / count;
      m2[u] += delta * (x - mean[u]);
    }
  }
  UnitStats out{mean, std::vector<double>(units)};
  for (std::size_t u = 0; u < units; ++u) out.std[u] = std::sqrt(m2[u] / static_cast<double>(refs.size()));
  return out;
}

/// Units whose |activation| std falls below this get correlation 0.
inline constexpr double kDeadUnitStd = 1e-12;

struct CorrelationMatrix {
  Layer layer = Layer::kHidden;
  Matrix rho;
  UnitStats stats_a;
  UnitStats stats_b;
};

/// Pearson correlation between |activations| of unit i of `a` and unit j of
/// `b` over the reference states (two-pass, population moments).
inline CorrelationMatrix correlation_matrix(const CartPoleNet& a, const CartPoleNet& b, const ReferenceSet& refs,
                                            Layer layer) {
  require(refs.size() >= 1, "correlation_matrix: empty reference set");
  const Matrix xa = abs_activations(a, refs.states, layer);
  const Matrix xb = abs_activations(b, refs.states, layer);
  const std::size_t n = refs.size();
  const std::size_t units = unit_count(layer);

  auto moments = [n, units](const Matrix& x) {
    UnitStats st{std::vector<double>(units, 0.0), std::vector<double>(units, 0.0)};
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t u = 0; u < units; ++u) st.mean[u] += x(s, u);
    for (double& m : st.mean) m /= static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t u = 0; u < units; ++u) {
        const double d = x(s, u) - st.mean[u];
        st.std[u] += d * d;
      }
    for (double& v : st.std) v = std::sqrt(v / static_cast<double>(n));
    return st;
  };

  CorrelationMatrix out{layer, Matrix(units, units), moments(xa), moments(xb)};
  Matrix cov(units, units);
  std::vector<double> da(units), db(units);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t u = 0; u < units; ++u) {
      da[u] = xa(s, u) - out.stats_a.mean[u];
      db[u] = xb(s, u) - out.stats_b.mean[u];
    }
    for (std::size_t i = 0; i < units; ++i) {
      double* row = &cov.data[i * units];
      for (std::size_t j = 0; j < units; ++j) row[j] += da[i] * db[j];
    }
  }
  for (std::size_t i = 0; i < units; ++i)
    for (std::size_t j = 0; j < units; ++j) {
      const double sa = out.stats_a.std[i];
      const double sb = out.stats_b.std[j];
      if (sa < kDeadUnitStd || sb < kDeadUnitStd) continue;
      out.rho(i, j) = std::clamp(cov(i, j) / static_cast<double>(n) / (sa * sb), -1.0, 1.0);
    }
  return out;
}

enum class MatchKind { kBipartite, kSemi };

struct MatchPair {
  std::size_t i = 0;
  std::size_t j = 0;
  double rho = 0.0;

  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct Matching {
  MatchKind kind = MatchKind::kBipartite;
  std::vector<MatchPair> pairs;

  /// Partner of row i, or npos when i is unmatched.
  std::size_t partner(std::size_t i) const {
    for (const auto& p : pairs)
      if (p.i == i) return p.j;
    return npos;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Repeatedly takes the largest remaining rho(i, j) and retires row i and
/// column j. Ties go to the lexicographically smallest (i, j). Pairs come out
/// in selection order, i.e. by descending correlation.
inline Matching greedy_bipartite(const Matrix& rho) {
  std::vector<std::size_t> idx(rho.data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rho.data[a] > rho.data[b]; });
  std::vector<bool> row_used(rho.rows, false), col_used(rho.cols, false);
  Matching m{MatchKind::kBipartite, {}};
  const std::size_t target = std::min(rho.rows, rho.cols);
  for (std::size_t k : idx) {
    if (m.pairs.size() == target) break;
    const std::size_t i = k / rho.cols;
    const std::size_t j = k % rho.cols;
    if (row_used[i] || col_used[j]) continue;
    row_used[i] = col_used[j] = true;
    m.pairs.push_back({i, j, rho.data[k]});
  }
  return m;
}

/// Each row independently takes its argmax column (ties to the smallest j);
/// columns may repeat. Pairs are listed in canonical order: rows sorted by
/// their bipartite-pair correlation, descending, then any rows the bipartite
/// matching left out. The order does not affect any assignment.
inline Matching semi_matching(const Matrix& rho) {
  Matching m{MatchKind::kSemi, {}};
  auto assign = [&](std::size_t i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < rho.cols; ++j)
      if (rho(i, j) > rho(i, best)) best = j;
    m.pairs.push_back({i, best, rho(i, best)});
  };
  if (rho.cols == 0) return m;
  std::vector<bool> done(rho.rows, false);
  for (const auto& p : greedy_bipartite(rho).pairs) {
    assign(p.i);
    done[p.i] = true;
  }
  for (std::size_t i = 0; i < rho.rows; ++i)
    if (!done[i]) assign(i);
  return m;
}

/// Sum over bipartite-matched rows of rho(i, semi(i)) - rho(i, bipartite(i)).
/// Every term is >= 0 because the row argmax dominates any constrained pick.
inline double convergence_distance(const Matrix& rho) {
  const Matching bip = greedy_bipartite(rho);
  const Matching semi = semi_matching(rho);
  double cd = 0.0;
  for (const auto& p : bip.pairs) cd += rho(p.i, semi.partner(p.i)) - p.rho;
  return cd;
}

struct ConvergenceDistance {
  double forward = 0.0;   // from net A's units
  double backward = 0.0;  // from net B's units
  double mean = 0.0;
};

inline ConvergenceDistance convergence_distance(const CorrelationMatrix& corr) {
  ConvergenceDistance cd;
  cd.forward = convergence_distance(corr.rho);
  cd.backward = convergence_distance(corr.rho.transposed());
  cd.mean = 0.5 * (cd.forward + cd.backward);
  return cd;
}

inline ConvergenceDistance convergence_distance(const CartPoleNet& a, const CartPoleNet& b, const ReferenceSet& refs,
                                                Layer layer) {
  return convergence_distance(correlation_matrix(a, b, refs, layer));
}

struct PairDistance {
  std::size_t a = 0;
  std::size_t b = 0;
  Layer layer = Layer::kHidden;
  ConvergenceDistance cd;
};

struct GroupSummary {
  double mean = 0.0;
  double std = 0.0;  // sample std over pairs
  std::size_t pairs = 0;
};

/// CDs of all unordered pairs (a < b) in `nets` for one layer.
inline std::vector<PairDistance> all_pairs_cd(std::span<const CartPoleNet> nets, const ReferenceSet& refs,
                                              Layer layer) {
  std::vector<PairDistance> out;
  for (std::size_t a = 0; a < nets.size(); ++a)
    for (std::size_t b = a + 1; b < nets.size(); ++b)
      out.push_back({a, b, layer, convergence_distance(nets[a], nets[b], refs, layer)});
  return out;
}

/// Mean and sample std of the symmetrized (mean-direction) CDs.
inline GroupSummary summarize(std::span<const PairDistance> pairs) {
  GroupSummary s;
  s.pairs = pairs.size();
  if (pairs.empty()) return s;
  for (const auto& p : pairs) s.mean += p.cd.mean;
  s.mean /= static_cast<double>(pairs.size());
  if (pairs.size() > 1) {
    double ss = 0.0;
    for (const auto& p : pairs) ss += (p.cd.mean - s.mean) * (p.cd.mean - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(pairs.size() - 1));
  }
  return s;
}

inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  const auto old_precision = os.precision(10);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) os << (j ? "," : "") << m(i, j);
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace agentemb
