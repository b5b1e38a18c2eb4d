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
#include <vector>

#include "agentemb/errors.hpp"

namespace agentemb {

inline double mean(std::span<const double> xs) {
  require(!xs.empty(), "mean: empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins over [lo, hi]; the last bin is closed on the right and
/// values outside the range are clamped into the end bins.
inline std::vector<HistogramBin> histogram(std::span<const double> xs, double lo, double hi, std::size_t bins) {
  require(bins >= 1 && hi > lo, "histogram: need bins >= 1 and hi > lo");
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) out[b] = {lo + width * b, lo + width * (b + 1), 0};
  for (double x : xs) {
    auto b = static_cast<long>(std::floor((x - lo) / width));
    b = std::clamp<long>(b, 0, static_cast<long>(bins) - 1);
    out[static_cast<std::size_t>(b)].count += 1;
  }
  return out;
}

/// 1-Wasserstein distance between two empirical distributions: the area
/// between their CDFs.
inline double wasserstein1(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), "wasserstein1: empty sample");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<double> points;
  points.reserve(sa.size() + sb.size());
  std::merge(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(points));
  double area = 0.0;
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    while (ia < sa.size() && sa[ia] <= points[k]) ++ia;
    while (ib < sb.size() && sb[ib] <= points[k]) ++ib;
    const double fa = static_cast<double>(ia) / static_cast<double>(sa.size());
    const double fb = static_cast<double>(ib) / static_cast<double>(sb.size());
    area += std::abs(fa - fb) * (points[k + 1] - points[k]);
  }
  return area;
}

}  // namespace agentemb
