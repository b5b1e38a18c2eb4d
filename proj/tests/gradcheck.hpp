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

// Central finite-difference oracle shared by the gradient tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace agentemb::testing {

inline constexpr double kFiniteDifferenceStep = 1e-4;

/// d f / d params[i] by central differences; params is restored afterwards.
inline double central_difference(const std::function<double(std::span<const double>)>& f,
                                 std::vector<double>& params, std::size_t i, double h = kFiniteDifferenceStep) {
  const double saved = params[i];
  params[i] = saved + h;
  const double up = f(params);
  params[i] = saved - h;
  const double down = f(params);
  params[i] = saved;
  return (up - down) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|, 1e-6). The floor keeps gradients that are zero
/// up to roundoff from producing spurious failures.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

}  // namespace agentemb::testing
