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

#include "agentemb/stats.hpp"

#include "agentemb/rng.hpp"
#include "gtest/gtest.h"

namespace agentemb {
namespace {

TEST(StatsTest, MeanAndSampleStd) {
  const std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(xs), 5.0);
  EXPECT_NEAR(sample_std(xs), std::sqrt(32.0 / 7.0), 1e-15);
  EXPECT_EQ(sample_std(std::vector<double>{3.0}), 0.0);
  EXPECT_THROW(mean(std::vector<double>{}), ContractViolation);
}

TEST(HistogramTest, BinsAndEdges) {
  const std::vector<double> xs{0.0, 9.99, 10.0, 199.0, 200.0, 250.0, -3.0};
  const auto h = histogram(xs, 0.0, 200.0, 20);
  ASSERT_EQ(h.size(), 20u);
  EXPECT_EQ(h[0].count, 3u);
  EXPECT_EQ(h[1].count, 1u);
  EXPECT_EQ(h[19].count, 3u);
  EXPECT_EQ(h[19].hi, 200.0);
  std::size_t total = 0;
  for (const auto& b : h) total += b.count;
  EXPECT_EQ(total, xs.size());
}

TEST(Wasserstein1Test, Examples) {
  EXPECT_DOUBLE_EQ(wasserstein1(std::vector<double>{0.0}, std::vector<double>{3.0}), 3.0);
  EXPECT_DOUBLE_EQ(wasserstein1(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 0.0);
  // Shift by a constant moves every quantile by that constant.
  EXPECT_NEAR(wasserstein1(std::vector<double>{1, 5, 9}, std::vector<double>{3, 7, 11}), 2.0, 1e-12);
  // Unequal sizes: {0, 1} vs {0}: CDF gap 1/2 over [0, 1].
  EXPECT_DOUBLE_EQ(wasserstein1(std::vector<double>{0, 1}, std::vector<double>{0}), 0.5);
}

TEST(Wasserstein1Test, MatchesQuantileFormulaForEqualSizes) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(25), b(25);
    for (auto& v : a) v = rng.uniform(0, 200);
    for (auto& v : b) v = rng.uniform(0, 200);
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double ref = 0;
    for (std::size_t i = 0; i < sa.size(); ++i) ref += std::abs(sa[i] - sb[i]);
    ref /= sa.size();
    EXPECT_NEAR(wasserstein1(a, b), ref, 1e-9);
    EXPECT_NEAR(wasserstein1(a, b), wasserstein1(b, a), 1e-9);
  }
}

}  // namespace
}  // namespace agentemb
