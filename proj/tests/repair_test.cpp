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

#include "agentemb/repair.hpp"

#include <sstream>

#include "gtest/gtest.h"

namespace agentemb {
namespace {

WeightVector random_weights(std::uint64_t seed) {
  Rng rng(seed);
  return vectorize(CartPoleNet::random(rng));
}

std::size_t count_masked(const DamagedNet& d) {
  return static_cast<std::size_t>(std::count(d.missing_mask.begin(), d.missing_mask.end(), true));
}

TEST(DegradeTest, MaskCountsAndZeros) {
  const WeightVector w = random_weights(1);
  Rng rng(2);
  for (double f : {0.0, 0.1, 0.5, 0.73, 1.0}) {
    const DamagedNet d = degrade(w, f, rng, 10);
    EXPECT_EQ(count_masked(d), static_cast<std::size_t>(std::lround(f * 212)));
    for (std::size_t i = 0; i < kWeightCount; ++i) EXPECT_EQ(d.weights[i], d.missing_mask[i] ? 0.0 : w[i]);
  }
  EXPECT_EQ(count_masked(degrade(w, 0.5, rng, 5)), 106u);
  EXPECT_THROW(degrade(w, 1.2, rng), ContractViolation);
  EXPECT_THROW(degrade(WeightVector(5, 0.0), 0.1, rng), ContractViolation);
}

TEST(DegradeTest, FullDegradationIsTheZeroNet) {
  Rng rng(3);
  const DamagedNet d = degrade(random_weights(4), 1.0, rng);
  for (double v : d.weights) EXPECT_EQ(v, 0.0);
  Rng eval(5);
  EXPECT_NEAR(survival_time(d.weights, 100, eval), 9.0, 2.0);
}

TEST(DegradeTest, RecordsOriginalSurvivalOnItsSeed) {
  const WeightVector w = random_weights(6);
  Rng rng(7);
  const DamagedNet d = degrade(w, 0.3, rng, 20);
  Rng eval(d.eval_seed);
  EXPECT_EQ(d.original_survival, survival_time(w, 20, eval));
}

DamagedNet hand_case() {
  // Three existing weights (1, 2, 3) at slots 0..2; everything else masked.
  WeightVector w(kWeightCount, 0.0);
  w[0] = 1;
  w[1] = 2;
  w[2] = 3;
  std::vector<bool> mask(kWeightCount, true);
  mask[0] = mask[1] = mask[2] = false;
  DamagedNet d;
  d.weights = w;
  d.missing_mask = mask;
  return d;
}

TEST(CriteriaTest, HandCase) {
  const DamagedNet d = hand_case();
  WeightVector c(kWeightCount, 0.0);
  c[0] = 1;
  c[2] = 3;
  EXPECT_EQ(missing_criterion(d, c), 4.0);
  EXPECT_EQ(whole_criterion(d, c), 4.0);
  c[100] = 2.0;
  EXPECT_EQ(missing_criterion(d, c), 4.0);
  EXPECT_EQ(whole_criterion(d, c), 8.0);
  EXPECT_EQ(missing_criterion(d, d.weights), 0.0);
  EXPECT_EQ(whole_criterion(d, d.weights), 0.0);
  EXPECT_THROW(missing_criterion(d, WeightVector(3, 0.0)), ContractViolation);
}

TEST(CriteriaTest, WholeIsMissingPlusMaskedNorm) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const DamagedNet d = degrade(random_weights(100 + trial), rng.uniform(), rng, 1);
    const WeightVector c = random_weights(200 + trial);
    double masked = 0;
    for (std::size_t i = 0; i < kWeightCount; ++i)
      if (d.missing_mask[i]) masked += c[i] * c[i];
    EXPECT_NEAR(whole_criterion(d, c), missing_criterion(d, c) + masked, 1e-12);
    WeightVector c2 = c;
    for (std::size_t i = 0; i < kWeightCount; ++i)
      if (d.missing_mask[i]) c2[i] += 7.0;
    EXPECT_EQ(missing_criterion(d, c2), missing_criterion(d, c));
  }
}

TEST(PatchTest, WritesOnlyMaskedSlots) {
  Rng rng(9);
  const DamagedNet d = degrade(random_weights(10), 0.4, rng, 1);
  const WeightVector c = random_weights(11);
  const WeightVector p = patch(d, c);
  for (std::size_t i = 0; i < kWeightCount; ++i) EXPECT_EQ(p[i], d.missing_mask[i] ? c[i] : d.weights[i]);
}

class RepairTest : public ::testing::Test {
 protected:
  RepairTest() {
    Rng rng(12);
    model = GenModel::random(GenArchitecture{}, rng);
    AgentRecord r;
    r.weights = random_weights(13);
    r.survival_time = 10.0;
    r.group = Group::kG1;
    source.records.push_back(r);
  }
  GenModel model;
  Zoo source;
};

TEST_F(RepairTest, ZeroBudgetFails) {
  Rng rng(1);
  const DamagedNet d = degrade(random_weights(14), 0.5, rng, 10);
  RepairOptions opt;
  opt.sample_budget = 0;
  const auto o = repair(d, model, &source, opt, rng);
  EXPECT_FALSE(o.success);
  EXPECT_EQ(o.samples_used, 0u);
  EXPECT_FALSE(o.candidate.has_value());
}

TEST_F(RepairTest, NoDegradationSucceedsImmediately) {
  Rng rng(2);
  const DamagedNet d = degrade(random_weights(15), 0.0, rng, 20);
  RepairOptions opt;
  opt.sample_budget = 5;
  const auto o = repair(d, model, &source, opt, rng);
  EXPECT_TRUE(o.success);
  EXPECT_EQ(o.st_error, 0.0);
  EXPECT_EQ(o.samples_used, 5u);
  ASSERT_TRUE(o.candidate.has_value());
}

TEST_F(RepairTest, DeterministicAndExistingWeightsUntouched) {
  Rng rng(3);
  const DamagedNet d = degrade(random_weights(16), 0.6, rng, 10);
  const DamagedNet before = d;
  RepairOptions opt;
  opt.sample_budget = 20;
  opt.top_k = 3;
  Rng a(4), b(4);
  const auto oa = repair(d, model, &source, opt, a);
  const auto ob = repair(d, model, &source, opt, b);
  EXPECT_EQ(oa.success, ob.success);
  EXPECT_EQ(oa.st_error, ob.st_error);
  EXPECT_EQ(oa.candidate, ob.candidate);
  EXPECT_EQ(oa.success, oa.st_error < opt.epsilon);
  EXPECT_EQ(d.weights, before.weights);
  EXPECT_EQ(d.missing_mask, before.missing_mask);
}

TEST_F(RepairTest, SweepHasTwentyRowsAndCsv) {
  RepairOptions opt;
  opt.sample_budget = 4;
  opt.top_k = 2;
  const auto rows = repair_sweep(random_weights(17), model, &source, default_degradation_levels(), opt, 5, 5);
  ASSERT_EQ(rows.size(), 20u);
  EXPECT_EQ(rows[0].criterion, Criterion::kMissing);
  EXPECT_EQ(rows[1].criterion, Criterion::kWhole);
  EXPECT_EQ(rows[19].fraction, 1.0);
  std::ostringstream os;
  write_repair_csv(os, rows);
  const std::string csv = os.str();
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines, 21);
}

}  // namespace
}  // namespace agentemb
