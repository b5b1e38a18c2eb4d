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

#include "agentemb/agent.hpp"

#include <algorithm>
#include <numeric>

#include "gtest/gtest.h"

namespace agentemb {
namespace {

// q_right = k . s through one hidden unit held in the ELU's linear regime,
// q_left = 0: a hand-made balancing controller.
CartPoleNet controller_net() {
  WeightVector v(kWeightCount, 0.0);
  const double k[4] = {0.01, 0.1, 1.0, 0.5};
  for (int c = 0; c < 4; ++c) v[c] = k[c];  // hidden unit 0 weights
  v[120] = 10.0;                             // hidden unit 0 bias
  v[150 + 30] = 1.0;                         // output Right <- hidden 0
  v[211] = -10.0;                            // output Right bias
  return devectorize(v);
}

// Straight-line evaluation from the flat vector, independent of DenseLayer.
QValues reference_qvalues(const WeightVector& v, const CartState& s) {
  const double in[4] = {s.x, s.x_dot, s.theta, s.theta_dot};
  double h[30];
  for (int u = 0; u < 30; ++u) {
    double a = v[120 + u];
    for (int c = 0; c < 4; ++c) a += v[u * 4 + c] * in[c];
    h[u] = a > 0 ? a : std::exp(a) - 1.0;
  }
  QValues q;
  for (int o = 0; o < 2; ++o) {
    double a = v[210 + o];
    for (int u = 0; u < 30; ++u) a += v[150 + o * 30 + u] * h[u];
    q[o] = a;
  }
  return q;
}

TEST(CartPoleNetTest, HasExactly212Parameters) {
  EXPECT_EQ(kWeightCount, 212u);
  CartPoleNet net;
  EXPECT_EQ(net.hidden().parameter_count() + net.output().parameter_count(), 212u);
  EXPECT_EQ(vectorize(net).size(), 212u);
}

TEST(CartPoleNetTest, ZeroNetGivesZeroQ) {
  const CartPoleNet net;
  EXPECT_EQ(net.qvalues(CartState{0.1, -0.2, 0.03, 0.5}), (QValues{0.0, 0.0}));
}

TEST(CartPoleNetTest, SwappingOutputRowsSwapsQ) {
  Rng rng(1);
  CartPoleNet net = CartPoleNet::random(rng);
  CartPoleNet swapped = net;
  for (std::size_t c = 0; c < kHiddenUnits; ++c)
    std::swap(swapped.output().weight(0, c), swapped.output().weight(1, c));
  std::swap(swapped.output().bias()[0], swapped.output().bias()[1]);
  const CartState s{0.02, -0.3, 0.05, 0.1};
  const QValues q = net.qvalues(s), qs = swapped.qvalues(s);
  EXPECT_EQ(q[0], qs[1]);
  EXPECT_EQ(q[1], qs[0]);
}

TEST(CartPoleNetTest, MatchesStraightLineOracle) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const CartPoleNet net = CartPoleNet::random(rng);
    const CartState s{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-0.2, 0.2), rng.uniform(-2, 2)};
    const QValues q = net.qvalues(s), ref = reference_qvalues(vectorize(net), s);
    EXPECT_NEAR(q[0], ref[0], 1e-12);
    EXPECT_NEAR(q[1], ref[1], 1e-12);
  }
}

TEST(CartPoleNetTest, HiddenPermutationLeavesQUnchanged) {
  Rng rng(3);
  const CartPoleNet net = CartPoleNet::random(rng);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> perm(kHiddenUnits);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    CartPoleNet p;
    for (std::size_t u = 0; u < kHiddenUnits; ++u) {
      for (std::size_t c = 0; c < kStateDim; ++c) p.hidden().weight(u, c) = net.hidden().weight(perm[u], c);
      p.hidden().bias()[u] = net.hidden().bias()[perm[u]];
      for (std::size_t o = 0; o < kNumActions; ++o) p.output().weight(o, u) = net.output().weight(o, perm[u]);
    }
    for (std::size_t o = 0; o < kNumActions; ++o) p.output().bias()[o] = net.output().bias()[o];
    const CartState s{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.2, 0.2), rng.uniform(-1, 1)};
    const QValues a = net.qvalues(s), b = p.qvalues(s);
    EXPECT_NEAR(a[0], b[0], 1e-12);
    EXPECT_NEAR(a[1], b[1], 1e-12);
  }
}

TEST(VectorizeTest, RoundTripIsBitwise) {
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    const CartPoleNet net = CartPoleNet::random(rng);
    EXPECT_EQ(devectorize(vectorize(net)), net);
  }
  EXPECT_EQ(devectorize(WeightVector(kWeightCount, 0.0)), CartPoleNet());
}

TEST(VectorizeTest, RejectsWrongLength) {
  EXPECT_THROW(devectorize(WeightVector(211, 0.0)), ContractViolation);
  EXPECT_THROW(devectorize(WeightVector(213, 0.0)), ContractViolation);
}

TEST(VectorizeTest, CanonicalLayoutProbedThroughQValues) {
  // Output Right reads hidden unit u; probe which flat index drives it.
  const CartState s{0.3, 0.0, 0.0, 0.0};
  for (std::size_t u : {0u, 7u, 29u}) {
    WeightVector v(kWeightCount, 0.0);
    v[150 + 30 + u] = 1.0;
    v[u * 4 + 0] = 1.0;  // hidden W[u][x] in the first 120 entries
    EXPECT_NEAR(devectorize(v).qvalues(s)[1], 0.3, 1e-15);
    v[u * 4 + 0] = 0.0;
    v[120 + u] = 0.5;  // hidden bias in 120..149
    EXPECT_NEAR(devectorize(v).qvalues(s)[1], 0.5, 1e-15);
  }
  WeightVector v(kWeightCount, 0.0);
  v[210] = 2.0;
  v[211] = -1.0;
  EXPECT_EQ(devectorize(v).qvalues(s), (QValues{2.0, -1.0}));
}

TEST(ActEpsilonTest, GreedyAndTieBreak) {
  Rng rng(1);
  EXPECT_EQ(act_epsilon({1.0, 2.0}, 0.0, rng), Action::kRight);
  EXPECT_EQ(act_epsilon({2.0, 1.0}, 0.0, rng), Action::kLeft);
  EXPECT_EQ(act_epsilon({0.0, 0.0}, 0.0, rng), Action::kLeft);
  EXPECT_THROW(act_epsilon({0.0, 0.0}, 1.5, rng), ContractViolation);
}

TEST(ActEpsilonTest, FullExplorationIsUniform) {
  Rng rng(7);
  int right = 0;
  for (int i = 0; i < 10000; ++i) right += act_epsilon({5.0, 0.0}, 1.0, rng) == Action::kRight;
  EXPECT_NEAR(right / 10000.0, 0.5, 0.02);
}

TEST(ReplayBufferTest, RingOverwriteAndDistinctSamples) {
  ReplayBuffer buf(5);
  for (int i = 0; i < 8; ++i) {
    ReplayTransition t;
    t.reward = i;
    buf.push(t);
  }
  EXPECT_EQ(buf.size(), 5u);
  std::vector<double> rewards;
  for (std::size_t i = 0; i < buf.size(); ++i) rewards.push_back(buf[i].reward);
  std::sort(rewards.begin(), rewards.end());
  EXPECT_EQ(rewards, (std::vector<double>{3, 4, 5, 6, 7}));
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto idx = buf.sample_indices(5, rng);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  }
  EXPECT_THROW(buf.sample_indices(6, rng), ContractViolation);
}

TEST(TrainConfigTest, EpsilonScheduleStaysInUnitInterval) {
  TrainConfig c;
  c.train_steps = 1000;
  EXPECT_EQ(c.epsilon_at(0), 1.0);
  EXPECT_NEAR(c.epsilon_at(250), 0.525, 1e-12);
  EXPECT_EQ(c.epsilon_at(500), 0.05);
  for (std::uint64_t s = 0; s <= 1000; ++s) {
    ASSERT_GE(c.epsilon_at(s), 0.0);
    ASSERT_LE(c.epsilon_at(s), 1.0);
  }
  c.discount = 0.0;
  EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(TrainAgentTest, ZeroStepsReturnsInitialization) {
  TrainConfig c;
  c.train_steps = 0;
  Rng a(5), b(5);
  EXPECT_EQ(train_agent(c, a), CartPoleNet::random(b));
}

TEST(TrainAgentTest, SameSeedSameWeights) {
  TrainConfig c;
  c.train_steps = 600;
  Rng a(6), b(6);
  EXPECT_EQ(train_agent(c, a), train_agent(c, b));
}

TEST(TrainAgentTest, LongRunBeatsRandomBaseline) {
  TrainConfig c;
  c.train_steps = 20000;
  Rng rng(1);
  const CartPoleNet net = train_agent(c, rng);
  Rng eval(2);
  EXPECT_GT(survival_time(net, 100, eval), 22.0);
}

TEST(TrainAgentTest, CheckpointsFireAtRequestedSteps) {
  TrainConfig c;
  c.train_steps = 300;
  const std::vector<std::uint64_t> at{0, 100, 300};
  std::vector<std::uint64_t> seen;
  Rng rng(3);
  const CartPoleNet final_net =
      train_agent(c, rng, at, [&](std::uint64_t step, const CartPoleNet&) { seen.push_back(step); });
  EXPECT_EQ(seen, at);
  EXPECT_TRUE(final_net.all_finite());
}

TEST(TrainAgentTest, DivergenceIsReported) {
  TrainConfig c;
  c.train_steps = 3000;
  c.learning_rate = 1e200;
  Rng rng(4);
  EXPECT_THROW(train_agent(c, rng), NumericalFailure);
}

TEST(SurvivalTimeTest, ZeroNetBehavesLikeConstantAction) {
  Rng rng(1);
  EXPECT_NEAR(survival_time(CartPoleNet(), 100, rng), 9.0, 2.0);
}

TEST(SurvivalTimeTest, ControllerHitsCap) {
  Rng rng(2);
  EXPECT_EQ(survival_time(controller_net(), 100, rng), 200.0);
}

TEST(SurvivalTimeTest, ReevaluationWithOtherSeedsStaysWithinFive) {
  for (const CartPoleNet& net : {CartPoleNet(), controller_net()}) {
    Rng first(10);
    const double base = survival_time(net, 100, first);
    for (std::uint64_t seed = 11; seed < 21; ++seed) {
      Rng rng(seed);
      EXPECT_NEAR(survival_time(net, 100, rng), base, 5.0);
    }
  }
}

TEST(SurvivalTimeTest, EvaluationDoesNotMutateNet) {
  Rng init(3);
  const CartPoleNet net = CartPoleNet::random(init);
  const CartPoleNet copy = net;
  Rng rng(4);
  survival_time(net, 10, rng);
  EXPECT_EQ(net, copy);
  EXPECT_THROW(survival_time(net, 0, rng), ContractViolation);
}

}  // namespace
}  // namespace agentemb
