// Copyright 2026 The gtbias Authors
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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gtbias/diagnostics.hpp"
#include "gtbias/graph.hpp"
#include "oracles/oracles.hpp"
#include "test_support.hpp"

using namespace gtbias;
using testing_support::dense_distances;
using testing_support::Fixture;
using testing_support::random_graph;

namespace {

Graph cycle(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return make_graph(n, e);
}

Matrix random_stochastic(int n, Rng& rng) {
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform() + 1e-3;
  for (int i = 0; i < n; ++i) a.row(i) /= a.row(i).sum();
  return a;
}

AttentionRecord random_record(int n, int layers, int heads, Rng& rng) {
  AttentionRecord rec;
  rec.layers.resize(static_cast<std::size_t>(layers));
  for (auto& l : rec.layers)
    for (int h = 0; h < heads; ++h) l.push_back(random_stochastic(n, rng));
  return rec;
}

DistanceProfile random_profile(std::size_t len, Rng& rng, double zero_prob = 0.2) {
  std::vector<double> m(len);
  for (double& v : m) v = rng.uniform() < zero_prob ? 0.0 : rng.uniform();
  if (std::accumulate(m.begin(), m.end(), 0.0) == 0.0) m[0] = 1.0;
  return normalized(m);
}

}  // namespace

TEST(TaskProfile, CycleWithHalfLocality) {
  const Graph g = cycle(6);  // shells 1, 2, 2, 1
  const DistanceMatrix dm = all_pairs_spd(g);
  TaskSpec spec;
  spec.beta = 0.5;
  spec.r_star = 2;
  const DistanceProfile p = task_profile(g, dm, spec);
  ASSERT_EQ(p.mass.size(), 4u);
  EXPECT_NEAR(p.mass[0], 0.5 / 3.0, 1e-15);
  EXPECT_NEAR(p.mass[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.mass[2], 0.5, 1e-15);
  EXPECT_EQ(p.mass[3], 0.0);
  EXPECT_NEAR(mean_distance(p), 1.0 / 3.0 + 1.0, 1e-15);
}

TEST(TaskProfile, LimitsOfBeta) {
  const Graph g = random_graph(40, 0.1, 3);
  const DistanceMatrix dm = all_pairs_spd(g);
  const double mean_degree = mean_shell_sizes(dm)[1];
  TaskSpec spec;
  spec.r_star = 3;
  spec.beta = 1.0;
  EXPECT_NEAR(mean_distance(task_profile(g, dm, spec)), mean_degree / (1.0 + mean_degree), 1e-14);
  spec.beta = 0.0;
  const DistanceProfile far = task_profile(g, dm, spec);
  EXPECT_EQ(far.mass[3], 1.0);
  EXPECT_EQ(mean_distance(far), 3.0);
  for (double b : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    spec.beta = b;
    EXPECT_NEAR(task_profile(g, dm, spec).total(), 1.0, 1e-15);
  }
}

TEST(AttentionProfile, IdentityAttentionIsPointMassAtZero) {
  const Graph g = random_graph(25, 0.15, 4);
  const DistanceMatrix dm = all_pairs_spd(g);
  AttentionRecord rec;
  rec.layers = {{Matrix::Identity(25, 25), Matrix::Identity(25, 25)}};
  const DistanceProfile p = attention_profile(rec, dm);
  EXPECT_EQ(p.mass[0], 1.0);
  EXPECT_EQ(mean_distance(p), 0.0);
  EXPECT_EQ(self_attention_mass(rec), 1.0);
}

TEST(AttentionProfile, UniformAttentionIsUniformOverDistances) {
  const Graph g = cycle(9);  // connected, diameter 4
  const DistanceMatrix dm = all_pairs_spd(g);
  AttentionRecord rec;
  rec.layers = {{Matrix::Constant(9, 9, 1.0 / 9.0)}};
  const DistanceProfile p = attention_profile(rec, dm);
  ASSERT_EQ(p.mass.size(), 6u);  // buckets 0..diameter+1
  for (int r = 0; r <= 4; ++r) EXPECT_NEAR(p.mass[static_cast<std::size_t>(r)], 0.2, 1e-15);
  EXPECT_EQ(p.mass[5], 0.0);  // no unreachable pairs
}

TEST(AttentionProfile, MatchesBruteForceOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 8 + static_cast<int>(rng.below(20));
    const Graph g = random_graph(n, 0.08 + 0.1 * rng.uniform(), 100 + static_cast<std::uint64_t>(trial));
    const DistanceMatrix dm = all_pairs_spd(g);
    const AttentionRecord rec = random_record(n, 1 + static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(3)), rng);
    const DistanceProfile p = attention_profile(rec, dm);
    const auto expected = oracle::attention_profile(rec.layers, dense_distances(dm));
    ASSERT_EQ(p.mass.size(), expected.size()) << "trial " << trial;
    for (std::size_t r = 0; r < expected.size(); ++r) EXPECT_NEAR(p.mass[r], expected[r], 1e-12) << "trial " << trial;
  }
}

TEST(AttentionProfile, RegularGraphPerNodeVariantAgrees) {
  // On a vertex-transitive graph every node has the same shells, so the two
  // correction orders coincide.
  const Graph g = cycle(10);
  const DistanceMatrix dm = all_pairs_spd(g);
  Rng rng(6);
  const AttentionRecord rec = random_record(10, 2, 2, rng);
  const DistanceProfile pooled = attention_profile(rec, dm);
  const DistanceProfile per_node = attention_profile_per_node(rec, dm);
  ASSERT_EQ(pooled.mass.size(), per_node.mass.size());
  for (std::size_t r = 0; r < pooled.mass.size(); ++r) EXPECT_NEAR(pooled.mass[r], per_node.mass[r], 1e-14);
}

TEST(AttentionProfile, PooledMassIsLinear) {
  const Graph g = random_graph(15, 0.2, 7);
  const DistanceMatrix dm = all_pairs_spd(g);
  Rng rng(8);
  const AttentionRecord a = random_record(15, 2, 2, rng);
  const AttentionRecord b = random_record(15, 2, 2, rng);
  const double alpha = 0.3;
  AttentionRecord mix = a;
  for (std::size_t l = 0; l < mix.layers.size(); ++l)
    for (std::size_t h = 0; h < mix.layers[l].size(); ++h)
      mix.layers[l][h] = alpha * a.layers[l][h] + (1.0 - alpha) * b.layers[l][h];
  const auto ma = pooled_distance_mass(a, dm);
  const auto mb = pooled_distance_mass(b, dm);
  const auto mm = pooled_distance_mass(mix, dm);
  for (std::size_t r = 0; r < mm.size(); ++r) EXPECT_NEAR(mm[r], alpha * ma[r] + (1.0 - alpha) * mb[r], 1e-15);
  EXPECT_NEAR(std::accumulate(ma.begin(), ma.end(), 0.0), 1.0, 1e-14);
}

TEST(AttentionProfile, UnreachableMassLandsInLastBucket) {
  const Graph g = make_graph(4, {{0, 1}, {2, 3}});  // diameter 1
  const DistanceMatrix dm = all_pairs_spd(g);
  Matrix a = Matrix::Zero(4, 4);
  a(0, 2) = a(1, 3) = a(2, 0) = a(3, 1) = 1.0;
  AttentionRecord rec;
  rec.layers = {{a}};
  const DistanceProfile p = attention_profile(rec, dm);
  ASSERT_EQ(p.mass.size(), 3u);
  EXPECT_EQ(p.mass[2], 1.0);
}

TEST(AttentionProfile, RejectsMismatchedShapes) {
  const DistanceMatrix dm = all_pairs_spd(cycle(5));
  AttentionRecord rec;
  rec.layers = {{Matrix::Identity(4, 4)}};
  EXPECT_THROW(attention_profile(rec, dm), Error);
  EXPECT_THROW(attention_profile(AttentionRecord{}, dm), Error);
  EXPECT_THROW(normalized({0.0, 0.0}), Error);
}

TEST(Wasserstein, PointMasses) {
  EXPECT_EQ(wasserstein1(DistanceProfile::point_mass(0, 3), DistanceProfile::point_mass(3, 3)), 3.0);
  EXPECT_EQ(wasserstein1(DistanceProfile::point_mass(1, 1), DistanceProfile::point_mass(4, 4)), 3.0);
}

TEST(Wasserstein, MatchesTransportLinearProgram) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const DistanceProfile p = random_profile(1 + rng.below(8), rng);
    const DistanceProfile q = random_profile(1 + rng.below(8), rng);
    EXPECT_NEAR(wasserstein1(p, q), oracle::w1_lp(p.mass, q.mass), 1e-9) << "trial " << trial;
  }
}

TEST(Wasserstein, MatchesSolverFixture) {
  const Fixture fx("w1_pairs.txt");
  int pairs = 0;
  for (int k = 0; fx.has("pair" + std::to_string(k) + " p"); ++k, ++pairs) {
    const std::string pre = "pair" + std::to_string(k);
    const DistanceProfile p{fx.reals(pre + " p")};
    const DistanceProfile q{fx.reals(pre + " q")};
    EXPECT_NEAR(wasserstein1(p, q), fx.real(pre + " w1"), 1e-9) << pre;
  }
  EXPECT_GE(pairs, 10);
}

TEST(Wasserstein, MetricAxioms) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const DistanceProfile p = random_profile(6, rng);
    const DistanceProfile q = random_profile(4, rng);
    const DistanceProfile s = random_profile(7, rng);
    EXPECT_EQ(wasserstein1(p, p), 0.0);
    EXPECT_NEAR(wasserstein1(p, q), wasserstein1(q, p), 1e-15);
    EXPECT_LE(wasserstein1(p, s), wasserstein1(p, q) + wasserstein1(q, s) + 1e-12);
    EXPECT_GE(wasserstein1(p, q), std::abs(mean_distance(p) - mean_distance(q)) - 1e-12);
  }
}

TEST(Regime, ThresholdsAreStrict) {
  EXPECT_EQ(classify_regime(0.11), Regime::kUnderReaching);
  EXPECT_EQ(classify_regime(-0.11), Regime::kOverGlobalizing);
  EXPECT_EQ(classify_regime(0.1), Regime::kAligned);
  EXPECT_EQ(classify_regime(-0.1), Regime::kAligned);
  EXPECT_EQ(classify_regime(0.0), Regime::kAligned);
  EXPECT_EQ(classify_regime(0.3, 0.5), Regime::kAligned);
  EXPECT_THROW(classify_regime(0.0, 0.0), Error);
  EXPECT_EQ(to_string(Regime::kUnderReaching), "under_reaching");
  EXPECT_EQ(to_string(Regime::kOverGlobalizing), "over_globalizing");
}

TEST(Mismatch, GapIsTaskMinusAttention) {
  const DistanceProfile task = DistanceProfile::point_mass(3, 3);
  const DistanceProfile attn = DistanceProfile::point_mass(0, 4);
  const MismatchReport rep = mismatch(task, attn);
  EXPECT_EQ(rep.mu_task, 3.0);
  EXPECT_EQ(rep.mu_attention, 0.0);
  EXPECT_EQ(rep.gap, 3.0);
  EXPECT_EQ(rep.w1, 3.0);
  EXPECT_EQ(rep.regime, Regime::kUnderReaching);
  EXPECT_EQ(mismatch(attn, task).regime, Regime::kOverGlobalizing);
}
