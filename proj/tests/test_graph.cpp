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
#include <set>
#include <sstream>
#include <vector>

#include "gtbias/graph.hpp"
#include "gtbias/graph_io.hpp"
#include "gtbias/task.hpp"
#include "oracles/oracles.hpp"
#include "test_support.hpp"

using namespace gtbias;
using testing_support::dense_distances;
using testing_support::random_graph;

namespace {

bool graphs_identical(const Graph& a, const Graph& b) {
  return a.n == b.n && a.n_communities == b.n_communities && a.seed == b.seed && a.neighbors == b.neighbors &&
         a.community == b.community && a.z == b.z && a.features.rows() == b.features.rows() &&
         a.features.cols() == b.features.cols() && (a.features.array() == b.features.array()).all();
}

}  // namespace

TEST(SampleCsbm, ExtremeProbabilitiesGiveTwoCliques) {
  CsbmParams p;
  p.n_nodes = 4;
  p.p_in = 1.0;
  p.p_out = 0.0;
  p.seed = 17;
  const Graph g = sample_csbm(p);
  EXPECT_EQ(std::count(g.community.begin(), g.community.end(), 0), 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i == j) continue;
      EXPECT_EQ(g.adjacent(i, j), g.community[static_cast<std::size_t>(i)] == g.community[static_cast<std::size_t>(j)]);
    }
  EXPECT_EQ(g.edge_count(), 2u);
}

TEST(SampleCsbm, WithinCommunityDegreeMatchesBinomial) {
  // 20 graphs, n = 200, two communities of 100: each within-degree is
  // Binomial(99, 0.10); the mean over 200 * 20 nodes has sd sqrt(99 p q / N).
  CsbmParams p;
  p.n_nodes = 200;
  p.p_in = 0.10;
  p.p_out = 0.02;
  double within = 0.0, across = 0.0;
  int nodes = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    p.seed = seed;
    const Graph g = sample_csbm(p);
    for (int i = 0; i < g.n; ++i) {
      for (int j : g.neighbors[static_cast<std::size_t>(i)]) {
        (g.community[static_cast<std::size_t>(i)] == g.community[static_cast<std::size_t>(j)] ? within : across) += 1.0;
      }
      ++nodes;
    }
  }
  // The total within-community degree is twice the within-community edge
  // count, which is Binomial(2 * C(100, 2), p_in) per graph, and likewise
  // Binomial(100 * 100, p_out) across; this gives exact standard deviations.
  const double expected_in = 0.10 * 99.0, expected_out = 0.02 * 100.0;
  const double graphs = 20.0, per_graph_nodes = 200.0;
  const double sd_in = 2.0 * std::sqrt(9900.0 * 0.10 * 0.90 * graphs) / nodes;
  const double sd_out = 2.0 * std::sqrt(10000.0 * 0.02 * 0.98 * graphs) / nodes;
  ASSERT_EQ(nodes, static_cast<int>(graphs * per_graph_nodes));
  EXPECT_NEAR(within / nodes, expected_in, 4.0 * sd_in);
  EXPECT_NEAR(across / nodes, expected_out, 4.0 * sd_out);
}

TEST(SampleCsbm, SameSeedIsBitIdentical) {
  CsbmParams p;
  p.seed = 123;
  EXPECT_TRUE(graphs_identical(sample_csbm(p), sample_csbm(p)));
  p.seed = 124;
  CsbmParams q = p;
  q.seed = 123;
  EXPECT_FALSE(graphs_identical(sample_csbm(p), sample_csbm(q)));
}

TEST(SampleCsbm, StructuralInvariants) {
  CsbmParams p;
  p.n_nodes = 90;
  p.n_communities = 3;
  p.signal_strength = 1.0;
  p.seed = 8;
  const Graph g = sample_csbm(p);
  for (int i = 0; i < g.n; ++i) {
    const auto& row = g.neighbors[static_cast<std::size_t>(i)];
    EXPECT_TRUE(std::is_sorted(row.begin(), row.end()));
    for (int j : row) {
      EXPECT_NE(i, j);
      EXPECT_TRUE(g.adjacent(j, i));
    }
    EXPECT_GE(g.community[static_cast<std::size_t>(i)], 0);
    EXPECT_LT(g.community[static_cast<std::size_t>(i)], 3);
    EXPECT_TRUE(std::isfinite(g.z[static_cast<std::size_t>(i)]));
  }
  // round-robin assignment before shuffling: exact counts
  for (int c = 0; c < 3; ++c) EXPECT_EQ(std::count(g.community.begin(), g.community.end(), c), 30);
  EXPECT_TRUE(g.features.allFinite());
}

TEST(SampleCsbm, CommunityOffsetsAreEvenlySpaced) {
  EXPECT_EQ(community_offset(0, 2), 1.0);
  EXPECT_EQ(community_offset(1, 2), -1.0);
  EXPECT_EQ(community_offset(1, 3), 0.0);
  EXPECT_EQ(community_offset(3, 5), -0.5);
}

TEST(SampleCsbm, RejectsInvalidParameters) {
  CsbmParams p;
  p.n_nodes = 0;
  try {
    sample_csbm(p);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyGraph);
  }
  p = CsbmParams{};
  p.p_out = 0.5;
  p.p_in = 0.1;
  try {
    sample_csbm(p);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParameter);
  }
  p = CsbmParams{};
  p.feature_noise_sigma = 0.0;
  EXPECT_THROW(sample_csbm(p), Error);
}

TEST(AllPairsSpd, PathHandCounts) {
  const Graph g = make_graph(3, {{0, 1}, {1, 2}});
  const DistanceMatrix dm = all_pairs_spd(g);
  EXPECT_EQ(dm(0, 2), 2);
  EXPECT_EQ(dm(1, 2), 1);
  EXPECT_EQ(dm(2, 2), 0);
  EXPECT_EQ(dm.diameter, 2);
}

TEST(AllPairsSpd, DisjointEdgesAreUnreachable) {
  const Graph g = make_graph(4, {{0, 1}, {2, 3}});
  const DistanceMatrix dm = all_pairs_spd(g);
  EXPECT_EQ(dm(0, 2), DistanceMatrix::kUnreachable);
  EXPECT_EQ(dm(3, 1), DistanceMatrix::kUnreachable);
  EXPECT_EQ(dm(0, 1), 1);
  EXPECT_FALSE(dm.connected());
  EXPECT_EQ(dm.diameter, 1);
  EXPECT_DOUBLE_EQ(mean_unreachable_count(dm), 2.0);
}

TEST(AllPairsSpd, MatchesFloydWarshallOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const int n = 5 + static_cast<int>(seed % 46);
    const Graph g = random_graph(n, 2.5 / n, seed);
    const auto expected = oracle::floyd_warshall(g.neighbors);
    const DistanceMatrix dm = all_pairs_spd(g);
    ASSERT_EQ(dense_distances(dm), expected) << "seed " << seed;
  }
}

TEST(AllPairsSpd, MetricInvariants) {
  const Graph g = random_graph(40, 0.08, 99);
  const DistanceMatrix dm = all_pairs_spd(g);
  for (int i = 0; i < g.n; ++i) {
    EXPECT_EQ(dm(i, i), 0);
    for (int j = 0; j < g.n; ++j) {
      EXPECT_EQ(dm(i, j), dm(j, i));
      EXPECT_EQ(dm(i, j) == 1, g.adjacent(i, j));
      for (int k = 0; k < g.n; ++k) {
        if (dm.reachable(i, k) && dm.reachable(k, j)) {
          ASSERT_TRUE(dm.reachable(i, j));
          EXPECT_LE(dm(i, j), dm(i, k) + dm(k, j));
        }
      }
    }
  }
}

TEST(Shell, PathExamplesAndSelf) {
  const Graph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  const DistanceMatrix dm = all_pairs_spd(g);
  EXPECT_EQ(shell(dm, 0, 2), std::vector<int>{2});
  for (int i = 0; i < 4; ++i) EXPECT_EQ(shell(dm, i, 0), std::vector<int>{i});
  EXPECT_TRUE(shell(dm, 0, 4).empty());
}

TEST(Shell, ShellsPartitionTheReachableSet) {
  const Graph g = random_graph(30, 0.1, 4);
  const DistanceMatrix dm = all_pairs_spd(g);
  const auto fw = oracle::floyd_warshall(g.neighbors);
  for (int i = 0; i < g.n; ++i) {
    std::set<int> seen;
    for (int r = 0; r <= dm.diameter; ++r) {
      for (int j : shell(dm, i, r)) {
        EXPECT_TRUE(seen.insert(j).second);
        EXPECT_EQ(fw[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], r);
      }
    }
    std::set<int> reachable;
    for (int j = 0; j < g.n; ++j)
      if (fw[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != oracle::kNoPath) reachable.insert(j);
    EXPECT_EQ(seen, reachable);
  }
}

TEST(MeanShellSizes, CompleteGraphK4) {
  const Graph g = make_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  const auto s = mean_shell_sizes(all_pairs_spd(g));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 3.0);
}

TEST(MeanShellSizes, MatchesDoubleLoopAndSumsToN) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = random_graph(35, 0.06, seed);
    const DistanceMatrix dm = all_pairs_spd(g);
    const auto fw = oracle::floyd_warshall(g.neighbors);
    const auto s = mean_shell_sizes(dm);
    EXPECT_EQ(s[0], 1.0);
    double total = 0.0;
    for (std::size_t r = 0; r < s.size(); ++r) {
      double count = 0.0;
      for (const auto& row : fw)
        for (int d : row) count += d == static_cast<int>(r) ? 1.0 : 0.0;
      EXPECT_DOUBLE_EQ(s[r], count / g.n);
      total += s[r];
    }
    EXPECT_NEAR(total + mean_unreachable_count(dm), static_cast<double>(g.n), 1e-9);
  }
}

TEST(GraphText, RoundTripIsLossless) {
  CsbmParams p;
  p.n_nodes = 50;
  p.p_in = 0.2;
  p.signal_strength = 0.7;
  p.feature_dim = 5;
  p.seed = 31;
  const Graph g = sample_csbm(p);
  std::stringstream ss;
  write_graph(ss, g);
  const std::string first = ss.str();
  const GraphFile back = read_graph(ss);
  EXPECT_TRUE(graphs_identical(g, back.graph));
  EXPECT_FALSE(back.task.has_value());
  std::stringstream again;
  write_graph(again, back.graph);
  EXPECT_EQ(first, again.str());
}

TEST(GraphText, RoundTripWithTaskColumns) {
  CsbmParams p;
  p.n_nodes = 80;
  p.p_in = 0.08;
  p.p_out = 0.01;
  p.seed = 5;
  const Graph g = sample_csbm(p);
  const DistanceMatrix dm = all_pairs_spd(g);
  TaskSpec spec;
  spec.beta = 0.25;
  spec.split_seed = 77;
  const LabeledTask task = make_labels(g, dm, spec);
  std::stringstream ss;
  write_graph(ss, g, &spec, &task);
  const GraphFile back = read_graph(ss);
  ASSERT_TRUE(back.task && back.spec);
  EXPECT_TRUE(graphs_identical(g, back.graph));
  EXPECT_EQ(back.spec->beta, spec.beta);
  EXPECT_EQ(back.spec->r_star, spec.r_star);
  EXPECT_EQ(back.spec->split_seed, spec.split_seed);
  EXPECT_EQ(back.spec->split_fractions, spec.split_fractions);
  EXPECT_EQ(back.task->labels, task.labels);
  EXPECT_EQ(back.task->valid, task.valid);
  EXPECT_EQ(back.task->split, task.split);
  EXPECT_EQ(back.task->train, task.train);
  EXPECT_EQ(back.task->val, task.val);
  EXPECT_EQ(back.task->test, task.test);
  for (int i = 0; i < g.n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (task.valid[ui]) {
      EXPECT_EQ(back.task->g_loc_hat[ui], task.g_loc_hat[ui]);
      EXPECT_EQ(back.task->g_far_hat[ui], task.g_far_hat[ui]);
    } else {
      EXPECT_TRUE(std::isnan(back.task->g_loc_hat[ui]));
    }
  }
}

TEST(GraphText, RejectsMalformedInput) {
  std::stringstream bad("gtbias-graph 1\nn 2 communities 1 seed 0 feature_dim 1\ntask none\nedges 1\n1 0\n");
  try {
    read_graph(bad);
    FAIL() << "expected a format error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
  std::stringstream wrong_magic("not-a-graph 1\n");
  EXPECT_THROW(read_graph(wrong_magic), Error);
}
