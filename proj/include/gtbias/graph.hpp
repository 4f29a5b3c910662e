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

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "gtbias/error.hpp"
#include "gtbias/rng.hpp"

namespace gtbias {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Generative knobs of the contextual stochastic block model.
struct CsbmParams {
  int n_nodes = 300;
  int n_communities = 2;
  double p_in = 0.04;
  double p_out = 0.005;
  double signal_strength = 0.15;
  int feature_dim = 16;
  double feature_noise_sigma = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_nodes > 0, ErrorKind::kEmptyGraph, "csbm: n_nodes must be positive");
    require(n_communities > 0, ErrorKind::kParameter, "csbm: n_communities must be positive");
    require(n_nodes >= n_communities, ErrorKind::kParameter,
            "csbm: n_nodes must be at least n_communities");
    require(p_out >= 0.0 && p_out <= p_in && p_in <= 1.0, ErrorKind::kParameter,
            "csbm: probabilities must satisfy 0 <= p_out <= p_in <= 1");
    require(signal_strength >= 0.0 && std::isfinite(signal_strength), ErrorKind::kParameter,
            "csbm: signal_strength must be finite and >= 0");
    require(feature_dim > 0, ErrorKind::kParameter, "csbm: feature_dim must be positive");
    require(feature_noise_sigma > 0.0 && std::isfinite(feature_noise_sigma),
            ErrorKind::kParameter, "csbm: feature_noise_sigma must be > 0");
  }
};

/// One sampled CSBM instance. Immutable once built.
struct Graph {
  int n = 0;
  int n_communities = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> neighbors;  // sorted, symmetric, no self-loops
  std::vector<int> community;
  std::vector<double> z;                    // latent node signal
  Matrix features;                          // n x feature_dim

  int feature_dim() const { return static_cast<int>(features.cols()); }

  bool adjacent(int i, int j) const {
    const auto& row = neighbors[static_cast<std::size_t>(i)];
    return std::binary_search(row.begin(), row.end(), j);
  }

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& row : neighbors) twice += row.size();
    return twice / 2;
  }

  double mean_degree() const {
    return n == 0 ? 0.0 : 2.0 * static_cast<double>(edge_count()) / n;
  }
};

/// Builds a graph from an explicit edge list. Latent signals default to zero
/// and features to a single zero column. Used for hand-built fixtures.
inline Graph make_graph(int n, const std::vector<std::pair<int, int>>& edges,
                        std::vector<double> z = {}) {
  require(n > 0, ErrorKind::kEmptyGraph, "graph: n must be positive");
  Graph g;
  g.n = n;
  g.n_communities = 1;
  g.neighbors.assign(static_cast<std::size_t>(n), {});
  for (auto [a, b] : edges) {
    require(a >= 0 && b >= 0 && a < n && b < n && a != b, ErrorKind::kParameter,
            "graph: edge endpoint out of range or self-loop");
    g.neighbors[static_cast<std::size_t>(a)].push_back(b);
    g.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& row : g.neighbors) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  g.community.assign(static_cast<std::size_t>(n), 0);
  if (z.empty()) z.assign(static_cast<std::size_t>(n), 0.0);
  require(static_cast<int>(z.size()) == n, ErrorKind::kParameter, "graph: z size mismatch");
  g.z = std::move(z);
  g.features = Matrix::Zero(n, 1);
  return g;
}

/// Community offset sigma(c): +1 / -1 for two communities, evenly spaced in
/// [-1, +1] (descending) for more.
inline double community_offset(int c, int k) {
  if (k <= 1) return 1.0;
  return 1.0 - 2.0 * static_cast<double>(c) / static_cast<double>(k - 1);
}

/// Samples a CSBM graph. RNG consumption order is fixed: community shuffle,
/// upper-triangle edges in row-major order, latent noise, feature noise.
inline Graph sample_csbm(const CsbmParams& p) {
  p.validate();
  Rng rng(p.seed);
  const int n = p.n_nodes;
  const auto un = static_cast<std::size_t>(n);

  Graph g;
  g.n = n;
  g.n_communities = p.n_communities;
  g.seed = p.seed;
  g.community.resize(un);
  for (int i = 0; i < n; ++i) g.community[static_cast<std::size_t>(i)] = i % p.n_communities;
  rng.shuffle(g.community);

  g.neighbors.assign(un, {});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool same = g.community[static_cast<std::size_t>(i)] ==
                        g.community[static_cast<std::size_t>(j)];
      if (rng.uniform() < (same ? p.p_in : p.p_out)) {
        g.neighbors[static_cast<std::size_t>(i)].push_back(j);
        g.neighbors[static_cast<std::size_t>(j)].push_back(i);
      }
    }
  }
  // Rows are filled in increasing j order for i's own pushes, but pushes from
  // smaller i arrive first, so every row is already sorted.

  g.z.resize(un);
  for (std::size_t i = 0; i < un; ++i) {
    g.z[i] = p.signal_strength * community_offset(g.community[i], p.n_communities) + rng.normal();
  }

  const double unit = 1.0 / std::sqrt(static_cast<double>(p.feature_dim));
  g.features.resize(n, p.feature_dim);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < p.feature_dim; ++f) {
      g.features(i, f) = g.z[static_cast<std::size_t>(i)] * unit + p.feature_noise_sigma * rng.normal();
    }
  }
  return g;
}

/// All-pairs hop distances. Unreachable pairs hold kUnreachable.
struct DistanceMatrix {
  static constexpr int kUnreachable = -1;

  int n = 0;
  int diameter = 0;  // largest finite entry
  std::vector<int> d;

  int operator()(int i, int j) const {
    return d[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
  }
  bool reachable(int i, int j) const { return (*this)(i, j) != kUnreachable; }

  bool connected() const {
    return std::find(d.begin(), d.end(), kUnreachable) == d.end();
  }
};

inline DistanceMatrix all_pairs_spd(const Graph& g) {
  DistanceMatrix dm;
  dm.n = g.n;
  const auto un = static_cast<std::size_t>(g.n);
  dm.d.assign(un * un, DistanceMatrix::kUnreachable);
  std::vector<int> queue(un);
  for (int src = 0; src < g.n; ++src) {
    int* row = dm.d.data() + static_cast<std::size_t>(src) * un;
    std::size_t head = 0, tail = 0;
    row[src] = 0;
    queue[tail++] = src;
    while (head < tail) {
      const int u = queue[head++];
      for (int v : g.neighbors[static_cast<std::size_t>(u)]) {
        if (row[v] == DistanceMatrix::kUnreachable) {
          row[v] = row[u] + 1;
          dm.diameter = std::max(dm.diameter, row[v]);
          queue[tail++] = v;
        }
      }
    }
  }
  return dm;
}

/// Nodes at exactly hop distance r from i, in increasing index order.
inline std::vector<int> shell(const DistanceMatrix& dm, int i, int r) {
  std::vector<int> out;
  if (r < 0) return out;
  for (int j = 0; j < dm.n; ++j) {
    if (dm(i, j) == r) out.push_back(j);
  }
  return out;
}

/// Entry r is the mean size of the r-shell over all nodes, r = 0..diameter.
inline std::vector<double> mean_shell_sizes(const DistanceMatrix& dm) {
  std::vector<double> counts(static_cast<std::size_t>(dm.diameter) + 1, 0.0);
  for (int v : dm.d) {
    if (v != DistanceMatrix::kUnreachable) counts[static_cast<std::size_t>(v)] += 1.0;
  }
  for (double& c : counts) c /= dm.n;
  return counts;
}

/// Mean number of nodes unreachable from a node.
inline double mean_unreachable_count(const DistanceMatrix& dm) {
  const auto missing = std::count(dm.d.begin(), dm.d.end(), DistanceMatrix::kUnreachable);
  return static_cast<double>(missing) / dm.n;
}

}  // namespace gtbias
