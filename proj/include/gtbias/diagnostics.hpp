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

// Distance-resolved mismatch between where a task's label signal lives and
// where the model spends its attention.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string_view>
#include <utility>
#include <vector>

#include "gtbias/error.hpp"
#include "gtbias/graph.hpp"
#include "gtbias/model.hpp"
#include "gtbias/task.hpp"

namespace gtbias {

/// Probability mass over hop distance r = 0..r_max().
struct DistanceProfile {
  std::vector<double> mass;

  int r_max() const { return static_cast<int>(mass.size()) - 1; }
  double total() const { return std::accumulate(mass.begin(), mass.end(), 0.0); }

  static DistanceProfile point_mass(int r, int r_max) {
    DistanceProfile p;
    p.mass.assign(static_cast<std::size_t>(std::max(r, r_max)) + 1, 0.0);
    p.mass[static_cast<std::size_t>(r)] = 1.0;
    return p;
  }
};

enum class Regime { kUnderReaching, kOverGlobalizing, kAligned };

constexpr std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::kUnderReaching: return "under_reaching";
    case Regime::kOverGlobalizing: return "over_globalizing";
    case Regime::kAligned: return "aligned";
  }
  return "aligned";
}

inline constexpr double kDefaultRegimeTolerance = 0.1;

struct MismatchReport {
  double mu_task = 0.0;
  double mu_attention = 0.0;
  double gap = 0.0;  // mu_task - mu_attention
  double w1 = 0.0;
  Regime regime = Regime::kAligned;
};

inline DistanceProfile normalized(std::vector<double> mass) {
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  require(total > 0.0 && std::isfinite(total), ErrorKind::kNumericFailure,
          "profile: mass must have a positive finite total");
  for (double& m : mass) m /= total;
  return DistanceProfile{std::move(mass)};
}

/// Task-side profile: beta of the mass split over r = 0 and r = 1 in the
/// ratio 1 : mean degree (the closed neighborhood), 1 - beta at r_star.
inline DistanceProfile task_profile(const Graph& g, const DistanceMatrix& dm, const TaskSpec& spec) {
  spec.validate();
  const auto shells = mean_shell_sizes(dm);
  const double self = shells[0];
  const double ring = shells.size() > 1 ? shells[1] : 0.0;
  (void)g;
  DistanceProfile p;
  p.mass.assign(static_cast<std::size_t>(std::max(spec.r_star, dm.diameter)) + 1, 0.0);
  p.mass[0] += spec.beta * self / (self + ring);
  p.mass[1] += spec.beta * ring / (self + ring);
  p.mass[static_cast<std::size_t>(spec.r_star)] += 1.0 - spec.beta;
  return p;
}

/// Shell sizes over the attention buckets r = 0..diameter+1, where the last
/// bucket counts unreachable nodes.
inline std::vector<double> bucket_shell_sizes(const DistanceMatrix& dm) {
  auto sizes = mean_shell_sizes(dm);
  sizes.push_back(mean_unreachable_count(dm));
  return sizes;
}

inline int bucket_of(const DistanceMatrix& dm, int i, int j) {
  const int r = dm(i, j);
  return r == DistanceMatrix::kUnreachable ? dm.diameter + 1 : r;
}

/// Raw attention mass per distance bucket for one n x n matrix, averaged over
/// query rows.
inline std::vector<double> distance_mass(const Matrix& a, const DistanceMatrix& dm) {
  require(a.rows() == dm.n && a.cols() == dm.n, ErrorKind::kParameter,
          "attention_profile: attention and distance matrices disagree on n");
  std::vector<double> mass(static_cast<std::size_t>(dm.diameter) + 2, 0.0);
  const int bucket_far = dm.diameter + 1;
  for (int i = 0; i < dm.n; ++i) {
    const int* row = dm.d.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dm.n);
    for (int j = 0; j < dm.n; ++j) {
      const int r = row[j] == DistanceMatrix::kUnreachable ? bucket_far : row[j];
      mass[static_cast<std::size_t>(r)] += a(i, j);
    }
  }
  for (double& m : mass) m /= dm.n;
  return mass;
}

/// M(r): attention mass at distance r, averaged uniformly over layers, heads
/// and query nodes. Not normalized, and linear in the record.
inline std::vector<double> pooled_distance_mass(const AttentionRecord& rec, const DistanceMatrix& dm) {
  require(rec.n_layers() > 0 && rec.n_heads() > 0, ErrorKind::kParameter,
          "attention_profile: empty attention record");
  std::vector<double> pooled(static_cast<std::size_t>(dm.diameter) + 2, 0.0);
  double count = 0.0;
  for (const auto& layer : rec.layers) {
    for (const Matrix& a : layer) {
      const auto m = distance_mass(a, dm);
      for (std::size_t r = 0; r < m.size(); ++r) pooled[r] += m[r];
      count += 1.0;
    }
  }
  for (double& m : pooled) m /= count;
  return pooled;
}

/// Divides raw mass by mean shell size (zero where no shell exists) and
/// renormalizes.
inline DistanceProfile shell_corrected(const std::vector<double>& raw, const DistanceMatrix& dm) {
  const auto sizes = bucket_shell_sizes(dm);
  std::vector<double> corrected(raw.size(), 0.0);
  for (std::size_t r = 0; r < raw.size(); ++r) {
    if (sizes[r] > 0.0) corrected[r] = raw[r] / sizes[r];
  }
  return normalized(std::move(corrected));
}

/// Model-side profile: pooled attention mass corrected by shell size. The
/// last bucket (diameter + 1) holds unreachable mass.
inline DistanceProfile attention_profile(const AttentionRecord& rec, const DistanceMatrix& dm) {
  return shell_corrected(pooled_distance_mass(rec, dm), dm);
}

/// Shell-corrected profile of a single layer (heads pooled).
inline DistanceProfile layer_attention_profile(const AttentionRecord& rec, int layer,
                                               const DistanceMatrix& dm) {
  AttentionRecord one;
  one.layers.push_back(rec.layers.at(static_cast<std::size_t>(layer)));
  return attention_profile(one, dm);
}

/// Variant that corrects each query row by its own shell sizes before
/// pooling. Emitted for inspection only.
inline DistanceProfile attention_profile_per_node(const AttentionRecord& rec, const DistanceMatrix& dm) {
  const int buckets = dm.diameter + 2;
  std::vector<double> pooled(static_cast<std::size_t>(buckets), 0.0);
  std::vector<double> row_mass(static_cast<std::size_t>(buckets));
  std::vector<double> row_size(static_cast<std::size_t>(buckets));
  for (const auto& layer : rec.layers) {
    for (const Matrix& a : layer) {
      for (int i = 0; i < dm.n; ++i) {
        std::fill(row_mass.begin(), row_mass.end(), 0.0);
        std::fill(row_size.begin(), row_size.end(), 0.0);
        for (int j = 0; j < dm.n; ++j) {
          const auto r = static_cast<std::size_t>(bucket_of(dm, i, j));
          row_mass[r] += a(i, j);
          row_size[r] += 1.0;
        }
        for (std::size_t r = 0; r < pooled.size(); ++r) {
          if (row_size[r] > 0.0) pooled[r] += row_mass[r] / row_size[r];
        }
      }
    }
  }
  return normalized(std::move(pooled));
}

/// Mean attention weight a node places on itself, pooled like the profile.
inline double self_attention_mass(const AttentionRecord& rec) {
  double total = 0.0, count = 0.0;
  for (const auto& layer : rec.layers) {
    for (const Matrix& a : layer) {
      total += a.diagonal().mean();
      count += 1.0;
    }
  }
  return count > 0.0 ? total / count : 0.0;
}

inline double mean_distance(const DistanceProfile& p) {
  double mu = 0.0;
  for (std::size_t r = 0; r < p.mass.size(); ++r) mu += static_cast<double>(r) * p.mass[r];
  return mu;
}

/// Exact 1-D earth mover's distance with ground metric |r - r'|, after
/// zero-padding both profiles to a common support.
inline double wasserstein1(const DistanceProfile& p, const DistanceProfile& q) {
  const std::size_t len = std::max(p.mass.size(), q.mass.size());
  double cdf_p = 0.0, cdf_q = 0.0, w1 = 0.0;
  for (std::size_t r = 0; r + 1 < len; ++r) {
    cdf_p += r < p.mass.size() ? p.mass[r] : 0.0;
    cdf_q += r < q.mass.size() ? q.mass[r] : 0.0;
    w1 += std::abs(cdf_p - cdf_q);
  }
  return w1;
}

inline Regime classify_regime(double gap, double tol = kDefaultRegimeTolerance) {
  require(tol > 0.0, ErrorKind::kParameter, "classify_regime: tolerance must be positive");
  if (gap > tol) return Regime::kUnderReaching;
  if (gap < -tol) return Regime::kOverGlobalizing;
  return Regime::kAligned;
}

inline MismatchReport mismatch(const DistanceProfile& task, const DistanceProfile& attention,
                               double tol = kDefaultRegimeTolerance) {
  MismatchReport rep;
  rep.mu_task = mean_distance(task);
  rep.mu_attention = mean_distance(attention);
  rep.gap = rep.mu_task - rep.mu_attention;
  rep.w1 = wasserstein1(task, attention);
  rep.regime = classify_regime(rep.gap, tol);
  return rep;
}

}  // namespace gtbias
