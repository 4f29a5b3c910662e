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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gtbias/error.hpp"
#include "gtbias/graph.hpp"
#include "gtbias/rng.hpp"

namespace gtbias {

enum class Split : int { kNone = -1, kTrain = 0, kVal = 1, kTest = 2 };

constexpr std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kNone: return "none";
  }
  return "none";
}

/// Two-signal node classification task definition.
struct TaskSpec {
  double beta = 1.0;   // 1 = purely local, 0 = purely far
  int r_star = 2;      // far shell radius
  std::array<double, 3> split_fractions{0.6, 0.2, 0.2};
  std::uint64_t split_seed = 0;

  void validate() const {
    require(beta >= 0.0 && beta <= 1.0, ErrorKind::kParameter, "task: beta must lie in [0, 1]");
    require(r_star >= 2, ErrorKind::kParameter, "task: r_star must be >= 2");
    double sum = 0.0;
    for (double f : split_fractions) {
      require(f > 0.0, ErrorKind::kParameter, "task: split fractions must be positive");
      sum += f;
    }
    require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::kParameter, "task: split fractions must sum to 1");
  }
};

inline constexpr int kUndefinedLabel = -1;
inline constexpr int kMinValidNodes = 30;

struct LabeledTask {
  std::vector<int> labels;           // 0/1 on valid nodes, kUndefinedLabel elsewhere
  std::vector<std::uint8_t> valid;   // nonempty far shell
  std::vector<double> g_loc_hat;     // NaN on invalid nodes
  std::vector<double> g_far_hat;     // NaN on invalid nodes
  std::vector<Split> split;          // per-node assignment
  std::vector<int> train, val, test; // ascending node ids

  int n() const { return static_cast<int>(labels.size()); }

  std::span<const int> nodes(Split s) const {
    switch (s) {
      case Split::kTrain: return train;
      case Split::kVal: return val;
      case Split::kTest: return test;
      case Split::kNone: break;
    }
    return {};
  }

  int valid_count() const {
    return static_cast<int>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }
};

/// Mean latent signal over the closed 1-hop neighborhood of i.
inline double local_score(const Graph& g, const DistanceMatrix& /*dm*/, int i) {
  const auto& nb = g.neighbors[static_cast<std::size_t>(i)];
  double sum = g.z[static_cast<std::size_t>(i)];
  for (int j : nb) sum += g.z[static_cast<std::size_t>(j)];
  return sum / static_cast<double>(nb.size() + 1);
}

/// Mean latent signal over the r_star shell of i; empty shell gives nullopt.
inline std::optional<double> far_score(const Graph& g, const DistanceMatrix& dm, int i, int r_star) {
  double sum = 0.0;
  int count = 0;
  for (int j = 0; j < dm.n; ++j) {
    if (dm(i, j) == r_star) {
      sum += g.z[static_cast<std::size_t>(j)];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

/// (x - mean) / std over masked entries, population std. Unmasked entries are
/// copied through unchanged.
inline std::vector<double> standardize(std::span<const double> scores,
                                       std::span<const std::uint8_t> mask) {
  require(scores.size() == mask.size(), ErrorKind::kParameter, "standardize: size mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) {
      sum += scores[i];
      ++count;
    }
  }
  require(count >= 2, ErrorKind::kDegenerateTask, "standardize: fewer than two valid nodes");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) ss += (scores[i] - mean) * (scores[i] - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(count));
  require(sd > 0.0 && std::isfinite(sd), ErrorKind::kDegenerateTask,
          "standardize: zero variance over valid nodes");
  std::vector<double> out(scores.begin(), scores.end());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) out[i] = (scores[i] - mean) / sd;
  }
  return out;
}

/// Draws train/val/test from the valid nodes. The first round(f_train*V)
/// shuffled nodes go to train, the next round(f_val*V) to val, the rest to test.
inline void assign_splits(LabeledTask& task, const TaskSpec& spec) {
  std::vector<int> pool;
  for (int i = 0; i < task.n(); ++i) {
    if (task.valid[static_cast<std::size_t>(i)]) pool.push_back(i);
  }
  Rng rng(spec.split_seed);
  rng.shuffle(pool);
  const auto total = static_cast<double>(pool.size());
  const auto n_train = static_cast<std::size_t>(std::llround(spec.split_fractions[0] * total));
  const auto n_val = std::min(pool.size() - n_train,
                              static_cast<std::size_t>(std::llround(spec.split_fractions[1] * total)));
  task.split.assign(static_cast<std::size_t>(task.n()), Split::kNone);
  task.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  task.val.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train),
                  pool.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  task.test.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), pool.end());
  for (auto* part : {&task.train, &task.val, &task.test}) std::sort(part->begin(), part->end());
  for (int i : task.train) task.split[static_cast<std::size_t>(i)] = Split::kTrain;
  for (int i : task.val) task.split[static_cast<std::size_t>(i)] = Split::kVal;
  for (int i : task.test) task.split[static_cast<std::size_t>(i)] = Split::kTest;
}

/// Builds labels y_i = 1[beta*g_loc_hat + (1-beta)*g_far_hat > 0] on nodes
/// whose r_star shell is nonempty, then splits those nodes. Fewer than
/// `min_valid_nodes` valid nodes is a degenerate task.
inline LabeledTask make_labels(const Graph& g, const DistanceMatrix& dm, const TaskSpec& spec,
                               int min_valid_nodes = kMinValidNodes) {
  spec.validate();
  require(dm.n == g.n, ErrorKind::kParameter, "make_labels: distance matrix does not match graph");
  const auto un = static_cast<std::size_t>(g.n);
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

  LabeledTask task;
  task.valid.assign(un, 0);
  std::vector<double> loc(un, kNaN), far(un, kNaN);
  for (int i = 0; i < g.n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (auto f = far_score(g, dm, i, spec.r_star)) {
      task.valid[ui] = 1;
      far[ui] = *f;
      loc[ui] = local_score(g, dm, i);
    }
  }
  const int n_valid = task.valid_count();
  if (n_valid < min_valid_nodes) {
    fail(ErrorKind::kDegenerateTask, "make_labels: only " + std::to_string(n_valid) +
                                         " valid nodes (graph seed " + std::to_string(g.seed) + ")");
  }
  task.g_loc_hat = standardize(loc, task.valid);
  task.g_far_hat = standardize(far, task.valid);

  task.labels.assign(un, kUndefinedLabel);
  for (std::size_t i = 0; i < un; ++i) {
    if (!task.valid[i]) continue;
    const double s = spec.beta * task.g_loc_hat[i] + (1.0 - spec.beta) * task.g_far_hat[i];
    task.labels[i] = s > 0.0 ? 1 : 0;
  }
  assign_splits(task, spec);
  return task;
}

}  // namespace gtbias
