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

// Lossless text form of a graph, optionally with its labeled task appended
// as extra per-node columns.
//
//   gtbias-graph 1
//   n <n> communities <k> seed <seed> feature_dim <fd>
//   task none | task <beta> <r_star> <split_seed> <f_train> <f_val> <f_test>
//   edges <m>
//   <i> <j>                      (m lines, i < j, ascending)
//   columns id community z f0 .. f<fd-1> [valid label split g_loc_hat g_far_hat]
//   <one row per node>
//
// Reals are hexfloats so a round trip is bit-exact. split is one of
// train/val/test/none; label is -1 on invalid nodes, where both scores are nan.

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gtbias/error.hpp"
#include "gtbias/graph.hpp"
#include "gtbias/model.hpp"
#include "gtbias/task.hpp"

namespace gtbias {

struct GraphFile {
  Graph graph;
  std::optional<TaskSpec> spec;
  std::optional<LabeledTask> task;
};

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "none") return Split::kNone;
  fail(ErrorKind::kFormat, "graph file: unknown split '" + s + "'");
}

inline void write_graph(std::ostream& os, const Graph& g, const TaskSpec* spec = nullptr,
                        const LabeledTask* task = nullptr) {
  require((spec == nullptr) == (task == nullptr), ErrorKind::kParameter,
          "write_graph: task and its spec must be given together");
  require(task == nullptr || task->n() == g.n, ErrorKind::kParameter,
          "write_graph: task size does not match graph");
  os << "gtbias-graph 1\n";
  os << "n " << g.n << " communities " << g.n_communities << " seed " << g.seed << " feature_dim "
     << g.feature_dim() << '\n';
  if (spec) {
    os << "task " << std::hexfloat << spec->beta << std::dec << ' ' << spec->r_star << ' ' << spec->split_seed
       << std::hexfloat;
    for (double f : spec->split_fractions) os << ' ' << f;
    os << std::defaultfloat << '\n';
  } else {
    os << "task none\n";
  }
  os << "edges " << g.edge_count() << '\n';
  for (int i = 0; i < g.n; ++i)
    for (int j : g.neighbors[static_cast<std::size_t>(i)])
      if (i < j) os << i << ' ' << j << '\n';
  os << "columns id community z";
  for (int f = 0; f < g.feature_dim(); ++f) os << " f" << f;
  if (task) os << " valid label split g_loc_hat g_far_hat";
  os << '\n';
  for (int i = 0; i < g.n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    os << std::dec << i << ' ' << g.community[ui] << std::hexfloat << ' ' << g.z[ui];
    for (int f = 0; f < g.feature_dim(); ++f) os << ' ' << g.features(i, f);
    if (task) {
      os << std::dec << ' ' << int{task->valid[ui]} << ' ' << task->labels[ui] << ' '
         << to_string(task->split[ui]) << std::hexfloat << ' ' << task->g_loc_hat[ui] << ' '
         << task->g_far_hat[ui];
    }
    os << '\n';
  }
  os << std::defaultfloat << std::dec;
}

inline GraphFile read_graph(std::istream& is) {
  using detail::expect_word;
  using detail::parse_double;
  expect_word(is, "gtbias-graph");
  int version = 0;
  is >> version;
  require(version == 1, ErrorKind::kFormat, "graph file: unsupported version");

  GraphFile out;
  Graph& g = out.graph;
  int fd = 0;
  expect_word(is, "n");
  is >> g.n;
  expect_word(is, "communities");
  is >> g.n_communities;
  expect_word(is, "seed");
  is >> g.seed;
  expect_word(is, "feature_dim");
  is >> fd;
  require(static_cast<bool>(is) && g.n >= 0 && fd >= 1, ErrorKind::kFormat, "graph file: bad header");

  std::string tok;
  expect_word(is, "task");
  is >> tok;
  if (tok != "none") {
    TaskSpec spec;
    spec.beta = parse_double(tok);
    is >> spec.r_star >> spec.split_seed;
    for (double& f : spec.split_fractions) {
      is >> tok;
      f = parse_double(tok);
    }
    require(static_cast<bool>(is), ErrorKind::kFormat, "graph file: bad task line");
    out.spec = spec;
  }

  std::size_t m = 0;
  expect_word(is, "edges");
  is >> m;
  const auto un = static_cast<std::size_t>(g.n);
  g.neighbors.assign(un, {});
  for (std::size_t e = 0; e < m; ++e) {
    int i = -1, j = -1;
    is >> i >> j;
    require(static_cast<bool>(is) && 0 <= i && i < j && j < g.n, ErrorKind::kFormat,
            "graph file: bad edge on line " + std::to_string(e + 1) + " of the edge list");
    g.neighbors[static_cast<std::size_t>(i)].push_back(j);
    g.neighbors[static_cast<std::size_t>(j)].push_back(i);
  }
  for (auto& row : g.neighbors) std::sort(row.begin(), row.end());

  expect_word(is, "columns");
  std::string line;
  std::getline(is, line);
  std::istringstream cols(line);
  std::vector<std::string> names;
  while (cols >> tok) names.push_back(tok);
  const bool with_task = names.size() == static_cast<std::size_t>(fd) + 3 + 5;
  require(names.size() == static_cast<std::size_t>(fd) + 3 || with_task, ErrorKind::kFormat,
          "graph file: column count does not match feature_dim");
  require(with_task == out.spec.has_value(), ErrorKind::kFormat,
          "graph file: task columns present without a task line, or the reverse");

  g.community.assign(un, 0);
  g.z.assign(un, 0.0);
  g.features.resize(g.n, fd);
  LabeledTask task;
  if (with_task) {
    task.labels.assign(un, kUndefinedLabel);
    task.valid.assign(un, 0);
    task.g_loc_hat.assign(un, 0.0);
    task.g_far_hat.assign(un, 0.0);
    task.split.assign(un, Split::kNone);
  }
  for (int i = 0; i < g.n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    int id = -1;
    is >> id >> g.community[ui];
    require(static_cast<bool>(is) && id == i, ErrorKind::kFormat,
            "graph file: node rows must be listed in id order (at node " + std::to_string(i) + ")");
    is >> tok;
    g.z[ui] = parse_double(tok);
    for (int f = 0; f < fd; ++f) {
      is >> tok;
      g.features(i, f) = parse_double(tok);
    }
    if (with_task) {
      int valid = 0;
      is >> valid >> task.labels[ui] >> tok;
      task.valid[ui] = static_cast<std::uint8_t>(valid != 0);
      task.split[ui] = parse_split(tok);
      is >> tok;
      task.g_loc_hat[ui] = parse_double(tok);
      is >> tok;
      task.g_far_hat[ui] = parse_double(tok);
    }
    require(static_cast<bool>(is), ErrorKind::kFormat, "graph file: truncated node rows");
  }
  if (with_task) {
    for (int i = 0; i < g.n; ++i) {
      switch (task.split[static_cast<std::size_t>(i)]) {
        case Split::kTrain: task.train.push_back(i); break;
        case Split::kVal: task.val.push_back(i); break;
        case Split::kTest: task.test.push_back(i); break;
        case Split::kNone: break;
      }
    }
    out.task = std::move(task);
  }
  return out;
}

}  // namespace gtbias
