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

// Experiment runner: seeded single runs, fixed-lambda sweeps, controller
// runs, and best-fixed selection.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "gtbias/control.hpp"
#include "gtbias/diagnostics.hpp"
#include "gtbias/error.hpp"
#include "gtbias/graph.hpp"
#include "gtbias/model.hpp"
#include "gtbias/rng.hpp"
#include "gtbias/task.hpp"

namespace gtbias {

struct RunConfig {
  CsbmParams csbm;
  TaskSpec task;
  ModelConfig model;
  AdamConfig optimizer;
  ControllerConfig controller;
  int epochs = 200;
  int eval_every = 10;
  std::uint64_t run_seed = 0;
  double regime_tolerance = kDefaultRegimeTolerance;
  std::string output_dir = "out";

  void validate() const {
    require(epochs >= 1, ErrorKind::kParameter, "run: epochs must be >= 1");
    require(eval_every >= 1, ErrorKind::kParameter, "run: eval_every must be >= 1");
    require(regime_tolerance > 0.0, ErrorKind::kParameter, "run: regime_tolerance must be positive");
    require(optimizer.learning_rate > 0.0, ErrorKind::kParameter, "run: learning_rate must be positive");
    csbm.validate();
    task.validate();
    model.validate();
    controller.validate();
  }

  /// Copy with the graph, split, and parameter seeds derived from run_seed.
  RunConfig seeded() const {
    RunConfig c = *this;
    c.csbm.seed = derive_seed(run_seed, 1);
    c.task.split_seed = derive_seed(run_seed, 2);
    c.model.param_seed = derive_seed(run_seed, 3);
    return c;
  }
};

/// Sweep defaults: beta grid, lambda grid, and seed count.
inline const std::vector<double> kDefaultBetas{0.0, 0.25, 0.5, 0.75, 1.0};
inline const std::vector<double> kDefaultLambdas{-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0};
inline constexpr int kDefaultSeedCount = 5;

struct EvalRecord {
  int epoch = 0;  // number of completed optimizer steps
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double lambda = 0.0;
  double self_attention = 0.0;
  MismatchReport report;
};

struct RunResult {
  std::vector<EvalRecord> trajectory;
  std::vector<ControlEvent> control;
  double final_train_accuracy = 0.0;
  double final_val_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  double final_lambda = 0.0;
  double final_gap = 0.0;
  double final_w1 = 0.0;
  MismatchReport final_report;
  // raw material for recomputing alternative profiles offline
  DistanceProfile task_profile;
  DistanceProfile attention_profile;
  DistanceProfile attention_profile_per_node;
  std::vector<DistanceProfile> layer_profiles;
  std::vector<double> pooled_mass;
  std::vector<double> shell_sizes;
  int n_valid = 0;
  int diameter = 0;
  ModelState final_state;
  double wall_time = 0.0;  // seconds; excluded from serialized outputs
};

/// Sample graph, label task, and train with the configured lambda policy.
inline RunResult run_one(const RunConfig& base) {
  base.validate();
  const auto started = std::chrono::steady_clock::now();
  const RunConfig cfg = base.seeded();

  const Graph g = sample_csbm(cfg.csbm);
  const DistanceMatrix dm = all_pairs_spd(g);
  LabeledTask task;
  try {
    task = make_labels(g, dm, cfg.task);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(e.what()) + " [run_seed " + std::to_string(cfg.run_seed) + "]");
  }
  const ModelInput input = prepare_input(g, dm);
  const DistanceProfile task_prof = task_profile(g, dm, cfg.task);

  ModelState state = init_model(cfg.model, g.feature_dim());
  ControllerState ctl = start_controller(cfg.controller);
  state.lambda_dist = ctl.lambda;

  RunResult res;
  res.task_profile = task_prof;
  res.n_valid = task.valid_count();
  res.diameter = dm.diameter;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const ForwardPass fp = forward(input, state);
    const LossAndGrads lg = loss_and_grads(fp, task, Split::kTrain, state);
    if (cfg.controller.adaptive()) {
      const double gap = mismatch(task_prof, attention_profile(fp.attention, dm), cfg.regime_tolerance).gap;
      ctl = controller_step(cfg.controller, std::move(ctl), epoch, gap);
    }
    state = train_step(std::move(state), lg.grads, cfg.optimizer);
    state.lambda_dist = ctl.lambda;
    if (!state.params.all_finite()) {
      throw NumericFailure(-1, "run: non-finite parameters after step " + std::to_string(epoch + 1) +
                                   " [run_seed " + std::to_string(cfg.run_seed) + "]");
    }

    const int done = epoch + 1;
    if (done % cfg.eval_every == 0 || done == cfg.epochs) {
      const ForwardPass ev = forward(input, state);
      EvalRecord rec;
      rec.epoch = done;
      rec.train_loss = cross_entropy(ev.logits, task.train, task.labels).loss;
      rec.train_accuracy = evaluate(ev.logits, task, Split::kTrain);
      rec.val_accuracy = evaluate(ev.logits, task, Split::kVal);
      rec.test_accuracy = evaluate(ev.logits, task, Split::kTest);
      rec.lambda = state.lambda_dist;
      rec.self_attention = self_attention_mass(ev.attention);
      const DistanceProfile attn = attention_profile(ev.attention, dm);
      rec.report = mismatch(task_prof, attn, cfg.regime_tolerance);
      res.trajectory.push_back(rec);
      if (done == cfg.epochs) {
        res.attention_profile = attn;
        res.attention_profile_per_node = attention_profile_per_node(ev.attention, dm);
        for (int l = 0; l < ev.attention.n_layers(); ++l) {
          res.layer_profiles.push_back(layer_attention_profile(ev.attention, l, dm));
        }
        res.pooled_mass = pooled_distance_mass(ev.attention, dm);
        res.shell_sizes = bucket_shell_sizes(dm);
      }
    }
  }

  const EvalRecord& last = res.trajectory.back();
  res.control = ctl.gap_history;
  res.final_train_accuracy = last.train_accuracy;
  res.final_val_accuracy = last.val_accuracy;
  res.final_test_accuracy = last.test_accuracy;
  res.final_lambda = last.lambda;
  res.final_report = last.report;
  res.final_gap = last.report.gap;
  res.final_w1 = last.report.w1;
  res.final_state = std::move(state);
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps

/// One row of a sweep or controller table. For controller rows `lambda` is
/// the initial value and `target_gap` the g* in force.
struct SweepRow {
  double beta = 0.0;
  std::string policy = "fixed";
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double train_accuracy = std::numeric_limits<double>::quiet_NaN();
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  double final_lambda = std::numeric_limits<double>::quiet_NaN();
  double mu_task = std::numeric_limits<double>::quiet_NaN();
  double mu_attention = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  double w1 = std::numeric_limits<double>::quiet_NaN();
  Regime regime = Regime::kAligned;
  double target_gap = std::numeric_limits<double>::quiet_NaN();

  auto key() const { return std::tuple(beta, policy, lambda, seed); }
};

struct SweepTable {
  std::vector<SweepRow> rows;

  std::vector<double> betas() const {
    std::set<double> s;
    for (const auto& r : rows) s.insert(r.beta);
    return {s.begin(), s.end()};
  }
};

inline SweepRow summarize(const RunConfig& cfg, const RunResult& r) {
  SweepRow row;
  row.beta = cfg.task.beta;
  row.policy = std::string(to_string(cfg.controller.kind));
  row.lambda = cfg.controller.lambda_init;
  row.seed = cfg.run_seed;
  row.ok = true;
  row.train_accuracy = r.final_train_accuracy;
  row.val_accuracy = r.final_val_accuracy;
  row.test_accuracy = r.final_test_accuracy;
  row.final_lambda = r.final_lambda;
  row.mu_task = r.final_report.mu_task;
  row.mu_attention = r.final_report.mu_attention;
  row.gap = r.final_report.gap;
  row.w1 = r.final_report.w1;
  row.regime = r.final_report.regime;
  if (cfg.controller.adaptive()) row.target_gap = cfg.controller.effective_target();
  return row;
}

/// Runs every config on a pool of `threads` workers. Row i always holds the
/// outcome of cfgs[i]; a failing run is recorded in its row and never aborts
/// the batch.
inline SweepTable run_batch(const std::vector<RunConfig>& cfgs, int threads) {
  SweepTable table;
  table.rows.resize(cfgs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfgs.size(); i = next++) {
      const RunConfig& cfg = cfgs[i];
      try {
        table.rows[i] = summarize(cfg, run_one(cfg));
      } catch (const std::exception& e) {
        SweepRow row;
        row.beta = cfg.task.beta;
        row.policy = std::string(to_string(cfg.controller.kind));
        row.lambda = cfg.controller.lambda_init;
        row.seed = cfg.run_seed;
        row.ok = false;
        row.error = e.what();
        if (cfg.controller.adaptive()) row.target_gap = cfg.controller.effective_target();
        table.rows[i] = std::move(row);
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(cfgs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return table;
}

inline std::vector<std::uint64_t> seed_range(int count) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < count; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

/// Cartesian beta x lambda x seed grid of fixed-lambda runs.
inline SweepTable run_sweep(const std::vector<double>& betas, const std::vector<double>& lambdas,
                            const std::vector<std::uint64_t>& seeds, const RunConfig& base, int threads = 1) {
  require(!betas.empty() && !lambdas.empty() && !seeds.empty(), ErrorKind::kParameter,
          "sweep: beta, lambda, and seed grids must be nonempty");
  std::vector<RunConfig> cfgs;
  for (double beta : betas)
    for (double lambda : lambdas)
      for (std::uint64_t seed : seeds) {
        RunConfig c = base;
        c.task.beta = beta;
        const ControllerConfig bounds = base.controller;
        c.controller = ControllerConfig::fixed(lambda);
        c.controller.lambda_min = std::min(bounds.lambda_min, lambda);
        c.controller.lambda_max = std::max(bounds.lambda_max, lambda);
        c.run_seed = seed;
        cfgs.push_back(std::move(c));
      }
  return run_batch(cfgs, threads);
}

// ---------------------------------------------------------------------------
// Best-fixed selection

struct Selection {
  double beta = 0.0;
  double lambda_star = 0.0;
  double mean_val_accuracy = 0.0;
  double mean_test_accuracy = 0.0;
  double oracle_gap = 0.0;  // mean final gap of the lambda_star runs
  int n_runs = 0;
};

/// Validation-selected best fixed lambda per beta. Every (beta, lambda, seed)
/// cell of the grid spanned by the table must be present; failed runs are
/// left out of the means.
inline std::vector<Selection> select_best_fixed(const SweepTable& table) {
  std::set<double> betas, lambdas;
  std::set<std::uint64_t> seeds;
  std::set<std::tuple<double, double, std::uint64_t>> present;
  std::vector<SweepSample> samples;
  for (const auto& r : table.rows) {
    if (r.policy != to_string(ControllerKind::kFixed)) continue;
    betas.insert(r.beta);
    lambdas.insert(r.lambda);
    seeds.insert(r.seed);
    present.emplace(r.beta, r.lambda, r.seed);
    if (r.ok) samples.push_back({r.beta, r.lambda, r.seed, r.val_accuracy, r.test_accuracy, r.gap, r.w1});
  }
  require(!betas.empty(), ErrorKind::kIncompleteTable, "select: table has no fixed-lambda rows");
  std::ostringstream missing;
  int n_missing = 0;
  for (double b : betas)
    for (double l : lambdas)
      for (std::uint64_t s : seeds)
        if (!present.contains({b, l, s})) {
          if (n_missing++ < 20) missing << " (beta=" << b << ", lambda=" << l << ", seed=" << s << ")";
        }
  if (n_missing > 0) {
    fail(ErrorKind::kIncompleteTable,
         "select: " + std::to_string(n_missing) + " missing cells:" + missing.str());
  }
  std::set<double> covered;
  for (const auto& s : samples) covered.insert(s.beta);
  for (double b : betas) {
    if (!covered.contains(b)) {
      std::ostringstream msg;
      msg << "select: every run failed for beta=" << b;
      fail(ErrorKind::kIncompleteTable, msg.str());
    }
  }
  std::vector<Selection> out;
  for (const auto& [beta, t] : oracle_targets_from_sweep(samples, {betas.begin(), betas.end()})) {
    out.push_back({beta, t.lambda_star, t.mean_val_accuracy, t.mean_test_accuracy, t.target_gap, t.n_runs});
  }
  return out;
}

/// Zero-gap and target-gap runs for every selected beta and seed, starting
/// from base.controller (lambda_init, gain, cadence, bounds).
inline SweepTable run_controllers(const std::vector<Selection>& selections,
                                  const std::vector<std::uint64_t>& seeds, const RunConfig& base,
                                  int threads = 1,
                                  const std::vector<ControllerKind>& kinds = {ControllerKind::kZeroGap,
                                                                              ControllerKind::kTargetGap}) {
  std::vector<RunConfig> cfgs;
  for (const auto& sel : selections)
    for (ControllerKind kind : kinds)
      for (std::uint64_t seed : seeds) {
        RunConfig c = base;
        c.task.beta = sel.beta;
        c.controller.kind = kind;
        c.controller.target_gap = kind == ControllerKind::kTargetGap ? sel.oracle_gap : 0.0;
        c.run_seed = seed;
        cfgs.push_back(std::move(c));
      }
  return run_batch(cfgs, threads);
}

}  // namespace gtbias
