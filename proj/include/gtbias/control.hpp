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

// Policies for the distance-bias coefficient lambda: held fixed, or steered
// by a clipped proportional law on the measured mean-distance gap.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gtbias/error.hpp"

namespace gtbias {

enum class ControllerKind { kFixed, kZeroGap, kTargetGap };

constexpr std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kFixed: return "fixed";
    case ControllerKind::kZeroGap: return "zero_gap";
    case ControllerKind::kTargetGap: return "target_gap";
  }
  return "fixed";
}

inline ControllerKind parse_controller_kind(std::string_view s) {
  if (s == "fixed") return ControllerKind::kFixed;
  if (s == "zero_gap") return ControllerKind::kZeroGap;
  if (s == "target_gap") return ControllerKind::kTargetGap;
  fail(ErrorKind::kConfig, "unknown controller kind '" + std::string(s) + "'");
}

struct ControllerConfig {
  ControllerKind kind = ControllerKind::kFixed;
  double lambda_init = 0.0;
  double target_gap = 0.0;  // used by kTargetGap only
  double gain = 0.5;
  int update_every = 5;
  double lambda_min = -1.0;
  double lambda_max = 3.0;
  int warmup_epochs = 20;

  bool adaptive() const { return kind != ControllerKind::kFixed; }

  /// g*: zero for the zero-gap policy, the configured target otherwise.
  double effective_target() const { return kind == ControllerKind::kZeroGap ? 0.0 : target_gap; }

  void validate() const {
    require(std::isfinite(lambda_init) && std::isfinite(target_gap), ErrorKind::kParameter,
            "controller: lambda_init and target_gap must be finite");
    require(lambda_min <= lambda_init && lambda_init <= lambda_max, ErrorKind::kParameter,
            "controller: lambda_init must lie within [lambda_min, lambda_max]");
    require(gain > 0.0, ErrorKind::kParameter, "controller: gain must be positive");
    require(update_every >= 1, ErrorKind::kParameter, "controller: update_every must be >= 1");
    require(warmup_epochs >= 0, ErrorKind::kParameter, "controller: warmup_epochs must be >= 0");
  }

  static ControllerConfig fixed(double lambda) {
    ControllerConfig c;
    c.kind = ControllerKind::kFixed;
    c.lambda_init = lambda;
    c.lambda_min = std::min(c.lambda_min, lambda);
    c.lambda_max = std::max(c.lambda_max, lambda);
    return c;
  }
};

struct ControlEvent {
  int epoch = 0;
  double measured_gap = 0.0;
  double lambda = 0.0;  // value after the update
};

struct ControllerState {
  double lambda = 0.0;
  int last_update_epoch = -1;  // -1: never updated
  std::vector<ControlEvent> gap_history;
};

inline ControllerState start_controller(const ControllerConfig& cfg) {
  cfg.validate();
  return ControllerState{cfg.lambda_init, -1, {}};
}

/// lambda <- clip(lambda - gain * (gap - g*)). A gap above target means the
/// model is too local relative to the target, so lambda falls.
inline ControllerState controller_step(const ControllerConfig& cfg, ControllerState st, int epoch,
                                       double measured_gap) {
  if (!std::isfinite(measured_gap)) {
    fail(ErrorKind::kController, "controller: non-finite measured gap at epoch " + std::to_string(epoch));
  }
  if (!cfg.adaptive()) return st;
  const bool due = epoch >= cfg.warmup_epochs &&
                   (st.last_update_epoch < 0 || epoch - st.last_update_epoch >= cfg.update_every);
  if (!due) return st;
  st.lambda = std::clamp(st.lambda - cfg.gain * (measured_gap - cfg.effective_target()),
                         cfg.lambda_min, cfg.lambda_max);
  st.last_update_epoch = epoch;
  st.gap_history.push_back({epoch, measured_gap, st.lambda});
  return st;
}

// ---------------------------------------------------------------------------
// Oracle targets

/// One finished fixed-lambda run, reduced to what target selection needs.
struct SweepSample {
  double beta = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_gap = 0.0;
  double final_w1 = 0.0;
};

struct OracleTarget {
  double lambda_star = 0.0;
  double mean_val_accuracy = 0.0;
  double mean_test_accuracy = 0.0;
  double target_gap = 0.0;  // mean final gap of the lambda_star runs
  int n_runs = 0;
};

/// True when lambda a should win over b at equal validation accuracy.
inline bool prefer_lambda(double a, double b) {
  if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
  return a < b;
}

/// For each beta, the lambda with the highest mean final validation accuracy
/// (ties: smallest |lambda|, then smallest lambda), and the mean final gap of
/// its runs as the target.
inline std::map<double, OracleTarget> oracle_targets_from_sweep(const std::vector<SweepSample>& sweep,
                                                                 const std::vector<double>& required_betas = {}) {
  struct Acc {
    double val = 0.0, test = 0.0, gap = 0.0;
    int n = 0;
  };
  std::map<double, std::map<double, Acc>> cells;
  for (const auto& s : sweep) {
    auto& c = cells[s.beta][s.lambda];
    c.val += s.val_accuracy;
    c.test += s.test_accuracy;
    c.gap += s.final_gap;
    c.n += 1;
  }
  std::vector<double> missing;
  for (double b : required_betas) {
    if (!cells.contains(b)) missing.push_back(b);
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "oracle targets: sweep has no runs for beta";
    for (double b : missing) msg << ' ' << b;
    fail(ErrorKind::kIncompleteTable, msg.str());
  }
  require(!cells.empty(), ErrorKind::kIncompleteTable, "oracle targets: empty sweep");

  std::map<double, OracleTarget> out;
  for (const auto& [beta, by_lambda] : cells) {
    std::optional<double> best;
    double best_val = 0.0;
    for (const auto& [lambda, c] : by_lambda) {
      const double val = c.val / c.n;
      if (!best || val > best_val || (val == best_val && prefer_lambda(lambda, *best))) {
        best = lambda;
        best_val = val;
      }
    }
    const Acc& c = by_lambda.at(*best);
    out[beta] = OracleTarget{*best, c.val / c.n, c.test / c.n, c.gap / c.n, c.n};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed-loop check against a synthetic plant

struct ConvergenceResult {
  double final_lambda = 0.0;
  double final_gap = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> lambda_trace;
};

/// Drives controller_step against gap = plant(lambda) for up to max_iters
/// updates, stopping once |gap - g*| < tolerance.
inline ConvergenceResult closed_loop_convergence_check(const std::function<double(double)>& plant,
                                                       const ControllerConfig& cfg, double tolerance,
                                                       int max_iters = 200) {
  ControllerState st = start_controller(cfg);
  ConvergenceResult res;
  res.lambda_trace.push_back(st.lambda);
  for (int k = 0; k < max_iters; ++k) {
    const double gap = plant(st.lambda);
    if (std::abs(gap - cfg.effective_target()) < tolerance) {
      res.converged = true;
      break;
    }
    st = controller_step(cfg, std::move(st), cfg.warmup_epochs + k * cfg.update_every, gap);
    res.lambda_trace.push_back(st.lambda);
    res.iterations = k + 1;
  }
  res.final_lambda = st.lambda;
  res.final_gap = plant(st.lambda);
  res.converged = res.converged || std::abs(res.final_gap - cfg.effective_target()) < tolerance;
  return res;
}

}  // namespace gtbias
