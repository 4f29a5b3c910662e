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

// JSON experiment configuration. Every key is optional and falls back to the
// library default; any key not listed in the schema is an error. See
// configs/README.md for the schema.

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gtbias/control.hpp"
#include "gtbias/error.hpp"
#include "gtbias/harness.hpp"
#include "json.hpp"

namespace gtbias {

/// A run template plus the sweep grid it is expanded over.
struct ExperimentConfig {
  RunConfig run;
  std::vector<double> betas = kDefaultBetas;
  std::vector<double> lambdas = kDefaultLambdas;
  int seeds = kDefaultSeedCount;
  int threads = 1;

  void validate() const {
    run.validate();
    require(!betas.empty() && !lambdas.empty(), ErrorKind::kConfig, "config: sweep grids must be nonempty");
    require(seeds >= 1, ErrorKind::kConfig, "config: sweep.seeds must be >= 1");
    require(threads >= 1, ErrorKind::kConfig, "config: sweep.threads must be >= 1");
    for (double b : betas)
      require(b >= 0.0 && b <= 1.0, ErrorKind::kConfig, "config: sweep betas must lie in [0, 1]");
    require(std::set<double>(betas.begin(), betas.end()).size() == betas.size() &&
                std::set<double>(lambdas.begin(), lambdas.end()).size() == lambdas.size(),
            ErrorKind::kConfig, "config: sweep grids must not repeat values");
  }
};

namespace detail {

using Json = nlohmann::json;

/// Reads the keys of one object, refusing anything it does not consume.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j.is_object(), ErrorKind::kConfig, "config: '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kConfig, "config: bad value for '" + where(key) + "': " + e.what());
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const Json kEmpty = Json::object();
    return Section(j_.contains(key) ? j_.at(key) : kEmpty, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) fail(ErrorKind::kConfig, "config: unknown key '" + where(key) + "'");
    }
  }

 private:
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  RunConfig& run = cfg.run;
  detail::Section root(j, "");

  auto csbm = root.sub("csbm");
  csbm.get("n_nodes", run.csbm.n_nodes);
  csbm.get("n_communities", run.csbm.n_communities);
  csbm.get("p_in", run.csbm.p_in);
  csbm.get("p_out", run.csbm.p_out);
  csbm.get("signal_strength", run.csbm.signal_strength);
  csbm.get("feature_dim", run.csbm.feature_dim);
  csbm.get("feature_noise_sigma", run.csbm.feature_noise_sigma);
  csbm.finish();

  auto task = root.sub("task");
  task.get("beta", run.task.beta);
  task.get("r_star", run.task.r_star);
  task.get("split_fractions", run.task.split_fractions);
  task.finish();

  auto model = root.sub("model");
  model.get("n_layers", run.model.n_layers);
  model.get("n_heads", run.model.n_heads);
  model.get("d_model", run.model.d_model);
  model.get("d_ff", run.model.d_ff);
  model.finish();

  auto opt = root.sub("optimizer");
  opt.get("learning_rate", run.optimizer.learning_rate);
  opt.get("beta1", run.optimizer.beta1);
  opt.get("beta2", run.optimizer.beta2);
  opt.get("eps", run.optimizer.eps);
  opt.finish();

  auto ctl = root.sub("controller");
  std::string kind(to_string(run.controller.kind));
  ctl.get("kind", kind);
  run.controller.kind = parse_controller_kind(kind);
  ctl.get("lambda_init", run.controller.lambda_init);
  ctl.get("target_gap", run.controller.target_gap);
  ctl.get("gain", run.controller.gain);
  ctl.get("update_every", run.controller.update_every);
  ctl.get("lambda_min", run.controller.lambda_min);
  ctl.get("lambda_max", run.controller.lambda_max);
  ctl.get("warmup_epochs", run.controller.warmup_epochs);
  ctl.finish();

  auto sweep = root.sub("sweep");
  sweep.get("betas", cfg.betas);
  sweep.get("lambdas", cfg.lambdas);
  sweep.get("seeds", cfg.seeds);
  sweep.get("threads", cfg.threads);
  sweep.finish();

  root.get("epochs", run.epochs);
  root.get("eval_every", run.eval_every);
  root.get("run_seed", run.run_seed);
  root.get("regime_tolerance", run.regime_tolerance);
  root.get("output_dir", run.output_dir);
  root.finish();

  run.model.lambda_dist_init = run.controller.lambda_init;
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("config: not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "config: cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

/// Full config with every field spelled out; parse_config(to_json(c)) == c.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  const RunConfig& r = cfg.run;
  nlohmann::json j;
  j["csbm"] = {{"n_nodes", r.csbm.n_nodes},
               {"n_communities", r.csbm.n_communities},
               {"p_in", r.csbm.p_in},
               {"p_out", r.csbm.p_out},
               {"signal_strength", r.csbm.signal_strength},
               {"feature_dim", r.csbm.feature_dim},
               {"feature_noise_sigma", r.csbm.feature_noise_sigma}};
  j["task"] = {{"beta", r.task.beta}, {"r_star", r.task.r_star}, {"split_fractions", r.task.split_fractions}};
  j["model"] = {{"n_layers", r.model.n_layers},
                {"n_heads", r.model.n_heads},
                {"d_model", r.model.d_model},
                {"d_ff", r.model.d_ff}};
  j["optimizer"] = {{"learning_rate", r.optimizer.learning_rate},
                    {"beta1", r.optimizer.beta1},
                    {"beta2", r.optimizer.beta2},
                    {"eps", r.optimizer.eps}};
  j["controller"] = {{"kind", std::string(to_string(r.controller.kind))},
                     {"lambda_init", r.controller.lambda_init},
                     {"target_gap", r.controller.target_gap},
                     {"gain", r.controller.gain},
                     {"update_every", r.controller.update_every},
                     {"lambda_min", r.controller.lambda_min},
                     {"lambda_max", r.controller.lambda_max},
                     {"warmup_epochs", r.controller.warmup_epochs}};
  j["sweep"] = {{"betas", cfg.betas}, {"lambdas", cfg.lambdas}, {"seeds", cfg.seeds}, {"threads", cfg.threads}};
  j["epochs"] = r.epochs;
  j["eval_every"] = r.eval_every;
  j["run_seed"] = r.run_seed;
  j["regime_tolerance"] = r.regime_tolerance;
  j["output_dir"] = r.output_dir;
  return j;
}

}  // namespace gtbias
