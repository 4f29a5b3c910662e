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

// gtbias command-line driver.
//
//   gtbias run     [--config F] [--out DIR] [--beta B] [--lambda L] [--policy P] [--seed S]
//   gtbias sweep   [--config F] [--out DIR] [--threads N] [--beta ..] [--lambda ..] [--seeds N]
//   gtbias select  [--out DIR] [--table FILE]
//   gtbias control [--config F] [--out DIR] [--threads N] [--selections FILE] [--seeds N]
//   gtbias report  [--config F] [--out DIR] [--table FILE] [--selections FILE] [--controllers FILE]
//
// On failure a single JSON object {"error": {...}} goes to stderr and the
// exit status is nonzero (1 for runtime errors, 2 for usage errors).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gtbias/config.hpp"
#include "gtbias/error.hpp"
#include "gtbias/graph_io.hpp"
#include "gtbias/harness.hpp"
#include "gtbias/report.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace gtbias;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir = "out";
  int threads = 0;  // 0: take the config value
  std::vector<double> betas, lambdas;
  int seeds = 0;
  std::optional<double> beta, lambda;
  std::optional<std::uint64_t> seed;
  std::string policy;
  std::string table, selections, controllers;
};

void print_error(const std::string& command, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"command", command}, {"kind", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (!o.betas.empty()) cfg.betas = o.betas;
  if (!o.lambdas.empty()) cfg.lambdas = o.lambdas;
  if (o.seeds > 0) cfg.seeds = o.seeds;
  if (o.threads > 0) cfg.threads = o.threads;
  cfg.validate();
  return cfg;
}

template <class F>
void write_file(const fs::path& path, F&& body) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  body(os);
  os.close();
  require(!os.fail(), ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

fs::path out_dir(const Options& o) {
  const fs::path dir(o.out_dir);
  detail::make_dir(dir);
  return dir;
}

void cmd_run(const Options& o) {
  ExperimentConfig exp = load(o);
  RunConfig cfg = exp.run;
  if (o.beta) cfg.task.beta = *o.beta;
  if (o.seed) cfg.run_seed = *o.seed;
  if (!o.policy.empty()) cfg.controller.kind = parse_controller_kind(o.policy);
  if (o.lambda) {
    if (cfg.controller.adaptive()) {
      cfg.controller.lambda_init = *o.lambda;
    } else {
      cfg.controller = ControllerConfig::fixed(*o.lambda);
    }
  }
  cfg.model.lambda_dist_init = cfg.controller.lambda_init;
  exp.run = cfg;
  const fs::path dir = out_dir(o);
  const RunResult r = run_one(cfg);

  write_file(dir / "trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, r); });
  write_file(dir / "mismatch.csv", [&](std::ostream& os) { write_mismatch_csv(os, r); });
  write_file(dir / "control.csv", [&](std::ostream& os) { write_control_csv(os, r, cfg.controller); });
  write_file(dir / "profiles.csv", [&](std::ostream& os) { write_profiles_csv(os, r); });
  write_file(dir / "checkpoint.txt", [&](std::ostream& os) { write_checkpoint(os, r.final_state); });
  write_file(dir / "config.json", [&](std::ostream& os) { os << to_json(exp).dump(2) << '\n'; });
  write_file(dir / "summary.json", [&](std::ostream& os) { os << run_summary_json(cfg, r).dump(2) << '\n'; });
  {
    const RunConfig seeded = cfg.seeded();
    const Graph g = sample_csbm(seeded.csbm);
    const DistanceMatrix dm = all_pairs_spd(g);
    const LabeledTask task = make_labels(g, dm, seeded.task);
    write_file(dir / "graph.txt", [&](std::ostream& os) { write_graph(os, g, &seeded.task, &task); });
  }
  std::cout << run_summary_json(cfg, r).dump() << '\n';
}

void cmd_sweep(const Options& o) {
  const ExperimentConfig exp = load(o);
  const fs::path dir = out_dir(o);
  const SweepTable t = run_sweep(exp.betas, exp.lambdas, seed_range(exp.seeds), exp.run, exp.threads);
  save_sweep_table(dir / "sweep.csv", t);
  write_file(dir / "sweep_config.json", [&](std::ostream& os) { os << to_json(exp).dump(2) << '\n'; });
  std::size_t failed = 0;
  for (const auto& r : t.rows) failed += r.ok ? 0 : 1;
  std::cout << nlohmann::ordered_json{{"table", (dir / "sweep.csv").string()},
                                      {"rows", t.rows.size()},
                                      {"failed", failed}}
                   .dump()
            << '\n';
}

void cmd_select(const Options& o) {
  const fs::path dir = out_dir(o);
  const fs::path table = o.table.empty() ? dir / "sweep.csv" : fs::path(o.table);
  const auto sel = select_best_fixed(load_sweep_table(table));
  save_selections(dir / "selections.csv", sel);
  write_selections(std::cout, sel);
}

void cmd_control(const Options& o) {
  const ExperimentConfig exp = load(o);
  const fs::path dir = out_dir(o);
  const fs::path sel_path = o.selections.empty() ? dir / "selections.csv" : fs::path(o.selections);
  const auto sel = load_selections(sel_path);
  const SweepTable t = run_controllers(sel, seed_range(exp.seeds), exp.run, exp.threads);
  save_sweep_table(dir / "controllers.csv", t);
  std::size_t failed = 0;
  for (const auto& r : t.rows) failed += r.ok ? 0 : 1;
  std::cout << nlohmann::ordered_json{{"table", (dir / "controllers.csv").string()},
                                      {"rows", t.rows.size()},
                                      {"failed", failed}}
                   .dump()
            << '\n';
}

void cmd_report(const Options& o) {
  const fs::path dir(o.out_dir);
  const fs::path table = o.table.empty() ? dir / "sweep.csv" : fs::path(o.table);
  const SweepTable fixed = load_sweep_table(table);
  const auto sel = o.selections.empty() ? select_best_fixed(fixed) : load_selections(o.selections);
  SweepTable controlled;
  const fs::path ctl_path = o.controllers.empty() ? dir / "controllers.csv" : fs::path(o.controllers);
  if (!o.controllers.empty() || fs::exists(ctl_path)) controlled = load_sweep_table(ctl_path);
  std::optional<ExperimentConfig> cfg;
  if (!o.config_path.empty()) cfg = load(o);
  const auto files = emit_reports(dir, fixed, sel, controlled, cfg);
  std::cout << nlohmann::ordered_json{{"out", dir.string()}, {"files", files}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distance-biased graph transformer experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool threads) {
    sub->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "output directory")->capture_default_str();
    if (threads) sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "train one model and write its trajectory");
  common(run, false);
  run->add_option("--beta", o.beta, "task locality weight in [0, 1]");
  run->add_option("--lambda", o.lambda, "fixed lambda, or the initial lambda for a controller");
  run->add_option("--policy", o.policy, "fixed | zero_gap | target_gap");
  run->add_option("--seed", o.seed, "run seed");

  auto* sweep = app.add_subcommand("sweep", "fixed-lambda grid over beta x lambda x seed");
  common(sweep, true);
  sweep->add_option("--beta", o.betas, "beta grid (comma separated)")->delimiter(',');
  sweep->add_option("--lambda", o.lambdas, "lambda grid (comma separated)")->delimiter(',');
  sweep->add_option("--seeds", o.seeds, "number of seeds (0..N-1)")->check(CLI::PositiveNumber);

  auto* select = app.add_subcommand("select", "best fixed lambda and oracle gap per beta");
  select->add_option("--out", o.out_dir, "output directory")->capture_default_str();
  select->add_option("--table", o.table, "sweep table (default OUT/sweep.csv)");

  auto* control = app.add_subcommand("control", "zero-gap and target-gap controller runs");
  common(control, true);
  control->add_option("--selections", o.selections, "selections file (default OUT/selections.csv)");
  control->add_option("--seeds", o.seeds, "number of seeds (0..N-1)")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "write panel CSVs and manifest");
  common(report, false);
  report->add_option("--table", o.table, "sweep table (default OUT/sweep.csv)");
  report->add_option("--selections", o.selections, "selections file (default: recomputed from the table)");
  report->add_option("--controllers", o.controllers, "controller table (default OUT/controllers.csv if present)");

  std::string command = "gtbias";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(command, "usage", e.what());
    return 2;
  }

  try {
    if (*run) {
      command = "run";
      cmd_run(o);
    } else if (*sweep) {
      command = "sweep";
      cmd_sweep(o);
    } else if (*select) {
      command = "select";
      cmd_select(o);
    } else if (*control) {
      command = "control";
      cmd_control(o);
    } else if (*report) {
      command = "report";
      cmd_report(o);
    }
  } catch (const Error& e) {
    print_error(command, std::string(to_string(e.kind())), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(command, "internal", e.what());
    return 1;
  }
  return 0;
}
