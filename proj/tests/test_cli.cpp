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

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "test_support.hpp"

using testing_support::read_file;
using testing_support::temp_dir;

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path err_file = scratch / "stderr.txt";
  const std::string cmd = std::string("'") + GTBIAS_CLI_PATH + "' " + args + " 2>'" + err_file.string() + "'";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.err = read_file(err_file);
  return r;
}

nlohmann::json error_of(const CliResult& r) {
  auto j = nlohmann::json::parse(r.err);
  EXPECT_TRUE(j.contains("error")) << r.err;
  return j["error"];
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

const char* kTinyConfig = R"({
  "csbm": {"n_nodes": 60, "p_in": 0.15, "p_out": 0.02, "feature_dim": 4},
  "model": {"d_model": 8, "d_ff": 16},
  "epochs": 6, "eval_every": 3,
  "sweep": {"betas": [0, 1], "lambdas": [0, 2], "seeds": 2}
})";

}  // namespace

TEST(Cli, MissingSubcommandIsAUsageError) {
  const auto dir = temp_dir("cli_usage");
  const CliResult r = run_cli("", dir);
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(error_of(r)["kind"], "usage");
  EXPECT_EQ(run_cli("frobnicate", dir).status, 2);
  EXPECT_EQ(run_cli("run --beta notanumber", dir).status, 2);
}

TEST(Cli, ConfigErrorsAreReportedAsJson) {
  const auto dir = temp_dir("cli_config");
  write_text(dir / "bad.json", R"({"csbm": {"n_nodez": 10}})");
  const CliResult r = run_cli("run --config '" + (dir / "bad.json").string() + "' --out '" + dir.string() + "'", dir);
  EXPECT_EQ(r.status, 1);
  const auto e = error_of(r);
  EXPECT_EQ(e["command"], "run");
  EXPECT_EQ(e["kind"], "config");
  EXPECT_NE(e["message"].get<std::string>().find("csbm.n_nodez"), std::string::npos);
}

TEST(Cli, ParameterErrorsExitNonzero) {
  const auto dir = temp_dir("cli_param");
  write_text(dir / "tiny.json", kTinyConfig);
  const CliResult r = run_cli("run --config '" + (dir / "tiny.json").string() + "' --beta 1.5 --out '" +
                                  dir.string() + "'",
                              dir);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(error_of(r)["kind"], "parameter");
  const CliResult missing = run_cli("select --out '" + (dir / "nowhere").string() + "'", dir);
  EXPECT_EQ(missing.status, 1);
  EXPECT_EQ(error_of(missing)["kind"], "io");
}

TEST(Cli, RunWritesItsOutputs) {
  const auto dir = temp_dir("cli_run");
  write_text(dir / "tiny.json", kTinyConfig);
  const CliResult r = run_cli("run --config '" + (dir / "tiny.json").string() +
                                  "' --beta 0.5 --lambda 1 --seed 3 --out '" + (dir / "out").string() + "'",
                              dir);
  ASSERT_EQ(r.status, 0) << r.err;
  for (const char* f : {"trajectory.csv", "mismatch.csv", "control.csv", "profiles.csv", "checkpoint.txt",
                        "config.json", "summary.json", "graph.txt"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  const auto summary = nlohmann::json::parse(read_file(dir / "out" / "summary.json"));
  EXPECT_EQ(summary.dump(), nlohmann::json::parse(r.out).dump());
}

TEST(Cli, PipelineProducesPanels) {
  const auto dir = temp_dir("cli_pipeline");
  write_text(dir / "tiny.json", kTinyConfig);
  const std::string common = " --config '" + (dir / "tiny.json").string() + "' --out '" + dir.string() + "'";
  ASSERT_EQ(run_cli("sweep" + common + " --threads 2", dir).status, 0);
  ASSERT_EQ(run_cli("select --out '" + dir.string() + "'", dir).status, 0);
  ASSERT_EQ(run_cli("control" + common, dir).status, 0);
  const CliResult rep = run_cli("report" + common, dir);
  ASSERT_EQ(rep.status, 0) << rep.err;
  for (const char* f : {"sweep.csv", "selections.csv", "controllers.csv", "panel_a_lambda.csv",
                        "panel_b_test_accuracy.csv", "panel_c_gap.csv", "panel_d_w1.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["fixed_runs"], 8);
  EXPECT_EQ(manifest["controller_runs"], 8);
}
