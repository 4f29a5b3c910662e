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

// CSV tables, per-run outputs, and the four summary panels with their
// manifest. Reals are printed with %.17g so every table re-reads exactly.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "gtbias/config.hpp"
#include "gtbias/control.hpp"
#include "gtbias/diagnostics.hpp"
#include "gtbias/error.hpp"
#include "gtbias/harness.hpp"
#include "json.hpp"

namespace gtbias {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// CSV primitives

inline std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' || c == '\r' ? ' ' : c;
  }
  return out + '"';
}

/// Splits one CSV record, honoring double-quoted fields.
inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  require(!quoted, ErrorKind::kFormat, "csv: unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

namespace detail {

inline double csv_real(const std::string& s, const std::string& column) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(!s.empty() && end && *end == '\0', ErrorKind::kFormat,
          "csv: bad number '" + s + "' in column " + column);
  return v;
}

inline std::uint64_t csv_u64(const std::string& s, const std::string& column) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  require(!s.empty() && end && *end == '\0' && s[0] != '-', ErrorKind::kFormat,
          "csv: bad integer '" + s + "' in column " + column);
  return v;
}

/// Reads a header line and checks it byte-for-byte against the expected one.
inline void expect_header(std::istream& is, const std::string& expected, const char* what) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::kFormat,
          std::string(what) + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == expected, ErrorKind::kFormat,
          std::string(what) + ": unexpected header '" + line + "' (wanted '" + expected + "')");
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::kIo, "cannot read '" + path.string() + "'");
  return is;
}

inline void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir), ErrorKind::kIo,
          "cannot create output directory '" + dir.string() + "'" + (ec ? ": " + ec.message() : ""));
}

inline void check_close(std::ofstream& os, const std::filesystem::path& path) {
  os.close();
  require(!os.fail(), ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sweep tables

inline const std::string kSweepHeader =
    "beta,policy,lambda,seed,status,train_accuracy,val_accuracy,test_accuracy,final_lambda,"
    "mu_task,mu_attention,gap,w1,regime,target_gap,error";

inline Regime parse_regime(const std::string& s) {
  if (s == "under_reaching") return Regime::kUnderReaching;
  if (s == "over_globalizing") return Regime::kOverGlobalizing;
  if (s == "aligned") return Regime::kAligned;
  fail(ErrorKind::kFormat, "csv: unknown regime '" + s + "'");
}

inline void write_sweep_table(std::ostream& os, const SweepTable& t) {
  os << kSweepHeader << '\n';
  for (const auto& r : t.rows) {
    os << fmt_real(r.beta) << ',' << r.policy << ',' << fmt_real(r.lambda) << ',' << r.seed << ','
       << (r.ok ? "ok" : "failed") << ',' << fmt_real(r.train_accuracy) << ',' << fmt_real(r.val_accuracy)
       << ',' << fmt_real(r.test_accuracy) << ',' << fmt_real(r.final_lambda) << ',' << fmt_real(r.mu_task)
       << ',' << fmt_real(r.mu_attention) << ',' << fmt_real(r.gap) << ',' << fmt_real(r.w1) << ','
       << (r.ok ? std::string(to_string(r.regime)) : "") << ',' << fmt_real(r.target_gap) << ','
       << csv_quote(r.error) << '\n';
  }
}

inline SweepTable read_sweep_table(std::istream& is) {
  detail::expect_header(is, kSweepHeader, "sweep table");
  SweepTable t;
  std::set<std::tuple<double, std::string, double, std::uint64_t>> keys;
  std::string line;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = csv_split(line);
    require(f.size() == 16, ErrorKind::kFormat,
            "sweep table: line " + std::to_string(line_no) + " has " + std::to_string(f.size()) + " fields");
    SweepRow r;
    r.beta = detail::csv_real(f[0], "beta");
    r.policy = f[1];
    parse_controller_kind(r.policy);
    r.lambda = detail::csv_real(f[2], "lambda");
    r.seed = detail::csv_u64(f[3], "seed");
    require(f[4] == "ok" || f[4] == "failed", ErrorKind::kFormat, "sweep table: bad status '" + f[4] + "'");
    r.ok = f[4] == "ok";
    r.train_accuracy = detail::csv_real(f[5], "train_accuracy");
    r.val_accuracy = detail::csv_real(f[6], "val_accuracy");
    r.test_accuracy = detail::csv_real(f[7], "test_accuracy");
    r.final_lambda = detail::csv_real(f[8], "final_lambda");
    r.mu_task = detail::csv_real(f[9], "mu_task");
    r.mu_attention = detail::csv_real(f[10], "mu_attention");
    r.gap = detail::csv_real(f[11], "gap");
    r.w1 = detail::csv_real(f[12], "w1");
    if (r.ok) r.regime = parse_regime(f[13]);
    r.target_gap = detail::csv_real(f[14], "target_gap");
    r.error = f[15];
    require(keys.insert(r.key()).second, ErrorKind::kFormat,
            "sweep table: duplicate row key on line " + std::to_string(line_no));
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline void save_sweep_table(const std::filesystem::path& path, const SweepTable& t) {
  auto os = detail::open_out(path);
  write_sweep_table(os, t);
  detail::check_close(os, path);
}

inline SweepTable load_sweep_table(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  return read_sweep_table(is);
}

// ---------------------------------------------------------------------------
// Selections

inline const std::string kSelectionHeader =
    "beta,lambda_star,mean_val_accuracy,mean_test_accuracy,oracle_gap,n_runs";

inline void write_selections(std::ostream& os, const std::vector<Selection>& sel) {
  os << kSelectionHeader << '\n';
  for (const auto& s : sel) {
    os << fmt_real(s.beta) << ',' << fmt_real(s.lambda_star) << ',' << fmt_real(s.mean_val_accuracy) << ','
       << fmt_real(s.mean_test_accuracy) << ',' << fmt_real(s.oracle_gap) << ',' << s.n_runs << '\n';
  }
}

inline std::vector<Selection> read_selections(std::istream& is) {
  detail::expect_header(is, kSelectionHeader, "selections");
  std::vector<Selection> out;
  std::set<double> betas;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = csv_split(line);
    require(f.size() == 6, ErrorKind::kFormat, "selections: expected 6 fields");
    Selection s;
    s.beta = detail::csv_real(f[0], "beta");
    s.lambda_star = detail::csv_real(f[1], "lambda_star");
    s.mean_val_accuracy = detail::csv_real(f[2], "mean_val_accuracy");
    s.mean_test_accuracy = detail::csv_real(f[3], "mean_test_accuracy");
    s.oracle_gap = detail::csv_real(f[4], "oracle_gap");
    s.n_runs = static_cast<int>(detail::csv_u64(f[5], "n_runs"));
    require(std::isfinite(s.oracle_gap), ErrorKind::kFormat, "selections: oracle_gap must be finite");
    require(betas.insert(s.beta).second, ErrorKind::kFormat, "selections: duplicate beta");
    out.push_back(s);
  }
  require(!out.empty(), ErrorKind::kIncompleteTable, "selections: no rows");
  return out;
}

inline void save_selections(const std::filesystem::path& path, const std::vector<Selection>& sel) {
  auto os = detail::open_out(path);
  write_selections(os, sel);
  detail::check_close(os, path);
}

inline std::vector<Selection> load_selections(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  return read_selections(is);
}

// ---------------------------------------------------------------------------
// Single-run outputs

inline const std::string kMismatchHeader = "epoch,lambda,mu_task,mu_A,gap,w1,regime";
inline const std::string kControlHeader = "epoch,lambda,measured_gap,target_gap";
inline const std::string kTrajectoryHeader =
    "epoch,train_loss,train_accuracy,val_accuracy,test_accuracy,lambda,self_attention,mu_task,mu_A,gap,w1,"
    "regime";

inline std::string mismatch_row(int epoch, double lambda, const MismatchReport& m) {
  return std::to_string(epoch) + ',' + fmt_real(lambda) + ',' + fmt_real(m.mu_task) + ',' +
         fmt_real(m.mu_attention) + ',' + fmt_real(m.gap) + ',' + fmt_real(m.w1) + ',' +
         std::string(to_string(m.regime));
}

inline void write_mismatch_csv(std::ostream& os, const RunResult& r) {
  os << kMismatchHeader << '\n';
  for (const auto& e : r.trajectory) os << mismatch_row(e.epoch, e.lambda, e.report) << '\n';
}

/// Controller updates. `lambda` is the value after each update; epochs count
/// completed optimizer steps before the measurement.
inline void write_control_csv(std::ostream& os, const RunResult& r, const ControllerConfig& cfg) {
  os << kControlHeader << '\n';
  for (const auto& e : r.control) {
    os << e.epoch << ',' << fmt_real(e.lambda) << ',' << fmt_real(e.measured_gap) << ','
       << fmt_real(cfg.effective_target()) << '\n';
  }
}

inline void write_trajectory_csv(std::ostream& os, const RunResult& r) {
  os << kTrajectoryHeader << '\n';
  for (const auto& e : r.trajectory) {
    os << e.epoch << ',' << fmt_real(e.train_loss) << ',' << fmt_real(e.train_accuracy) << ','
       << fmt_real(e.val_accuracy) << ',' << fmt_real(e.test_accuracy) << ',' << fmt_real(e.lambda) << ','
       << fmt_real(e.self_attention) << ',' << fmt_real(e.report.mu_task) << ','
       << fmt_real(e.report.mu_attention) << ',' << fmt_real(e.report.gap) << ',' << fmt_real(e.report.w1)
       << ',' << to_string(e.report.regime) << '\n';
  }
}

/// Final profiles, one row per distance bucket r. Columns absent at a given
/// r (beyond a profile's support) are left at 0.
inline void write_profiles_csv(std::ostream& os, const RunResult& r) {
  std::size_t len = std::max({r.task_profile.mass.size(), r.attention_profile.mass.size(),
                              r.attention_profile_per_node.mass.size(), r.pooled_mass.size(),
                              r.shell_sizes.size()});
  os << "r,task,attention,attention_per_node,pooled_mass,shell_size";
  for (std::size_t l = 0; l < r.layer_profiles.size(); ++l) {
    os << ",layer" << l;
    len = std::max(len, r.layer_profiles[l].mass.size());
  }
  os << '\n';
  auto at = [](const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : 0.0; };
  for (std::size_t i = 0; i < len; ++i) {
    os << i << ',' << fmt_real(at(r.task_profile.mass, i)) << ',' << fmt_real(at(r.attention_profile.mass, i))
       << ',' << fmt_real(at(r.attention_profile_per_node.mass, i)) << ',' << fmt_real(at(r.pooled_mass, i))
       << ',' << fmt_real(at(r.shell_sizes, i));
    for (const auto& lp : r.layer_profiles) os << ',' << fmt_real(at(lp.mass, i));
    os << '\n';
  }
}

inline nlohmann::ordered_json run_summary_json(const RunConfig& cfg, const RunResult& r) {
  nlohmann::ordered_json j;
  j["run_seed"] = cfg.run_seed;
  j["beta"] = cfg.task.beta;
  j["policy"] = std::string(to_string(cfg.controller.kind));
  j["lambda_init"] = cfg.controller.lambda_init;
  j["target_gap"] = cfg.controller.effective_target();
  j["epochs"] = cfg.epochs;
  j["n_valid"] = r.n_valid;
  j["diameter"] = r.diameter;
  j["final_train_accuracy"] = r.final_train_accuracy;
  j["final_val_accuracy"] = r.final_val_accuracy;
  j["final_test_accuracy"] = r.final_test_accuracy;
  j["final_lambda"] = r.final_lambda;
  j["final_gap"] = r.final_gap;
  j["final_w1"] = r.final_w1;
  j["final_regime"] = std::string(to_string(r.final_report.regime));
  return j;
}

// ---------------------------------------------------------------------------
// Panels

inline const std::string kPanelAFixedHeader = "beta,best_fixed_lambda";
inline const std::string kPanelAHeader = "beta,best_fixed_lambda,zero_gap_final_lambda,target_gap_final_lambda";
inline const std::string kPanelBFixedHeader = "beta,neutral,best_fixed";
inline const std::string kPanelBHeader = "beta,neutral,zero_gap,target_gap,best_fixed";
inline const std::string kPanelCHeader = "beta,lambda,mean_gap,n_runs";
inline const std::string kPanelDHeader = "beta,lambda,mean_w1,n_runs";
inline const std::vector<double> kPanelDBetas{0.0, 0.5, 1.0};

struct CellMean {
  double sum = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  double mean() const { return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN(); }
};

/// Per-cell means over successful rows, keyed by (beta, policy, lambda).
struct TableMeans {
  std::map<std::tuple<double, std::string, double>, CellMean> test, gap, w1;
  std::map<std::pair<double, std::string>, CellMean> final_lambda, policy_test;

  explicit TableMeans(const SweepTable& t) {
    for (const auto& r : t.rows) {
      if (!r.ok) continue;
      const auto key = std::tuple(r.beta, r.policy, r.lambda);
      test[key].add(r.test_accuracy);
      gap[key].add(r.gap);
      w1[key].add(r.w1);
      final_lambda[{r.beta, r.policy}].add(r.final_lambda);
      policy_test[{r.beta, r.policy}].add(r.test_accuracy);
    }
  }
};

/// Writes panel_a..panel_d CSVs and manifest.json into `dir`. `fixed` holds
/// the fixed-lambda sweep; `controlled` may be empty, in which case panels
/// (a) and (b) carry only the fixed-lambda columns.
inline std::vector<std::string> emit_reports(const std::filesystem::path& dir, const SweepTable& fixed,
                                             const std::vector<Selection>& selections,
                                             const SweepTable& controlled,
                                             const std::optional<ExperimentConfig>& config = std::nullopt) {
  detail::make_dir(dir);
  const std::string fixed_name(to_string(ControllerKind::kFixed));
  const std::string zero_name(to_string(ControllerKind::kZeroGap));
  const std::string target_name(to_string(ControllerKind::kTargetGap));
  for (const auto& r : fixed.rows) {
    require(r.policy == fixed_name, ErrorKind::kParameter, "report: sweep table holds a non-fixed row");
  }
  for (const auto& r : controlled.rows) {
    require(r.policy != fixed_name, ErrorKind::kParameter, "report: controller table holds a fixed row");
  }
  const TableMeans fm(fixed);
  const TableMeans cm(controlled);
  const bool with_ctl = !controlled.rows.empty();

  std::set<double> sweep_betas, sweep_lambdas;
  std::set<std::uint64_t> seeds;
  for (const auto& r : fixed.rows) {
    sweep_betas.insert(r.beta);
    sweep_lambdas.insert(r.lambda);
    seeds.insert(r.seed);
  }
  for (const auto& r : controlled.rows) seeds.insert(r.seed);
  std::map<double, Selection> by_beta;
  for (const auto& s : selections) by_beta[s.beta] = s;
  for (double b : sweep_betas) {
    require(by_beta.contains(b), ErrorKind::kIncompleteTable,
            "report: no selection for beta=" + fmt_real(b));
  }
  require(sweep_lambdas.contains(0.0), ErrorKind::kIncompleteTable,
          "report: the sweep has no lambda=0 (neutral) runs");

  std::vector<std::string> files;
  auto write = [&](const std::string& name, auto&& body) {
    const auto path = dir / name;
    auto os = detail::open_out(path);
    body(os);
    detail::check_close(os, path);
    files.push_back(name);
  };
  auto nan = std::numeric_limits<double>::quiet_NaN();
  auto ctl_mean = [&](const auto& m, double b, const std::string& policy) {
    auto it = m.find({b, policy});
    return it == m.end() ? nan : it->second.mean();
  };

  write("panel_a_lambda.csv", [&](std::ostream& os) {
    os << (with_ctl ? kPanelAHeader : kPanelAFixedHeader) << '\n';
    for (const auto& [b, s] : by_beta) {
      os << fmt_real(b) << ',' << fmt_real(s.lambda_star);
      if (with_ctl) {
        os << ',' << fmt_real(ctl_mean(cm.final_lambda, b, zero_name)) << ','
           << fmt_real(ctl_mean(cm.final_lambda, b, target_name));
      }
      os << '\n';
    }
  });

  write("panel_b_test_accuracy.csv", [&](std::ostream& os) {
    os << (with_ctl ? kPanelBHeader : kPanelBFixedHeader) << '\n';
    for (const auto& [b, s] : by_beta) {
      auto neutral = fm.test.find({b, fixed_name, 0.0});
      auto best = fm.test.find({b, fixed_name, s.lambda_star});
      os << fmt_real(b) << ',' << fmt_real(neutral == fm.test.end() ? nan : neutral->second.mean());
      if (with_ctl) {
        os << ',' << fmt_real(ctl_mean(cm.policy_test, b, zero_name)) << ','
           << fmt_real(ctl_mean(cm.policy_test, b, target_name));
      }
      os << ',' << fmt_real(best == fm.test.end() ? nan : best->second.mean()) << '\n';
    }
  });

  auto per_lambda = [&](const auto& cells, const std::string& header, const std::vector<double>* only) {
    return [&cells, &header, only, &fixed_name](std::ostream& os) {
      os << header << '\n';
      for (const auto& [key, c] : cells) {
        const auto& [b, policy, l] = key;
        if (policy != fixed_name) continue;
        if (only && std::find(only->begin(), only->end(), b) == only->end()) continue;
        os << fmt_real(b) << ',' << fmt_real(l) << ',' << fmt_real(c.mean()) << ',' << c.n << '\n';
      }
    };
  };
  write("panel_c_gap.csv", per_lambda(fm.gap, kPanelCHeader, nullptr));
  write("panel_d_w1.csv", per_lambda(fm.w1, kPanelDHeader, &kPanelDBetas));

  nlohmann::ordered_json manifest;
  manifest["format"] = "gtbias-report 1";
  manifest["files"] = files;
  manifest["betas"] = std::vector<double>(sweep_betas.begin(), sweep_betas.end());
  manifest["lambdas"] = std::vector<double>(sweep_lambdas.begin(), sweep_lambdas.end());
  manifest["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  manifest["fixed_runs"] = fixed.rows.size();
  manifest["controller_runs"] = controlled.rows.size();
  std::size_t failed = 0;
  for (const auto* t : {&fixed, &controlled})
    for (const auto& r : t->rows) failed += r.ok ? 0 : 1;
  manifest["failed_runs"] = failed;
  nlohmann::ordered_json sel = nlohmann::ordered_json::array();
  for (const auto& [b, s] : by_beta) {
    sel.push_back({{"beta", b},
                   {"lambda_star", s.lambda_star},
                   {"mean_val_accuracy", s.mean_val_accuracy},
                   {"mean_test_accuracy", s.mean_test_accuracy},
                   {"oracle_gap", s.oracle_gap},
                   {"n_runs", s.n_runs}});
  }
  manifest["selections"] = sel;
  manifest["config"] = config ? nlohmann::ordered_json(to_json(*config)) : nlohmann::ordered_json(nullptr);
  manifest["versions"] = {{"gtbias", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                          {"compiler", __VERSION__}};
  write("manifest.json", [&](std::ostream& os) { os << manifest.dump(2) << '\n'; });
  return files;
}

}  // namespace gtbias
