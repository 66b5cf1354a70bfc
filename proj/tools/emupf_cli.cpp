// Copyright 2026 The emupf Authors
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

// Command-line driver for the twin-experiment harness:
//   emupf run --config cfg.json [--seed S] [--out DIR]
//   emupf suite --experiment {1..5} --methods <list> --seeds <list> --out DIR
//   emupf summarize <run-dirs...>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "emupf/harness.hpp"

namespace fs = std::filesystem;
using namespace emupf;
using namespace emupf::harness;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(csv);
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string variant_label(const VariantSpec& v) {
  switch (v.kind) {
    case VariantSpec::Kind::Full: return "full";
    case VariantSpec::Kind::Gamma: return "Gamma=" + std::to_string(v.gamma);
    case VariantSpec::Kind::Ppe: return "PPE";
    case VariantSpec::Kind::Pca: return "PCA r=" + std::to_string(v.pca_rank);
    case VariantSpec::Kind::Sliced: return "sliced Gamma=" + std::to_string(v.gamma);
  }
  return "?";
}

std::string method_label(const ExperimentConfig& cfg) {
  switch (cfg.method) {
    case Method::FinePf: return "Fine PF";
    case Method::CoarsePf: return "Coarse PF";
    case Method::Enkf: return "EnKF";
    case Method::Emupf: return "Emu-PF (" + variant_label(cfg.variant) + ")";
  }
  return "?";
}

ProgressFn make_progress(bool quiet, const std::string& tag) {
  if (quiet) return {};
  return [tag](int step, int total) {
    const int stride = std::max(1, total / 20);
    if (step % stride == 0 || step == total)
      std::fprintf(stderr, "[%s] step %d/%d\n", tag.c_str(), step, total);
  };
}

int run_one(ExperimentConfig cfg, const std::optional<std::string>& out_dir, bool quiet,
            const std::string& tag) {
  std::optional<fs::path> out;
  if (out_dir) out = fs::path(*out_dir);
  const RunMetrics metrics =
      run_experiment(cfg, out ? &*out : nullptr, make_progress(quiet, tag));
  const Summary s = summarize(metrics);
  std::printf("%-24s", method_label(cfg).c_str());
  if (cfg.p > 0) std::printf("  RMSE(theta)=%-8.3g Var(theta)=%-9.3g", s.rmse_theta, s.var_theta);
  std::printf("  RMSE(x)=%-8.3g Var(x)=%-9.3g\n", s.rmse_x, s.var_x);
  return 0;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::optional<std::string>& out_dir, std::optional<int> steps, bool quiet) {
  std::ifstream in(config_path);
  if (!in) {
    std::fprintf(stderr, "error: cannot open config '%s'\n", config_path.c_str());
    return 1;
  }
  nlohmann::json j;
  in >> j;
  ExperimentConfig cfg = config_from_json(j);
  if (seed) cfg.seed = *seed;
  if (steps) cfg.n_obs_times = *steps;
  return run_one(cfg, out_dir, quiet, method_name(cfg.method));
}

int cmd_suite(int experiment, const std::string& methods_csv, const std::string& seeds_csv,
              const std::string& out_dir, std::optional<int> steps, bool quiet) {
  const auto methods = split_list(methods_csv);
  const auto seeds = split_list(seeds_csv);
  if (methods.empty() || seeds.empty()) {
    std::fprintf(stderr, "error: --methods and --seeds must be non-empty\n");
    return 1;
  }
  for (const auto& method_str : methods) {
    for (const auto& seed_str : seeds) {
      ExperimentConfig cfg = bundled_config(experiment, method_from_name(method_str));
      cfg.seed = std::stoull(seed_str);
      if (steps) cfg.n_obs_times = *steps;
      const std::string tag =
          "exp" + std::to_string(experiment) + "_" + method_str + "_s" + seed_str;
      const std::string dir = out_dir + "/" + tag;
      const int rc = run_one(cfg, dir, quiet, tag);
      if (rc != 0) return rc;
    }
  }
  return 0;
}

int cmd_summarize(const std::vector<std::string>& dirs) {
  bool printed_header = false;
  for (const auto& dir : dirs) {
    const fs::path base(dir);
    std::ifstream cfg_in(base / "config.json");
    std::ifstream sum_in(base / "summary.json");
    if (!cfg_in || !sum_in) {
      std::fprintf(stderr, "warning: %s is missing config.json or summary.json, skipped\n",
                   dir.c_str());
      continue;
    }
    nlohmann::json cfg_json, sum_json;
    cfg_in >> cfg_json;
    sum_in >> sum_json;
    const ExperimentConfig cfg = config_from_json(cfg_json);
    if (!printed_header) {
      std::printf("%-28s %-12s %-12s %-12s %-12s\n", "method", "RMSE(theta)", "Var(theta)",
                  "RMSE(x)", "Var(x)");
      printed_header = true;
    }
    auto field = [&](const char* key) -> std::string {
      if (!sum_json.contains(key)) return "-";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3g", sum_json[key].get<double>());
      return buf;
    };
    std::printf("%-28s %-12s %-12s %-12s %-12s\n", method_label(cfg).c_str(),
                field("mean_param_rmse").c_str(), field("median_param_var").c_str(),
                field("mean_state_rmse").c_str(), field("median_state_var").c_str());
  }
  return printed_header ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emulator-accelerated particle filtering twin experiments"};
  app.require_subcommand(1);

  // run
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> run_out;
  std::optional<int> steps;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("--config", config_path, "Path to the experiment config")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", run_out, "Output directory for the run artifacts");
  run->add_option("--steps", steps, "Override the number of observation times");
  run->add_flag("--quiet", quiet, "Suppress progress output");

  // suite
  int experiment = 1;
  std::string methods = "fine_pf,coarse_pf,enkf,emupf";
  std::string seeds = "1";
  std::string suite_out = "runs";
  auto* suite = app.add_subcommand("suite", "Run a bundled experiment over methods x seeds");
  suite->add_option("--experiment", experiment, "Experiment number (1..5)")
      ->required()
      ->check(CLI::Range(1, 5));
  suite->add_option("--methods", methods, "Comma-separated method list");
  suite->add_option("--seeds", seeds, "Comma-separated seed list");
  suite->add_option("--out", suite_out, "Directory receiving one subdirectory per run");
  suite->add_option("--steps", steps, "Override the number of observation times");
  suite->add_flag("--quiet", quiet, "Suppress progress output");

  // summarize
  std::vector<std::string> dirs;
  auto* summ = app.add_subcommand("summarize", "Tabulate summaries of finished runs");
  summ->add_option("dirs", dirs, "Run directories")->required()->expected(-1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed, run_out, steps, quiet);
    if (suite->parsed()) return cmd_suite(experiment, methods, seeds, suite_out, steps, quiet);
    if (summ->parsed()) return cmd_summarize(dirs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
