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

// Twin-experiment orchestration: declarative experiment configs (JSON in and
// out, unknown keys rejected), truth and observation generation, method
// dispatch over the particle filters / EnKF / emulator filter, per-step error
// metrics, and run persistence (config.json, metrics.csv, summary.json,
// diagnostics.jsonl in one directory per run).

#ifndef EMUPF_HARNESS_HPP
#define EMUPF_HARNESS_HPP

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emupf/emupf.hpp"
#include "emupf/filters.hpp"
#include "emupf/lorenz96.hpp"
#include "emupf/random.hpp"
#include "emupf/types.hpp"

namespace emupf::harness {

enum class Method { FinePf, CoarsePf, Enkf, Emupf };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::FinePf: return "fine_pf";
    case Method::CoarsePf: return "coarse_pf";
    case Method::Enkf: return "enkf";
    case Method::Emupf: return "emupf";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  if (name == "fine_pf") return Method::FinePf;
  if (name == "coarse_pf") return Method::CoarsePf;
  if (name == "enkf") return Method::Enkf;
  if (name == "emupf") return Method::Emupf;
  throw std::invalid_argument("unknown method '" + name + "'");
}

/// Full declarative description of one twin-experiment run.
struct ExperimentConfig {
  int n = 8;
  int p = 2;
  int m = 8;
  std::vector<int> obs_indices;  // 1-based; empty = evenly spaced
  double sigma_o = 1.0;
  int n_obs_times = 1000;
  double window = 0.05;
  int substeps = 5;
  Method method = Method::Emupf;
  VariantSpec variant;
  int n_design = 100;  // n_D
  int n_fine = 10000;  // N_F
  int n_enkf = 100;    // N_e
  double inflation = 1.02;
  double jitter_alpha = 0.01;
  double jitter_beta = 0.99;
  double resample_threshold = 0.1;
  std::uint64_t seed = 1;

  // Twin-experiment construction.
  double truth_theta1 = 2.0;
  double truth_theta2 = 1.0;
  double truth_theta_sd = 0.1;  // 0 pins the truth parameters
  double init_state_sd = 0.1;   // spread of the initial state ensembles
  double param_lo = -5.0;
  double param_hi = 5.0;
  int n_fixed = 20;             // design rows with frozen parameters
  double state_jitter_var = 0.0;
  bool emulator_mean_only = false;
  int sliced_max_rows = 160;
  int sliced_fit_rows = 128;
  std::string kernel = "power-exponential";  // or "matern52"
  std::string trend = "constant";            // or "linear"
  int gp_multistarts = 5;
  int gp_warm_multistarts = 2;  // fresh starts kept once warm starts exist
  int gp_max_evals = 200;

  void validate() const {
    if (n < 4) throw std::invalid_argument("config: n must be >= 4");
    if (p != 0 && p != 2) throw std::invalid_argument("config: p must be 0 or 2");
    if (m < 1 || m > n) throw std::invalid_argument("config: need 1 <= m <= n");
    if (!obs_indices.empty()) {
      if (static_cast<int>(obs_indices.size()) != m)
        throw std::invalid_argument("config: obs_indices size must equal m");
      for (std::size_t k = 0; k < obs_indices.size(); ++k) {
        if (obs_indices[k] < 1 || obs_indices[k] > n)
          throw std::invalid_argument("config: obs_indices must lie in 1..n");
        if (k > 0 && obs_indices[k] <= obs_indices[k - 1])
          throw std::invalid_argument("config: obs_indices must be strictly increasing");
      }
    }
    if (!(sigma_o > 0.0)) throw std::invalid_argument("config: sigma_o must be positive");
    if (n_obs_times < 0) throw std::invalid_argument("config: n_obs_times must be >= 0");
    if (!(window > 0.0) || substeps < 1) throw std::invalid_argument("config: bad time stepping");
    if (n_design < 2 || n_fine < 1 || n_enkf < 2)
      throw std::invalid_argument("config: ensemble sizes too small");
    if (n_fixed < 0 || n_fixed >= n_design)
      throw std::invalid_argument("config: n_fixed must lie in [0, n_D)");
    if (!(resample_threshold >= 0.0 && resample_threshold <= 1.0))
      throw std::invalid_argument("config: resample_threshold must lie in [0, 1]");
    if (kernel != "power-exponential" && kernel != "matern52")
      throw std::invalid_argument("config: unknown kernel '" + kernel + "'");
    if (trend != "constant" && trend != "linear")
      throw std::invalid_argument("config: unknown trend '" + trend + "'");
    if (method == Method::Emupf) variant.validate(n, p);
  }
};

/// Time index, observed vector, and the observation geometry that produced it.
struct ObservationRecord {
  int step = 0;  // 1-based observation time index
  Vector y;
  std::vector<int> indices;  // 0-based state components
  double sigma_o = 0.0;
};

struct StepMetrics {
  int step = 0;
  double state_rmse = std::numeric_limits<double>::quiet_NaN();
  double param_rmse = std::numeric_limits<double>::quiet_NaN();
  double median_state_var = std::numeric_limits<double>::quiet_NaN();
  double median_param_var = std::numeric_limits<double>::quiet_NaN();
  double ess = std::numeric_limits<double>::quiet_NaN();
};

struct RunMetrics {
  std::vector<StepMetrics> steps;
  int n = 0;
  int p = 0;
};

/// Paper-table row: mean RMSE and median sample variance over the final 50%
/// of assimilation steps, states and parameters separately.
struct Summary {
  double rmse_theta = std::numeric_limits<double>::quiet_NaN();
  double var_theta = std::numeric_limits<double>::quiet_NaN();
  double rmse_x = std::numeric_limits<double>::quiet_NaN();
  double var_x = std::numeric_limits<double>::quiet_NaN();
  double median_rmse_x = std::numeric_limits<double>::quiet_NaN();
  int steps_used = 0;
};

//
// Small metric helpers (kept public so tests can pin them against slow
// reference implementations).
//

inline Vector weighted_mean(const Matrix& rows, const Vector& weights) {
  return (weights.transpose() * rows).transpose();
}

inline Vector weighted_component_variance(const Matrix& rows, const Vector& weights) {
  const Vector mean = weighted_mean(rows, weights);
  Vector var = Vector::Zero(rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    var += weights(i) * (rows.row(i).transpose() - mean).array().square().matrix();
  return var;
}

inline double rmse(const Vector& estimate, const Vector& truth) {
  return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(truth.size()));
}

inline double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t half = values.size() / 2;
  return values.size() % 2 == 1 ? values[half] : 0.5 * (values[half - 1] + values[half]);
}

/// 1-based indices 1, 1+n/m, 1+2n/m, ... (m must divide n on this ring).
inline std::vector<int> evenly_spaced_indices(int n, int m) {
  if (m < 1 || m > n || n % m != 0)
    throw std::invalid_argument("evenly_spaced_indices: m must divide n");
  std::vector<int> idx(m);
  for (int k = 0; k < m; ++k) idx[k] = 1 + k * (n / m);
  return idx;
}

/// Noisy row-selection observations of the truth at times 1..n_obs.
inline std::vector<ObservationRecord> make_observations(const lorenz96::TruthTrajectory& truth,
                                                        const filters::ObservationModel& obs,
                                                        RngEngine& rng) {
  if (truth.states.empty()) throw std::invalid_argument("make_observations: empty truth");
  obs.validate(truth.states.front().size());
  std::vector<ObservationRecord> records;
  records.reserve(truth.states.size() - 1);
  for (std::size_t j = 1; j < truth.states.size(); ++j) {
    ObservationRecord rec;
    rec.step = static_cast<int>(j);
    rec.indices = obs.indices;
    rec.sigma_o = obs.sigma_o;
    rec.y.resize(static_cast<Eigen::Index>(obs.indices.size()));
    for (std::size_t k = 0; k < obs.indices.size(); ++k)
      rec.y(k) = truth.states[j](obs.indices[k]) + obs.sigma_o * draw_normal(rng);
    records.push_back(std::move(rec));
  }
  return records;
}

inline Summary summarize(const RunMetrics& metrics) {
  Summary s;
  const int total = static_cast<int>(metrics.steps.size());
  const int used = total / 2;
  s.steps_used = used;
  if (used == 0) return s;
  std::vector<double> rmse_x, var_x, rmse_th, var_th;
  for (int i = total - used; i < total; ++i) {
    rmse_x.push_back(metrics.steps[i].state_rmse);
    var_x.push_back(metrics.steps[i].median_state_var);
    if (metrics.p > 0) {
      rmse_th.push_back(metrics.steps[i].param_rmse);
      var_th.push_back(metrics.steps[i].median_param_var);
    }
  }
  auto mean_of = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
  };
  s.rmse_x = mean_of(rmse_x);
  s.var_x = median(var_x);
  s.median_rmse_x = median(rmse_x);
  if (metrics.p > 0) {
    s.rmse_theta = mean_of(rmse_th);
    s.var_theta = median(var_th);
  }
  return s;
}

//
// JSON config round trip
//

inline nlohmann::json variant_to_json(const VariantSpec& v) {
  nlohmann::json j;
  switch (v.kind) {
    case VariantSpec::Kind::Full: j["kind"] = "full"; break;
    case VariantSpec::Kind::Gamma: j["kind"] = "gamma"; j["gamma"] = v.gamma; break;
    case VariantSpec::Kind::Ppe: j["kind"] = "ppe"; break;
    case VariantSpec::Kind::Pca: j["kind"] = "pca"; j["rank"] = v.pca_rank; break;
    case VariantSpec::Kind::Sliced: j["kind"] = "sliced"; j["gamma"] = v.gamma; break;
  }
  return j;
}

inline VariantSpec variant_from_json(const nlohmann::json& j) {
  VariantSpec v;
  const std::string kind = j.at("kind").get<std::string>();
  std::set<std::string> allowed{"kind"};
  if (kind == "full") {
    v.kind = VariantSpec::Kind::Full;
  } else if (kind == "gamma") {
    v.kind = VariantSpec::Kind::Gamma;
    v.gamma = j.at("gamma").get<int>();
    allowed.insert("gamma");
  } else if (kind == "ppe") {
    v.kind = VariantSpec::Kind::Ppe;
  } else if (kind == "pca") {
    v.kind = VariantSpec::Kind::Pca;
    v.pca_rank = j.at("rank").get<int>();
    allowed.insert("rank");
  } else if (kind == "sliced") {
    v.kind = VariantSpec::Kind::Sliced;
    v.gamma = j.at("gamma").get<int>();
    allowed.insert("gamma");
  } else {
    throw std::invalid_argument("config: unknown variant kind '" + kind + "'");
  }
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw std::invalid_argument("config: unknown variant key '" + item.key() + "'");
  return v;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["n"] = cfg.n;
  j["p"] = cfg.p;
  j["m"] = cfg.m;
  if (cfg.obs_indices.empty())
    j["obs_indices"] = "evenly-spaced";
  else
    j["obs_indices"] = cfg.obs_indices;
  j["sigma_o"] = cfg.sigma_o;
  j["n_obs_times"] = cfg.n_obs_times;
  j["window"] = cfg.window;
  j["substeps"] = cfg.substeps;
  j["method"] = method_name(cfg.method);
  j["variant"] = variant_to_json(cfg.variant);
  j["n_D"] = cfg.n_design;
  j["N_F"] = cfg.n_fine;
  j["N_e"] = cfg.n_enkf;
  j["inflation"] = cfg.inflation;
  j["jitter_alpha"] = cfg.jitter_alpha;
  j["jitter_beta"] = cfg.jitter_beta;
  j["resample_threshold"] = cfg.resample_threshold;
  j["seed"] = cfg.seed;
  j["truth_theta1"] = cfg.truth_theta1;
  j["truth_theta2"] = cfg.truth_theta2;
  j["truth_theta_sd"] = cfg.truth_theta_sd;
  j["init_state_sd"] = cfg.init_state_sd;
  j["param_lo"] = cfg.param_lo;
  j["param_hi"] = cfg.param_hi;
  j["n_fixed"] = cfg.n_fixed;
  j["state_jitter_var"] = cfg.state_jitter_var;
  j["emulator_mean_only"] = cfg.emulator_mean_only;
  j["sliced_max_rows"] = cfg.sliced_max_rows;
  j["sliced_fit_rows"] = cfg.sliced_fit_rows;
  j["kernel"] = cfg.kernel;
  j["trend"] = cfg.trend;
  j["gp_multistarts"] = cfg.gp_multistarts;
  j["gp_warm_multistarts"] = cfg.gp_warm_multistarts;
  j["gp_max_evals"] = cfg.gp_max_evals;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "n", "p", "m", "obs_indices", "sigma_o", "n_obs_times", "window", "substeps",
      "method", "variant", "n_D", "N_F", "N_e", "inflation", "jitter_alpha",
      "jitter_beta", "resample_threshold", "seed", "truth_theta1", "truth_theta2",
      "truth_theta_sd", "init_state_sd", "param_lo", "param_hi", "n_fixed",
      "state_jitter_var", "emulator_mean_only", "sliced_max_rows", "sliced_fit_rows",
      "kernel", "trend", "gp_multistarts", "gp_warm_multistarts", "gp_max_evals"};
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw std::invalid_argument("config: unknown key '" + item.key() + "'");

  ExperimentConfig cfg;
  auto set_if = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  set_if("n", cfg.n);
  set_if("p", cfg.p);
  set_if("m", cfg.m);
  if (j.contains("obs_indices")) {
    if (j.at("obs_indices").is_string()) {
      if (j.at("obs_indices").get<std::string>() != "evenly-spaced")
        throw std::invalid_argument("config: obs_indices string must be 'evenly-spaced'");
      cfg.obs_indices.clear();
    } else {
      cfg.obs_indices = j.at("obs_indices").get<std::vector<int>>();
    }
  }
  set_if("sigma_o", cfg.sigma_o);
  set_if("n_obs_times", cfg.n_obs_times);
  set_if("window", cfg.window);
  set_if("substeps", cfg.substeps);
  if (j.contains("method")) cfg.method = method_from_name(j.at("method").get<std::string>());
  if (j.contains("variant")) cfg.variant = variant_from_json(j.at("variant"));
  set_if("n_D", cfg.n_design);
  set_if("N_F", cfg.n_fine);
  set_if("N_e", cfg.n_enkf);
  set_if("inflation", cfg.inflation);
  set_if("jitter_alpha", cfg.jitter_alpha);
  set_if("jitter_beta", cfg.jitter_beta);
  set_if("resample_threshold", cfg.resample_threshold);
  set_if("seed", cfg.seed);
  set_if("truth_theta1", cfg.truth_theta1);
  set_if("truth_theta2", cfg.truth_theta2);
  set_if("truth_theta_sd", cfg.truth_theta_sd);
  set_if("init_state_sd", cfg.init_state_sd);
  set_if("param_lo", cfg.param_lo);
  set_if("param_hi", cfg.param_hi);
  set_if("n_fixed", cfg.n_fixed);
  set_if("state_jitter_var", cfg.state_jitter_var);
  set_if("emulator_mean_only", cfg.emulator_mean_only);
  set_if("sliced_max_rows", cfg.sliced_max_rows);
  set_if("sliced_fit_rows", cfg.sliced_fit_rows);
  set_if("kernel", cfg.kernel);
  set_if("trend", cfg.trend);
  set_if("gp_multistarts", cfg.gp_multistarts);
  set_if("gp_warm_multistarts", cfg.gp_warm_multistarts);
  set_if("gp_max_evals", cfg.gp_max_evals);
  cfg.validate();
  return cfg;
}

/// The five bundled experiment setups; `method` picks the scheme to run and
/// everything else matches the experiment protocol.
inline ExperimentConfig bundled_config(int experiment, Method method) {
  ExperimentConfig cfg;
  cfg.method = method;
  switch (experiment) {
    case 1:
      cfg.m = 8;
      cfg.sigma_o = 1.0;
      cfg.variant.kind = VariantSpec::Kind::Gamma;
      cfg.variant.gamma = -1;
      break;
    case 2:
      cfg.m = 2;
      cfg.sigma_o = 1.0;
      cfg.variant.kind = VariantSpec::Kind::Pca;
      cfg.variant.pca_rank = 4;
      break;
    case 3:
      cfg.m = 8;
      cfg.sigma_o = 0.5;
      cfg.variant.kind = VariantSpec::Kind::Gamma;
      cfg.variant.gamma = 1;
      break;
    case 4:
      cfg.m = 4;
      cfg.sigma_o = 0.5;
      cfg.variant.kind = VariantSpec::Kind::Pca;
      cfg.variant.pca_rank = 4;
      break;
    case 5:
      cfg.p = 0;
      cfg.m = 4;
      cfg.sigma_o = 1.0;
      cfg.n_obs_times = 10000;
      cfg.variant.kind = VariantSpec::Kind::Sliced;
      cfg.variant.gamma = 1;
      cfg.inflation = 1.1;
      cfg.state_jitter_var = 0.01;
      cfg.truth_theta_sd = 0.0;
      cfg.n_fixed = 0;
      break;
    default:
      throw std::invalid_argument("bundled_config: experiment must be 1..5");
  }
  return cfg;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline filters::ObservationModel observation_model(const ExperimentConfig& cfg) {
  filters::ObservationModel obs;
  obs.sigma_o = cfg.sigma_o;
  const std::vector<int> one_based =
      cfg.obs_indices.empty() ? evenly_spaced_indices(cfg.n, cfg.m) : cfg.obs_indices;
  obs.indices.reserve(one_based.size());
  for (int idx : one_based) obs.indices.push_back(idx - 1);
  return obs;
}

inline gp::FitOptions gp_options(const ExperimentConfig& cfg) {
  gp::FitOptions opts;
  opts.family = cfg.kernel == "matern52" ? gp::KernelFamily::Matern52
                                         : gp::KernelFamily::PowerExponential;
  opts.trend = cfg.trend == "linear" ? gp::TrendBasis::Linear : gp::TrendBasis::Constant;
  opts.multistarts = cfg.gp_multistarts;
  opts.warm_multistarts = cfg.gp_warm_multistarts;
  opts.max_evals_per_start = cfg.gp_max_evals;
  return opts;
}

/// Streams one run's outputs; keeps metrics.csv and diagnostics.jsonl flushed
/// so an aborted run leaves its partial rows behind.
class RunWriter {
 public:
  RunWriter(const std::filesystem::path* dir, const ExperimentConfig& cfg) {
    if (!dir) return;
    dir_ = *dir;
    std::filesystem::create_directories(dir_);
    {
      std::ofstream out(dir_ / "config.json");
      out << config_to_json(cfg).dump(2) << "\n";
    }
    metrics_.open(dir_ / "metrics.csv");
    metrics_ << "step,state_rmse,param_rmse,median_state_var,median_param_var,ess\n";
    diagnostics_.open(dir_ / "diagnostics.jsonl");
  }

  void step(const StepMetrics& sm, const nlohmann::json& diag) {
    if (dir_.empty()) return;
    metrics_ << sm.step << ',' << format_double(sm.state_rmse) << ','
             << format_double(sm.param_rmse) << ',' << format_double(sm.median_state_var)
             << ',' << format_double(sm.median_param_var) << ',' << format_double(sm.ess)
             << '\n';
    metrics_.flush();
    diagnostics_ << diag.dump() << '\n';
    diagnostics_.flush();
  }

  void finish(const Summary& summary, const RunMetrics& metrics) {
    if (dir_.empty()) return;
    nlohmann::json j;
    j["steps"] = metrics.steps.size();
    j["final_half_steps"] = summary.steps_used;
    j["mean_state_rmse"] = summary.rmse_x;
    j["median_state_rmse"] = summary.median_rmse_x;
    j["median_state_var"] = summary.var_x;
    if (metrics.p > 0) {
      j["mean_param_rmse"] = summary.rmse_theta;
      j["median_param_var"] = summary.var_theta;
    }
    std::ofstream out(dir_ / "summary.json");
    out << j.dump(2) << "\n";
  }

 private:
  std::filesystem::path dir_;
  std::ofstream metrics_;
  std::ofstream diagnostics_;
};

}  // namespace detail

using ProgressFn = std::function<void(int step, int total)>;

/// Run one configured twin experiment: build the truth and observations from
/// the seed, initialize the method's ensembles, assimilate every observation,
/// and record per-step metrics (and files, when out_dir is given).
inline RunMetrics run_experiment(const ExperimentConfig& cfg,
                                 const std::filesystem::path* out_dir = nullptr,
                                 const ProgressFn& progress = {}) {
  cfg.validate();
  const lorenz96::IntegrationPlan plan{cfg.window, cfg.substeps};
  const Eigen::Vector2d theta_mean(cfg.truth_theta1, cfg.truth_theta2);

  // Independent substreams: methods sharing a seed see identical data.
  RngEngine truth_rng = make_engine(cfg.seed, 1);
  RngEngine obs_rng = make_engine(cfg.seed, 2);
  RngEngine method_rng = make_engine(cfg.seed, 3);

  // Random initial condition, spun up ten windows onto the attractor.
  Vector x_start = 3.0 * draw_normal_vector(cfg.n, truth_rng);
  x_start = lorenz96::generate_truth(x_start, 10, plan, theta_mean, cfg.truth_theta_sd,
                                     truth_rng)
                .states.back();
  lorenz96::TruthTrajectory truth;
  if (cfg.n_obs_times > 0)
    truth = lorenz96::generate_truth(x_start, cfg.n_obs_times, plan, theta_mean,
                                     cfg.truth_theta_sd, truth_rng);
  else
    truth.states.push_back(x_start);

  const filters::ObservationModel obs = detail::observation_model(cfg);
  const auto records = make_observations(truth, obs, obs_rng);

  const filters::ForecastFn forecast = [&](const Vector& state, const Vector& params) {
    const lorenz96::ForcingParams theta =
        params.size() >= 2 ? lorenz96::ForcingParams{params(0), params(1)}
                           : lorenz96::ForcingParams{cfg.truth_theta1, cfg.truth_theta2};
    return lorenz96::forecast(state, theta, plan);
  };
  // Augmented-state forecast for the EnKF: trailing parameter entries ride
  // along unchanged and are updated only by the Kalman gain.
  const filters::ForecastFn forecast_augmented = [&](const Vector& row, const Vector&) {
    Vector out(row.size());
    out.head(cfg.n) = forecast(row.head(cfg.n), row.tail(row.size() - cfg.n));
    out.tail(row.size() - cfg.n) = row.tail(row.size() - cfg.n);
    return out;
  };

  auto init_states = [&](int count) {
    Matrix states(count, cfg.n);
    for (int i = 0; i < count; ++i)
      states.row(i) =
          (truth.states.front() + cfg.init_state_sd * draw_normal_vector(cfg.n, method_rng))
              .transpose();
    return states;
  };
  auto init_params = [&](int count) {
    Matrix params(count, cfg.p);
    for (int i = 0; i < count; ++i)
      for (int d = 0; d < cfg.p; ++d)
        params(i, d) = cfg.param_lo + (cfg.param_hi - cfg.param_lo) * draw_uniform(method_rng);
    return params;
  };

  // Method state.
  filters::WeightedEnsemble pf_ens;
  Matrix enkf_ens;
  CoarseEnsemble coarse;
  FineEnsemble fine;
  EmupfScratch scratch;
  EmupfOptions emu_opts;

  switch (cfg.method) {
    case Method::FinePf:
    case Method::CoarsePf: {
      const int count = cfg.method == Method::FinePf ? cfg.n_fine : cfg.n_design;
      pf_ens.states = init_states(count);
      pf_ens.params = init_params(count);
      pf_ens.weights = Vector::Constant(count, 1.0 / count);
      break;
    }
    case Method::Enkf: {
      enkf_ens.resize(cfg.n_enkf, cfg.n + cfg.p);
      enkf_ens.leftCols(cfg.n) = init_states(cfg.n_enkf);
      if (cfg.p > 0) enkf_ens.rightCols(cfg.p) = init_params(cfg.n_enkf);
      break;
    }
    case Method::Emupf: {
      coarse.states = init_states(cfg.n_design);
      coarse.params = init_params(cfg.n_design);
      coarse.fixed.assign(cfg.n_design, 0);
      if (cfg.p > 0 && cfg.n_fixed > 0) {
        const Matrix lhs =
            latin_hypercube(cfg.n_fixed, cfg.p, cfg.param_lo, cfg.param_hi, method_rng);
        coarse.params.topRows(cfg.n_fixed) = lhs;
        for (int i = 0; i < cfg.n_fixed; ++i) coarse.fixed[i] = 1;
      }
      fine.states = init_states(cfg.n_fine);
      fine.params = init_params(cfg.n_fine);
      fine.weights = Vector::Constant(cfg.n_fine, 1.0 / cfg.n_fine);
      emu_opts.gp_options = detail::gp_options(cfg);
      emu_opts.pf.resample_threshold = cfg.resample_threshold;
      emu_opts.pf.jitter_alpha = cfg.jitter_alpha;
      emu_opts.pf.jitter_beta = cfg.jitter_beta;
      emu_opts.stochastic_emulator = !cfg.emulator_mean_only;
      emu_opts.jitter_fine_params = cfg.p > 0;
      emu_opts.sliced_max_rows = cfg.sliced_max_rows;
      emu_opts.sliced_fit_rows = cfg.sliced_fit_rows;
      break;
    }
  }

  filters::PfOptions pf_opts;
  pf_opts.resample_threshold = cfg.resample_threshold;
  pf_opts.jitter_params = cfg.p > 0;
  pf_opts.jitter_alpha = cfg.jitter_alpha;
  pf_opts.jitter_beta = cfg.jitter_beta;
  pf_opts.state_jitter_var = cfg.state_jitter_var;

  const Vector truth_params_abs =
      (Vector(2) << std::abs(cfg.truth_theta1), std::abs(cfg.truth_theta2)).finished();

  RunMetrics metrics;
  metrics.n = cfg.n;
  metrics.p = cfg.p;
  detail::RunWriter writer(out_dir, cfg);

  for (int j = 1; j <= cfg.n_obs_times; ++j) {
    const Vector& y = records[j - 1].y;
    StepMetrics sm;
    sm.step = j;
    nlohmann::json diag;
    diag["step"] = j;

    Matrix est_states;   // rows used for the estimate
    Matrix est_params;
    Vector est_weights;

    try {
      switch (cfg.method) {
        case Method::FinePf:
        case Method::CoarsePf: {
          filters::PfStepInfo info;
          try {
            pf_ens = filters::pf_step(pf_ens, forecast, y, obs, pf_opts, method_rng, &info);
          } catch (const DegenerateWeightsError&) {
            // Surfaced by the weight update; fall back to uniform weights.
            pf_ens.weights.setConstant(1.0 / pf_ens.size());
            info.ess = static_cast<double>(pf_ens.size());
            diag["degenerate_fallback"] = true;
          }
          sm.ess = info.ess;
          diag["resampled"] = info.resampled;
          est_states = pf_ens.states;
          est_params = pf_ens.params;
          est_weights = pf_ens.weights;
          break;
        }
        case Method::Enkf: {
          enkf_ens = filters::enkf_step(enkf_ens, forecast_augmented, y, obs,
                                        {cfg.inflation, false}, method_rng);
          sm.ess = static_cast<double>(cfg.n_enkf);
          est_states = enkf_ens.leftCols(cfg.n);
          est_params = enkf_ens.rightCols(cfg.p);
          est_weights = Vector::Constant(cfg.n_enkf, 1.0 / cfg.n_enkf);
          break;
        }
        case Method::Emupf: {
          auto result = emupf_step(coarse, fine, forecast, y, obs, cfg.variant, emu_opts,
                                   method_rng, &scratch);
          coarse = std::move(result.coarse);
          fine = std::move(result.fine);
          sm.ess = result.diag.ess;
          diag["resampled"] = result.diag.resampled;
          diag["nugget_escalations"] = result.diag.nugget_escalations;
          diag["phase_ms"] = {{"forecast", result.diag.ms_forecast},
                              {"emulate", result.diag.ms_emulate},
                              {"fit", result.diag.ms_fit},
                              {"predict", result.diag.ms_predict},
                              {"assimilate", result.diag.ms_assimilate},
                              {"subsample", result.diag.ms_subsample}};
          diag["lengthscales"] = result.diag.lengthscales;
          diag["mean_pred_std"] = result.diag.mean_pred_std;
          if (result.diag.pca_degenerate) diag["pca_degenerate"] = true;
          est_states = fine.states;
          est_params = fine.params;
          est_weights = fine.weights;
          break;
        }
      }
    } catch (const StepError& e) {
      throw StepError(e.phase(), "step " + std::to_string(j) + ": " + e.what());
    } catch (const std::exception& e) {
      throw StepError("step", "step " + std::to_string(j) + ": " + e.what());
    }

    const Vector state_mean = weighted_mean(est_states, est_weights);
    sm.state_rmse = rmse(state_mean, truth.states[j]);
    const Vector state_var = weighted_component_variance(est_states, est_weights);
    sm.median_state_var =
        median(std::vector<double>(state_var.begin(), state_var.end()));
    if (cfg.p > 0) {
      const Matrix abs_params = est_params.cwiseAbs();
      const Vector param_mean = weighted_mean(abs_params, est_weights);
      sm.param_rmse = rmse(param_mean, truth_params_abs);
      const Vector param_var = weighted_component_variance(abs_params, est_weights);
      sm.median_param_var =
          median(std::vector<double>(param_var.begin(), param_var.end()));
    }
    diag["ess"] = sm.ess;

    metrics.steps.push_back(sm);
    writer.step(sm, diag);
    if (progress) progress(j, cfg.n_obs_times);
  }

  writer.finish(summarize(metrics), metrics);
  return metrics;
}

}  // namespace emupf::harness

#endif  // EMUPF_HARNESS_HPP
