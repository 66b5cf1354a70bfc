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

// Baseline assimilation machinery: importance weights, effective sample size,
// systematic resampling, the merging (triple-combination) resampler, the
// Liu-West parameter move, a sequential-importance-resampling step, and the
// perturbed-observations ensemble Kalman step.

#ifndef EMUPF_FILTERS_HPP
#define EMUPF_FILTERS_HPP

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "emupf/random.hpp"
#include "emupf/types.hpp"

namespace emupf::filters {

/// Particle cloud: one row per particle. `params` may have zero columns for
/// state-only filtering. Weights are kept normalized to sum 1.
struct WeightedEnsemble {
  Matrix states;   // N x n
  Matrix params;   // N x p
  Vector weights;  // N

  Eigen::Index size() const { return states.rows(); }
};

/// Row-selection observation operator with isotropic Gaussian noise:
/// y = x(indices) + eta, eta ~ N(0, sigma_o^2 I).
struct ObservationModel {
  std::vector<int> indices;  // 0-based state components, strictly increasing
  double sigma_o = 1.0;

  void validate(Eigen::Index n) const {
    if (indices.empty() || static_cast<Eigen::Index>(indices.size()) > n)
      throw std::invalid_argument("ObservationModel: need 1..n observation indices");
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] < 0 || indices[k] >= n)
        throw std::invalid_argument("ObservationModel: index out of range");
      if (k > 0 && indices[k] <= indices[k - 1])
        throw std::invalid_argument("ObservationModel: indices must be strictly increasing");
    }
  }
};

/// Propagates one particle over an observation window.
using ForecastFn = std::function<Vector(const Vector& state, const Vector& params)>;

/// Importance update of Bayes' rule for the row-selection observation model,
/// evaluated in log space with max-subtraction so that only an ensemble whose
/// every member has infinite residual can degenerate.
inline Vector likelihood_weights(const WeightedEnsemble& ens, const Vector& y,
                                 const ObservationModel& obs) {
  obs.validate(ens.states.cols());
  if (!(obs.sigma_o > 0.0))
    throw std::domain_error("likelihood_weights: sigma_o must be positive");
  const Eigen::Index n_particles = ens.size();
  const Eigen::Index m = static_cast<Eigen::Index>(obs.indices.size());
  if (y.size() != m) throw std::invalid_argument("likelihood_weights: y size mismatch");

  Vector logw(n_particles);
  const double inv_two_var = 0.5 / (obs.sigma_o * obs.sigma_o);
  for (Eigen::Index i = 0; i < n_particles; ++i) {
    double sq = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double r = y(k) - ens.states(i, obs.indices[k]);
      sq += r * r;
    }
    logw(i) = std::log(ens.weights(i)) - sq * inv_two_var;
  }
  const double peak = logw.maxCoeff();
  if (!std::isfinite(peak))
    throw DegenerateWeightsError("likelihood_weights: every particle weight vanished");
  Vector w = (logw.array() - peak).exp();
  return w / w.sum();
}

inline double effective_sample_size(const Vector& weights) {
  return 1.0 / weights.squaredNorm();
}

/// Stratified selection with a single uniform offset; particle i is copied
/// count * w_i times in expectation.
inline std::vector<int> systematic_resample(const Vector& weights, int count, RngEngine& rng) {
  std::vector<int> indices(count);
  const double offset = draw_uniform(rng) / count;
  double cumulative = weights(0);
  int i = 0;
  const int last = static_cast<int>(weights.size()) - 1;
  for (int j = 0; j < count; ++j) {
    const double u = offset + static_cast<double>(j) / count;
    while (u > cumulative && i < last) cumulative += weights(++i);
    indices[j] = i;
  }
  return indices;
}

/// a1, a2, a3 with sum 1 and sum of squares 1, so the triple combination
/// preserves the ensemble mean and covariance in expectation.
inline std::array<double, 3> merging_coefficients() {
  const double s = std::sqrt(13.0);
  return {3.0 / 4.0, (s + 1.0) / 8.0, -(s - 1.0) / 8.0};
}

/// Merging resampler: each output particle combines three independently
/// resampled particles, states and parameters merged with the same indices.
inline WeightedEnsemble merging_resample(const WeightedEnsemble& ens, RngEngine& rng) {
  const Eigen::Index n_particles = ens.size();
  if (n_particles < 3)
    throw std::invalid_argument("merging_resample: need at least three particles");
  const auto a = merging_coefficients();
  std::array<std::vector<int>, 3> picks;
  for (auto& p : picks) p = systematic_resample(ens.weights, static_cast<int>(n_particles), rng);

  WeightedEnsemble out;
  out.states = Matrix::Zero(n_particles, ens.states.cols());
  out.params = Matrix::Zero(n_particles, ens.params.cols());
  for (int k = 0; k < 3; ++k) {
    for (Eigen::Index i = 0; i < n_particles; ++i) {
      out.states.row(i) += a[k] * ens.states.row(picks[k][i]);
      if (out.params.cols() > 0) out.params.row(i) += a[k] * ens.params.row(picks[k][i]);
    }
  }
  out.weights = Vector::Constant(n_particles, 1.0 / static_cast<double>(n_particles));
  return out;
}

/// Liu-West move: shrink toward the sample mean keeping beta of the variance,
/// then add alpha-scaled white noise.
inline Matrix liu_west_jitter(const Matrix& params, double alpha, double beta, RngEngine& rng) {
  if (alpha < 0.0 || !(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("liu_west_jitter: need alpha >= 0 and beta in (0, 1]");
  const RowVector mean = params.colwise().mean();
  const double root_beta = std::sqrt(beta);
  Matrix out(params.rows(), params.cols());
  for (Eigen::Index i = 0; i < params.rows(); ++i)
    for (Eigen::Index j = 0; j < params.cols(); ++j) {
      const double shrunk =
          beta == 1.0 ? params(i, j) : mean(j) + root_beta * (params(i, j) - mean(j));
      out(i, j) = alpha == 0.0 ? shrunk : shrunk + alpha * draw_normal(rng);
    }
  return out;
}

struct PfOptions {
  double resample_threshold = 0.1;
  bool jitter_params = true;
  double jitter_alpha = 0.01;
  double jitter_beta = 0.99;
  double state_jitter_var = 0.0;  // added after a resample (pure-state runs only)
};

struct PfStepInfo {
  double ess = 0.0;
  bool resampled = false;
};

/// One sequential-importance-resampling update: forecast, parameter move,
/// reweight, merge-resample when the effective sample size drops below
/// threshold * N.
inline WeightedEnsemble pf_step(const WeightedEnsemble& ens, const ForecastFn& forecast,
                                const Vector& y, const ObservationModel& obs,
                                const PfOptions& opts, RngEngine& rng,
                                PfStepInfo* info = nullptr) {
  const Eigen::Index n_particles = ens.size();
  WeightedEnsemble out;
  out.states.resize(n_particles, ens.states.cols());
  for (Eigen::Index i = 0; i < n_particles; ++i)
    out.states.row(i) = forecast(ens.states.row(i), ens.params.row(i)).transpose();
  out.params = (opts.jitter_params && ens.params.cols() > 0)
                   ? liu_west_jitter(ens.params, opts.jitter_alpha, opts.jitter_beta, rng)
                   : ens.params;
  out.weights = ens.weights;
  out.weights = likelihood_weights(out, y, obs);

  const double ess = effective_sample_size(out.weights);
  const bool resample = ess < opts.resample_threshold * n_particles && n_particles >= 3;
  if (resample) {
    out = merging_resample(out, rng);
    if (opts.state_jitter_var > 0.0) {
      const double sd = std::sqrt(opts.state_jitter_var);
      for (Eigen::Index i = 0; i < out.states.rows(); ++i)
        for (Eigen::Index j = 0; j < out.states.cols(); ++j)
          out.states(i, j) += sd * draw_normal(rng);
    }
  }
  if (info) {
    info->ess = ess;
    info->resampled = resample;
  }
  return out;
}

struct EnkfOptions {
  double inflation = 1.02;
  // Use sigma_o^2 I in place of the empirical perturbation covariance
  // (degenerate-limit checks only).
  bool exact_obs_cov = false;
};

struct EnkfStepInfo {
  bool regularized = false;
};

/// Perturbed-observations ensemble Kalman update. Members are forecast, the
/// sample covariance is inflated, each member is nudged toward its own noised
/// copy of the observation, and the innovation system is solved by Cholesky
/// (diagonal regularization of 1e-10 on breakdown).
inline Matrix enkf_step(const Matrix& ensemble, const ForecastFn& forecast, const Vector& y,
                        const ObservationModel& obs, const EnkfOptions& opts, RngEngine& rng,
                        EnkfStepInfo* info = nullptr) {
  const Eigen::Index n_members = ensemble.rows();
  const Eigen::Index dim = ensemble.cols();
  if (n_members < 2) throw std::invalid_argument("enkf_step: need at least two members");
  obs.validate(dim);
  const Eigen::Index m = static_cast<Eigen::Index>(obs.indices.size());
  if (y.size() != m) throw std::invalid_argument("enkf_step: y size mismatch");

  Matrix forecasted(n_members, dim);
  for (Eigen::Index i = 0; i < n_members; ++i)
    forecasted.row(i) = forecast(ensemble.row(i), Vector(0)).transpose();

  const RowVector mean = forecasted.colwise().mean();
  const Matrix anomalies = forecasted.rowwise() - mean;
  Matrix cov = (anomalies.transpose() * anomalies) / static_cast<double>(n_members - 1);
  cov *= opts.inflation;

  Matrix perturbations(n_members, m);
  for (Eigen::Index i = 0; i < n_members; ++i)
    for (Eigen::Index k = 0; k < m; ++k) perturbations(i, k) = obs.sigma_o * draw_normal(rng);

  Matrix obs_cov;
  if (opts.exact_obs_cov) {
    obs_cov = obs.sigma_o * obs.sigma_o * Matrix::Identity(m, m);
  } else {
    obs_cov = (perturbations.transpose() * perturbations) / static_cast<double>(n_members - 1);
  }

  Matrix cov_ht(dim, m);
  Matrix innovation_cov(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    cov_ht.col(k) = cov.col(obs.indices[k]);
    for (Eigen::Index l = 0; l < m; ++l)
      innovation_cov(k, l) = cov(obs.indices[k], obs.indices[l]);
  }
  innovation_cov += obs_cov;

  Eigen::LLT<Matrix> llt(innovation_cov);
  if (llt.info() != Eigen::Success) {
    innovation_cov.diagonal().array() += 1e-10;
    llt.compute(innovation_cov);
    if (info) info->regularized = true;
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("enkf_step: innovation covariance not factorizable");
  }
  const Matrix gain = llt.solve(cov_ht.transpose()).transpose();  // dim x m

  Matrix analysis(n_members, dim);
  for (Eigen::Index i = 0; i < n_members; ++i) {
    Vector innovation(m);
    for (Eigen::Index k = 0; k < m; ++k)
      innovation(k) = y(k) + perturbations(i, k) - forecasted(i, obs.indices[k]);
    analysis.row(i) = forecasted.row(i) + (gain * innovation).transpose();
  }
  return analysis;
}

}  // namespace emupf::filters

#endif  // EMUPF_FILTERS_HPP
