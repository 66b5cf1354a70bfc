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

#include "emupf/filters.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

using namespace emupf;
using namespace emupf::filters;

namespace {

WeightedEnsemble scalar_ensemble(const Vector& states, const Vector& weights) {
  WeightedEnsemble ens;
  ens.states = states;
  ens.params = Matrix(states.size(), 0);
  ens.weights = weights;
  return ens;
}

Vector uniform_weights(Eigen::Index n) { return Vector::Constant(n, 1.0 / n); }

ForecastFn identity_forecast() {
  return [](const Vector& state, const Vector&) { return state; };
}

}  // namespace

TEST_CASE("likelihood_weights: equal residuals keep uniform weights") {
  WeightedEnsemble ens = scalar_ensemble(Vector::Constant(4, 2.0), uniform_weights(4));
  Vector y(1);
  y << 2.0;
  const Vector w = likelihood_weights(ens, y, {{0}, 1.0});
  CHECK((w.array() - 0.25).abs().maxCoeff() < 1e-14);
}

TEST_CASE("likelihood_weights: a dominant particle takes all the weight") {
  Vector states(2);
  states << 0.0, 50.0;
  WeightedEnsemble ens = scalar_ensemble(states, uniform_weights(2));
  Vector y(1);
  y << 0.0;
  const Vector w = likelihood_weights(ens, y, {{0}, 1.0});
  CHECK(w(0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(w(1) < 1e-12);
}

TEST_CASE("likelihood_weights: hand-evaluated Gaussian weights") {
  // Residuals (0, 1, 2) with sigma_o = 1 and a uniform prior give weights
  // proportional to (1, e^-1/2, e^-2); normalized: (0.5741, 0.3482, 0.0777).
  Vector states(3);
  states << 0.0, 1.0, 2.0;
  WeightedEnsemble ens = scalar_ensemble(states, uniform_weights(3));
  Vector y(1);
  y << 0.0;
  const Vector w = likelihood_weights(ens, y, {{0}, 1.0});
  CHECK(w(0) == Catch::Approx(0.574096).margin(1e-4));
  CHECK(w(1) == Catch::Approx(0.348210).margin(1e-4));
  CHECK(w(2) == Catch::Approx(0.077695).margin(1e-4));
  CHECK(w.sum() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("likelihood_weights: stays finite while one particle is within reach") {
  Vector states(3);
  states << 90.0, 200.0, 500.0;
  WeightedEnsemble ens = scalar_ensemble(states, uniform_weights(3));
  Vector y(1);
  y << 0.0;
  const Vector w = likelihood_weights(ens, y, {{0}, 1.0});
  CHECK(w.allFinite());
  CHECK(w.sum() == Catch::Approx(1.0).margin(1e-12));
  CHECK(w(0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("likelihood_weights: all-vanished ensemble raises the degenerate error") {
  Vector states(2);
  states << std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity();
  WeightedEnsemble ens = scalar_ensemble(states, uniform_weights(2));
  Vector y(1);
  y << 0.0;
  CHECK_THROWS_AS(likelihood_weights(ens, y, {{0}, 1.0}), DegenerateWeightsError);
}

TEST_CASE("effective_sample_size: bounds and reference values") {
  CHECK(effective_sample_size(uniform_weights(17)) == Catch::Approx(17.0).margin(1e-10));
  Vector one_hot = Vector::Zero(9);
  one_hot(3) = 1.0;
  CHECK(effective_sample_size(one_hot) == Catch::Approx(1.0).margin(1e-12));
  Vector w(3);
  w << 0.5, 0.25, 0.25;
  CHECK(effective_sample_size(w) == Catch::Approx(1.0 / 0.375).margin(1e-12));
  RngEngine rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    Vector rw = draw_normal_vector(12, rng).cwiseAbs();
    rw /= rw.sum();
    const double ess = effective_sample_size(rw);
    CHECK(ess >= 1.0 - 1e-12);
    CHECK(ess <= 12.0 + 1e-12);
  }
}

TEST_CASE("systematic_resample: a unit weight wins every slot") {
  Vector w = Vector::Zero(5);
  w(0) = 1.0;
  RngEngine rng(4);
  for (int idx : systematic_resample(w, 8, rng)) CHECK(idx == 0);
}

TEST_CASE("systematic_resample: uniform weights select each particle once") {
  const int n = 32;
  RngEngine rng(5);
  const auto picks = systematic_resample(uniform_weights(n), n, rng);
  std::vector<int> counts(n, 0);
  long sum = 0;
  for (int idx : picks) {
    ++counts[idx];
    sum += idx;
  }
  for (int c : counts) CHECK(c == 1);
  CHECK(sum == n * (n - 1) / 2);
}

TEST_CASE("systematic_resample: copy counts are unbiased") {
  Vector w(3);
  w << 0.7, 0.2, 0.1;
  RngEngine rng(6);
  Eigen::Vector3d mean_counts = Eigen::Vector3d::Zero();
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (int idx : systematic_resample(w, 10, rng)) counts(idx) += 1.0;
    mean_counts += counts;
  }
  mean_counts /= trials;
  CHECK(mean_counts(0) == Catch::Approx(7.0).margin(0.1));
  CHECK(mean_counts(1) == Catch::Approx(2.0).margin(0.1));
  CHECK(mean_counts(2) == Catch::Approx(1.0).margin(0.1));
}

TEST_CASE("merging_coefficients: first two moments are preserved exactly") {
  const auto a = merging_coefficients();
  CHECK(std::abs(a[0] + a[1] + a[2] - 1.0) <= 1e-15);
  CHECK(std::abs(a[0] * a[0] + a[1] * a[1] + a[2] * a[2] - 1.0) <= 1e-15);
}

TEST_CASE("merging_resample: identical particles stay identical") {
  WeightedEnsemble ens;
  ens.states = Matrix::Constant(6, 2, 3.5);
  ens.params = Matrix::Constant(6, 1, -1.25);
  ens.weights = uniform_weights(6);
  RngEngine rng(7);
  const auto out = merging_resample(ens, rng);
  CHECK((out.states.array() - 3.5).abs().maxCoeff() < 1e-12);
  CHECK((out.params.array() + 1.25).abs().maxCoeff() < 1e-12);
  CHECK((out.weights.array() - 1.0 / 6).abs().maxCoeff() < 1e-15);
}

TEST_CASE("merging_resample: preserves the weighted mean in expectation") {
  RngEngine rng(8);
  const int n = 250;
  WeightedEnsemble ens;
  ens.states = draw_normal_matrix(n, 2, rng);
  ens.params = Matrix(n, 0);
  Vector w = draw_normal_vector(n, rng).cwiseAbs();
  ens.weights = w / w.sum();
  const RowVector target = ens.weights.transpose() * ens.states;

  const int repeats = 1000;
  Matrix repeat_means(repeats, 2);
  for (int t = 0; t < repeats; ++t) {
    const auto out = merging_resample(ens, rng);
    repeat_means.row(t) = out.states.colwise().mean();
  }
  const RowVector mc_mean = repeat_means.colwise().mean();
  for (int j = 0; j < 2; ++j) {
    const double se =
        std::sqrt((repeat_means.col(j).array() - mc_mean(j)).square().sum() / (repeats - 1)) /
        std::sqrt(static_cast<double>(repeats));
    CHECK(std::abs(mc_mean(j) - target(j)) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("liu_west_jitter: identity settings leave parameters unchanged") {
  RngEngine rng(9);
  const Matrix params = draw_normal_matrix(40, 2, rng);
  const Matrix out = liu_west_jitter(params, 0.0, 1.0, rng);
  CHECK((out - params).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("liu_west_jitter: beta = 1/4 halves deviations from the mean") {
  RngEngine rng(10);
  const Matrix params = draw_normal_matrix(25, 1, rng);
  const double mean = params.col(0).mean();
  const Matrix out = liu_west_jitter(params, 0.0, 0.25, rng);
  for (int i = 0; i < 25; ++i)
    CHECK(out(i, 0) - mean == Catch::Approx(0.5 * (params(i, 0) - mean)).margin(1e-12));
}

TEST_CASE("liu_west_jitter: variance maps to beta*var + alpha^2") {
  RngEngine rng(11);
  const int n = 100000;
  Matrix params = 2.0 * draw_normal_matrix(n, 1, rng);
  const double var_before =
      (params.col(0).array() - params.col(0).mean()).square().sum() / (n - 1);
  const double alpha = 0.5, beta = 0.6;
  const Matrix out = liu_west_jitter(params, alpha, beta, rng);
  const double var_after = (out.col(0).array() - out.col(0).mean()).square().sum() / (n - 1);
  CHECK(var_after == Catch::Approx(beta * var_before + alpha * alpha).epsilon(0.02));
}

TEST_CASE("pf_step: uninformative observations keep weights uniform") {
  RngEngine rng(12);
  WeightedEnsemble ens;
  ens.states = draw_normal_matrix(50, 3, rng);
  ens.params = Matrix(50, 0);
  ens.weights = uniform_weights(50);
  Vector y(1);
  y << 0.0;
  PfStepInfo info;
  const auto out = pf_step(ens, identity_forecast(), y, {{1}, 1e6}, {}, rng, &info);
  CHECK_FALSE(info.resampled);
  CHECK((out.weights.array() - 0.02).abs().maxCoeff() < 1e-12);
  CHECK(info.ess == Catch::Approx(50.0).margin(1e-6));
}

TEST_CASE("pf_step: a single particle follows the forecast with unit weight") {
  WeightedEnsemble ens;
  ens.states = Matrix::Constant(1, 2, 1.0);
  ens.params = Matrix(1, 0);
  ens.weights = Vector::Ones(1);
  RngEngine rng(13);
  Vector y(1);
  y << 4.0;
  const auto out = pf_step(
      ens, [](const Vector& s, const Vector&) { return Vector(2.0 * s); }, y, {{0}, 1.0}, {},
      rng);
  CHECK(out.weights(0) == 1.0);
  CHECK(out.states(0, 0) == 2.0);
  CHECK(out.states(0, 1) == 2.0);
}

TEST_CASE("pf_step: peaked weights trigger the merging resampler") {
  RngEngine rng(14);
  WeightedEnsemble ens;
  ens.states = draw_normal_matrix(200, 1, rng);
  ens.states(0, 0) = 0.0;
  ens.params = Matrix(200, 0);
  ens.weights = uniform_weights(200);
  Vector y(1);
  y << 0.0;
  PfStepInfo info;
  const auto out = pf_step(ens, identity_forecast(), y, {{0}, 0.01}, {}, rng, &info);
  CHECK(info.resampled);
  CHECK((out.weights.array() - 1.0 / 200).abs().maxCoeff() < 1e-15);
}

TEST_CASE("pf_step: one-step posterior mean matches the exact Kalman update") {
  // Scalar linear-Gaussian setup: prior N(0,1), identity dynamics, y = 1,
  // sigma_o = 1. Exact posterior mean is 1/2.
  RngEngine rng(15);
  const int n = 200000;
  WeightedEnsemble ens;
  ens.states = draw_normal_matrix(n, 1, rng);
  ens.params = Matrix(n, 0);
  ens.weights = uniform_weights(n);
  Vector y(1);
  y << 1.0;
  PfOptions opts;
  opts.resample_threshold = 0.0;  // keep raw weights for the estimate
  const auto out = pf_step(ens, identity_forecast(), y, {{0}, 1.0}, opts, rng);
  const double post_mean = out.weights.dot(out.states.col(0));
  double se_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = out.states(i, 0) - post_mean;
    se_sq += out.weights(i) * out.weights(i) * d * d;
  }
  CHECK(std::abs(post_mean - 0.5) <= 3.0 * std::sqrt(se_sq));
}

TEST_CASE("enkf_step: identical members pass through unchanged") {
  Matrix ensemble = Matrix::Constant(20, 3, 1.5);
  RngEngine rng(16);
  Vector y(2);
  y << 9.0, -9.0;
  const Matrix analysis = enkf_step(ensemble, identity_forecast(), y, {{0, 2}, 1.0}, {}, rng);
  CHECK((analysis.array() - 1.5).abs().maxCoeff() < 1e-9);
}

TEST_CASE("enkf_step: full-trust limit pulls members onto the observation") {
  RngEngine rng(17);
  Matrix ensemble = draw_normal_matrix(60, 3, rng);
  Vector y(3);
  y << 0.5, -0.25, 1.5;
  EnkfOptions opts;
  opts.exact_obs_cov = true;
  opts.inflation = 1.0;
  const Matrix analysis =
      enkf_step(ensemble, identity_forecast(), y, {{0, 1, 2}, 1e-7}, opts, rng);
  for (int j = 0; j < 3; ++j)
    CHECK((analysis.col(j).array() - y(j)).abs().maxCoeff() < 1e-4);
}

TEST_CASE("enkf_step: scalar analysis matches the exact Kalman filter") {
  RngEngine rng(18);
  const int n = 100000;
  Matrix ensemble = draw_normal_matrix(n, 1, rng);  // prior N(0, 1)
  Vector y(1);
  y << 1.0;
  EnkfOptions opts;
  opts.inflation = 1.0;
  const Matrix analysis = enkf_step(ensemble, identity_forecast(), y, {{0}, 1.0}, opts, rng);
  const double mean = analysis.col(0).mean();
  const double var = (analysis.col(0).array() - mean).square().sum() / (n - 1);
  CHECK(std::abs(mean - 0.5) < 0.01 * std::max(1.0, std::abs(0.5)));
  CHECK(var == Catch::Approx(0.5).epsilon(0.02));
}

TEST_CASE("weight outputs always normalize and stay nonnegative") {
  RngEngine rng(19);
  for (int rep = 0; rep < 25; ++rep) {
    const int n = 3 + static_cast<int>(draw_uniform(rng) * 40);
    WeightedEnsemble ens;
    ens.states = 3.0 * draw_normal_matrix(n, 2, rng);
    ens.params = Matrix(n, 0);
    Vector w = draw_normal_vector(n, rng).cwiseAbs();
    ens.weights = w / w.sum();
    Vector y(1);
    y << draw_normal(rng);
    const Vector lw = likelihood_weights(ens, y, {{0}, 0.5});
    CHECK(lw.minCoeff() >= 0.0);
    CHECK(std::abs(lw.sum() - 1.0) <= 1e-12);
    ens.weights = lw;
    const auto merged = merging_resample(ens, rng);
    CHECK(std::abs(merged.weights.sum() - 1.0) <= 1e-12);
    CHECK(merged.weights.minCoeff() >= 0.0);
  }
}
