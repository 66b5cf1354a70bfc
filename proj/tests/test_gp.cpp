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

#include "emupf/gp.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gp_dense_oracle.hpp"

using namespace emupf;
using namespace emupf::gp;

namespace {

KernelSpec scalar_kernel(double lengthscale, double power = 2.0) {
  KernelSpec k;
  k.power = power;
  k.lengthscales = Vector::Constant(1, lengthscale);
  return k;
}

DesignSet sine_design(int n_points) {
  DesignSet d;
  d.inputs.resize(n_points, 1);
  d.responses.resize(n_points, 1);
  for (int i = 0; i < n_points; ++i) {
    const double x = static_cast<double>(i) / (n_points - 1);
    d.inputs(i, 0) = x;
    d.responses(i, 0) = std::sin(2.0 * M_PI * x);
  }
  return d;
}

gp_oracle::Spec oracle_spec_for(const GpModel& model, bool linear_trend = false) {
  gp_oracle::Spec spec;
  spec.family = model.core.kernel.family == KernelFamily::PowerExponential
                    ? gp_oracle::Family::PowerExp
                    : gp_oracle::Family::Matern52;
  spec.power = model.core.kernel.power;
  spec.lengthscales = model.lengthscales_raw();
  spec.linear_trend = linear_trend;
  spec.nugget = model.nugget();
  return spec;
}

}  // namespace

TEST_CASE("corr: unit value at zero separation") {
  Vector q(2);
  q << 0.3, -1.7;
  KernelSpec k;
  k.lengthscales = Vector::Constant(2, 0.8);
  CHECK(corr(q, q, k) == 1.0);
  k.family = KernelFamily::Matern52;
  CHECK(corr(q, q, k) == 1.0);
}

TEST_CASE("corr: one lengthscale of separation gives exp(-1)") {
  Vector a(1), b(1);
  a << 0.0;
  b << 0.7;
  CHECK(corr(a, b, scalar_kernel(0.7)) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("corr: decays monotonically to zero with separation") {
  const KernelSpec pe = scalar_kernel(1.3, 1.5);
  KernelSpec mat = scalar_kernel(1.3);
  mat.family = KernelFamily::Matern52;
  for (const auto& k : {pe, mat}) {
    double prev = 1.0;
    Vector a = Vector::Zero(1), b(1);
    for (double d = 0.5; d < 40.0; d *= 2.0) {
      b << d;
      const double c = corr(a, b, k);
      CHECK(c < prev);
      CHECK(c > 0.0);
      prev = c;
    }
    CHECK(prev < 1e-8);
  }
}

TEST_CASE("fit: all-constant responses short-circuit to the constant") {
  DesignSet d;
  d.inputs = Matrix::Random(6, 2);
  d.responses = Matrix::Constant(6, 1, 4.25);
  const GpModel model = fit(d);
  CHECK(model.diagnostics().degenerate);
  CHECK(model.beta()(0) == Catch::Approx(4.25).margin(1e-12));
  CHECK(model.sigma2() == 0.0);
  Matrix probe = Matrix::Random(9, 2) * 3.0;
  auto [means, stds] = predict(model, probe);
  CHECK((means.array() - 4.25).abs().maxCoeff() < 1e-10);
  CHECK(stds.maxCoeff() == 0.0);
}

TEST_CASE("fit: two-point design interpolates its responses") {
  DesignSet d;
  d.inputs.resize(2, 1);
  d.inputs << 0.0, 1.0;
  d.responses.resize(2, 1);
  d.responses << 0.0, 1.0;
  const GpModel model = fit(d);
  auto [means, stds] = predict(model, d.inputs);
  CHECK(means(0) == Catch::Approx(0.0).margin(1e-8));
  CHECK(means(1) == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("fit: sine design matches the dense formula at held-out points") {
  const DesignSet d = sine_design(8);
  const GpModel model = fit(d);
  Matrix held_out(50, 1);
  for (int i = 0; i < 50; ++i) held_out(i, 0) = (i + 0.5) / 50.0;
  auto [means, stds] = predict(model, held_out);
  const auto oracle =
      gp_oracle::evaluate(d.inputs, d.responses.col(0), held_out, oracle_spec_for(model));
  const double scale = means.cwiseAbs().maxCoeff();
  CHECK((means - oracle.means).cwiseAbs().maxCoeff() <= 1e-10 * std::max(scale, 1.0));
}

TEST_CASE("fit: likelihood search never ends below a multistart initial point") {
  const DesignSet d = sine_design(9);
  const GpModel model = fit(d);
  REQUIRE_FALSE(model.diagnostics().start_log_likelihoods.empty());
  for (double start_ll : model.diagnostics().start_log_likelihoods)
    CHECK(model.diagnostics().log_likelihood >= start_ll - 1e-9);
}

TEST_CASE("predict: interpolation at design points with zero nugget") {
  const DesignSet d = sine_design(7);
  FitOptions opts;
  opts.nugget_floor = 0.0;
  const GpModel model = fit(d, opts);
  auto [means, stds] = predict(model, d.inputs);
  for (int i = 0; i < 7; ++i) {
    CHECK(means(i) == Catch::Approx(d.responses(i, 0)).margin(1e-6));
    CHECK(stds(i) <= 1e-6 * std::sqrt(model.sigma2()));
  }
}

TEST_CASE("predict: reverts to the trend far from the design") {
  const DesignSet d = sine_design(6);
  const GpModel model = fit(d);
  const double far = 1.0 + 25.0 * model.lengthscales_raw()(0);
  Matrix probe(1, 1);
  probe << far;
  auto [means, stds] = predict(model, probe);
  CHECK(means(0) == Catch::Approx(model.beta()(0)).margin(1e-6));
  CHECK(stds(0) > 0.0);
}

TEST_CASE("predict: rejects dimension mismatches") {
  const DesignSet d = sine_design(5);
  const GpModel model = fit(d);
  CHECK_THROWS_AS(predict(model, Matrix::Zero(3, 2)), std::invalid_argument);
}

TEST_CASE("predict: three-point hand case against the dense oracle") {
  DesignSet d;
  d.inputs.resize(3, 1);
  d.inputs << -1.0, 0.0, 2.0;
  d.responses.resize(3, 1);
  d.responses << 1.0, -1.0, 0.5;
  FitOptions opts;
  opts.fixed_lengthscales = Vector::Constant(1, 1.4);
  opts.nugget_floor = 1e-10;
  const GpModel model = fit(d, opts);
  Matrix probe(4, 1);
  probe << -0.5, 0.25, 1.0, 3.0;
  auto [means, stds] = predict(model, probe);
  gp_oracle::Spec spec;
  spec.lengthscales = Vector::Constant(1, 1.4);
  spec.nugget = model.nugget();
  const auto oracle = gp_oracle::evaluate(d.inputs, d.responses.col(0), probe, spec);
  for (int i = 0; i < 4; ++i) {
    CHECK(means(i) == Catch::Approx(oracle.means(i)).margin(1e-9));
    CHECK(stds(i) * stds(i) == Catch::Approx(oracle.variances(i)).margin(1e-9));
  }
}

TEST_CASE("dense-formula equivalence on random small designs") {
  // Lengthscales stay moderate relative to the point spacing and the nugget
  // sits at 1e-6 so the oracle's explicit inverse keeps enough digits for a
  // 1e-9 comparison; the property checked is path equivalence.
  RngEngine rng(2024);
  for (int rep = 0; rep < 25; ++rep) {
    const int n = 4 + static_cast<int>(draw_uniform(rng) * 7);   // 4..10
    const int r = 1 + static_cast<int>(draw_uniform(rng) * 3);   // 1..3
    DesignSet d;
    d.inputs = 2.0 * draw_normal_matrix(n, r, rng);
    d.responses = draw_normal_matrix(n, 1, rng);
    FitOptions opts;
    opts.family = rep % 2 == 0 ? KernelFamily::PowerExponential : KernelFamily::Matern52;
    opts.trend = rep % 3 == 0 ? TrendBasis::Linear : TrendBasis::Constant;
    opts.nugget_floor = 1e-6;
    Vector raw_len(r);
    for (int k = 0; k < r; ++k) raw_len(k) = 0.4 + 0.8 * draw_uniform(rng);
    opts.fixed_lengthscales = raw_len;
    const GpModel model = fit(d, opts);

    Matrix probe = 2.0 * draw_normal_matrix(6, r, rng);
    auto [means, stds] = predict(model, probe);
    gp_oracle::Spec spec = oracle_spec_for(model, opts.trend == TrendBasis::Linear);
    const auto oracle = gp_oracle::evaluate(d.inputs, d.responses.col(0), probe, spec);
    const double mean_scale = std::max(1.0, oracle.means.cwiseAbs().maxCoeff());
    const double var_scale = std::max(1e-12, oracle.variances.cwiseAbs().maxCoeff());
    for (int i = 0; i < 6; ++i) {
      CHECK(std::abs(means(i) - oracle.means(i)) <= 1e-9 * mean_scale);
      CHECK(std::abs(stds(i) * stds(i) - std::max(oracle.variances(i), 0.0)) <=
            1e-9 * var_scale);
      CHECK(stds(i) >= 0.0);
    }
  }
}

TEST_CASE("sample_prediction: zero std returns the mean, fixed seed reproduces") {
  DesignSet d;
  d.inputs = Matrix::Random(5, 1);
  d.responses = Matrix::Constant(5, 1, -2.5);
  const GpModel model = fit(d);
  Matrix probe = Matrix::Random(4, 1);
  RngEngine rng_a(5), rng_b(5);
  const Vector draw_a = sample_prediction(model, probe, rng_a);
  const Vector draw_b = sample_prediction(model, probe, rng_b);
  CHECK((draw_a.array() == -2.5).all());
  CHECK((draw_a - draw_b).norm() == 0.0);
}

TEST_CASE("sample_prediction: empirical spread matches the reported std_err") {
  const DesignSet d = sine_design(6);
  const GpModel model = fit(d);
  Matrix probe(1, 1);
  probe << 0.43;
  auto [mean, std_err] = predict(model, probe);
  REQUIRE(std_err(0) > 1e-8);
  RngEngine rng(99);
  const int draws = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double v = sample_prediction(model, probe, rng)(0);
    acc += v;
    acc2 += v * v;
  }
  const double emp_mean = acc / draws;
  const double emp_std = std::sqrt(acc2 / draws - emp_mean * emp_mean);
  CHECK(emp_std == Catch::Approx(std_err(0)).epsilon(0.02));
}

TEST_CASE("fit_ppe: single column reproduces the scalar path bit for bit") {
  const DesignSet d = sine_design(9);
  const GpModel scalar = fit(d);
  const PpeModel ppe = fit_ppe(d);
  Matrix probe(20, 1);
  for (int i = 0; i < 20; ++i) probe(i, 0) = -0.2 + 1.4 * i / 19.0;
  auto [sm, ss] = predict(scalar, probe);
  auto [pm, ps] = predict_ppe(ppe, probe);
  CHECK((sm - pm.col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ss - ps.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit_ppe: duplicated output columns give identical predictions") {
  DesignSet d = sine_design(8);
  Matrix y(8, 2);
  y.col(0) = d.responses.col(0);
  y.col(1) = d.responses.col(0);
  d.responses = y;
  const PpeModel ppe = fit_ppe(d);
  Matrix probe = 0.5 * (Matrix::Random(10, 1).array() + 1.0);
  auto [means, stds] = predict_ppe(ppe, probe);
  CHECK((means.col(0) - means.col(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((stds.col(0) - stds.col(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit_ppe: per-column means equal scalar refits pinned to the shared lengthscales") {
  RngEngine rng(7);
  DesignSet d;
  d.inputs = draw_normal_matrix(10, 2, rng);
  d.responses.resize(10, 3);
  for (int i = 0; i < 10; ++i) {
    const double a = d.inputs(i, 0), b = d.inputs(i, 1);
    d.responses(i, 0) = std::sin(a) + 0.3 * b;
    d.responses(i, 1) = a * a - b;
    d.responses(i, 2) = std::cos(a * b);
  }
  const PpeModel ppe = fit_ppe(d);
  Matrix probe = draw_normal_matrix(7, 2, rng);
  auto [pm, ps] = predict_ppe(ppe, probe);
  for (int j = 0; j < 3; ++j) {
    DesignSet dj;
    dj.inputs = d.inputs;
    dj.responses = d.responses.col(j);
    FitOptions opts;
    opts.fixed_lengthscales = ppe.lengthscales_raw();
    const GpModel scalar = fit(dj, opts);
    auto [sm, ss] = predict(scalar, probe);
    CHECK((sm - pm.col(j)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((ss - ps.col(j)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("fit: warm start and row cap still produce a usable model") {
  const DesignSet d = sine_design(30);
  FitOptions opts;
  opts.fit_row_cap = 12;
  opts.warm_start = Vector::Constant(1, 0.25);
  opts.multistarts = 2;
  const GpModel model = fit(d, opts);
  Matrix probe(1, 1);
  probe << 0.31;
  auto [mean, std_err] = predict(model, probe);
  CHECK(std::abs(mean(0) - std::sin(2.0 * M_PI * 0.31)) < 0.05);
}

TEST_CASE("dump_json: carries the fitted hyperparameters") {
  const DesignSet d = sine_design(6);
  const GpModel model = fit(d);
  const auto j = dump_json(model);
  CHECK(j["n_design"] == 6);
  CHECK(j["kernel"]["lengthscales"].size() == 1);
  CHECK(j["design"]["inputs"].size() == 6);
  CHECK(j.contains("sigma2"));
  CHECK(j.contains("beta"));
}
