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

// Gaussian-process emulation of a simulator's input -> output map: anisotropic
// product correlation kernels, generalized-least-squares trend, profile
// likelihood hyperparameter search, batch prediction with standard errors, and
// the parallel partial (vector-output) construction sharing one correlation
// structure across output columns.

#ifndef EMUPF_GP_HPP
#define EMUPF_GP_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emupf/detail/nelder_mead.hpp"
#include "emupf/random.hpp"
#include "emupf/types.hpp"

namespace emupf::gp {

enum class KernelFamily { PowerExponential, Matern52 };

struct KernelSpec {
  KernelFamily family = KernelFamily::PowerExponential;
  double power = 2.0;   // exponent of the power-exponential family, in (0, 2]
  Vector lengthscales;  // strictly positive, one per input column

  void validate() const {
    if (family == KernelFamily::PowerExponential && !(power > 0.0 && power <= 2.0))
      throw std::invalid_argument("KernelSpec: power must lie in (0, 2]");
    if (lengthscales.size() == 0 || !(lengthscales.array() > 0.0).all() ||
        !lengthscales.allFinite())
      throw std::invalid_argument("KernelSpec: lengthscales must be positive and finite");
  }
};

enum class TrendBasis { Constant, Linear };

/// Emulator training data: one row of `inputs` per design point, one column of
/// `responses` per emulated output (s = 1 for the scalar emulator).
struct DesignSet {
  Matrix inputs;
  Matrix responses;
};

struct FitOptions {
  KernelFamily family = KernelFamily::PowerExponential;
  double power = 2.0;
  TrendBasis trend = TrendBasis::Constant;
  int multistarts = 5;
  int max_evals_per_start = 200;
  double nm_ftol = 1e-5;  // relative objective spread stopping the simplex
  double nugget_floor = 1e-8;
  double nugget_max = 1e-2;  // escalation ceiling on Cholesky breakdown
  // Estimate the relative noise term delta together with the lengthscales.
  // Responses built from scattered ensemble states are noisy regressions, and
  // a pinned near-zero nugget would force the fit to interpolate that noise
  // and report vanishing prediction error.
  bool estimate_nugget = true;
  double nugget_fit_max = 10.0;  // upper bound of the estimated delta
  bool standardize_inputs = true;
  // Skip the likelihood search entirely and condition on these raw-space
  // lengthscales (used by oracle tests and by consistency checks).
  std::optional<Vector> fixed_lengthscales;
  // Extra multistart at these raw-space lengthscales (sequential refits pass
  // the previous step's optimum here).
  std::optional<Vector> warm_start;
  // Fresh multistarts to keep once a warm start is available (<= multistarts).
  int warm_multistarts = 5;
  // Evaluate the likelihood search on at most this many design rows (0 = all);
  // the final model always conditions on the full design.
  int fit_row_cap = 0;
};

struct FitDiagnostics {
  int nugget_escalations = 0;
  double log_likelihood = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> start_log_likelihoods;
  int evaluations = 0;
  bool degenerate = false;  // all responses constant; model short-circuits
};

//
// Correlation kernels
//

/// Product-form anisotropic correlation of two input points; equals 1 at zero
/// separation and decays monotonically in every coordinate distance.
inline double corr(const Eigen::Ref<const Vector>& qa, const Eigen::Ref<const Vector>& qb,
                   const KernelSpec& kernel) {
  kernel.validate();
  if (qa.size() != qb.size() || qa.size() != kernel.lengthscales.size())
    throw std::invalid_argument("corr: dimension mismatch");
  if (kernel.family == KernelFamily::PowerExponential) {
    double expo = 0.0;
    for (Eigen::Index k = 0; k < qa.size(); ++k)
      expo += std::pow(std::abs(qa(k) - qb(k)) / kernel.lengthscales(k), kernel.power);
    return std::exp(-expo);
  }
  double value = 1.0;
  for (Eigen::Index k = 0; k < qa.size(); ++k) {
    const double t = std::sqrt(5.0) * std::abs(qa(k) - qb(k)) / kernel.lengthscales(k);
    value *= (1.0 + t + t * t / 3.0) * std::exp(-t);
  }
  return value;
}

namespace detail {

// Scaled distances are capped at 46 in the batched kernels: the correlation
// floor exp(-46) ~ 1e-20 is far below any tolerance in play, and the cap keeps
// subnormal values out of the downstream factorizations (where they cost two
// orders of magnitude in throughput). The scalar corr() stays exact.
constexpr double kMaxScaledDistance = 46.0;

/// Cross-correlation matrix between the rows of A and the rows of B.
/// The squared-exponential case runs through one GEMM on lengthscale-scaled
/// inputs; other kernels accumulate per input dimension.
inline Matrix corr_matrix(const Matrix& A, const Matrix& B, const KernelSpec& kernel) {
  const Eigen::Index na = A.rows(), nb = B.rows(), r = A.cols();
  if (kernel.family == KernelFamily::PowerExponential && kernel.power == 2.0) {
    const Matrix as = A.array().rowwise() / kernel.lengthscales.transpose().array();
    const Matrix bs = B.array().rowwise() / kernel.lengthscales.transpose().array();
    Matrix d2 = -2.0 * as * bs.transpose();
    d2.colwise() += as.rowwise().squaredNorm();
    d2.rowwise() += bs.rowwise().squaredNorm().transpose();
    return (-d2.array().max(0.0).min(kMaxScaledDistance)).exp().matrix();
  }
  if (kernel.family == KernelFamily::PowerExponential) {
    Matrix expo = Matrix::Zero(na, nb);
    for (Eigen::Index k = 0; k < r; ++k) {
      const auto diff = (A.col(k).replicate(1, nb) - B.col(k).transpose().replicate(na, 1)).array();
      expo.array() += (diff.abs() / kernel.lengthscales(k)).pow(kernel.power);
    }
    return (-expo.array().min(kMaxScaledDistance)).exp().matrix();
  }
  Matrix value = Matrix::Ones(na, nb);
  const double sqrt5 = std::sqrt(5.0);
  for (Eigen::Index k = 0; k < r; ++k) {
    const auto t = ((A.col(k).replicate(1, nb) - B.col(k).transpose().replicate(na, 1)).array().abs() *
                    (sqrt5 / kernel.lengthscales(k)))
                       .min(kMaxScaledDistance)
                       .eval();
    value.array() *= (1.0 + t + t * t / 3.0) * (-t).exp();
  }
  return value;
}

inline Matrix design_corr_matrix(const Matrix& A, const KernelSpec& kernel) {
  Matrix R = corr_matrix(A, A, kernel);
  R = 0.5 * (R + R.transpose()).eval();
  R.diagonal().setOnes();
  return R;
}

inline Matrix trend_matrix(const Matrix& X, TrendBasis trend) {
  if (trend == TrendBasis::Constant) return Matrix::Ones(X.rows(), 1);
  Matrix H(X.rows(), X.cols() + 1);
  H.col(0).setOnes();
  H.rightCols(X.cols()) = X;
  return H;
}

/// Everything predict() needs, shared between the scalar and the parallel
/// partial model so that the s = 1 parallel path is bit-identical to the
/// scalar path.
struct Core {
  Matrix design_raw;   // n_D x r
  Matrix design_std;   // n_D x r
  Vector col_mean;     // r
  Vector col_scale;    // r
  KernelSpec kernel;   // lengthscales in standardized coordinates
  TrendBasis trend = TrendBasis::Constant;
  double nugget = 0.0;
  Matrix beta;         // q x s
  Vector sigma2;       // s
  Matrix alpha;        // n_D x s, C^{-1} (Y - H beta)
  Matrix chol;         // n_D x n_D lower factor of R + nugget I
  Matrix g;            // n_D x q, chol^{-1} H
  Matrix chol_gtg;     // q x q lower factor of g^T g
  FitDiagnostics diag;

  Eigen::Index n_design() const { return design_std.rows(); }
  Eigen::Index input_dim() const { return design_std.cols(); }
  Eigen::Index n_outputs() const { return sigma2.size(); }

  Matrix standardize(const Matrix& Q) const {
    return ((Q.rowwise() - col_mean.transpose()).array().rowwise() /
            col_scale.transpose().array())
        .matrix();
  }
  /// Lengthscales expressed against the raw (unstandardized) inputs.
  Vector lengthscales_raw() const {
    return (kernel.lengthscales.array() * col_scale.array()).matrix();
  }
};

struct LikelihoodEval {
  double objective = std::numeric_limits<double>::infinity();
  double log_likelihood = -std::numeric_limits<double>::infinity();
  double nugget = 0.0;
  int escalations = 0;
  bool ok = false;
};

/// Profile objective sum_j n log sigma_hat_j^2 + s log|C| at fixed
/// lengthscales, escalating the nugget x10 on Cholesky breakdown. One instance
/// serves all evaluations of one fit so the matrix workspaces are reused.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(Matrix x, Matrix h, Matrix y, std::vector<int> live_cols,
                      double nugget_floor, double nugget_max)
      : x_(std::move(x)),
        h_(std::move(h)),
        live_y_(x_.rows(), static_cast<Eigen::Index>(live_cols.size())),
        nugget_floor_(nugget_floor),
        nugget_max_(nugget_max) {
    for (std::size_t j = 0; j < live_cols.size(); ++j) live_y_.col(j) = y.col(live_cols[j]);
  }

  LikelihoodEval operator()(const KernelSpec& kernel) {
    LikelihoodEval out;
    const Eigen::Index n = x_.rows();
    r_ = design_corr_matrix(x_, kernel);
    double nugget = nugget_floor_;
    while (true) {
      c_ = r_;
      c_.diagonal().array() += nugget;
      llt_.compute(c_);
      if (llt_.info() == Eigen::Success) break;
      if (nugget >= nugget_max_) return out;  // infeasible point
      nugget = std::max(nugget * 10.0, 1e-10);
      ++out.escalations;
    }
    out.nugget = nugget;

    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt_.matrixLLT()(i, i));
    logdet *= 2.0;

    a0_ = live_y_;
    llt_.matrixL().solveInPlace(a0_);
    g_ = h_;
    llt_.matrixL().solveInPlace(g_);
    llt_gtg_.compute(Matrix(g_.transpose() * g_));
    if (llt_gtg_.info() != Eigen::Success) return out;

    double objective = static_cast<double>(a0_.cols()) * logdet;
    for (Eigen::Index j = 0; j < a0_.cols(); ++j) {
      const Vector beta = llt_gtg_.solve(g_.transpose() * a0_.col(j));
      const double rss = (a0_.col(j) - g_ * beta).squaredNorm();
      const double sigma2 = std::max(rss / n, 1e-300);
      objective += n * std::log(sigma2);
    }
    out.objective = objective;
    out.log_likelihood =
        -0.5 * (objective +
                static_cast<double>(a0_.cols()) * n * (1.0 + std::log(2.0 * M_PI)));
    out.ok = true;
    return out;
  }

 private:
  Matrix x_, h_, live_y_;
  double nugget_floor_, nugget_max_;
  Matrix r_, c_, a0_, g_;
  Eigen::LLT<Matrix> llt_;
  Eigen::LLT<Matrix> llt_gtg_;
};

inline std::vector<int> stride_subsample(Eigen::Index total, int cap) {
  std::vector<int> idx;
  if (cap <= 0 || cap >= total) {
    idx.resize(total);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  idx.reserve(cap);
  for (int k = 0; k < cap; ++k)
    idx.push_back(static_cast<int>((static_cast<long long>(k) * total) / cap));
  return idx;
}

inline double median_pairwise_distance(const Matrix& X) {
  const auto rows = stride_subsample(X.rows(), 300);
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      const double d = (X.row(rows[a]) - X.row(rows[b])).norm();
      if (d > 0.0) dists.push_back(d);
    }
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + dists.size() / 2;
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

inline Core fit_core(const DesignSet& design, const FitOptions& opts) {
  const Eigen::Index n = design.inputs.rows(), r = design.inputs.cols(),
                     s = design.responses.cols();
  if (n < 2) throw std::invalid_argument("fit: need at least two design points");
  if (design.responses.rows() != n)
    throw std::invalid_argument("fit: responses and inputs row counts differ");
  if (s < 1) throw std::invalid_argument("fit: need at least one response column");
  if (!design.inputs.allFinite() || !design.responses.allFinite())
    throw std::invalid_argument("fit: design contains non-finite entries");

  Core core;
  core.design_raw = design.inputs;
  core.trend = opts.trend;
  core.col_mean = opts.standardize_inputs ? design.inputs.colwise().mean().transpose().eval()
                                          : Vector::Zero(r).eval();
  core.col_scale = Vector::Ones(r);
  if (opts.standardize_inputs) {
    for (Eigen::Index k = 0; k < r; ++k) {
      const double var =
          (design.inputs.col(k).array() - core.col_mean(k)).square().sum() / n;
      const double sd = std::sqrt(var);
      core.col_scale(k) = sd > 1e-12 * (1.0 + std::abs(core.col_mean(k))) ? sd : 1.0;
    }
  }
  core.design_std = core.standardize(design.inputs);

  // Columns whose responses are constant short-circuit to a degenerate model
  // (mean = constant, zero variance) and drop out of the likelihood.
  std::vector<int> live_cols;
  Vector col_const(s);
  for (Eigen::Index j = 0; j < s; ++j) {
    const double lo = design.responses.col(j).minCoeff();
    const double hi = design.responses.col(j).maxCoeff();
    col_const(j) = 0.5 * (lo + hi);
    if (hi - lo > 1e-12 * std::max(1.0, std::abs(col_const(j)))) live_cols.push_back(j);
  }
  core.diag.degenerate = live_cols.empty();

  const double d_med = median_pairwise_distance(core.design_std);
  core.kernel.family = opts.family;
  core.kernel.power = opts.power;
  core.kernel.lengthscales = Vector::Constant(r, d_med);

  if (opts.fixed_lengthscales) {
    if (opts.fixed_lengthscales->size() != r)
      throw std::invalid_argument("fit: fixed_lengthscales dimension mismatch");
    core.kernel.lengthscales =
        (opts.fixed_lengthscales->array() / core.col_scale.array()).matrix();
  } else if (!core.diag.degenerate) {
    const auto fit_rows = stride_subsample(n, opts.fit_row_cap);
    Matrix x_fit(static_cast<Eigen::Index>(fit_rows.size()), r);
    Matrix y_fit(static_cast<Eigen::Index>(fit_rows.size()), s);
    for (std::size_t i = 0; i < fit_rows.size(); ++i) {
      x_fit.row(i) = core.design_std.row(fit_rows[i]);
      y_fit.row(i) = design.responses.row(fit_rows[i]);
    }
    Matrix h_fit = trend_matrix(x_fit, opts.trend);
    LikelihoodEvaluator evaluate(std::move(x_fit), std::move(h_fit), std::move(y_fit),
                                 live_cols, opts.nugget_floor, opts.nugget_max);
    auto objective = [&](const Vector& loglen) {
      KernelSpec k = core.kernel;
      k.lengthscales = loglen.array().min(40.0).max(-40.0).exp().matrix();
      return evaluate(k).objective;
    };

    std::vector<Vector> starts;
    const bool warm = opts.warm_start && opts.warm_start->size() == r &&
                      (opts.warm_start->array() > 0.0).all();
    if (warm)
      starts.push_back((opts.warm_start->array() / core.col_scale.array()).log().matrix());
    const int m =
        std::max(1, warm ? std::min(opts.multistarts, opts.warm_multistarts) : opts.multistarts);
    for (int i = 0; i < m; ++i) {
      const double f =
          m == 1 ? 1.0 : std::pow(10.0, -1.0 + 2.0 * static_cast<double>(i) / (m - 1));
      starts.push_back(Vector::Constant(r, std::log(f * d_med)));
    }

    double best_obj = std::numeric_limits<double>::infinity();
    Vector best_loglen = starts.front();
    for (const Vector& start : starts) {
      KernelSpec start_kernel = core.kernel;
      start_kernel.lengthscales = start.array().exp().matrix();
      core.diag.start_log_likelihoods.push_back(evaluate(start_kernel).log_likelihood);
      const auto res = emupf::detail::nelder_mead(objective, start, 0.5,
                                                  opts.max_evals_per_start, opts.nm_ftol);
      core.diag.evaluations += res.evaluations;
      if (res.fx < best_obj) {
        best_obj = res.fx;
        best_loglen = res.x;
      }
    }
    if (!std::isfinite(best_obj))
      throw FitError("fit: likelihood search found no feasible lengthscales");
    core.kernel.lengthscales = best_loglen.array().min(40.0).max(-40.0).exp().matrix();
  }

  // Condition on the full design at the chosen hyperparameters.
  Matrix R = design_corr_matrix(core.design_std, core.kernel);
  double nugget = opts.nugget_floor;
  Eigen::LLT<Matrix> llt;
  while (true) {
    Matrix C = R;
    C.diagonal().array() += nugget;
    llt.compute(C);
    if (llt.info() == Eigen::Success) break;
    if (nugget >= opts.nugget_max)
      throw FitError("fit: Cholesky failed at the maximum nugget " +
                     std::to_string(opts.nugget_max));
    nugget = std::max(nugget * 10.0, 1e-10);
    ++core.diag.nugget_escalations;
  }
  core.nugget = nugget;
  core.chol = llt.matrixL();

  const Matrix H = trend_matrix(core.design_std, opts.trend);
  const Eigen::Index q = H.cols();
  core.g = H;
  core.chol.triangularView<Eigen::Lower>().solveInPlace(core.g);
  Eigen::LLT<Matrix> llt_gtg(Matrix(core.g.transpose() * core.g));
  if (llt_gtg.info() != Eigen::Success)
    throw FitError("fit: trend normal equations are singular");
  core.chol_gtg = llt_gtg.matrixL();

  core.beta = Matrix::Zero(q, s);
  core.sigma2 = Vector::Zero(s);
  core.alpha = Matrix::Zero(n, s);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(core.chol(i, i));
  logdet *= 2.0;
  double objective = static_cast<double>(live_cols.size()) * logdet;
  for (Eigen::Index j = 0; j < s; ++j) {
    const bool live = std::find(live_cols.begin(), live_cols.end(), j) != live_cols.end();
    if (!live) {
      core.beta(0, j) = col_const(j);
      continue;
    }
    Vector a0 = design.responses.col(j);
    core.chol.triangularView<Eigen::Lower>().solveInPlace(a0);
    const Vector beta = llt_gtg.solve(core.g.transpose() * a0);
    core.beta.col(j) = beta;
    const Vector resid_w = a0 - core.g * beta;
    core.sigma2(j) = std::max(resid_w.squaredNorm() / n, 0.0);
    objective += n * std::log(std::max(core.sigma2(j), 1e-300));
    Vector alpha = resid_w;
    core.chol.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha);
    core.alpha.col(j) = alpha;
  }
  if (!live_cols.empty())
    core.diag.log_likelihood =
        -0.5 * (objective +
                static_cast<double>(live_cols.size()) * n * (1.0 + std::log(2.0 * M_PI)));
  return core;
}

inline void predict_core(const Core& core, const Matrix& qstar, Matrix& means, Matrix& stds) {
  if (qstar.cols() != core.input_dim())
    throw std::invalid_argument("predict: qstar has " + std::to_string(qstar.cols()) +
                                " columns, design has " + std::to_string(core.input_dim()));
  const Eigen::Index n_pts = qstar.rows(), s = core.n_outputs(), n = core.n_design();
  const Matrix q_std = core.standardize(qstar);
  const Matrix h_star = trend_matrix(q_std, core.trend);
  means = h_star * core.beta;
  stds.resize(n_pts, s);
  const Vector sigma = core.sigma2.cwiseSqrt();

  constexpr Eigen::Index kChunk = 4096;
  for (Eigen::Index begin = 0; begin < n_pts; begin += kChunk) {
    const Eigen::Index len = std::min(kChunk, n_pts - begin);
    const Matrix r_star =
        corr_matrix(q_std.middleRows(begin, len), core.design_std, core.kernel);
    means.middleRows(begin, len).noalias() += r_star * core.alpha;

    Matrix v = r_star.transpose();  // n x len
    core.chol.triangularView<Eigen::Lower>().solveInPlace(v);
    Vector q1 = v.colwise().squaredNorm().transpose();
    Matrix u = h_star.middleRows(begin, len).transpose() - core.g.transpose() * v;
    core.chol_gtg.triangularView<Eigen::Lower>().solveInPlace(u);
    Vector q2 = u.colwise().squaredNorm().transpose();
    const Vector bracket =
        (Vector::Ones(len) - q1 + q2).cwiseMax(0.0).cwiseSqrt();
    stds.middleRows(begin, len).noalias() = bracket * sigma.transpose();
  }
}

}  // namespace detail

/// Scalar-output emulator fitted to a DesignSet with a single response column.
struct GpModel {
  detail::Core core;

  Vector lengthscales_raw() const { return core.lengthscales_raw(); }
  Vector beta() const { return core.beta.col(0); }
  double sigma2() const { return core.sigma2(0); }
  double nugget() const { return core.nugget; }
  const FitDiagnostics& diagnostics() const { return core.diag; }
};

/// Vector-output emulator: one correlation structure shared by every output
/// column, per-column trend coefficients and process variances.
struct PpeModel {
  detail::Core core;

  Vector lengthscales_raw() const { return core.lengthscales_raw(); }
  const Matrix& beta_per_output() const { return core.beta; }
  const Vector& sigma2_per_output() const { return core.sigma2; }
  double nugget() const { return core.nugget; }
  const FitDiagnostics& diagnostics() const { return core.diag; }
  Eigen::Index n_outputs() const { return core.n_outputs(); }
};

inline GpModel fit(const DesignSet& design, const FitOptions& opts = {}) {
  if (design.responses.cols() != 1)
    throw std::invalid_argument("fit: scalar fit expects exactly one response column");
  return GpModel{detail::fit_core(design, opts)};
}

inline PpeModel fit_ppe(const DesignSet& design, const FitOptions& opts = {}) {
  return PpeModel{detail::fit_core(design, opts)};
}

/// Predictive mean and standard error at each row of qstar.
inline std::pair<Vector, Vector> predict(const GpModel& model, const Matrix& qstar) {
  Matrix means, stds;
  detail::predict_core(model.core, qstar, means, stds);
  return {means.col(0), stds.col(0)};
}

inline std::pair<Matrix, Matrix> predict_ppe(const PpeModel& model, const Matrix& qstar) {
  Matrix means, stds;
  detail::predict_core(model.core, qstar, means, stds);
  return {means, stds};
}

/// One Gaussian draw per prediction row: mean + std_err * xi.
inline Vector sample_prediction(const GpModel& model, const Matrix& qstar, RngEngine& rng) {
  auto [means, stds] = predict(model, qstar);
  for (Eigen::Index i = 0; i < means.size(); ++i) means(i) += stds(i) * draw_normal(rng);
  return means;
}

inline Matrix sample_prediction_ppe(const PpeModel& model, const Matrix& qstar, RngEngine& rng) {
  auto [means, stds] = predict_ppe(model, qstar);
  for (Eigen::Index i = 0; i < means.rows(); ++i)
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(i, j) += stds(i, j) * draw_normal(rng);
  return means;
}

/// Debug view of a fitted emulator.
inline nlohmann::json dump_json(const GpModel& model) {
  const auto& core = model.core;
  nlohmann::json j;
  j["n_design"] = core.n_design();
  j["input_dim"] = core.input_dim();
  j["kernel"]["family"] =
      core.kernel.family == KernelFamily::PowerExponential ? "power-exponential" : "matern52";
  j["kernel"]["power"] = core.kernel.power;
  const Vector raw_len = model.lengthscales_raw();
  j["kernel"]["lengthscales"] = std::vector<double>(raw_len.begin(), raw_len.end());
  j["trend"] = core.trend == TrendBasis::Constant ? "constant" : "linear";
  j["nugget"] = core.nugget;
  j["sigma2"] = core.sigma2(0);
  const Vector beta = core.beta.col(0);
  j["beta"] = std::vector<double>(beta.begin(), beta.end());
  j["log_likelihood"] = core.diag.log_likelihood;
  j["nugget_escalations"] = core.diag.nugget_escalations;
  auto rows_to_json = [](const Matrix& m) {
    std::vector<std::vector<double>> out(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out[i].resize(m.cols());
      for (Eigen::Index k = 0; k < m.cols(); ++k) out[i][k] = m(i, k);
    }
    return out;
  };
  j["design"]["inputs"] = rows_to_json(core.design_raw);
  return j;
}

}  // namespace emupf::gp

#endif  // EMUPF_GP_HPP
