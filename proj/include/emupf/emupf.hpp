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

// The emulator particle filter. Each assimilation step runs four phases:
//   Forecast    - real model runs on the small "coarse" design ensemble,
//   Emulate     - fit GP emulators to those design/response pairs and draw
//                 surrogate forecasts for a large "fine" ensemble,
//   Assimilate  - importance-weight the fine ensemble against the observation,
//                 merge-resampling on weight collapse,
//   Subsample   - refresh the coarse design from the weighted fine posterior.
// Input layouts come in five flavors: the full state+parameter design, the
// window-localized design (gamma >= -1), the parallel-partial design emulating
// every state component at once, the PCA-compressed design, and the
// sliced/stacked state-only design that pools every component of every run
// into one local map.

#ifndef EMUPF_EMUPF_HPP
#define EMUPF_EMUPF_HPP

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "emupf/filters.hpp"
#include "emupf/gp.hpp"
#include "emupf/random.hpp"
#include "emupf/types.hpp"

namespace emupf {

/// The n_D design particles driven through the real model. Rows flagged fixed
/// keep their parameters for the whole run so the emulator always sees a wide
/// spread of parameter inputs.
struct CoarseEnsemble {
  Matrix states;            // n_D x n
  Matrix params;            // n_D x p
  std::vector<char> fixed;  // n_D flags

  Eigen::Index size() const { return states.rows(); }
  int fixed_count() const {
    int c = 0;
    for (char f : fixed) c += f != 0;
    return c;
  }
};

/// The N_F emulator-evaluated particles carrying the posterior.
struct FineEnsemble {
  Matrix states;   // N_F x n
  Matrix params;   // N_F x p
  Vector weights;  // N_F

  Eigen::Index size() const { return states.rows(); }
};

struct VariantSpec {
  enum class Kind { Full, Gamma, Ppe, Pca, Sliced };
  Kind kind = Kind::Full;
  int gamma = 0;     // Gamma: >= -1 (-1 = parameters only). Sliced: >= 0.
  int pca_rank = 0;  // Pca: 1 <= rank < n.

  void validate(Eigen::Index n, Eigen::Index p) const {
    switch (kind) {
      case Kind::Gamma:
        if (gamma < -1) throw std::invalid_argument("VariantSpec: gamma must be >= -1");
        if (gamma >= 0 && 2 * gamma + 1 > n)
          throw std::invalid_argument("VariantSpec: gamma window exceeds the state ring");
        if (gamma == -1 && p == 0)
          throw std::invalid_argument("VariantSpec: gamma = -1 needs parameters to emulate");
        break;
      case Kind::Pca:
        if (pca_rank < 1 || pca_rank >= n)
          throw std::invalid_argument("VariantSpec: pca rank must lie in [1, n)");
        break;
      case Kind::Sliced:
        if (gamma < 0) throw std::invalid_argument("VariantSpec: sliced gamma must be >= 0");
        if (2 * gamma + 1 > n)
          throw std::invalid_argument("VariantSpec: sliced window exceeds the state ring");
        if (p > 0)
          throw std::invalid_argument("VariantSpec: sliced variant is for state-only runs");
        break;
      case Kind::Ppe:
        if (p == 0) throw std::invalid_argument("VariantSpec: ppe variant needs parameters");
        break;
      case Kind::Full:
        break;
    }
  }
};

/// Mean state and truncated orthonormal directions of the fine ensemble.
struct PcaBasis {
  Vector mean_state;  // n
  Matrix basis;       // n x r
  bool degenerate = false;
};

struct EmupfOptions {
  gp::FitOptions gp_options;
  filters::PfOptions pf;
  bool stochastic_emulator = true;  // draw mean + N(0, s^2) instead of the mean
  bool jitter_fine_params = true;   // Liu-West move on fine parameters after Subsample
  // The sliced design stacks n * n_D rows; conditioning on all of them is
  // O((n*n_D)^3) per step, so the design is stride-thinned to this many rows
  // and the lengthscale search runs on a further thinned subset.
  int sliced_max_rows = 160;
  int sliced_fit_rows = 128;
  bool oracle_dynamics = false;  // replace the emulator by the true model (tests)
};

/// Warm-start state carried between sequential steps (performance only; the
/// hyperparameters are still refit at every step).
struct EmupfScratch {
  std::vector<Vector> prev_lengthscales;
};

struct EmupfStepDiag {
  double ess = std::numeric_limits<double>::quiet_NaN();
  bool resampled = false;
  double ms_forecast = 0.0, ms_emulate = 0.0, ms_assimilate = 0.0, ms_subsample = 0.0;
  double ms_fit = 0.0, ms_predict = 0.0;  // emulate-phase split
  int nugget_escalations = 0;
  std::vector<std::vector<double>> lengthscales;  // raw-space, one entry per fit
  double mean_pred_std = 0.0;  // average emulator std_err over all fine draws
  bool pca_degenerate = false;
  bool oracle_dynamics = false;
};

namespace detail {

/// Cyclic window of 2*gamma+1 state columns centered on `component`.
inline std::vector<int> window_columns(int n, int component, int gamma) {
  std::vector<int> cols(2 * gamma + 1);
  for (int k = -gamma; k <= gamma; ++k) cols[k + gamma] = ((component + k) % n + n) % n;
  return cols;
}

inline Matrix take_columns(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(k) = m.col(cols[k]);
  return out;
}

inline Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

inline Matrix sliced_inputs(const Matrix& states, int gamma) {
  const Eigen::Index n_rows = states.rows(), n = states.cols();
  const int width = 2 * gamma + 1;
  Matrix inputs(n_rows * n, width);
  for (Eigen::Index i = 0; i < n_rows; ++i)
    for (Eigen::Index l = 0; l < n; ++l) {
      const auto cols = window_columns(static_cast<int>(n), static_cast<int>(l), gamma);
      for (int k = 0; k < width; ++k) inputs(i * n + l, k) = states(i, cols[k]);
    }
  return inputs;
}

}  // namespace detail

/// Truncated principal directions of the fine states around their unweighted
/// mean. Rank deficiency below `rank` keeps the (arbitrary) orthonormal
/// complement returned by the symmetric eigensolver and raises the flag.
inline PcaBasis pca_basis(const Matrix& fine_states, int rank) {
  const Eigen::Index n = fine_states.cols();
  if (rank < 1 || rank >= n) throw std::invalid_argument("pca_basis: rank must lie in [1, n)");
  PcaBasis out;
  out.mean_state = fine_states.colwise().mean().transpose();
  const Matrix centered = fine_states.rowwise() - out.mean_state.transpose();
  const Matrix second_moment = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(second_moment);
  if (eig.info() != Eigen::Success) throw std::runtime_error("pca_basis: eigensolver failed");
  // Eigenvalues come back ascending; keep the top `rank` directions.
  out.basis.resize(n, rank);
  for (int k = 0; k < rank; ++k) out.basis.col(k) = eig.eigenvectors().col(n - 1 - k);
  const double lambda_max = std::max(eig.eigenvalues()(n - 1), 0.0);
  int informative = 0;
  for (int k = 0; k < rank; ++k)
    informative += eig.eigenvalues()(n - 1 - k) > 1e-12 * std::max(1.0, lambda_max);
  out.degenerate = informative < rank;
  return out;
}

inline PcaBasis pca_basis(const FineEnsemble& fine, int rank) {
  return pca_basis(fine.states, rank);
}

/// Emulator design for one step: inputs at time j-1, responses from the model
/// runs at time j. `component` selects the response column for the per-output
/// variants and is ignored by the vector-output ones.
inline gp::DesignSet build_design(const CoarseEnsemble& coarse_in, const Matrix& model_out,
                                  const VariantSpec& variant, int component,
                                  const PcaBasis* pca = nullptr) {
  const Eigen::Index n = coarse_in.states.cols();
  variant.validate(n, coarse_in.params.cols());
  gp::DesignSet design;
  switch (variant.kind) {
    case VariantSpec::Kind::Full:
      design.inputs = detail::hcat(coarse_in.states, coarse_in.params);
      design.responses = model_out.col(component);
      break;
    case VariantSpec::Kind::Gamma:
      design.inputs =
          variant.gamma < 0
              ? coarse_in.params
              : detail::hcat(coarse_in.params,
                             detail::take_columns(
                                 coarse_in.states,
                                 detail::window_columns(static_cast<int>(n), component,
                                                        variant.gamma)));
      design.responses = model_out.col(component);
      break;
    case VariantSpec::Kind::Ppe:
      design.inputs = coarse_in.params;
      design.responses = model_out;
      break;
    case VariantSpec::Kind::Pca: {
      if (!pca) throw std::invalid_argument("build_design: pca variant needs a basis");
      const Matrix weights =
          (coarse_in.states.rowwise() - pca->mean_state.transpose()) * pca->basis;
      design.inputs = detail::hcat(weights, coarse_in.params);
      design.responses = model_out;
      break;
    }
    case VariantSpec::Kind::Sliced:
      design.inputs = detail::sliced_inputs(coarse_in.states, variant.gamma);
      design.responses.resize(design.inputs.rows(), 1);
      for (Eigen::Index i = 0; i < coarse_in.size(); ++i)
        for (Eigen::Index l = 0; l < n; ++l) design.responses(i * n + l, 0) = model_out(i, l);
      break;
  }
  return design;
}

/// Emulator evaluation inputs for the fine ensemble, mirroring build_design.
inline Matrix build_eval_inputs(const Matrix& fine_states, const Matrix& fine_params,
                                const VariantSpec& variant, int component,
                                const PcaBasis* pca = nullptr) {
  const Eigen::Index n = fine_states.cols();
  switch (variant.kind) {
    case VariantSpec::Kind::Full:
      return detail::hcat(fine_states, fine_params);
    case VariantSpec::Kind::Gamma:
      return variant.gamma < 0
                 ? fine_params
                 : detail::hcat(fine_params,
                                detail::take_columns(
                                    fine_states, detail::window_columns(static_cast<int>(n),
                                                                        component, variant.gamma)));
    case VariantSpec::Kind::Ppe:
      return fine_params;
    case VariantSpec::Kind::Pca: {
      if (!pca) throw std::invalid_argument("build_eval_inputs: pca variant needs a basis");
      const Matrix weights = (fine_states.rowwise() - pca->mean_state.transpose()) * pca->basis;
      return detail::hcat(weights, fine_params);
    }
    case VariantSpec::Kind::Sliced:
      return detail::sliced_inputs(fine_states, variant.gamma);
  }
  throw std::logic_error("build_eval_inputs: unreachable");
}

/// Fitted emulators of one step, in the shape the variant dictates.
struct EmulatorSet {
  VariantSpec variant;
  int n = 0;
  std::vector<gp::GpModel> per_component;  // Full / Gamma
  std::optional<gp::PpeModel> vector_model;  // Ppe / Pca
  std::optional<gp::GpModel> sliced_model;   // Sliced
  PcaBasis pca;                              // Pca only
};

namespace detail {

inline void record_fit_diag(const gp::FitDiagnostics& fd, const Vector& raw_lengthscales,
                            EmupfStepDiag* diag) {
  if (!diag) return;
  diag->nugget_escalations += fd.nugget_escalations;
  diag->lengthscales.emplace_back(raw_lengthscales.begin(), raw_lengthscales.end());
}

inline std::optional<Vector> scratch_lengthscales(const EmupfScratch* scratch, std::size_t slot) {
  if (!scratch || slot >= scratch->prev_lengthscales.size()) return std::nullopt;
  if (scratch->prev_lengthscales[slot].size() == 0) return std::nullopt;
  return scratch->prev_lengthscales[slot];
}

inline void store_scratch(EmupfScratch* scratch, std::size_t slot, const Vector& raw) {
  if (!scratch) return;
  if (scratch->prev_lengthscales.size() <= slot) scratch->prev_lengthscales.resize(slot + 1);
  scratch->prev_lengthscales[slot] = raw;
}

}  // namespace detail

/// Fit the step's emulator(s) from the coarse design and model runs.
inline EmulatorSet fit_emulators(const CoarseEnsemble& coarse_in, const Matrix& model_out,
                                 const VariantSpec& variant, const FineEnsemble& fine_in,
                                 const EmupfOptions& opts, EmupfScratch* scratch = nullptr,
                                 EmupfStepDiag* diag = nullptr) {
  const int n = static_cast<int>(coarse_in.states.cols());
  variant.validate(n, coarse_in.params.cols());
  EmulatorSet set;
  set.variant = variant;
  set.n = n;

  switch (variant.kind) {
    case VariantSpec::Kind::Full:
    case VariantSpec::Kind::Gamma: {
      set.per_component.reserve(n);
      for (int l = 0; l < n; ++l) {
        gp::FitOptions fit_opts = opts.gp_options;
        fit_opts.warm_start = detail::scratch_lengthscales(scratch, l);
        try {
          set.per_component.push_back(
              gp::fit(build_design(coarse_in, model_out, variant, l), fit_opts));
        } catch (const std::exception& e) {
          throw StepError("emulate",
                          "component " + std::to_string(l + 1) + " fit failed: " + e.what());
        }
        detail::store_scratch(scratch, l, set.per_component.back().lengthscales_raw());
        detail::record_fit_diag(set.per_component.back().diagnostics(),
                                set.per_component.back().lengthscales_raw(), diag);
      }
      break;
    }
    case VariantSpec::Kind::Ppe:
    case VariantSpec::Kind::Pca: {
      if (variant.kind == VariantSpec::Kind::Pca) {
        set.pca = pca_basis(fine_in.states, variant.pca_rank);
        if (diag) diag->pca_degenerate = set.pca.degenerate;
      }
      gp::FitOptions fit_opts = opts.gp_options;
      fit_opts.warm_start = detail::scratch_lengthscales(scratch, 0);
      try {
        set.vector_model =
            gp::fit_ppe(build_design(coarse_in, model_out, variant, 0, &set.pca), fit_opts);
      } catch (const std::exception& e) {
        throw StepError("emulate", std::string("vector emulator fit failed: ") + e.what());
      }
      detail::store_scratch(scratch, 0, set.vector_model->lengthscales_raw());
      detail::record_fit_diag(set.vector_model->diagnostics(),
                              set.vector_model->lengthscales_raw(), diag);
      break;
    }
    case VariantSpec::Kind::Sliced: {
      gp::DesignSet design = build_design(coarse_in, model_out, variant, 0);
      const auto keep = gp::detail::stride_subsample(design.inputs.rows(), opts.sliced_max_rows);
      if (static_cast<Eigen::Index>(keep.size()) < design.inputs.rows()) {
        gp::DesignSet thinned;
        thinned.inputs.resize(static_cast<Eigen::Index>(keep.size()), design.inputs.cols());
        thinned.responses.resize(static_cast<Eigen::Index>(keep.size()), 1);
        for (std::size_t k = 0; k < keep.size(); ++k) {
          thinned.inputs.row(k) = design.inputs.row(keep[k]);
          thinned.responses.row(k) = design.responses.row(keep[k]);
        }
        design = std::move(thinned);
      }
      gp::FitOptions fit_opts = opts.gp_options;
      fit_opts.fit_row_cap = opts.sliced_fit_rows;
      fit_opts.warm_start = detail::scratch_lengthscales(scratch, 0);
      try {
        set.sliced_model = gp::fit(design, fit_opts);
      } catch (const std::exception& e) {
        throw StepError("emulate", std::string("sliced emulator fit failed: ") + e.what());
      }
      detail::store_scratch(scratch, 0, set.sliced_model->lengthscales_raw());
      detail::record_fit_diag(set.sliced_model->diagnostics(),
                              set.sliced_model->lengthscales_raw(), diag);
      break;
    }
  }
  return set;
}

/// Evaluate the fitted emulators at every fine particle, drawing one Gaussian
/// realization per value when `stochastic` is set.
inline Matrix emulate_fine(const EmulatorSet& set, const FineEnsemble& fine_in, bool stochastic,
                           RngEngine& rng, EmupfStepDiag* diag = nullptr) {
  const Eigen::Index n_fine = fine_in.size();
  const int n = set.n;
  Matrix emulated(n_fine, n);
  double std_acc = 0.0;
  switch (set.variant.kind) {
    case VariantSpec::Kind::Full:
    case VariantSpec::Kind::Gamma: {
      for (int l = 0; l < n; ++l) {
        const Matrix inputs =
            build_eval_inputs(fine_in.states, fine_in.params, set.variant, l);
        auto [means, stds] = gp::predict(set.per_component[l], inputs);
        std_acc += stds.sum();
        if (stochastic)
          for (Eigen::Index i = 0; i < n_fine; ++i) means(i) += stds(i) * draw_normal(rng);
        emulated.col(l) = means;
      }
      break;
    }
    case VariantSpec::Kind::Ppe:
    case VariantSpec::Kind::Pca: {
      const Matrix inputs =
          build_eval_inputs(fine_in.states, fine_in.params, set.variant, 0, &set.pca);
      auto [means, stds] = gp::predict_ppe(*set.vector_model, inputs);
      std_acc += stds.sum();
      if (stochastic)
        for (Eigen::Index i = 0; i < n_fine; ++i)
          for (int l = 0; l < n; ++l) means(i, l) += stds(i, l) * draw_normal(rng);
      emulated = means;
      break;
    }
    case VariantSpec::Kind::Sliced: {
      const Matrix inputs = build_eval_inputs(fine_in.states, fine_in.params, set.variant, 0);
      auto [means, stds] = gp::predict(*set.sliced_model, inputs);
      std_acc += stds.sum();
      if (stochastic)
        for (Eigen::Index i = 0; i < means.size(); ++i) means(i) += stds(i) * draw_normal(rng);
      for (Eigen::Index i = 0; i < n_fine; ++i)
        for (int l = 0; l < n; ++l) emulated(i, l) = means(i * n + l);
      break;
    }
  }
  if (diag) diag->mean_pred_std = std_acc / static_cast<double>(n_fine * n);
  return emulated;
}

struct EmupfStepResult {
  CoarseEnsemble coarse;
  FineEnsemble fine;
  EmupfStepDiag diag;
};

/// One full Emu-PF assimilation step (Forecast, Emulate, Assimilate,
/// Subsample). Parameters ride along unchanged through the emulation and are
/// Liu-West jittered on the fine ensemble after the subsample.
inline EmupfStepResult emupf_step(const CoarseEnsemble& coarse, const FineEnsemble& fine,
                                  const filters::ForecastFn& forecast, const Vector& y,
                                  const filters::ObservationModel& obs,
                                  const VariantSpec& variant, const EmupfOptions& opts,
                                  RngEngine& rng, EmupfScratch* scratch = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };
  variant.validate(coarse.states.cols(), coarse.params.cols());
  EmupfStepResult result;
  result.diag.oracle_dynamics = opts.oracle_dynamics;

  // Forecast: real model runs on the design particles, parameters carried.
  auto t0 = clock::now();
  Matrix model_out(coarse.size(), coarse.states.cols());
  try {
    for (Eigen::Index i = 0; i < coarse.size(); ++i)
      model_out.row(i) = forecast(coarse.states.row(i), coarse.params.row(i)).transpose();
  } catch (const std::exception& e) {
    throw StepError("forecast", e.what());
  }
  result.diag.ms_forecast = ms_since(t0);

  // Emulate: surrogate forecasts for every fine particle.
  t0 = clock::now();
  FineEnsemble next_fine;
  next_fine.params = fine.params;
  next_fine.weights = fine.weights;
  if (opts.oracle_dynamics) {
    next_fine.states.resize(fine.size(), fine.states.cols());
    try {
      for (Eigen::Index i = 0; i < fine.size(); ++i)
        next_fine.states.row(i) =
            forecast(fine.states.row(i), fine.params.row(i)).transpose();
    } catch (const std::exception& e) {
      throw StepError("emulate", e.what());
    }
  } else {
    const auto t_fit = clock::now();
    const EmulatorSet set =
        fit_emulators(coarse, model_out, variant, fine, opts, scratch, &result.diag);
    result.diag.ms_fit = ms_since(t_fit);
    const auto t_predict = clock::now();
    next_fine.states = emulate_fine(set, fine, opts.stochastic_emulator, rng, &result.diag);
    result.diag.ms_predict = ms_since(t_predict);
  }
  result.diag.ms_emulate = ms_since(t0);

  // Assimilate: weight the fine ensemble, merge-resample on collapse.
  t0 = clock::now();
  filters::WeightedEnsemble weighted{next_fine.states, next_fine.params, next_fine.weights};
  try {
    weighted.weights = filters::likelihood_weights(weighted, y, obs);
  } catch (const DegenerateWeightsError& e) {
    throw StepError("assimilate", e.what());
  }
  result.diag.ess = filters::effective_sample_size(weighted.weights);
  result.diag.resampled =
      result.diag.ess < opts.pf.resample_threshold * static_cast<double>(weighted.size()) &&
      weighted.size() >= 3;
  if (result.diag.resampled) weighted = filters::merging_resample(weighted, rng);
  next_fine.states = std::move(weighted.states);
  next_fine.params = std::move(weighted.params);
  next_fine.weights = std::move(weighted.weights);
  result.diag.ms_assimilate = ms_since(t0);

  // Subsample: refresh the design from the weighted fine posterior; fixed rows
  // keep their parameters and take the posterior-mean state.
  t0 = clock::now();
  CoarseEnsemble next_coarse = coarse;
  const int n_free = static_cast<int>(coarse.size()) - coarse.fixed_count();
  const auto picks = filters::systematic_resample(next_fine.weights, n_free, rng);
  const RowVector posterior_mean = next_fine.weights.transpose() * next_fine.states;
  int pick = 0;
  for (Eigen::Index i = 0; i < coarse.size(); ++i) {
    if (coarse.fixed[i]) {
      next_coarse.states.row(i) = posterior_mean;
    } else {
      next_coarse.states.row(i) = next_fine.states.row(picks[pick]);
      if (coarse.params.cols() > 0)
        next_coarse.params.row(i) = next_fine.params.row(picks[pick]);
      ++pick;
    }
  }
  if (opts.jitter_fine_params && next_fine.params.cols() > 0)
    next_fine.params = filters::liu_west_jitter(next_fine.params, opts.pf.jitter_alpha,
                                                opts.pf.jitter_beta, rng);
  result.diag.ms_subsample = ms_since(t0);

  result.coarse = std::move(next_coarse);
  result.fine = std::move(next_fine);
  return result;
}

}  // namespace emupf

#endif  // EMUPF_EMUPF_HPP
