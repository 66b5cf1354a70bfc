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

#ifndef EMUPF_LORENZ96_HPP
#define EMUPF_LORENZ96_HPP

#include <cmath>
#include <string>
#include <vector>

#include "emupf/random.hpp"
#include "emupf/types.hpp"

namespace emupf::lorenz96 {

/// Two-parameter sinusoidal forcing: F_l = 8 + theta1 * sin(2*pi*l / (n*theta2)),
/// with the site index l running 1..n.
struct ForcingParams {
  double theta1 = 0.0;
  double theta2 = 1.0;
};

/// Time between observations and the number of RK4 substeps used to cover it.
struct IntegrationPlan {
  double window = 0.05;
  int substeps = 5;

  double dt() const { return window / substeps; }
  void validate() const {
    if (!(window > 0.0)) throw std::invalid_argument("IntegrationPlan: window must be > 0");
    if (substeps < 1) throw std::invalid_argument("IntegrationPlan: substeps must be >= 1");
  }
};

/// Truth path of a twin experiment: states at observation times (t=0 included)
/// plus the forcing parameters actually drawn at every integration substep.
struct TruthTrajectory {
  std::vector<Vector> states;
  std::vector<ForcingParams> drawn_params;
};

inline Vector forcing(Eigen::Index n, const ForcingParams& theta) {
  if (theta.theta2 == 0.0)
    throw std::domain_error("lorenz96: theta2 = 0 leaves the forcing undefined");
  Vector f(n);
  const double scale = 2.0 * M_PI / (static_cast<double>(n) * theta.theta2);
  for (Eigen::Index l = 0; l < n; ++l)
    f(l) = 8.0 + theta.theta1 * std::sin(scale * static_cast<double>(l + 1));
  return f;
}

/// Cyclic advection-dissipation tendency with a precomputed forcing vector.
inline Vector rhs(const Vector& x, const Vector& f) {
  const Eigen::Index n = x.size();
  if (n < 4) throw std::invalid_argument("lorenz96: state dimension must be >= 4");
  Vector dx(n);
  for (Eigen::Index l = 0; l < n; ++l) {
    const Eigen::Index lp1 = (l + 1) % n;
    const Eigen::Index lm1 = (l + n - 1) % n;
    const Eigen::Index lm2 = (l + n - 2) % n;
    dx(l) = (x(lp1) - x(lm2)) * x(lm1) - x(l) + f(l);
  }
  return dx;
}

inline Vector rhs(const Vector& x, const ForcingParams& theta) {
  return rhs(x, forcing(x.size(), theta));
}

namespace detail {

inline Vector rk4_step_with_forcing(const Vector& x, const Vector& f, double dt) {
  const Vector k1 = rhs(x, f);
  const Vector k2 = rhs(x + (0.5 * dt) * k1, f);
  const Vector k3 = rhs(x + (0.5 * dt) * k2, f);
  const Vector k4 = rhs(x + dt * k3, f);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Classical fourth-order Runge-Kutta update. Deterministic; dt = 0 is the identity.
inline Vector rk4_step(const Vector& x, const ForcingParams& theta, double dt) {
  if (dt < 0.0) throw std::invalid_argument("rk4_step: dt must be >= 0");
  Vector next = detail::rk4_step_with_forcing(x, forcing(x.size(), theta), dt);
  if (!next.allFinite()) throw PropagationError("rk4_step produced a non-finite state");
  return next;
}

/// Advance one observation window with parameters held fixed across substeps.
inline Vector forecast(const Vector& x, const ForcingParams& theta, const IntegrationPlan& plan) {
  plan.validate();
  const Vector f = forcing(x.size(), theta);
  const double dt = plan.dt();
  Vector state = x;
  for (int s = 0; s < plan.substeps; ++s) {
    state = detail::rk4_step_with_forcing(state, f, dt);
    if (!state.allFinite())
      throw PropagationError("forecast diverged at substep " + std::to_string(s + 1) + " of " +
                             std::to_string(plan.substeps));
  }
  return state;
}

/// Generate the synthetic truth: before every substep the forcing parameters are
/// redrawn from N(theta_mean, theta_sd^2 I2) and held for that substep only.
/// theta_sd = 0 degenerates to a fixed-parameter deterministic trajectory.
inline TruthTrajectory generate_truth(const Vector& x0, int n_obs, const IntegrationPlan& plan,
                                      const Eigen::Vector2d& theta_mean, double theta_sd,
                                      RngEngine& rng) {
  plan.validate();
  if (n_obs < 1) throw std::invalid_argument("generate_truth: n_obs must be >= 1");
  TruthTrajectory traj;
  traj.states.reserve(static_cast<std::size_t>(n_obs) + 1);
  traj.drawn_params.reserve(static_cast<std::size_t>(n_obs) * plan.substeps);
  traj.states.push_back(x0);
  const double dt = plan.dt();
  Vector state = x0;
  for (int j = 0; j < n_obs; ++j) {
    for (int s = 0; s < plan.substeps; ++s) {
      ForcingParams theta{theta_mean(0) + theta_sd * draw_normal(rng),
                          theta_mean(1) + theta_sd * draw_normal(rng)};
      traj.drawn_params.push_back(theta);
      state = detail::rk4_step_with_forcing(state, forcing(state.size(), theta), dt);
      if (!state.allFinite())
        throw PropagationError("generate_truth diverged at window " + std::to_string(j + 1) +
                               ", substep " + std::to_string(s + 1));
    }
    traj.states.push_back(state);
  }
  return traj;
}

}  // namespace emupf::lorenz96

#endif  // EMUPF_LORENZ96_HPP
