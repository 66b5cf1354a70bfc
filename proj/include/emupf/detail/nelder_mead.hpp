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

#ifndef EMUPF_DETAIL_NELDER_MEAD_HPP
#define EMUPF_DETAIL_NELDER_MEAD_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "emupf/types.hpp"

namespace emupf::detail {

struct NelderMeadResult {
  Vector x;
  double fx = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

/// Derivative-free simplex minimizer. The objective may return +inf for
/// infeasible points; the simplex simply moves away from them.
template <typename F>
NelderMeadResult nelder_mead(F&& f, const Vector& x0, double initial_step, int max_evals,
                             double ftol_rel = 1e-7) {
  const int n = static_cast<int>(x0.size());
  NelderMeadResult result;

  std::vector<Vector> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  fs[0] = f(x0);
  result.evaluations = 1;
  for (int i = 1; i <= n && result.evaluations < max_evals; ++i) {
    xs[i](i - 1) += initial_step;
    fs[i] = f(xs[i]);
    ++result.evaluations;
  }

  std::vector<int> order(n + 1);
  std::iota(order.begin(), order.end(), 0);
  auto sort_simplex = [&] {
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
  };

  while (result.evaluations < max_evals) {
    sort_simplex();
    const int best = order[0], worst = order[n], second_worst = order[n - 1];
    if (std::isfinite(fs[best]) &&
        fs[worst] - fs[best] <= ftol_rel * (1.0 + std::abs(fs[best])))
      break;

    Vector centroid = Vector::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += xs[i];
    centroid /= n;

    const Vector reflected = centroid + (centroid - xs[worst]);
    const double fr = f(reflected);
    ++result.evaluations;

    if (fr < fs[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - xs[worst]);
      const double fe = f(expanded);
      ++result.evaluations;
      if (fe < fr) {
        xs[worst] = expanded;
        fs[worst] = fe;
      } else {
        xs[worst] = reflected;
        fs[worst] = fr;
      }
    } else if (fr < fs[second_worst]) {
      xs[worst] = reflected;
      fs[worst] = fr;
    } else {
      const bool outside = fr < fs[worst];
      const Vector contracted = outside
                                    ? Vector(centroid + 0.5 * (reflected - centroid))
                                    : Vector(centroid - 0.5 * (centroid - xs[worst]));
      const double fc = f(contracted);
      ++result.evaluations;
      if (fc < std::min(fr, fs[worst])) {
        xs[worst] = contracted;
        fs[worst] = fc;
      } else {
        // Shrink toward the best vertex.
        for (int i = 0; i <= n; ++i) {
          if (i == order[0]) continue;
          xs[i] = xs[order[0]] + 0.5 * (xs[i] - xs[order[0]]);
          fs[i] = f(xs[i]);
          ++result.evaluations;
          if (result.evaluations >= max_evals) break;
        }
      }
    }
  }

  sort_simplex();
  result.x = xs[order[0]];
  result.fx = fs[order[0]];
  return result;
}

}  // namespace emupf::detail

#endif  // EMUPF_DETAIL_NELDER_MEAD_HPP
