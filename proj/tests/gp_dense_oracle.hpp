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

// Test-only reference implementation of the GP predictive equations, written
// against the textbook formulas with explicit matrix inverses. It deliberately
// shares no code with the fast factored path it is used to check: the kernel,
// trend regression, process variance and prediction are all reimplemented
// here in raw input coordinates.

#ifndef EMUPF_TESTS_GP_DENSE_ORACLE_HPP
#define EMUPF_TESTS_GP_DENSE_ORACLE_HPP

#include <cmath>

#include "emupf/types.hpp"

namespace gp_oracle {

using emupf::Matrix;
using emupf::Vector;

enum class Family { PowerExp, Matern52 };

struct Spec {
  Family family = Family::PowerExp;
  double power = 2.0;
  Vector lengthscales;  // raw-input-space
  bool linear_trend = false;
  double nugget = 0.0;
};

inline double kernel_entry(const Vector& a, const Vector& b, const Spec& spec) {
  if (spec.family == Family::PowerExp) {
    double e = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k)
      e += std::pow(std::abs(a(k) - b(k)) / spec.lengthscales(k), spec.power);
    return std::exp(-e);
  }
  double v = 1.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double t = std::sqrt(5.0) * std::abs(a(k) - b(k)) / spec.lengthscales(k);
    v *= (1.0 + t + t * t / 3.0) * std::exp(-t);
  }
  return v;
}

inline Matrix basis(const Matrix& x, bool linear) {
  Matrix h(x.rows(), linear ? x.cols() + 1 : 1);
  h.col(0).setOnes();
  if (linear) h.rightCols(x.cols()) = x;
  return h;
}

struct Result {
  Vector means;
  Vector variances;  // s^2(q*)
  Vector beta;
  double sigma2 = 0.0;
};

/// Direct evaluation: build the full correlation matrix, invert it explicitly,
/// then apply the GLS trend formula, the profile variance estimate, and the
/// predictive mean / standard-error expressions term by term.
inline Result evaluate(const Matrix& design, const Vector& y, const Matrix& qstar,
                       const Spec& spec) {
  const Eigen::Index n = design.rows();
  Matrix c(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      c(i, j) = kernel_entry(design.row(i), design.row(j), spec);
  c.diagonal().array() += spec.nugget;
  const Matrix c_inv = c.inverse();

  const Matrix h = basis(design, spec.linear_trend);
  const Matrix htci = h.transpose() * c_inv;
  const Matrix normal = (htci * h).inverse();

  Result out;
  out.beta = normal * (htci * y);
  const Vector resid = y - h * out.beta;
  out.sigma2 = (resid.transpose() * c_inv * resid).value() / n;

  const Matrix h_star = basis(qstar, spec.linear_trend);
  out.means.resize(qstar.rows());
  out.variances.resize(qstar.rows());
  for (Eigen::Index p = 0; p < qstar.rows(); ++p) {
    Vector r(n);
    for (Eigen::Index i = 0; i < n; ++i)
      r(i) = kernel_entry(qstar.row(p), design.row(i), spec);
    out.means(p) = h_star.row(p).dot(out.beta) + r.dot(c_inv * resid);
    const Vector u = h_star.row(p).transpose() - h.transpose() * (c_inv * r);
    const double bracket =
        1.0 - (r.transpose() * c_inv * r).value() + (u.transpose() * normal * u).value();
    out.variances(p) = out.sigma2 * bracket;
  }
  return out;
}

}  // namespace gp_oracle

#endif  // EMUPF_TESTS_GP_DENSE_ORACLE_HPP
