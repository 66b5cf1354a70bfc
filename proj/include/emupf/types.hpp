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

#ifndef EMUPF_TYPES_HPP
#define EMUPF_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace emupf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Dynamics blew up: a non-finite state appeared during integration.
class PropagationError : public std::runtime_error {
 public:
  explicit PropagationError(const std::string& what) : std::runtime_error(what) {}
};

/// Every particle received numerically zero likelihood.
class DegenerateWeightsError : public std::runtime_error {
 public:
  explicit DegenerateWeightsError(const std::string& what) : std::runtime_error(what) {}
};

/// Emulator fitting failed (Cholesky breakdown after nugget escalation, bad design, ...).
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

/// Failure inside one assimilation step, tagged with the phase that raised it.
class StepError : public std::runtime_error {
 public:
  StepError(std::string phase, const std::string& what)
      : std::runtime_error("[" + phase + "] " + what), phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

}  // namespace emupf

#endif  // EMUPF_TYPES_HPP
