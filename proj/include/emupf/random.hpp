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

#ifndef EMUPF_RANDOM_HPP
#define EMUPF_RANDOM_HPP

#include <cstdint>
#include <random>

#include "emupf/types.hpp"

namespace emupf {

using RngEngine = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent substream seeds from one
/// master seed so that e.g. truth generation and method initialization never
/// share an engine.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline RngEngine make_engine(std::uint64_t seed, std::uint64_t stream) {
  return RngEngine(mix_seed(seed, stream));
}

// Distributions are constructed per call: std::normal_distribution keeps a
// cached spare value, and discarding it keeps every call site deterministic
// regardless of what ran before.
inline double draw_normal(RngEngine& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline double draw_uniform(RngEngine& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline Vector draw_normal_vector(Eigen::Index n, RngEngine& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = draw_normal(rng);
  return v;
}

inline Matrix draw_normal_matrix(Eigen::Index rows, Eigen::Index cols, RngEngine& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = draw_normal(rng);
  return m;
}

/// count-point Latin hypercube on the axis-aligned box [lo, hi]^dims.
inline Matrix latin_hypercube(int count, int dims, double lo, double hi, RngEngine& rng) {
  Matrix points(count, dims);
  std::vector<int> perm(count);
  for (int d = 0; d < dims; ++d) {
    for (int k = 0; k < count; ++k) perm[k] = k;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int k = 0; k < count; ++k) {
      const double cell = (static_cast<double>(perm[k]) + draw_uniform(rng)) / count;
      points(k, d) = lo + (hi - lo) * cell;
    }
  }
  return points;
}

}  // namespace emupf

#endif  // EMUPF_RANDOM_HPP
