// Copyright 2026 The privq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PRIVQ_RNG_HPP_
#define PRIVQ_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace privq {

using Rng = std::mt19937_64;

// splitmix64 step; used to derive independent-looking streams from one seed
// without touching the parent generator.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed ^ mix_seed(stream)));
}

// Uniform on (0, 1).  Built from raw bits rather than
// std::uniform_real_distribution so the byte stream is identical across
// standard-library implementations.
inline double uniform01(Rng& rng) {
  while (true) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

// Zero-mean Laplace with the given scale, via inverse CDF.
inline double laplace(Rng& rng, double scale) {
  double u = uniform01(rng) - 0.5;  // (-0.5, 0.5)
  double s = u < 0 ? -1.0 : 1.0;
  return -scale * s * std::log(1.0 - 2.0 * std::fabs(u));
}

inline std::vector<double> laplace_vector(Rng& rng, double scale,
                                          std::size_t count) {
  std::vector<double> out(count);
  for (auto& v : out) v = laplace(rng, scale);
  return out;
}

}  // namespace privq

#endif  // PRIVQ_RNG_HPP_
