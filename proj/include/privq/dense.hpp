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

#ifndef PRIVQ_DENSE_HPP_
#define PRIVQ_DENSE_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "privq/errors.hpp"

namespace privq {

// Plain row-major dense matrix.  This is deliberately dumb storage: the
// operator engine treats dense blocks as a leaf representation, and anything
// performance-sensitive goes through the implicit operator paths instead.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;  // rows*cols entries, row-major

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  void apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      const double* r = a.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) acc += r[j] * x[j];
      y[i] = acc;
    }
  }

  void apply_t(std::span<const double> x, std::span<double> y) const {
    for (std::size_t j = 0; j < cols; ++j) y[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* r = a.data() + i * cols;
      const double xi = x[i];
      if (xi == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) y[j] += r[j] * xi;
    }
  }

  DenseMatrix transposed() const {
    DenseMatrix t(cols, rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) t.at(j, i) = at(i, j);
    return t;
  }
};

inline DenseMatrix dense_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows) throw DimensionError("dense matmul shape mismatch");
  DenseMatrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      double v = a.at(i, k);
      if (v == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) c.at(i, j) += v * b.at(k, j);
    }
  return c;
}

}  // namespace privq

#endif  // PRIVQ_DENSE_HPP_
