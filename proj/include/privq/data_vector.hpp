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

#ifndef PRIVQ_DATA_VECTOR_HPP_
#define PRIVQ_DATA_VECTOR_HPP_

#include <numeric>
#include <vector>

#include "privq/errors.hpp"
#include "privq/schema.hpp"
#include "privq/table.hpp"

namespace privq {

// Histogram over the flattened domain, plus the shape needed to interpret it.
struct DataVector {
  std::vector<std::size_t> domain_shape;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double total() const {
    return std::accumulate(values.begin(), values.end(), 0.0);
  }
  void validate() const {
    std::size_t n = 1;
    for (std::size_t s : domain_shape) {
      if (s == 0) throw DimensionError("domain shape has a zero extent");
      n *= s;
    }
    if (n != values.size())
      throw DimensionError("domain shape does not match the value count");
  }
};

// Counts table rows per cell.  Every row lands in exactly one cell; numeric
// values were range-checked at ingestion, so this cannot fail for a table
// that parsed.
inline DataVector vectorize_table(const Table& t) {
  DataVector v;
  v.domain_shape = t.schema->domain_shape();
  v.values.assign(t.schema->domain_size(), 0.0);
  const std::size_t k = t.schema->arity();
  std::vector<std::size_t> coords(k);
  for (const auto& r : t.rows) {
    for (std::size_t a = 0; a < k; ++a) coords[a] = cell_code(*t.schema, r, a);
    v.values[flat_index(v.domain_shape, coords)] += 1.0;
  }
  return v;
}

}  // namespace privq

#endif  // PRIVQ_DATA_VECTOR_HPP_
