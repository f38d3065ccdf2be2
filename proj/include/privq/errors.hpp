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

#ifndef PRIVQ_ERRORS_HPP_
#define PRIVQ_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace privq {

// Base class for every failure this library raises on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not line up (matvec length, matmul inner dim, ...).
struct DimensionError : Error {
  using Error::Error;
};

// A dense materialization (or other allocation) would exceed the configured
// memory cap.  Callers that can fall back to implicit forms should catch this.
struct CapacityError : Error {
  using Error::Error;
};

// A privacy-budget request was denied.  Catching this is part of the normal
// client workflow: state is untouched and the kernel remains usable.
struct BudgetExceeded : Error {
  using Error::Error;
};

// A partition description is malformed (non-disjoint groups, bad group ids,
// length mismatch with the vector it applies to).
struct PartitionError : Error {
  using Error::Error;
};

// A source handle is stale, foreign, or of the wrong payload kind for the
// requested operation.
struct LineageError : Error {
  using Error::Error;
};

// Bad configuration: unknown plan or workload name, invalid parameter value,
// malformed schema, unusable flag combination.
struct ConfigError : Error {
  using Error::Error;
};

// Row-level ingestion failure; `row` is the zero-based data row index.
struct IngestError : Error {
  IngestError(std::size_t row_index, const std::string& msg)
      : Error("row " + std::to_string(row_index) + ": " + msg), row(row_index) {}
  std::size_t row;
};

}  // namespace privq

#endif  // PRIVQ_ERRORS_HPP_
