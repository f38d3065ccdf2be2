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

#ifndef PRIVQ_SCHEMA_HPP_
#define PRIVQ_SCHEMA_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "privq/errors.hpp"

namespace privq {

// Categorical attribute: a closed list of admissible values, in domain order.
struct Categorical {
  std::vector<std::string> values;
};

// Numeric attribute discretized into `bins` uniform ranges over [lo, hi].
// Bins are half-open [a, b); the final bin also includes hi.
struct UniformRanges {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t bins = 1;
};

struct Attribute {
  std::string name;
  std::variant<Categorical, UniformRanges> domain;

  bool categorical() const {
    return std::holds_alternative<Categorical>(domain);
  }
  std::size_t size() const {
    if (categorical()) return std::get<Categorical>(domain).values.size();
    return std::get<UniformRanges>(domain).bins;
  }
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Attribute> attrs) : attrs_(std::move(attrs)) {
    for (const auto& a : attrs_) {
      if (a.name.empty()) throw ConfigError("attribute needs a name");
      if (a.size() == 0)
        throw ConfigError("attribute '" + a.name + "' has an empty domain");
      if (!a.categorical()) {
        const auto& r = std::get<UniformRanges>(a.domain);
        if (!(r.lo < r.hi))
          throw ConfigError("attribute '" + a.name + "' has an empty range");
      }
      for (const auto& b : attrs_)
        if (&a != &b && a.name == b.name)
          throw ConfigError("duplicate attribute name '" + a.name + "'");
    }
  }

  const std::vector<Attribute>& attributes() const { return attrs_; }
  std::size_t arity() const { return attrs_.size(); }
  const Attribute& at(std::size_t i) const { return attrs_[i]; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < attrs_.size(); ++i)
      if (attrs_[i].name == name) return i;
    throw ConfigError("unknown attribute '" + name + "'");
  }

  std::vector<std::size_t> domain_shape() const {
    std::vector<std::size_t> s;
    s.reserve(attrs_.size());
    for (const auto& a : attrs_) s.push_back(a.size());
    return s;
  }

  std::size_t domain_size() const {
    std::size_t n = 1;
    for (const auto& a : attrs_) n *= a.size();
    return n;
  }

  // Bin index for a raw numeric value; Error if outside [lo, hi].
  std::size_t bin_of(std::size_t attr, double v) const {
    const auto& r = std::get<UniformRanges>(attrs_[attr].domain);
    if (!(v >= r.lo && v <= r.hi))
      throw Error("value " + std::to_string(v) + " outside [" +
                  std::to_string(r.lo) + ", " + std::to_string(r.hi) +
                  "] for attribute '" + attrs_[attr].name + "'");
    if (v == r.hi) return r.bins - 1;
    double w = (r.hi - r.lo) / static_cast<double>(r.bins);
    auto b = static_cast<std::size_t>((v - r.lo) / w);
    return b >= r.bins ? r.bins - 1 : b;
  }

  // Code for a categorical value; Error if not in the list.
  std::size_t code_of(std::size_t attr, const std::string& v) const {
    const auto& c = std::get<Categorical>(attrs_[attr].domain);
    for (std::size_t i = 0; i < c.values.size(); ++i)
      if (c.values[i] == v) return i;
    throw Error("value '" + v + "' not in the domain of attribute '" +
                attrs_[attr].name + "'");
  }

 private:
  std::vector<Attribute> attrs_;
};

// Row-major flattening: the first attribute varies slowest.  This matches the
// kronecker convention (first factor on the slow axis) so per-attribute
// operators line up with attribute order.
inline std::size_t flat_index(const std::vector<std::size_t>& shape,
                              const std::vector<std::size_t>& coords) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (coords[i] >= shape[i]) throw DimensionError("cell coordinate overflow");
    idx = idx * shape[i] + coords[i];
  }
  return idx;
}

inline std::vector<std::size_t> unflat_index(
    const std::vector<std::size_t>& shape, std::size_t idx) {
  std::vector<std::size_t> c(shape.size());
  for (std::size_t i = shape.size(); i-- > 0;) {
    c[i] = idx % shape[i];
    idx /= shape[i];
  }
  return c;
}

}  // namespace privq

#endif  // PRIVQ_SCHEMA_HPP_
