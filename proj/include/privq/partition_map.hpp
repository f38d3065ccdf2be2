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

#ifndef PRIVQ_PARTITION_MAP_HPP_
#define PRIVQ_PARTITION_MAP_HPP_

#include <cstdint>
#include <vector>

#include "privq/errors.hpp"
#include "privq/linop.hpp"

namespace privq {

// Assignment of each of n cells to one of p groups.  Groups need not be
// contiguous.  Every group id below p must be used; validate() enforces it.
struct PartitionMap {
  std::size_t p = 0;
  std::vector<std::uint32_t> group_of;

  std::size_t n() const { return group_of.size(); }

  void validate() const {
    if (p == 0) throw PartitionError("partition needs at least one group");
    std::vector<bool> seen(p, false);
    for (auto g : group_of) {
      if (g >= p) throw PartitionError("group id out of range");
      seen[g] = true;
    }
    for (std::size_t g = 0; g < p; ++g)
      if (!seen[g])
        throw PartitionError("group " + std::to_string(g) + " is empty");
  }

  std::vector<std::size_t> group_sizes() const {
    std::vector<std::size_t> s(p, 0);
    for (auto g : group_of) s[g]++;
    return s;
  }

  // Member indices per group, ascending.
  std::vector<std::vector<std::size_t>> groups() const {
    std::vector<std::vector<std::size_t>> gs(p);
    for (std::size_t i = 0; i < group_of.size(); ++i)
      gs[group_of[i]].push_back(i);
    return gs;
  }
};

// The p x n aggregation matrix: one 1 per column, at the owning group's row.
inline LinOp reduce_op(const PartitionMap& pm) {
  pm.validate();
  std::vector<Triplet> t;
  t.reserve(pm.n());
  for (std::size_t j = 0; j < pm.n(); ++j)
    t.push_back({pm.group_of[j], j, 1.0});
  return sparse(pm.p, pm.n(), std::move(t));
}

// Pseudo-inverse of the aggregation matrix: transpose with every entry
// divided by its group size, so expansion spreads each group total uniformly.
inline LinOp expand_op(const PartitionMap& pm) {
  pm.validate();
  auto sizes = pm.group_sizes();
  std::vector<Triplet> t;
  t.reserve(pm.n());
  for (std::size_t j = 0; j < pm.n(); ++j)
    t.push_back({j, pm.group_of[j],
                 1.0 / static_cast<double>(sizes[pm.group_of[j]])});
  return sparse(pm.n(), pm.p, std::move(t));
}

// Row selector for one group: members in ascending index order.
inline LinOp select_group_op(const PartitionMap& pm, std::size_t g) {
  if (g >= pm.p) throw PartitionError("group id out of range");
  std::vector<Triplet> t;
  std::size_t r = 0;
  for (std::size_t j = 0; j < pm.n(); ++j)
    if (pm.group_of[j] == g) t.push_back({r++, j, 1.0});
  if (r == 0) throw PartitionError("group " + std::to_string(g) + " is empty");
  return sparse(r, pm.n(), std::move(t));
}

inline std::vector<double> reduce_values(const PartitionMap& pm,
                                         std::span<const double> x) {
  if (x.size() != pm.n()) throw DimensionError("partition length mismatch");
  std::vector<double> out(pm.p, 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) out[pm.group_of[j]] += x[j];
  return out;
}

inline std::vector<std::vector<double>> split_values(
    const PartitionMap& pm, std::span<const double> x) {
  if (x.size() != pm.n()) throw DimensionError("partition length mismatch");
  std::vector<std::vector<double>> out(pm.p);
  for (std::size_t j = 0; j < x.size(); ++j)
    out[pm.group_of[j]].push_back(x[j]);
  return out;
}

}  // namespace privq

#endif  // PRIVQ_PARTITION_MAP_HPP_
