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

#ifndef PRIVQ_PARTITION_SELECT_HPP_
#define PRIVQ_PARTITION_SELECT_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "privq/budget.hpp"
#include "privq/errors.hpp"
#include "privq/kernel.hpp"
#include "privq/linop.hpp"
#include "privq/partition_map.hpp"
#include "privq/rng.hpp"

namespace privq {

// ---------------------------------------------------------------------------
// Workload-driven column grouping.  Cells the workload cannot tell apart
// (identical columns) are merged; answering on the reduced domain then loses
// nothing.  Column identity is detected from each column's exact response to
// a couple of random probe vectors, which touches only the operator, never
// the data.  Distinct columns collide only if both probes land on the same
// bit patterns; identical columns always share a key, so a collision can at
// worst merge too much, never split a true group.

inline PartitionMap workload_based_partition(const LinOp& w,
                                             std::uint64_t seed = 0x5eed) {
  const std::size_t n = w.cols(), m = w.rows();
  if (n == 0) throw DimensionError("empty workload");
  using Key = std::array<double, 2>;
  std::vector<Key> key(n);
  Rng rng = make_rng(seed, 0xC01);
  std::vector<double> probe(m), h(n);
  for (std::size_t r = 0; r < std::tuple_size<Key>::value; ++r) {
    for (auto& v : probe) v = uniform01(rng) * 2.0 - 1.0;
    w.apply_t_into(probe, h);
    for (std::size_t j = 0; j < n; ++j) key[j][r] = h[j];
  }
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t a, b;
      std::memcpy(&a, &k[0], sizeof a);
      std::memcpy(&b, &k[1], sizeof b);
      std::uint64_t x = (a ^ (b * 0x9e3779b97f4a7c15ULL)) + (a >> 7);
      x ^= x >> 29;
      x *= 0xbf58476d1ce4e5b9ULL;
      x ^= x >> 32;
      return static_cast<std::size_t>(x);
    }
  };
  PartitionMap pm;
  pm.group_of.resize(n);
  std::unordered_map<Key, std::uint32_t, KeyHash> seen;
  seen.reserve(2 * n);
  std::uint32_t next = 0;
  for (std::size_t j = 0; j < n; ++j) {
    auto it = seen.find(key[j]);
    if (it == seen.end()) it = seen.emplace(key[j], next++).first;
    pm.group_of[j] = it->second;
  }
  pm.p = next;
  return pm;
}

// ---------------------------------------------------------------------------
// Data-adaptive interval partition.  Candidate buckets are scored by how
// much flattening them would distort the histogram (squared deviation from
// the bucket mean) plus the noise a later per-bucket measurement at eps2
// would spread over the bucket; dynamic programming picks the cheapest
// partition into intervals.
//
// The deviation scores read the data, so they are computed from one noisy
// copy of the histogram (per-cell Laplace at eps1) with the noise's known
// variance contribution subtracted out.  Scoring every candidate off the
// same draw keeps the costs consistent: a partition with more buckets gets
// no fresh randomness to exploit, so the DP cannot chase noise minima the
// way it could with independently perturbed costs.
//
// Every interval is a candidate on small domains; past 1024 cells only
// power-of-two lengths (at any offset) are scored, keeping the DP loglinear.

class DawaPartition : public PrivateQuery {
 public:
  DawaPartition(Budget eps1, Budget eps2) : eps1_(eps1), eps2_(eps2) {
    if (eps1_ <= Budget::zero() || eps2_ <= Budget::zero())
      throw ConfigError("partition selection needs positive budgets");
  }

  std::string name() const override { return "dawa_partition"; }
  Budget epsilon() const override { return eps1_; }

  QueryAnswer run(const QueryCtx& ctx) const override {
    if (!ctx.vec) throw LineageError("dawa needs a vector source");
    const std::vector<double>& x = ctx.vec->values;
    const std::size_t n = x.size();
    if (n == 0) throw DimensionError("empty vector");

    const double b = 1.0 / eps1_.value();
    std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double noisy = x[i] + laplace(*ctx.rng, b);
      s1[i + 1] = s1[i] + noisy;
      s2[i + 1] = s2[i] + noisy * noisy;
    }

    double e2 = eps2_.value();

    std::vector<std::size_t> widths;
    if (n <= 1024) {
      for (std::size_t w = 1; w <= n; ++w) widths.push_back(w);
    } else {
      for (std::size_t w = 1; w <= n; w *= 2) {
        widths.push_back(w);
        if (w > n / 2) break;
      }
    }

    const double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dp(n + 1, kInf);
    std::vector<std::size_t> from(n + 1, 0);
    dp[0] = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      for (std::size_t w : widths) {
        if (w > j) break;
        std::size_t i = j - w;
        if (dp[i] == kInf) continue;
        double mu = (s1[j] - s1[i]) / static_cast<double>(w);
        double dev = (s2[j] - s2[i]) - static_cast<double>(w) * mu * mu;
        // Subtract the deviation the cell noise itself contributes in
        // expectation, so flat stretches still score near zero.
        dev -= static_cast<double>(w - 1) * 2.0 * b * b;
        if (dev < 0.0) dev = 0.0;
        double penalty = 2.0 / (static_cast<double>(w) * e2 * e2);
        double c = dev + penalty;
        if (dp[i] + c < dp[j]) {
          dp[j] = dp[i] + c;
          from[j] = i;
        }
      }
      // A unit step always exists on the small path; on the dyadic path it
      // exists too since width 1 is a candidate.
    }

    PartitionMap pm;
    pm.group_of.resize(n);
    std::vector<std::size_t> cuts;
    for (std::size_t j = n; j > 0; j = from[j]) cuts.push_back(j);
    std::reverse(cuts.begin(), cuts.end());
    std::uint32_t g = 0;
    std::size_t at = 0;
    for (std::size_t cut : cuts) {
      for (; at < cut; ++at) pm.group_of[at] = g;
      ++g;
    }
    pm.p = g;
    return pm;
  }

 private:
  Budget eps1_;
  Budget eps2_;
};

// ---------------------------------------------------------------------------
// Cluster partition from noisy counts.  Cells get independent unit-scale
// noise, small ones are snapped to zero, and sorting then groups cells whose
// noisy counts sit within one noise spread of each other.  Cells the
// histogram treats alike end up measured as one group.

class AhpPartition : public PrivateQuery {
 public:
  explicit AhpPartition(Budget eps1, double eta = 1.0)
      : eps1_(eps1), eta_(eta) {
    if (eps1_ <= Budget::zero())
      throw ConfigError("partition selection needs a positive budget");
    if (eta_ < 0.0) throw ConfigError("negative threshold multiplier");
  }

  std::string name() const override { return "ahp_partition"; }
  Budget epsilon() const override { return eps1_; }

  QueryAnswer run(const QueryCtx& ctx) const override {
    if (!ctx.vec) throw LineageError("ahp needs a vector source");
    const std::vector<double>& x = ctx.vec->values;
    const std::size_t n = x.size();
    if (n == 0) throw DimensionError("empty vector");
    double e1 = eps1_.value();
    double logn = std::log(static_cast<double>(std::max<std::size_t>(n, 2)));

    std::vector<double> noisy(n);
    for (std::size_t i = 0; i < n; ++i)
      noisy[i] = x[i] + laplace(*ctx.rng, 1.0 / e1);
    double thr = eta_ * std::sqrt(logn) / e1;
    for (double& v : noisy)
      if (v < thr) v = 0.0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return noisy[a] < noisy[b];
    });

    double tau = 6.0 * (1.0 + logn) / e1;
    std::vector<std::uint32_t> cluster(n, 0);
    std::uint32_t c = 0;
    double base = noisy[order[0]];
    for (std::size_t r = 0; r < n; ++r) {
      if (noisy[order[r]] - base > tau) {
        ++c;
        base = noisy[order[r]];
      }
      cluster[order[r]] = c;
    }

    // Relabel clusters by first appearance in cell order so the output is
    // stable under permutations of equal values.
    PartitionMap pm;
    pm.group_of.resize(n);
    std::vector<std::uint32_t> remap(c + 1, UINT32_MAX);
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (remap[cluster[i]] == UINT32_MAX) remap[cluster[i]] = next++;
      pm.group_of[i] = remap[cluster[i]];
    }
    pm.p = next;
    return pm;
  }

 private:
  Budget eps1_;
  double eta_;
};

}  // namespace privq

#endif  // PRIVQ_PARTITION_SELECT_HPP_
