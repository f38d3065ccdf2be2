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

#ifndef PRIVQ_SELECTION_HPP_
#define PRIVQ_SELECTION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "privq/budget.hpp"
#include "privq/errors.hpp"
#include "privq/kernel.hpp"
#include "privq/linop.hpp"
#include "privq/partition_map.hpp"
#include "privq/rng.hpp"

namespace privq {

// ---------------------------------------------------------------------------
// Range-row construction.  A contiguous sum over [lo, hi] is the difference
// of two running totals, so a batch of ranges becomes a short sparse matrix
// in front of one prefix operator; applying it costs one cumulative pass no
// matter how many ranges there are.

inline LinOp ranges_op(std::size_t n,
                       const std::vector<std::pair<std::size_t, std::size_t>>&
                           inclusive_ranges) {
  std::vector<Triplet> t;
  t.reserve(2 * inclusive_ranges.size());
  for (std::size_t r = 0; r < inclusive_ranges.size(); ++r) {
    auto [lo, hi] = inclusive_ranges[r];
    if (lo > hi || hi >= n) throw DimensionError("range outside the domain");
    t.push_back({r, hi, 1.0});
    if (lo > 0) t.push_back({r, lo - 1, -1.0});
  }
  return product(sparse(inclusive_ranges.size(), n, std::move(t)), prefix(n),
                 /*binary_hint=*/true);
}

namespace detail {

// Breadth-first ranges of a b-ary tree over [0, n): every node's interval,
// root first, splitting as evenly as possible until singletons.
inline std::vector<std::pair<std::size_t, std::size_t>> tree_ranges(
    std::size_t n, std::size_t b) {
  if (n == 0) throw DimensionError("tree over an empty domain");
  if (b < 2) throw ConfigError("branching factor must be at least 2");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::deque<std::pair<std::size_t, std::size_t>> queue{{0, n}};  // [lo, lo+len)
  while (!queue.empty()) {
    auto [lo, len] = queue.front();
    queue.pop_front();
    out.emplace_back(lo, lo + len - 1);
    if (len == 1) continue;
    std::size_t parts = std::min(b, len);
    std::size_t base = len / parts, rem = len % parts;
    std::size_t at = lo;
    for (std::size_t c = 0; c < parts; ++c) {
      std::size_t w = base + (c < rem ? 1 : 0);
      queue.emplace_back(at, w);
      at += w;
    }
  }
  return out;
}

}  // namespace detail

// Binary hierarchy: every node of the halving tree over [0, n), so any range
// is answerable from a logarithmic number of rows.
inline LinOp h2(std::size_t n) {
  return ranges_op(n, detail::tree_ranges(n, 2));
}

// Branching factor that minimizes (b - 1) * height^3, the variance proxy for
// a b-ary tree: each level adds b - 1 useful children per node and range
// answers touch about height levels.  Ties go to the smaller b.
inline std::size_t hb_branching(std::size_t n) {
  if (n <= 2) return 2;
  std::size_t best_b = 2;
  double best_v = 0.0;
  for (std::size_t b = 2; b <= n; ++b) {
    std::size_t h = 0;
    std::size_t reach = 1;
    while (reach < n) {
      reach = reach > n / b ? n : reach * b;  // overflow-safe reach *= b
      ++h;
    }
    double v = static_cast<double>(b - 1) * std::pow(static_cast<double>(h), 3);
    if (b == 2 || v < best_v) {
      best_v = v;
      best_b = b;
    }
  }
  return best_b;
}

inline LinOp hb(std::size_t n) {
  return ranges_op(n, detail::tree_ranges(n, hb_branching(n)));
}

// ---------------------------------------------------------------------------
// Two-dimensional hierarchy: quadrant tree over an n1 x n2 grid.  Each node
// is a rectangle; a rectangle sum is four corner reads of the 2-d running
// total, so the whole stack is a sparse matrix in front of a prefix product.

inline LinOp quadtree(std::size_t n1, std::size_t n2) {
  if (n1 == 0 || n2 == 0) throw DimensionError("empty grid");
  struct Rect {
    std::size_t r0, r1, c0, c1;  // half-open
  };
  std::vector<Triplet> t;
  std::size_t row = 0;
  std::deque<Rect> queue{{0, n1, 0, n2}};
  auto corner = [&](std::size_t i, std::size_t j) { return i * n2 + j; };
  while (!queue.empty()) {
    Rect q = queue.front();
    queue.pop_front();
    t.push_back({row, corner(q.r1 - 1, q.c1 - 1), 1.0});
    if (q.r0 > 0) t.push_back({row, corner(q.r0 - 1, q.c1 - 1), -1.0});
    if (q.c0 > 0) t.push_back({row, corner(q.r1 - 1, q.c0 - 1), -1.0});
    if (q.r0 > 0 && q.c0 > 0)
      t.push_back({row, corner(q.r0 - 1, q.c0 - 1), 1.0});
    ++row;
    std::size_t hr = q.r1 - q.r0, hc = q.c1 - q.c0;
    if (hr == 1 && hc == 1) continue;
    std::size_t rm = q.r0 + (hr + 1) / 2, cm = q.c0 + (hc + 1) / 2;
    std::vector<std::pair<std::size_t, std::size_t>> rs, cs;
    if (hr > 1)
      rs = {{q.r0, rm}, {rm, q.r1}};
    else
      rs = {{q.r0, q.r1}};
    if (hc > 1)
      cs = {{q.c0, cm}, {cm, q.c1}};
    else
      cs = {{q.c0, q.c1}};
    for (auto [a, b] : rs)
      for (auto [c, d] : cs) queue.push_back({a, b, c, d});
  }
  return product(sparse(row, n1 * n2, std::move(t)),
                 kronecker(prefix(n1), prefix(n2)), /*binary_hint=*/true);
}

// ---------------------------------------------------------------------------
// Per-attribute stacks over multiway domains.

// sub on one axis, identity on every other: the sub-workload asked within
// each combination of the remaining attributes.
inline LinOp stripe_select(const std::vector<std::size_t>& shape,
                           std::size_t axis, const LinOp& sub) {
  if (axis >= shape.size()) throw DimensionError("axis out of range");
  if (sub.cols() != shape[axis])
    throw DimensionError("sub-workload does not fit the axis");
  std::vector<LinOp> factors;
  factors.reserve(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a)
    factors.push_back(a == axis ? sub : identity(shape[a]));
  return kronecker(factors);
}

// Marginal over the kept attributes: identity on kept axes, total on the
// rest.
inline LinOp marginal_op(const std::vector<std::size_t>& shape,
                         const std::vector<bool>& keep) {
  if (keep.size() != shape.size())
    throw DimensionError("keep mask does not match the shape");
  std::vector<LinOp> factors;
  factors.reserve(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a)
    factors.push_back(keep[a] ? identity(shape[a]) : total(shape[a]));
  return kronecker(factors);
}

inline LinOp marginals_workload(const std::vector<std::size_t>& shape,
                                const std::vector<std::vector<bool>>& keeps) {
  if (keeps.empty()) throw ConfigError("no marginals requested");
  std::vector<LinOp> parts;
  parts.reserve(keeps.size());
  for (const auto& k : keeps) parts.push_back(marginal_op(shape, k));
  return parts.size() == 1 ? parts[0] : union_of(parts);
}

// k random inclusive ranges; the seed is part of the workload's identity so
// the same name always denotes the same matrix.
inline LinOp random_ranges(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (n == 0 || k == 0) throw DimensionError("empty range workload");
  Rng rng = make_rng(seed, 0xA11);
  std::vector<std::pair<std::size_t, std::size_t>> rs;
  rs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t lo = rng() % n;
    std::size_t hi = lo + rng() % (n - lo);
    rs.emplace_back(lo, hi);
  }
  return ranges_op(n, rs);
}

// ---------------------------------------------------------------------------
// Uniform grid partition: square-root scaling of the cell count in the
// expected mass, so per-cell noise and within-cell aggregation error
// balance.  Data-independent given the (public or noisily measured) mass
// estimate.

inline std::size_t ugrid_side(double mass_est, double eps, std::size_t hi) {
  double g = std::ceil(std::sqrt(std::max(mass_est, 0.0) * eps / 10.0));
  if (!(g >= 1.0)) g = 1.0;
  double cap = static_cast<double>(std::max<std::size_t>(hi, 1));
  return static_cast<std::size_t>(std::min(g, cap));
}

// Splits each axis into at most `side` near-equal blocks; the partition
// groups cells of the flattened domain by their block combination.
inline PartitionMap grid_partition(const std::vector<std::size_t>& shape,
                                   std::size_t side) {
  if (shape.empty()) throw DimensionError("empty shape");
  std::vector<std::size_t> blocks(shape.size());
  std::vector<std::vector<std::uint32_t>> block_of(shape.size());
  std::size_t p = 1;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    std::size_t g = std::min(std::max<std::size_t>(side, 1), shape[a]);
    blocks[a] = g;
    p *= g;
    block_of[a].resize(shape[a]);
    std::size_t base = shape[a] / g, rem = shape[a] % g, at = 0;
    for (std::size_t blk = 0; blk < g; ++blk) {
      std::size_t w = base + (blk < rem ? 1 : 0);
      for (std::size_t i = 0; i < w; ++i) block_of[a][at++] = blk;
    }
  }
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  PartitionMap pm;
  pm.p = p;
  pm.group_of.resize(n);
  std::vector<std::size_t> coord(shape.size(), 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t g = 0;
    for (std::size_t a = 0; a < shape.size(); ++a)
      g = g * blocks[a] + block_of[a][coord[a]];
    pm.group_of[idx] = static_cast<std::uint32_t>(g);
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++coord[a] < shape[a]) break;
      coord[a] = 0;
    }
  }
  return pm;
}

inline PartitionMap ugrid_partition(const std::vector<std::size_t>& shape,
                                    double mass_est, double eps) {
  std::size_t hi = *std::max_element(shape.begin(), shape.end());
  return grid_partition(shape, ugrid_side(mass_est, eps, hi));
}

// One group per combination of the non-axis coordinates: each group is the
// run of cells that vary only along `axis`.
inline PartitionMap stripe_partition(const std::vector<std::size_t>& shape,
                                     std::size_t axis) {
  if (axis >= shape.size()) throw DimensionError("axis out of range");
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  if (n == 0) throw DimensionError("empty shape");
  PartitionMap pm;
  pm.p = n / shape[axis];
  pm.group_of.resize(n);
  std::vector<std::size_t> coord(shape.size(), 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t g = 0;
    for (std::size_t a = 0; a < shape.size(); ++a)
      if (a != axis) g = g * shape[a] + coord[a];
    pm.group_of[idx] = static_cast<std::uint32_t>(g);
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++coord[a] < shape[a]) break;
      coord[a] = 0;
    }
  }
  return pm;
}

// ---------------------------------------------------------------------------
// Workload-adapted hierarchy.  Each workload row is decomposed greedily into
// aligned power-of-two blocks; the per-level block counts then drive a
// weighted hierarchy whose level weights minimize
//
//   E(w) = (sum_l w_l)^2 * sum_l K_l / w_l^2,
//
// the product of the squared noise scale (each cell is hit once per level)
// and the total per-block reconstruction variance.  The minimizer is found
// coordinate-wise by golden-section on top of the stationary-point seed
// w_l ~ K_l^(1/3).

struct GreedyHResult {
  LinOp op;
  std::vector<std::size_t> widths;   // block width per kept level
  std::vector<double> weights;       // optimized, max-normalized
  std::vector<std::size_t> counts;   // greedy block count per kept level
};

namespace detail {

inline double greedy_h_objective(const std::vector<double>& w,
                                 const std::vector<std::size_t>& k) {
  double sw = 0.0, sk = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    sw += w[i];
    sk += static_cast<double>(k[i]) / (w[i] * w[i]);
  }
  return sw * sw * sk;
}

}  // namespace detail

inline GreedyHResult greedy_h(const LinOp& w) {
  const std::size_t n = w.cols(), m = w.rows();
  if (n == 0 || m == 0) throw DimensionError("empty workload");

  std::size_t levels = 1;
  while ((std::size_t{1} << (levels - 1)) < n) ++levels;

  // Block counts from the greedy aligned decomposition of each row's
  // support runs.
  std::vector<std::size_t> k(levels, 0);
  std::vector<double> e(m, 0.0), row(n);
  for (std::size_t i = 0; i < m; ++i) {
    e[i] = 1.0;
    w.apply_t_into(e, row);
    e[i] = 0.0;
    auto live = [&](std::size_t idx) { return std::fabs(row[idx]) > 1e-12; };
    std::size_t a = 0;
    while (a < n) {
      if (!live(a)) {
        ++a;
        continue;
      }
      std::size_t b = a;
      while (b < n && live(b)) ++b;
      while (a < b) {
        std::size_t j = 0;
        while (j + 1 < levels && a % (std::size_t{1} << (j + 1)) == 0 &&
               a + (std::size_t{1} << (j + 1)) <= b)
          ++j;
        k[j]++;
        a += std::size_t{1} << j;
      }
    }
  }

  GreedyHResult res;
  for (std::size_t j = 0; j < levels; ++j) {
    if (k[j] == 0) continue;
    res.widths.push_back(std::size_t{1} << j);
    res.counts.push_back(k[j]);
  }
  if (res.widths.empty()) {
    // Zero workload; fall back to single cells so the result still spans.
    res.widths.push_back(1);
    res.counts.push_back(n);
  }

  // Seed at the stationary point, then refine coordinate-wise.
  std::vector<double> wt(res.widths.size());
  for (std::size_t i = 0; i < wt.size(); ++i)
    wt[i] = std::pow(static_cast<double>(res.counts[i]), 1.0 / 3.0);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int sweep = 0; sweep < 6; ++sweep) {
    for (std::size_t i = 0; i < wt.size(); ++i) {
      double lo = std::log(wt[i] / 64.0), hi = std::log(wt[i] * 64.0);
      double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
      auto eval = [&](double t) {
        double keep = wt[i];
        wt[i] = std::exp(t);
        double v = detail::greedy_h_objective(wt, res.counts);
        wt[i] = keep;
        return v;
      };
      double f1 = eval(x1), f2 = eval(x2);
      for (int it = 0; it < 48; ++it) {
        if (f1 < f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - phi * (hi - lo);
          f1 = eval(x1);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + phi * (hi - lo);
          f2 = eval(x2);
        }
      }
      wt[i] = std::exp(0.5 * (lo + hi));
    }
  }
  double peak = *std::max_element(wt.begin(), wt.end());
  for (double& v : wt) v /= peak;
  res.weights = wt;

  std::vector<LinOp> parts;
  for (std::size_t i = 0; i < res.widths.size(); ++i) {
    std::size_t width = res.widths[i];
    std::vector<std::pair<std::size_t, std::size_t>> rs;
    for (std::size_t at = 0; at < n; at += width)
      rs.emplace_back(at, std::min(at + width, n) - 1);
    LinOp lvl = ranges_op(n, rs);
    parts.push_back(res.weights[i] == 1.0 ? lvl
                                          : weighted(res.weights[i], lvl));
  }
  res.op = parts.size() == 1 ? parts[0] : union_of(parts);
  return res;
}

// ---------------------------------------------------------------------------
// Private selection of the workload row whose answer the current estimate
// gets most wrong.  Scores are |W(x - x_est)|; the draw is exponential in
// the score over twice its per-record sensitivity, computed with the usual
// max-subtraction so the exponentials stay finite.

class WorstApprox : public PrivateQuery {
 public:
  WorstApprox(LinOp w, std::vector<double> x_est, Budget eps,
              double score_sensitivity = 0.0)
      : w_(std::move(w)), x_est_(std::move(x_est)), eps_(eps),
        delta_(score_sensitivity) {
    if (w_.cols() != x_est_.size())
      throw DimensionError("estimate does not match the workload");
    if (delta_ == 0.0) {
      if (!w_.binary01())
        throw ConfigError(
            "score sensitivity must be given for non-indicator workloads");
      delta_ = 1.0;
    }
    if (delta_ < 0.0) throw ConfigError("negative score sensitivity");
  }

  std::string name() const override { return "worst_approx"; }
  Budget epsilon() const override { return eps_; }

  QueryAnswer run(const QueryCtx& ctx) const override {
    if (!ctx.vec) throw LineageError("worst_approx needs a vector source");
    if (ctx.vec->size() != x_est_.size())
      throw DimensionError("estimate does not match the source");
    std::vector<double> diff(ctx.vec->values);
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= x_est_[i];
    std::vector<double> s = w_.apply(diff);
    double scale = eps_.value() / (2.0 * delta_);
    double peak = 0.0;
    for (double& v : s) {
      v = std::fabs(v) * scale;
      peak = std::max(peak, v);
    }
    double z = 0.0;
    for (double& v : s) {
      v = std::exp(v - peak);
      z += v;
    }
    double u = uniform01(*ctx.rng) * z;
    std::size_t pick = s.size() - 1;
    double acc = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      acc += s[j];
      if (u <= acc) {
        pick = j;
        break;
      }
    }
    return pick;
  }

 private:
  LinOp w_;
  std::vector<double> x_est_;
  Budget eps_;
  double delta_;
};

}  // namespace privq

#endif  // PRIVQ_SELECTION_HPP_
