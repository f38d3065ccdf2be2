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
//
// Executable plan catalog.  A plan is a recipe over the kernel: pick a
// measurement operator (possibly privately, possibly per data-driven
// partition), spend the budget, reconstruct the histogram, and answer the
// workload.  Every plan charges exactly its declared epsilon and reports
// the estimate on the original vectorized domain regardless of any
// reductions or transforms it routed the measurements through.

#ifndef PRIVQ_PLANS_HPP_
#define PRIVQ_PLANS_HPP_

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "privq/budget.hpp"
#include "privq/errors.hpp"
#include "privq/inference.hpp"
#include "privq/kernel.hpp"
#include "privq/linop.hpp"
#include "privq/measurement.hpp"
#include "privq/partition_map.hpp"
#include "privq/partition_select.hpp"
#include "privq/selection.hpp"

namespace privq {

struct PlanParams {
  std::size_t rounds = 10;       // adaptive-round count (mwem family)
  double rho = 0.25;             // selection share for ahp/dawa splits
  std::size_t axis = 0;          // measured axis for striped plans
  double n_total = -1.0;         // public record count; negative = unset
  double eta = 1.0;              // ahp threshold multiplier
  bool workload_reduce = false;  // wrap with workload-driven domain reduction
};

struct PlanResult {
  std::string plan;
  DataVector x_hat;                       // on the original domain
  std::vector<double> workload_answers;   // W applied to x_hat
  Budget budget_spent;                    // root-ledger delta for this plan
  LinOp measured;                         // stacked effective measurements
  std::vector<double> measured_y;         // their noisy answers
  std::vector<TranscriptRow> transcript;  // kernel rows issued by this plan
  std::vector<std::pair<std::string, double>> timing_ms;
  bool inference_converged = true;
};

inline const std::vector<std::string>& plan_names() {
  static const std::vector<std::string> kNames = {
      "identity",   "privelet", "h2",     "hb",
      "greedyh",    "uniform",  "mwem",   "mwem_b",
      "mwem_c",     "mwem_d",   "ahp",    "dawa",
      "quadtree",   "ugrid",    "agrid",  "hb_striped",
      "dawa_striped", "hb_striped_kron"};
  return kNames;
}

namespace detail {

class Stopwatch {
 public:
  double lap_ms() {
    auto now = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(now - t_).count();
    t_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point t_ =
      std::chrono::steady_clock::now();
};

struct Reduction {
  bool active = false;
  PartitionMap pm;
  LinOp reduce;  // groups x cells
};

// Least squares over the stacked measurements, noting non-convergence in
// the result instead of failing; the estimate is still the best iterate.
inline std::vector<double> solve_ls(const MeasurementSet& ms,
                                    PlanResult* res) {
  LsmrResult r = lsmr(ms.stacked(), ms.stacked_y());
  if (r.istop == 7) res->inference_converged = false;
  return std::move(r.x);
}

// Row j of w as a standalone 1 x cols operator.
inline LinOp row_of(const LinOp& w, std::size_t j) {
  std::vector<double> basis(w.rows(), 0.0);
  basis[j] = 1.0;
  std::vector<double> row = w.apply_t(basis);
  std::vector<Triplet> t;
  for (std::size_t c = 0; c < row.size(); ++c)
    if (row[c] != 0.0) t.push_back({0, c, row[c]});
  return sparse(1, row.size(), std::move(t));
}

// Hierarchy augmentation for the adaptive rounds: alongside the selected
// row, measure the aligned blocks of width 2^(round-1) that do not touch
// its support.  Blocks are mutually disjoint, so for an indicator row the
// stacked sensitivity stays 1 and the extra rows ride along at no noise
// penalty per answer.
inline LinOp augment_with_level(const LinOp& row_op, std::size_t round,
                                std::size_t n) {
  std::vector<double> one(1, 1.0);
  std::vector<double> support = row_op.apply_t(one);
  std::size_t len = std::size_t{1} << std::min<std::size_t>(round - 1, 62);
  if (len > n) len = std::bit_floor(n);

  std::vector<Triplet> t;
  std::size_t r = 0;
  for (std::size_t c = 0; c < n; ++c)
    if (support[c] != 0.0) t.push_back({r, c, support[c]});
  ++r;
  for (std::size_t at = 0; at + len <= n; at += len) {
    bool clean = true;
    for (std::size_t c = at; c < at + len && clean; ++c)
      if (support[c] != 0.0) clean = false;
    if (!clean) continue;
    for (std::size_t c = at; c < at + len; ++c) t.push_back({r, c, 1.0});
    ++r;
  }
  return sparse(r, n, std::move(t));
}

// Per-axis block widths exactly as grid_partition lays them out, so callers
// can recover each block's rectangle shape.
inline std::vector<std::vector<std::size_t>> grid_block_widths(
    const std::vector<std::size_t>& shape, std::size_t side) {
  std::vector<std::vector<std::size_t>> widths(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a) {
    std::size_t g = std::min(std::max<std::size_t>(side, 1), shape[a]);
    std::size_t base = shape[a] / g, rem = shape[a] % g;
    for (std::size_t b = 0; b < g; ++b)
      widths[a].push_back(base + (b < rem ? 1 : 0));
  }
  return widths;
}

inline double require_total(const PlanParams& p, const char* plan) {
  if (p.n_total < 0.0)
    throw ConfigError(std::string(plan) +
                      " needs the public record count (n_total)");
  return p.n_total;
}

inline Budget rho_split(Budget eps, double rho) {
  if (!(rho > 0.0) || !(rho < 1.0))
    throw ConfigError("selection share must lie strictly inside (0, 1)");
  return eps * Budget{exact_from_double(rho)};
}

inline std::vector<std::size_t> shaped_domain(const Kernel& k, SourceRef v,
                                              std::size_t dims,
                                              const char* plan) {
  std::vector<std::size_t> shape = k.domain_shape(v);
  if (shape.size() != dims)
    throw ConfigError(std::string(plan) + " needs a " +
                      std::to_string(dims) + "-attribute domain");
  return shape;
}

}  // namespace detail

inline PlanResult run_plan(Kernel& k, const std::string& name, const LinOp& w,
                           Budget eps, const PlanParams& p = {}) {
  const auto& names = plan_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw ConfigError("unknown plan '" + name + "'");
  if (eps <= Budget::zero()) throw ConfigError("plan budget must be positive");

  PlanResult res;
  res.plan = name;
  detail::Stopwatch sw;

  Budget root_before = k.consumed_root();
  std::size_t rows_before = k.transcript().size();

  SourceRef v =
      k.holds_vector(k.root()) ? k.root() : k.vectorize(k.root());
  if (w.cols() != k.domain_size(v))
    throw DimensionError("workload does not match the data domain");

  LinOp w_sel = w;  // drives selection; lives on the measured domain
  detail::Reduction red;
  if (p.workload_reduce) {
    PartitionMap pm = workload_based_partition(w);
    if (pm.p < w.cols()) {
      red.active = true;
      red.reduce = reduce_op(pm);
      w_sel = product(w, expand_op(pm));
      v = k.vreduce(v, pm);
      red.pm = std::move(pm);
    }
  }
  const std::size_t n_src = k.domain_size(v);
  const std::size_t n_base = w.cols();
  res.timing_ms.emplace_back("setup", sw.lap_ms());

  MeasurementSet ms;
  std::vector<double> x;

  auto single_shot = [&](LinOp selector, SourceRef src) {
    res.timing_ms.emplace_back("select", sw.lap_ms());
    ms.add(take_laplace(k, src, std::move(selector), eps));
    res.timing_ms.emplace_back("measure", sw.lap_ms());
    x = detail::solve_ls(ms, &res);
    res.timing_ms.emplace_back("infer", sw.lap_ms());
  };

  if (name == "identity") {
    single_shot(identity(n_src), v);
  } else if (name == "h2") {
    single_shot(h2(n_src), v);
  } else if (name == "hb") {
    single_shot(hb(n_src), v);
  } else if (name == "greedyh") {
    single_shot(greedy_h(w_sel).op, v);
  } else if (name == "uniform") {
    single_shot(total(n_src), v);
  } else if (name == "privelet") {
    // The wavelet needs a power-of-two domain; shorter domains ride in
    // zero-padded, which costs no stability (the lift has unit column
    // norms) and drops out of the estimate through the lineage chain.
    std::size_t n2 = std::bit_ceil(n_src);
    SourceRef src = v;
    if (n2 != n_src) {
      std::vector<Triplet> t;
      for (std::size_t i = 0; i < n_src; ++i) t.push_back({i, i, 1.0});
      src = k.vtransform(v, sparse(n2, n_src, std::move(t)));
    }
    single_shot(wavelet(n2), src);
  } else if (name == "quadtree") {
    auto shape = detail::shaped_domain(k, v, 2, "quadtree");
    single_shot(quadtree(shape[0], shape[1]), v);
  } else if (name == "ugrid") {
    double total_mass = detail::require_total(p, "ugrid");
    std::vector<std::size_t> shape = k.domain_shape(v);
    std::size_t hi = *std::max_element(shape.begin(), shape.end());
    PartitionMap pm =
        grid_partition(shape, ugrid_side(total_mass, eps.value(), hi));
    single_shot(reduce_op(pm), v);
  } else if (name == "mwem" || name == "mwem_b" || name == "mwem_c" ||
             name == "mwem_d") {
    const bool hier = name == "mwem_b" || name == "mwem_d";
    const bool use_nnls = name == "mwem_c" || name == "mwem_d";
    if (p.rounds < 1) throw ConfigError("mwem needs at least one round");
    double total_mass = detail::require_total(p, "mwem");
    Budget eps_round = eps.times(1, 2 * static_cast<std::int64_t>(p.rounds));
    const double kAnchorWeight = 1000.0;

    x.assign(n_base, total_mass / static_cast<double>(n_base));
    for (std::size_t round = 1; round <= p.rounds; ++round) {
      std::vector<double> x_src = red.active ? red.reduce.apply(x) : x;
      double delta = w_sel.binary01() ? 0.0 : w_sel.sensitivity_l1();
      auto pick = std::get<std::size_t>(
          k.measure(v, WorstApprox(w_sel, std::move(x_src), eps_round,
                                   delta)));
      LinOp sel = detail::row_of(w_sel, pick);
      if (hier) sel = detail::augment_with_level(sel, round, n_src);
      res.timing_ms.emplace_back("select", sw.lap_ms());

      ms.add(take_laplace(k, v, std::move(sel), eps_round));
      res.timing_ms.emplace_back("measure", sw.lap_ms());

      if (use_nnls) {
        // Nonnegative fit with a strong client-side anchor on the public
        // total; the anchor is a constant, not a measurement, so it costs
        // nothing.
        LinOp a = union_of(
            {ms.stacked(), weighted(kAnchorWeight, total(n_base))});
        std::vector<double> y = ms.stacked_y();
        y.push_back(kAnchorWeight * total_mass);
        NnlsResult nr = nnls(a, y);
        if (!nr.converged) res.inference_converged = false;
        x = std::move(nr.x);
      } else {
        x = mult_weights(ms.stacked(), ms.stacked_y(), total_mass);
      }
      res.timing_ms.emplace_back("infer", sw.lap_ms());
    }
  } else if (name == "ahp") {
    Budget e1 = detail::rho_split(eps, p.rho);
    Budget e2 = eps - e1;
    auto pm = std::get<PartitionMap>(
        k.measure(v, AhpPartition(e1, p.eta)));
    res.timing_ms.emplace_back("select", sw.lap_ms());
    SourceRef rv = k.vreduce(v, pm);
    ms.add(take_laplace(k, rv, identity(pm.p), e2));
    res.timing_ms.emplace_back("measure", sw.lap_ms());
    x = detail::solve_ls(ms, &res);
    res.timing_ms.emplace_back("infer", sw.lap_ms());
  } else if (name == "dawa") {
    Budget e1 = detail::rho_split(eps, p.rho);
    Budget e2 = eps - e1;
    auto pm = std::get<PartitionMap>(
        k.measure(v, DawaPartition(e1, e2)));
    SourceRef rv = k.vreduce(v, pm);
    LinOp sel = greedy_h(product(w_sel, expand_op(pm))).op;
    res.timing_ms.emplace_back("select", sw.lap_ms());
    ms.add(take_laplace(k, rv, std::move(sel), e2));
    res.timing_ms.emplace_back("measure", sw.lap_ms());
    x = detail::solve_ls(ms, &res);
    res.timing_ms.emplace_back("infer", sw.lap_ms());
  } else if (name == "agrid") {
    auto shape = detail::shaped_domain(k, v, 2, "agrid");
    double total_mass = detail::require_total(p, "agrid");
    Budget half = eps.times(1, 2);
    std::size_t hi = std::max(shape[0], shape[1]);
    std::size_t side = ugrid_side(total_mass, half.value(), hi);
    PartitionMap coarse = grid_partition(shape, side);
    res.timing_ms.emplace_back("select", sw.lap_ms());

    MeasurementItem phase1 = take_laplace(k, v, reduce_op(coarse), half);
    std::vector<double> cell_est = phase1.y;
    ms.add(std::move(phase1));

    auto widths = detail::grid_block_widths(shape, side);
    std::vector<SourceRef> kids = k.vsplit(v, coarse);
    std::size_t g = 0;
    for (std::size_t b0 = 0; b0 < widths[0].size(); ++b0) {
      for (std::size_t b1 = 0; b1 < widths[1].size(); ++b1, ++g) {
        double mass = std::max(cell_est[g], 0.0);
        auto g2 = static_cast<std::size_t>(
            std::ceil(std::sqrt(mass * half.value() / 5.0)));
        if (g2 < 1) g2 = 1;
        PartitionMap fine =
            grid_partition({widths[0][b0], widths[1][b1]}, g2);
        ms.add(take_laplace(k, kids[g], reduce_op(fine), half));
      }
    }
    res.timing_ms.emplace_back("measure", sw.lap_ms());
    x = detail::solve_ls(ms, &res);
    res.timing_ms.emplace_back("infer", sw.lap_ms());
  } else if (name == "hb_striped" || name == "dawa_striped") {
    std::vector<std::size_t> shape = k.domain_shape(v);
    if (shape.size() < 2)
      throw ConfigError("striped plans need a multiway domain");
    if (p.axis >= shape.size())
      throw DimensionError("axis out of range");
    PartitionMap stripes = stripe_partition(shape, p.axis);
    std::vector<SourceRef> kids = k.vsplit(v, stripes);
    res.timing_ms.emplace_back("select", sw.lap_ms());
    std::size_t len = shape[p.axis];
    for (SourceRef kid : kids) {
      if (name == "hb_striped") {
        ms.add(take_laplace(k, kid, hb(len), eps));
      } else {
        Budget e1 = detail::rho_split(eps, p.rho);
        Budget e2 = eps - e1;
        auto pm = std::get<PartitionMap>(
            k.measure(kid, DawaPartition(e1, e2)));
        SourceRef rv = k.vreduce(kid, pm);
        LinOp sel = greedy_h(product(prefix(len), expand_op(pm))).op;
        ms.add(take_laplace(k, rv, std::move(sel), e2));
      }
    }
    res.timing_ms.emplace_back("measure", sw.lap_ms());
    x = detail::solve_ls(ms, &res);
    res.timing_ms.emplace_back("infer", sw.lap_ms());
  } else if (name == "hb_striped_kron") {
    std::vector<std::size_t> shape = k.domain_shape(v);
    if (shape.size() < 2)
      throw ConfigError("striped plans need a multiway domain");
    if (p.axis >= shape.size())
      throw DimensionError("axis out of range");
    single_shot(stripe_select(shape, p.axis, hb(shape[p.axis])), v);
  }

  res.measured = ms.stacked();
  res.measured_y = ms.stacked_y();
  res.x_hat.domain_shape = k.domain_shape(k.chain_base(v));
  res.x_hat.values = std::move(x);
  res.workload_answers = w.apply(res.x_hat.values);
  res.budget_spent = k.consumed_root() - root_before;

  auto full = k.transcript();
  res.transcript.assign(full.begin() + static_cast<std::ptrdiff_t>(rows_before),
                        full.end());
  return res;
}

}  // namespace privq

#endif  // PRIVQ_PLANS_HPP_
