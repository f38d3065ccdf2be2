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
// Error metrics and the analytic accuracy oracle.  The oracle materializes
// operators and leans on a dense pseudo-inverse, so it is a small-domain
// analysis tool; the metrics are streaming and size-agnostic.

#ifndef PRIVQ_EVAL_HPP_
#define PRIVQ_EVAL_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "privq/errors.hpp"
#include "privq/linop.hpp"

namespace privq {

// Root-mean-square error over the workload's answers, divided by `scale`.
// Callers normally pass the total record count so errors read as per-query
// relative frequencies; any positive scale is accepted.
inline double per_query_error(const LinOp& w, std::span<const double> x_hat,
                              std::span<const double> x_true, double scale) {
  if (x_hat.size() != w.cols() || x_true.size() != w.cols())
    throw DimensionError("estimate does not match the workload");
  if (!(scale > 0.0)) throw ConfigError("error scale must be positive");
  std::vector<double> diff(w.cols());
  for (std::size_t i = 0; i < diff.size(); ++i)
    diff[i] = x_hat[i] - x_true[i];
  std::vector<double> d = w.apply(diff);
  double s = 0.0;
  for (double v : d) s += v * v;
  return std::sqrt(s / static_cast<double>(w.rows())) / scale;
}

// Default normalization: the true total count.
inline double per_query_error(const LinOp& w, std::span<const double> x_hat,
                              std::span<const double> x_true) {
  double total = std::accumulate(x_true.begin(), x_true.end(), 0.0);
  return per_query_error(w, x_hat, x_true, total);
}

// Same metric computed from already-evaluated workload answers.
inline double answer_error(std::span<const double> got,
                           std::span<const double> want, double scale) {
  if (got.size() != want.size())
    throw DimensionError("answer vectors differ in length");
  if (got.empty()) throw DimensionError("no answers to compare");
  if (!(scale > 0.0)) throw ConfigError("error scale must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    double d = got[i] - want[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(got.size())) / scale;
}

namespace detail {

inline Eigen::MatrixXd to_eigen(const LinOp& a) {
  DenseMatrix d = materialize(a);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(d.rows),
                    static_cast<Eigen::Index>(d.cols));
  for (std::size_t i = 0; i < d.rows; ++i)
    for (std::size_t j = 0; j < d.cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          d.at(i, j);
  return m;
}

struct OracleContext {
  Eigen::MatrixXd pinv;       // n x m
  Eigen::MatrixXd row_proj;   // n x n projector onto the measured rowspace
  double sens_sq = 0.0;
};

inline OracleContext oracle_context(const LinOp& q) {
  OracleContext c;
  Eigen::MatrixXd m = to_eigen(q);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(m);
  c.pinv = cod.pseudoInverse();
  c.row_proj = c.pinv * m;
  double s = q.sensitivity_l1();
  c.sens_sq = s * s;
  return c;
}

inline double oracle_row(const OracleContext& c,
                         const Eigen::RowVectorXd& qrow) {
  Eigen::RowVectorXd proj = qrow * c.row_proj;
  double ref = std::max(1.0, qrow.cwiseAbs().maxCoeff());
  if ((qrow - proj).cwiseAbs().maxCoeff() > 1e-8 * ref)
    throw ConfigError("query row is not answerable from the measurements");
  return c.sens_sq * (qrow * c.pinv).squaredNorm();
}

}  // namespace detail

// Expected squared error, per unit privacy budget, of answering the single
// query row q from a least-squares reconstruction over the measurement
// operator: sensitivity(Q)^2 * |q Q^+|^2.  Constant factors common to every
// query are dropped; the oracle is for ordering comparisons.
inline double expected_error_oracle(const std::vector<double>& q,
                                    const LinOp& meas) {
  if (q.size() != meas.cols())
    throw DimensionError("query does not match the measured domain");
  detail::OracleContext c = detail::oracle_context(meas);
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(q.size()));
  for (std::size_t j = 0; j < q.size(); ++j)
    row(static_cast<Eigen::Index>(j)) = q[j];
  return detail::oracle_row(c, row);
}

// Sum of the single-row oracle over every row of a workload, sharing one
// pseudo-inverse: sensitivity(Q)^2 * |W Q^+|_F^2.
inline double expected_total_error_oracle(const LinOp& w, const LinOp& meas) {
  if (w.cols() != meas.cols())
    throw DimensionError("workload does not match the measured domain");
  detail::OracleContext c = detail::oracle_context(meas);
  Eigen::MatrixXd wm = detail::to_eigen(w);
  double out = 0.0;
  for (Eigen::Index i = 0; i < wm.rows(); ++i)
    out += detail::oracle_row(c, wm.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// Multi-seed harness.  The callable is invoked once per seed and must return
// the workload answers for that run; errors are RMS over answers divided by
// `scale`.

struct TrialRow {
  std::uint64_t seed = 0;
  double error = 0.0;
  double runtime_ms = 0.0;
};

struct TrialSummary {
  std::vector<TrialRow> rows;
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

template <typename RunFn>
TrialSummary run_trials(RunFn&& run, std::span<const double> want,
                        const std::vector<std::uint64_t>& seeds,
                        double scale) {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  TrialSummary s;
  s.rows.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> got = run(seed);
    auto t1 = std::chrono::steady_clock::now();
    TrialRow row;
    row.seed = seed;
    row.error = answer_error(got, want, scale);
    row.runtime_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    s.rows.push_back(row);
  }
  std::vector<double> errs;
  errs.reserve(s.rows.size());
  for (const TrialRow& r : s.rows) errs.push_back(r.error);
  s.mean = std::accumulate(errs.begin(), errs.end(), 0.0) /
           static_cast<double>(errs.size());
  std::sort(errs.begin(), errs.end());
  s.min = errs.front();
  s.max = errs.back();
  std::size_t h = errs.size() / 2;
  s.median = errs.size() % 2 ? errs[h] : 0.5 * (errs[h - 1] + errs[h]);
  return s;
}

}  // namespace privq

#endif  // PRIVQ_EVAL_HPP_
