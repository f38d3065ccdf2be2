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

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "privq/inference.hpp"
#include "privq/linop.hpp"
#include "privq/rng.hpp"

using privq::LinOp;

namespace {

Eigen::MatrixXd eigen_of(const LinOp& op) {
  privq::DenseMatrix d = privq::materialize(op);
  Eigen::MatrixXd m(d.rows, d.cols);
  for (std::size_t i = 0; i < d.rows; ++i)
    for (std::size_t j = 0; j < d.cols; ++j) m(i, j) = d.at(i, j);
  return m;
}

Eigen::VectorXd eigen_vec(const std::vector<double>& v) {
  Eigen::VectorXd e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) e(i) = v[i];
  return e;
}

// Reference minimum-norm least squares through a rank-revealing
// factorization, entirely outside the library under test.
std::vector<double> oracle_lsq(const LinOp& op, const std::vector<double>& b) {
  Eigen::MatrixXd a = eigen_of(op);
  Eigen::VectorXd x = a.completeOrthogonalDecomposition().solve(eigen_vec(b));
  return std::vector<double>(x.data(), x.data() + x.size());
}

std::vector<double> random_vec(std::mt19937_64& g, std::size_t n,
                               double lo = -3.0, double hi = 3.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

double dist_inf(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    w = std::max(w, std::fabs(a[i] - b[i]));
  return w;
}

double resid_norm(const LinOp& op, const std::vector<double>& x,
                  const std::vector<double>& b) {
  auto ax = op.apply(x);
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    s += (ax[i] - b[i]) * (ax[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("underdetermined consistent system yields the min-norm solution") {
  // One equation, two unknowns: x0 + x1 = 8/3 has minimum-norm solution
  // exactly (4/3, 4/3).
  auto a = privq::total(2);
  std::vector<double> b{8.0 / 3.0};
  auto r = privq::lsmr(a, b);
  REQUIRE(r.x[0] == Catch::Approx(4.0 / 3.0).epsilon(1e-9));
  REQUIRE(r.x[1] == Catch::Approx(4.0 / 3.0).epsilon(1e-9));
  REQUIRE(r.istop >= 1);
}

TEST_CASE("solver matches the factorization oracle across shapes") {
  std::mt19937_64 g(501);
  for (int trial = 0; trial < 24; ++trial) {
    std::size_t m = 1 + static_cast<std::size_t>(g() % 14);
    std::size_t n = 1 + static_cast<std::size_t>(g() % 14);
    privq::DenseMatrix d(m, n);
    std::uniform_real_distribution<double> dr(-2.0, 2.0);
    for (auto& v : d.a) v = dr(g);
    auto op = privq::dense(std::move(d));
    auto b = random_vec(g, m);

    auto mine = privq::lsmr(op, b, {1e-12, 1e-12, 400});
    auto want = oracle_lsq(op, b);

    if (m >= n) {
      // Overdetermined: solutions agree whenever the columns are
      // independent; random real matrices almost surely are.
      REQUIRE(dist_inf(mine.x, want) < 1e-6);
    } else {
      // Underdetermined: consistent system, so both residuals vanish and
      // both solutions have minimal norm.
      REQUIRE(resid_norm(op, mine.x, b) < 1e-6);
      double nm = 0, nw = 0;
      for (double v : mine.x) nm += v * v;
      for (double v : want) nw += v * v;
      REQUIRE(nm == Catch::Approx(nw).margin(1e-6));
    }
  }
}

TEST_CASE("residual estimate tracks the true residual") {
  std::mt19937_64 g(31);
  privq::DenseMatrix d(12, 5);
  std::uniform_real_distribution<double> dr(-1.0, 1.0);
  for (auto& v : d.a) v = dr(g);
  auto op = privq::dense(std::move(d));
  auto b = random_vec(g, 12);
  auto r = privq::lsmr(op, b);
  REQUIRE(r.normr == Catch::Approx(resid_norm(op, r.x, b)).epsilon(1e-4));
}

TEST_CASE("structured operators solve without materialization") {
  // Tree-stacked measurements over a modest domain, answered exactly.
  const std::size_t n = 1024;
  auto q = privq::union_of({privq::total(n), privq::prefix(n),
                            privq::identity(n)});
  std::mt19937_64 g(77);
  auto x_true = random_vec(g, n, 0.0, 5.0);
  auto y = q.apply(x_true);
  auto r = privq::lsmr(q, y, {1e-12, 1e-12, 0});
  REQUIRE(dist_inf(r.x, x_true) < 1e-6);
  REQUIRE(r.istop != 7);  // converged well before the iteration cap
}

TEST_CASE("nonnegative solver clips where the plain solution goes negative") {
  // Identity fit to (-3, 5): the first coordinate pins to the boundary.
  auto a = privq::identity(2);
  std::vector<double> b{-3.0, 5.0};
  auto r = privq::nnls(a, b);
  REQUIRE(r.converged);
  REQUIRE(r.x[0] == 0.0);
  REQUIRE(r.x[1] == Catch::Approx(5.0).margin(1e-9));
  REQUIRE(r.kkt <= 1e-8);
}

TEST_CASE("nonnegative solutions satisfy first-order optimality") {
  std::mt19937_64 g(902);
  for (int trial = 0; trial < 12; ++trial) {
    std::size_t m = 6 + static_cast<std::size_t>(g() % 10);
    std::size_t n = 4 + static_cast<std::size_t>(g() % 8);
    privq::DenseMatrix d(m, n);
    std::uniform_real_distribution<double> dr(-2.0, 2.0);
    for (auto& v : d.a) v = dr(g);
    auto op = privq::dense(std::move(d));
    auto b = random_vec(g, m);

    auto r = privq::nnls(op, b, {1e-9, 20000});
    REQUIRE(r.kkt <= 1e-6);
    for (double v : r.x) REQUIRE(v >= 0.0);

    // The certificate, verified from scratch: gradient never negative on
    // the boundary, near zero on the interior.
    auto ax = op.apply(r.x);
    for (std::size_t i = 0; i < m; ++i) ax[i] -= b[i];
    auto grad = op.apply_t(ax);
    for (std::size_t i = 0; i < n; ++i) {
      if (r.x[i] > 1e-12) {
        REQUIRE(std::fabs(grad[i]) <= 1e-5);
      } else {
        REQUIRE(grad[i] >= -1e-5);
      }
    }
  }
}

TEST_CASE("nonnegative fit beats clipping the plain solution") {
  std::mt19937_64 g(33);
  privq::DenseMatrix d(10, 6);
  std::uniform_real_distribution<double> dr(-2.0, 2.0);
  for (auto& v : d.a) v = dr(g);
  auto op = privq::dense(std::move(d));
  auto b = random_vec(g, 10);

  auto plain = privq::least_squares(op, b);
  for (double& v : plain) v = std::max(v, 0.0);
  auto r = privq::nnls(op, b, {1e-10, 50000});
  REQUIRE(resid_norm(op, r.x, b) <= resid_norm(op, plain, b) + 1e-9);
}

TEST_CASE("mass-preserving estimate recovers a noiseless histogram") {
  auto q = privq::identity(4);
  std::vector<double> y{1, 2, 3, 4};
  auto x = privq::mult_weights(q, y, 10.0, {400});
  for (std::size_t i = 0; i < 4; ++i)
    REQUIRE(x[i] == Catch::Approx(y[i]).margin(1e-3));
  double s = 0;
  for (double v : x) s += v;
  REQUIRE(s == Catch::Approx(10.0).margin(1e-9));
}

TEST_CASE("multiplicative updates keep the truth fixed") {
  // Starting exactly at a histogram consistent with the answers, the
  // residual is zero and every round is a no-op.
  auto q = privq::prefix(4);
  std::vector<double> x_true{2.5, 2.5, 2.5, 2.5};
  auto y = q.apply(x_true);
  auto x = privq::mult_weights(q, y, 10.0, {5});
  for (std::size_t i = 0; i < 4; ++i)
    REQUIRE(x[i] == Catch::Approx(2.5).margin(1e-12));
}

TEST_CASE("multiplicative updates shrink the residual from a cold start") {
  std::mt19937_64 g(44);
  const std::size_t n = 64;
  auto q = privq::prefix(n);
  auto x_true = random_vec(g, n, 0.0, 4.0);
  double mass = 0;
  for (double v : x_true) mass += v;
  auto y = q.apply(x_true);

  std::vector<double> uniform(n, mass / n);
  double before = resid_norm(q, uniform, y);
  auto x = privq::mult_weights(q, y, mass);
  double after = resid_norm(q, x, y);
  REQUIRE(after < 0.2 * before);
  for (double v : x) REQUIRE(v >= 0.0);
  double s = 0;
  for (double v : x) s += v;
  REQUIRE(s == Catch::Approx(mass).margin(1e-6));
}

TEST_CASE("extra measurements improve the stacked solve") {
  // With the same noise level per answer, measuring the identity alongside
  // the prefix tree strictly helps the reconstruction on average.
  const std::size_t n = 8;
  std::mt19937_64 g(606);
  std::vector<double> x_true{5, 1, 4, 2, 8, 0, 3, 7};
  auto q1 = privq::prefix(n);
  auto q2 = privq::union_of({privq::prefix(n), privq::identity(n)});

  double err1 = 0, err2 = 0;
  auto rng = privq::make_rng(9001);
  const int trials = 120;
  for (int t = 0; t < trials; ++t) {
    auto y1 = q1.apply(x_true);
    for (double& v : y1) v += privq::laplace(rng, 1.0);
    auto y2 = q2.apply(x_true);
    for (double& v : y2) v += privq::laplace(rng, 1.0);
    auto x1 = privq::least_squares(q1, y1);
    auto x2 = privq::least_squares(q2, y2);
    for (std::size_t i = 0; i < n; ++i) {
      err1 += (x1[i] - x_true[i]) * (x1[i] - x_true[i]);
      err2 += (x2[i] - x_true[i]) * (x2[i] - x_true[i]);
    }
  }
  REQUIRE(err2 < err1);
}
