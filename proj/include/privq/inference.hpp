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

#ifndef PRIVQ_INFERENCE_HPP_
#define PRIVQ_INFERENCE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "privq/errors.hpp"
#include "privq/linop.hpp"

namespace privq {

namespace detail {

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline void scale_vec(std::vector<double>& v, double a) {
  for (double& x : v) x *= a;
}

// v = a*v + w
inline void axpy_onto(std::vector<double>& v, double a,
                      std::span<const double> w) {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * v[i] + w[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Iterative least squares on the Golub-Kahan bidiagonalization, solving
// min ||Ax - b|| through operator products only.  Started from zero it
// converges to the minimum-norm solution when the system is consistent and
// underdetermined, which is what reconstruction over a larger domain needs.

struct LsmrOptions {
  double atol = 1e-10;
  double btol = 1e-10;
  std::size_t max_iters = 0;  // 0: twice the column count
};

struct LsmrResult {
  std::vector<double> x;
  std::size_t iters = 0;
  int istop = 0;      // 0 trivial, 1 residual small, 2 gradient small, 7 cap
  double normr = 0;   // estimated ||b - Ax||
  double normar = 0;  // estimated ||A^T (b - Ax)||
};

inline LsmrResult lsmr(const LinOp& a, std::span<const double> b,
                       const LsmrOptions& opt = {}) {
  if (b.size() != a.rows()) throw DimensionError("rhs length mismatch");
  const std::size_t m = a.rows(), n = a.cols();
  std::size_t maxit = opt.max_iters ? opt.max_iters : 2 * n + 10;

  LsmrResult res;
  res.x.assign(n, 0.0);

  std::vector<double> u(b.begin(), b.end());
  double beta = detail::norm2(u);
  double normb = beta;
  if (beta == 0.0) return res;
  detail::scale_vec(u, 1.0 / beta);

  std::vector<double> v = a.apply_t(u);
  double alpha = detail::norm2(v);
  if (alpha == 0.0) return res;
  detail::scale_vec(v, 1.0 / alpha);

  std::vector<double> h = v, hbar(n, 0.0);
  std::vector<double> tmp_m(m), tmp_n(n);

  double zetabar = alpha * beta, alphabar = alpha;
  double rho = 1, rhobar = 1, cbar = 1, sbar = 0;
  double betadd = beta, betad = 0;
  double rhodold = 1, tautildeold = 0, thetatilde = 0, zeta = 0, d = 0;
  double norma2 = alpha * alpha;

  for (std::size_t itn = 1; itn <= maxit; ++itn) {
    // Next bidiagonalization step.
    a.apply_into(v, tmp_m);
    detail::axpy_onto(u, -alpha, tmp_m);  // u = A v - alpha u
    beta = detail::norm2(u);
    if (beta > 0.0) {
      detail::scale_vec(u, 1.0 / beta);
      a.apply_t_into(u, tmp_n);
      for (std::size_t i = 0; i < n; ++i) v[i] = tmp_n[i] - beta * v[i];
      alpha = detail::norm2(v);
      if (alpha > 0.0) detail::scale_vec(v, 1.0 / alpha);
    }

    // Plane rotations folding the new column into the factorization.
    double rhoold = rho;
    rho = std::hypot(alphabar, beta);
    double c = alphabar / rho, s = beta / rho;
    double thetanew = s * alpha;
    alphabar = c * alpha;

    double rhobarold = rhobar, zetaold = zeta;
    double thetabar = sbar * rho, rhotemp = cbar * rho;
    rhobar = std::hypot(rhotemp, thetanew);
    cbar = rhotemp / rhobar;
    sbar = thetanew / rhobar;
    zeta = cbar * zetabar;
    zetabar = -sbar * zetabar;

    // Solution update.
    double hb = thetabar * rho / (rhoold * rhobarold);
    for (std::size_t i = 0; i < n; ++i) hbar[i] = h[i] - hb * hbar[i];
    double step = zeta / (rho * rhobar);
    for (std::size_t i = 0; i < n; ++i) res.x[i] += step * hbar[i];
    double hh = thetanew / rho;
    for (std::size_t i = 0; i < n; ++i) h[i] = v[i] - hh * h[i];

    // Residual-norm recurrences.
    double betahat = c * betadd;
    betadd = -s * betadd;
    double thetatildeold = thetatilde;
    double rhotildeold = std::hypot(rhodold, thetabar);
    double ctildeold = rhodold / rhotildeold;
    double stildeold = thetabar / rhotildeold;
    thetatilde = stildeold * rhobar;
    rhodold = ctildeold * rhobar;
    betad = -stildeold * betad + ctildeold * betahat;
    tautildeold = (zetaold - thetatildeold * tautildeold) / rhotildeold;
    double taud = (zeta - thetatilde * tautildeold) / rhodold;
    res.normr =
        std::sqrt(d + (betad - taud) * (betad - taud) + betadd * betadd);
    norma2 += beta * beta;
    double norma = std::sqrt(norma2);
    norma2 += alpha * alpha;
    res.normar = std::fabs(zetabar);
    res.iters = itn;

    double normx = detail::norm2(res.x);
    if (res.normar <= opt.atol * norma * std::max(res.normr, 1e-300)) {
      res.istop = 2;
      return res;
    }
    if (res.normr <= opt.btol * normb + opt.atol * norma * normx) {
      res.istop = 1;
      return res;
    }
  }
  res.istop = 7;
  return res;
}

inline std::vector<double> least_squares(const LinOp& a,
                                         std::span<const double> b,
                                         const LsmrOptions& opt = {}) {
  return lsmr(a, b, opt).x;
}

// ---------------------------------------------------------------------------
// Nonnegative least squares by projected gradient with Barzilai-Borwein
// steps.  A monotone backtracking safeguard keeps the objective decreasing,
// and the reported optimality measure is the largest violated first-order
// condition: the projected gradient's max magnitude.

struct NnlsOptions {
  double tol = 1e-8;          // stop when the projected gradient is this small
  std::size_t max_iters = 5000;
  bool from_ls = true;        // warm start from the clipped plain solution
};

struct NnlsResult {
  std::vector<double> x;
  std::size_t iters = 0;
  double kkt = 0.0;
  bool converged = false;
};

namespace detail {

inline double nnls_objective(const LinOp& a, std::span<const double> b,
                             const std::vector<double>& x,
                             std::vector<double>& r) {
  a.apply_into(x, r);
  double f = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] -= b[i];
    f += r[i] * r[i];
  }
  return 0.5 * f;
}

inline double nnls_kkt(const std::vector<double>& x,
                       const std::vector<double>& g) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double pg = x[i] > 0.0 ? g[i] : std::min(g[i], 0.0);
    worst = std::max(worst, std::fabs(pg));
  }
  return worst;
}

}  // namespace detail

inline NnlsResult nnls(const LinOp& a, std::span<const double> b,
                       const NnlsOptions& opt = {}) {
  if (b.size() != a.rows()) throw DimensionError("rhs length mismatch");
  const std::size_t m = a.rows(), n = a.cols();

  NnlsResult res;
  if (opt.from_ls) {
    res.x = least_squares(a, b);
    for (double& v : res.x) v = std::max(v, 0.0);
  } else {
    res.x.assign(n, 0.0);
  }

  std::vector<double> r(m), g(n), xold(n), gold(n), cand(n), rc(m);
  double f = detail::nnls_objective(a, b, res.x, r);
  a.apply_t_into(r, g);

  // Initial step from a cheap largest-singular-value estimate.
  double norm_est;
  {
    std::vector<double> z(n, 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<double> az(m);
    double last = 1.0;
    for (int p = 0; p < 8; ++p) {
      a.apply_into(z, az);
      a.apply_t_into(az, z);
      last = detail::norm2(z);
      if (last == 0.0) break;
      detail::scale_vec(z, 1.0 / last);
    }
    norm_est = std::sqrt(std::max(last, 1e-12));
  }
  double alpha = 1.0 / (norm_est * norm_est);

  for (std::size_t it = 1; it <= opt.max_iters; ++it) {
    res.kkt = detail::nnls_kkt(res.x, g);
    res.iters = it - 1;
    if (res.kkt <= opt.tol) {
      res.converged = true;
      return res;
    }

    xold = res.x;
    gold = g;

    // Projected step with halving until the objective drops.
    double step = alpha;
    double fc = f;
    for (int back = 0; back < 60; ++back) {
      for (std::size_t i = 0; i < n; ++i)
        cand[i] = std::max(xold[i] - step * gold[i], 0.0);
      fc = detail::nnls_objective(a, b, cand, rc);
      if (fc <= f || back == 59) break;
      step *= 0.5;
    }
    res.x = cand;
    r = rc;
    f = fc;
    a.apply_t_into(r, g);

    // Barzilai-Borwein step for the next round, clamped to sane bounds.
    double sty = 0.0, sts = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double si = res.x[i] - xold[i];
      sts += si * si;
      sty += si * (g[i] - gold[i]);
    }
    if (sty > 0.0 && sts > 0.0)
      alpha = std::clamp(sts / sty, 1e-10 / (norm_est * norm_est),
                         1e10 / (norm_est * norm_est));
  }
  res.kkt = detail::nnls_kkt(res.x, g);
  res.iters = opt.max_iters;
  return res;
}

// ---------------------------------------------------------------------------
// Multiplicative weights over the simplex of fixed total mass.  One round
// sweeps the measured queries in order; each shifts mass toward cells whose
// measured answer exceeds the current estimate's, with the exponent damped
// by the mass so a single answer cannot swing the distribution.  The mass
// must be given, since the update can only redistribute it.

struct MwOptions {
  std::size_t rounds = 100;
  double clip = 50.0;  // bound on the exponent, for numeric safety
};

inline std::vector<double> mult_weights(const LinOp& q,
                                        std::span<const double> y,
                                        double total_mass,
                                        const MwOptions& opt = {}) {
  if (y.size() != q.rows()) throw DimensionError("rhs length mismatch");
  const std::size_t n = q.cols(), m = q.rows();
  if (total_mass < 0.0) throw ConfigError("total mass must be nonnegative");
  std::vector<double> x(n, total_mass / static_cast<double>(n));
  if (total_mass == 0.0 || m == 0) return x;

  // Row access: cached densely when affordable, re-extracted otherwise.
  std::optional<DenseMatrix> cache;
  if (m * n * sizeof(double) <= dense_cap_bytes()) cache = materialize(q);
  std::vector<double> row(n), basis(m, 0.0);
  auto load_row = [&](std::size_t j) -> const double* {
    if (cache) return &cache->a[j * n];
    basis[j] = 1.0;
    q.apply_t_into(basis, row);
    basis[j] = 0.0;
    return row.data();
  };

  for (std::size_t round = 0; round < opt.rounds; ++round) {
    for (std::size_t j = 0; j < m; ++j) {
      const double* qj = load_row(j);
      double pred = 0.0;
      for (std::size_t i = 0; i < n; ++i) pred += qj[i] * x[i];
      double r = (y[j] - pred) / (2.0 * total_mass);
      if (r == 0.0) continue;
      double mass = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (qj[i] != 0.0)
          x[i] *= std::exp(std::clamp(qj[i] * r, -opt.clip, opt.clip));
        mass += x[i];
      }
      if (mass <= 0.0) return x;
      double fix = total_mass / mass;
      for (double& v : x) v *= fix;
    }
  }
  return x;
}

}  // namespace privq

#endif  // PRIVQ_INFERENCE_HPP_
