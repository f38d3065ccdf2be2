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
// Implicit linear operators over the flattened data domain.
//
// An operator is a tree of bodies.  Structured leaves (identity, ones, total,
// prefix, suffix, wavelet) store O(1) state and run their matvec in O(n) or
// O(n log n); dense and sparse leaves store their entries; kronecker, union,
// product and weighted combine children without materializing anything.
// Five primitives (matvec, transpose, matmul, abs, sqr) are enough for every
// consumer in this library: sensitivities reduce to abs/sqr plus a
// transpose-matvec with the ones vector, and the iterative solvers only ever
// call matvec/transpose-matvec.

#ifndef PRIVQ_LINOP_HPP_
#define PRIVQ_LINOP_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "privq/dense.hpp"
#include "privq/errors.hpp"

namespace privq {

// ---------------------------------------------------------------------------
// Dense materialization cap.

// Default cap on any single dense allocation: 2 GiB.  Overridable in-process
// and via the PRIVQ_MEM_CAP_BYTES environment variable (applied by the CLI).
inline std::atomic<std::uint64_t>& dense_cap_ref() {
  static std::atomic<std::uint64_t> cap{2ULL << 30};
  return cap;
}
inline std::uint64_t dense_cap_bytes() { return dense_cap_ref().load(); }
inline void set_dense_cap_bytes(std::uint64_t bytes) { dense_cap_ref() = bytes; }

inline void check_dense_alloc(std::size_t rows, std::size_t cols) {
  const long double bytes = 8.0L * static_cast<long double>(rows) *
                            static_cast<long double>(cols);
  if (bytes > static_cast<long double>(dense_cap_bytes())) {
    throw CapacityError("dense block of " + std::to_string(rows) + "x" +
                        std::to_string(cols) +
                        " entries exceeds the memory cap of " +
                        std::to_string(dense_cap_bytes()) + " bytes");
  }
}

// ---------------------------------------------------------------------------
// Sparse storage (CSR).

struct Triplet {
  std::size_t r;
  std::size_t c;
  double v;
};

struct Csr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return val.size(); }
};

// Duplicate coordinates are summed; explicit zeros are dropped.
inline Csr build_csr(std::size_t rows, std::size_t cols,
                     std::vector<Triplet> t) {
  for (const auto& e : t) {
    if (e.r >= rows || e.c >= cols)
      throw DimensionError("sparse triplet out of bounds");
  }
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return a.r != b.r ? a.r < b.r : a.c < b.c;
  });
  Csr m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  std::size_t i = 0;
  while (i < t.size()) {
    std::size_t j = i;
    double acc = 0.0;
    while (j < t.size() && t[j].r == t[i].r && t[j].c == t[i].c)
      acc += t[j++].v;
    if (acc != 0.0) {
      m.col.push_back(static_cast<std::uint32_t>(t[i].c));
      m.val.push_back(acc);
      m.row_ptr[t[i].r + 1]++;
    }
    i = j;
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

inline Csr csr_transpose(const Csr& m) {
  Csr t;
  t.rows = m.cols;
  t.cols = m.rows;
  t.row_ptr.assign(t.rows + 1, 0);
  for (std::uint32_t c : m.col) t.row_ptr[c + 1]++;
  for (std::size_t r = 0; r < t.rows; ++r) t.row_ptr[r + 1] += t.row_ptr[r];
  t.col.resize(m.nnz());
  t.val.resize(m.nnz());
  std::vector<std::size_t> cur(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
      std::size_t pos = cur[m.col[k]]++;
      t.col[pos] = static_cast<std::uint32_t>(r);
      t.val[pos] = m.val[k];
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Operator bodies.

class OpBody;
using BodyPtr = std::shared_ptr<const OpBody>;

class OpBody : public std::enable_shared_from_this<OpBody> {
 public:
  virtual ~OpBody() = default;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
  virtual void apply_t(std::span<const double> x, std::span<double> y) const = 0;

  virtual BodyPtr transpose_body() const = 0;
  virtual BodyPtr abs_body() const {
    if (binary01()) return shared_from_this();
    return fallback_entrywise(/*square=*/false);
  }
  virtual BodyPtr sqr_body() const {
    if (binary01()) return shared_from_this();
    return fallback_entrywise(/*square=*/true);
  }

  // True when every coefficient is 0 or 1, in which case abs and sqr are
  // no-ops.  Product bodies built by the range-query constructors set this by
  // assertion; it is never inferred for a general product.
  virtual bool binary01() const { return false; }

  virtual std::string kind() const = 0;
  // One-line recursive structural signature; two operators with equal
  // signatures are the same matrix by construction.
  virtual void signature(std::string& out) const = 0;
  virtual std::size_t state_bytes() const = 0;

  // Closed-form max column norms, where the structure gives one directly.
  virtual std::optional<double> l1_direct() const { return std::nullopt; }
  virtual std::optional<double> l2_direct() const { return std::nullopt; }

 protected:
  OpBody(std::size_t r, std::size_t c) : rows_(r), cols_(c) {
    if (r == 0 || c == 0) throw DimensionError("operator dims must be positive");
  }
  BodyPtr fallback_entrywise(bool square) const;  // materializes (cap-guarded)

  std::size_t rows_;
  std::size_t cols_;
};

namespace detail {

inline void append_num(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

class IdentityBody final : public OpBody {
 public:
  explicit IdentityBody(std::size_t n) : OpBody(n, n) {}
  void apply(std::span<const double> x, std::span<double> y) const override {
    std::copy(x.begin(), x.end(), y.begin());
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    std::copy(x.begin(), x.end(), y.begin());
  }
  BodyPtr transpose_body() const override { return shared_from_this(); }
  bool binary01() const override { return true; }
  std::string kind() const override { return "identity"; }
  void signature(std::string& out) const override {
    out += "identity(" + std::to_string(rows_) + ")";
  }
  std::size_t state_bytes() const override { return sizeof(*this); }
  std::optional<double> l1_direct() const override { return 1.0; }
  std::optional<double> l2_direct() const override { return 1.0; }
};

class OnesBody final : public OpBody {
 public:
  OnesBody(std::size_t m, std::size_t n) : OpBody(m, n) {}
  void apply(std::span<const double> x, std::span<double> y) const override {
    double s = std::accumulate(x.begin(), x.end(), 0.0);
    std::fill(y.begin(), y.end(), s);
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    double s = std::accumulate(x.begin(), x.end(), 0.0);
    std::fill(y.begin(), y.end(), s);
  }
  BodyPtr transpose_body() const override {
    return std::make_shared<OnesBody>(cols_, rows_);
  }
  bool binary01() const override { return true; }
  std::string kind() const override { return "ones"; }
  void signature(std::string& out) const override {
    out += "ones(" + std::to_string(rows_) + "," + std::to_string(cols_) + ")";
  }
  std::size_t state_bytes() const override { return sizeof(*this); }
  std::optional<double> l1_direct() const override {
    return static_cast<double>(rows_);
  }
  std::optional<double> l2_direct() const override {
    return std::sqrt(static_cast<double>(rows_));
  }
};

class TotalBody final : public OpBody {
 public:
  explicit TotalBody(std::size_t n) : OpBody(1, n) {}
  void apply(std::span<const double> x, std::span<double> y) const override {
    y[0] = std::accumulate(x.begin(), x.end(), 0.0);
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    std::fill(y.begin(), y.end(), x[0]);
  }
  BodyPtr transpose_body() const override;
  bool binary01() const override { return true; }
  std::string kind() const override { return "total"; }
  void signature(std::string& out) const override {
    out += "total(" + std::to_string(cols_) + ")";
  }
  std::size_t state_bytes() const override { return sizeof(*this); }
  std::optional<double> l1_direct() const override { return 1.0; }
  std::optional<double> l2_direct() const override { return 1.0; }
};

class SuffixBody;

// Lower-triangular ones: y_k = x_0 + ... + x_k, one running sum.
class PrefixBody final : public OpBody {
 public:
  explicit PrefixBody(std::size_t n) : OpBody(n, n) {}
  void apply(std::span<const double> x, std::span<double> y) const override {
    double acc = 0.0;
    for (std::size_t i = 0; i < cols_; ++i) {
      acc += x[i];
      y[i] = acc;
    }
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    double acc = 0.0;
    for (std::size_t i = cols_; i-- > 0;) {
      acc += x[i];
      y[i] = acc;
    }
  }
  BodyPtr transpose_body() const override;
  bool binary01() const override { return true; }
  std::string kind() const override { return "prefix"; }
  void signature(std::string& out) const override {
    out += "prefix(" + std::to_string(rows_) + ")";
  }
  std::size_t state_bytes() const override { return sizeof(*this); }
  std::optional<double> l1_direct() const override {
    return static_cast<double>(rows_);
  }
  std::optional<double> l2_direct() const override {
    return std::sqrt(static_cast<double>(rows_));
  }
};

class SuffixBody final : public OpBody {
 public:
  explicit SuffixBody(std::size_t n) : OpBody(n, n) {}
  void apply(std::span<const double> x, std::span<double> y) const override {
    double acc = 0.0;
    for (std::size_t i = cols_; i-- > 0;) {
      acc += x[i];
      y[i] = acc;
    }
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    double acc = 0.0;
    for (std::size_t i = 0; i < cols_; ++i) {
      acc += x[i];
      y[i] = acc;
    }
  }
  BodyPtr transpose_body() const override {
    return std::make_shared<PrefixBody>(rows_);
  }
  bool binary01() const override { return true; }
  std::string kind() const override { return "suffix"; }
  void signature(std::string& out) const override {
    out += "suffix(" + std::to_string(rows_) + ")";
  }
  std::size_t state_bytes() const override { return sizeof(*this); }
  std::optional<double> l1_direct() const override {
    return static_cast<double>(rows_);
  }
  std::optional<double> l2_direct() const override {
    return std::sqrt(static_cast<double>(rows_));
  }
};

inline BodyPtr PrefixBody::transpose_body() const {
  return std::make_shared<SuffixBody>(rows_);
}

// Unnormalized Haar analysis matrix, n a power of two.  Row 0 is the total;
// row 2^l + j is (first half) - (second half) of block j at level l, blocks
// of width n / 2^l.  Every column meets each level exactly once, which gives
// the closed-form max column norms below.
class WaveletBody final : public OpBody {
 public:
  explicit WaveletBody(std::size_t n) : OpBody(n, n), levels_(0) {
    std::size_t m = n;
    while (m > 1) {
      if (m % 2 != 0)
        throw DimensionError("wavelet size must be a power of two");
      m /= 2;
      ++levels_;
    }
  }
  void apply(std::span<const double> x, std::span<double> y) const override {
    std::vector<double> s(x.begin(), x.end());
    for (std::size_t lev = levels_; lev-- > 0;) {
      const std::size_t half = s.size() / 2;
      const std::size_t base = std::size_t{1} << lev;
      for (std::size_t j = 0; j < half; ++j)
        y[base + j] = s[2 * j] - s[2 * j + 1];
      for (std::size_t j = 0; j < half; ++j) s[j] = s[2 * j] + s[2 * j + 1];
      s.resize(half);
    }
    y[0] = s[0];
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    std::vector<double> z{x[0]};
    z.reserve(cols_);
    for (std::size_t lev = 0; lev < levels_; ++lev) {
      const std::size_t base = std::size_t{1} << lev;
      std::vector<double> nz(z.size() * 2);
      for (std::size_t j = 0; j < z.size(); ++j) {
        nz[2 * j] = z[j] + x[base + j];
        nz[2 * j + 1] = z[j] - x[base + j];
      }
      z = std::move(nz);
    }
    std::copy(z.begin(), z.end(), y.begin());
  }
  BodyPtr transpose_body() const override;
  std::string kind() const override { return "wavelet"; }
  void signature(std::string& out) const override {
    out += "wavelet(" + std::to_string(rows_) + ")";
  }
  std::size_t state_bytes() const override { return sizeof(*this); }
  std::optional<double> l1_direct() const override {
    return 1.0 + static_cast<double>(levels_);
  }
  std::optional<double> l2_direct() const override {
    return std::sqrt(1.0 + static_cast<double>(levels_));
  }

 private:
  std::size_t levels_;
};

class DenseBody final : public OpBody {
 public:
  explicit DenseBody(DenseMatrix m)
      : OpBody(m.rows, m.cols), m_(std::move(m)) {
    binary_ = std::all_of(m_.a.begin(), m_.a.end(),
                          [](double v) { return v == 0.0 || v == 1.0; });
  }
  void apply(std::span<const double> x, std::span<double> y) const override {
    m_.apply(x, y);
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    m_.apply_t(x, y);
  }
  BodyPtr transpose_body() const override {
    return std::make_shared<DenseBody>(m_.transposed());
  }
  BodyPtr abs_body() const override {
    if (binary_) return shared_from_this();
    DenseMatrix c = m_;
    for (auto& v : c.a) v = std::fabs(v);
    return std::make_shared<DenseBody>(std::move(c));
  }
  BodyPtr sqr_body() const override {
    if (binary_) return shared_from_this();
    DenseMatrix c = m_;
    for (auto& v : c.a) v = v * v;
    return std::make_shared<DenseBody>(std::move(c));
  }
  bool binary01() const override { return binary_; }
  std::string kind() const override { return "dense"; }
  void signature(std::string& out) const override {
    out += "dense(" + std::to_string(rows_) + "," + std::to_string(cols_) + ";";
    for (double v : m_.a) {
      append_num(out, v);
      out += ',';
    }
    out += ")";
  }
  std::size_t state_bytes() const override {
    return sizeof(*this) + m_.a.size() * sizeof(double);
  }
  const DenseMatrix& matrix() const { return m_; }

 private:
  DenseMatrix m_;
  bool binary_;
};

class SparseBody final : public OpBody {
 public:
  explicit SparseBody(Csr m) : OpBody(m.rows, m.cols), m_(std::move(m)) {
    binary_ = std::all_of(m_.val.begin(), m_.val.end(),
                          [](double v) { return v == 1.0; });
  }
  void apply(std::span<const double> x, std::span<double> y) const override {
    for (std::size_t r = 0; r < m_.rows; ++r) {
      double acc = 0.0;
      for (std::size_t k = m_.row_ptr[r]; k < m_.row_ptr[r + 1]; ++k)
        acc += m_.val[k] * x[m_.col[k]];
      y[r] = acc;
    }
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t r = 0; r < m_.rows; ++r) {
      const double xr = x[r];
      if (xr == 0.0) continue;
      for (std::size_t k = m_.row_ptr[r]; k < m_.row_ptr[r + 1]; ++k)
        y[m_.col[k]] += m_.val[k] * xr;
    }
  }
  BodyPtr transpose_body() const override {
    return std::make_shared<SparseBody>(csr_transpose(m_));
  }
  BodyPtr abs_body() const override {
    if (binary_) return shared_from_this();
    Csr c = m_;
    for (auto& v : c.val) v = std::fabs(v);
    return std::make_shared<SparseBody>(std::move(c));
  }
  BodyPtr sqr_body() const override {
    if (binary_) return shared_from_this();
    Csr c = m_;
    for (auto& v : c.val) v = v * v;
    return std::make_shared<SparseBody>(std::move(c));
  }
  bool binary01() const override { return binary_; }
  std::string kind() const override { return "sparse"; }
  void signature(std::string& out) const override {
    out += "sparse(" + std::to_string(rows_) + "," + std::to_string(cols_) + ";";
    for (std::size_t r = 0; r < m_.rows; ++r) {
      for (std::size_t k = m_.row_ptr[r]; k < m_.row_ptr[r + 1]; ++k) {
        out += std::to_string(r) + ":" + std::to_string(m_.col[k]) + ":";
        append_num(out, m_.val[k]);
        out += ',';
      }
    }
    out += ")";
  }
  std::size_t state_bytes() const override {
    return sizeof(*this) + m_.val.size() * (sizeof(double) + sizeof(std::uint32_t)) +
           m_.row_ptr.size() * sizeof(std::size_t);
  }
  const Csr& matrix() const { return m_; }

 private:
  Csr m_;
  bool binary_;
};

// Generic transpose wrapper, for bodies with no structural transpose
// (wavelet, union).  transpose(transpose(A)) unwraps back to A.
class TransposeBody final : public OpBody {
 public:
  explicit TransposeBody(BodyPtr a) : OpBody(a->cols(), a->rows()), a_(a) {}
  void apply(std::span<const double> x, std::span<double> y) const override {
    a_->apply_t(x, y);
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    a_->apply(x, y);
  }
  BodyPtr transpose_body() const override { return a_; }
  BodyPtr abs_body() const override {
    if (binary01()) return shared_from_this();
    return std::make_shared<TransposeBody>(a_->abs_body());
  }
  BodyPtr sqr_body() const override {
    if (binary01()) return shared_from_this();
    return std::make_shared<TransposeBody>(a_->sqr_body());
  }
  bool binary01() const override { return a_->binary01(); }
  std::string kind() const override { return "transpose"; }
  void signature(std::string& out) const override {
    out += "transpose(";
    a_->signature(out);
    out += ")";
  }
  std::size_t state_bytes() const override {
    return sizeof(*this) + a_->state_bytes();
  }
  const BodyPtr& child() const { return a_; }

 private:
  BodyPtr a_;
};

inline BodyPtr WaveletBody::transpose_body() const {
  return std::make_shared<TransposeBody>(shared_from_this());
}

inline BodyPtr TotalBody::transpose_body() const {
  return std::make_shared<TransposeBody>(shared_from_this());
}

class KroneckerBody final : public OpBody {
 public:
  KroneckerBody(BodyPtr a, BodyPtr b)
      : OpBody(a->rows() * b->rows(), a->cols() * b->cols()), a_(a), b_(b) {}

  // x viewed as an cols(A) x cols(B) array, first factor on the slow axis.
  // Stage one applies B to every slice, stage two applies A across slices:
  // cost cols(A)*T(B) + rows(B)*T(A) without forming anything dense.
  void apply(std::span<const double> x, std::span<double> y) const override {
    kron_apply(*a_, *b_, false, x, y);
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    kron_apply(*a_, *b_, true, x, y);
  }
  BodyPtr transpose_body() const override {
    return std::make_shared<KroneckerBody>(a_->transpose_body(),
                                           b_->transpose_body());
  }
  BodyPtr abs_body() const override {
    if (binary01()) return shared_from_this();
    return std::make_shared<KroneckerBody>(a_->abs_body(), b_->abs_body());
  }
  BodyPtr sqr_body() const override {
    if (binary01()) return shared_from_this();
    return std::make_shared<KroneckerBody>(a_->sqr_body(), b_->sqr_body());
  }
  bool binary01() const override { return a_->binary01() && b_->binary01(); }
  std::string kind() const override { return "kronecker"; }
  void signature(std::string& out) const override {
    out += "kron(";
    a_->signature(out);
    out += ",";
    b_->signature(out);
    out += ")";
  }
  std::size_t state_bytes() const override {
    return sizeof(*this) + a_->state_bytes() + b_->state_bytes();
  }
  std::optional<double> l1_direct() const override;
  std::optional<double> l2_direct() const override;
  const BodyPtr& left() const { return a_; }
  const BodyPtr& right() const { return b_; }

 private:
  static void kron_apply(const OpBody& a, const OpBody& b, bool transposed,
                         std::span<const double> x, std::span<double> y) {
    const std::size_t an = transposed ? a.rows() : a.cols();
    const std::size_t am = transposed ? a.cols() : a.rows();
    const std::size_t bn = transposed ? b.rows() : b.cols();
    const std::size_t bm = transposed ? b.cols() : b.rows();
    auto apply_a = [&](std::span<const double> in, std::span<double> out) {
      transposed ? a.apply_t(in, out) : a.apply(in, out);
    };
    auto apply_b = [&](std::span<const double> in, std::span<double> out) {
      transposed ? b.apply_t(in, out) : b.apply(in, out);
    };
    // T[j, :] = B * x[j, :]  for each of the an slices.
    std::vector<double> t(an * bm);
    std::vector<double> brow(bm);
    for (std::size_t j = 0; j < an; ++j) {
      apply_b(x.subspan(j * bn, bn), brow);
      std::copy(brow.begin(), brow.end(), t.begin() + j * bm);
    }
    // y[:, c] = A * T[:, c]  for each of the bm columns.
    std::vector<double> tc(an), ac(am);
    for (std::size_t c = 0; c < bm; ++c) {
      for (std::size_t j = 0; j < an; ++j) tc[j] = t[j * bm + c];
      apply_a(tc, ac);
      for (std::size_t i = 0; i < am; ++i) y[i * bm + c] = ac[i];
    }
  }

  BodyPtr a_;
  BodyPtr b_;
};

// Vertical stack of aligned children.
class UnionBody final : public OpBody {
 public:
  static std::size_t sum_rows(const std::vector<BodyPtr>& cs) {
    if (cs.empty()) throw DimensionError("union needs at least one child");
    std::size_t m = 0;
    for (const auto& c : cs) {
      if (c->cols() != cs.front()->cols())
        throw DimensionError("union children must share their column count");
      m += c->rows();
    }
    return m;
  }
  explicit UnionBody(std::vector<BodyPtr> cs)
      : OpBody(sum_rows(cs), cs.front()->cols()), cs_(std::move(cs)) {
    offsets_.reserve(cs_.size() + 1);
    offsets_.push_back(0);
    for (const auto& c : cs_) offsets_.push_back(offsets_.back() + c->rows());
  }
  void apply(std::span<const double> x, std::span<double> y) const override {
    for (std::size_t i = 0; i < cs_.size(); ++i)
      cs_[i]->apply(x, y.subspan(offsets_[i], cs_[i]->rows()));
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    std::fill(y.begin(), y.end(), 0.0);
    std::vector<double> tmp(cols_);
    for (std::size_t i = 0; i < cs_.size(); ++i) {
      cs_[i]->apply_t(x.subspan(offsets_[i], cs_[i]->rows()), tmp);
      for (std::size_t j = 0; j < cols_; ++j) y[j] += tmp[j];
    }
  }
  BodyPtr transpose_body() const override {
    return std::make_shared<TransposeBody>(shared_from_this());
  }
  BodyPtr abs_body() const override {
    if (binary01()) return shared_from_this();
    std::vector<BodyPtr> cs;
    cs.reserve(cs_.size());
    for (const auto& c : cs_) cs.push_back(c->abs_body());
    return std::make_shared<UnionBody>(std::move(cs));
  }
  BodyPtr sqr_body() const override {
    if (binary01()) return shared_from_this();
    std::vector<BodyPtr> cs;
    cs.reserve(cs_.size());
    for (const auto& c : cs_) cs.push_back(c->sqr_body());
    return std::make_shared<UnionBody>(std::move(cs));
  }
  bool binary01() const override {
    return std::all_of(cs_.begin(), cs_.end(),
                       [](const BodyPtr& c) { return c->binary01(); });
  }
  std::string kind() const override { return "union"; }
  void signature(std::string& out) const override {
    out += "union(";
    for (const auto& c : cs_) {
      c->signature(out);
      out += ",";
    }
    out += ")";
  }
  std::size_t state_bytes() const override {
    std::size_t s = sizeof(*this) + offsets_.size() * sizeof(std::size_t);
    for (const auto& c : cs_) s += c->state_bytes();
    return s;
  }
  const std::vector<BodyPtr>& children() const { return cs_; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }

 private:
  std::vector<BodyPtr> cs_;
  std::vector<std::size_t> offsets_;
};

// Lazy matrix product A*B.
class ProductBody final : public OpBody {
 public:
  ProductBody(BodyPtr a, BodyPtr b, bool binary_hint)
      : OpBody(a->rows(), b->cols()), a_(a), b_(b), binary_(binary_hint) {
    if (a->cols() != b->rows())
      throw DimensionError("product inner dimensions disagree");
  }
  void apply(std::span<const double> x, std::span<double> y) const override {
    std::vector<double> mid(b_->rows());
    b_->apply(x, mid);
    a_->apply(mid, y);
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    std::vector<double> mid(a_->cols());
    a_->apply_t(x, mid);
    b_->apply_t(mid, y);
  }
  BodyPtr transpose_body() const override {
    return std::make_shared<ProductBody>(b_->transpose_body(),
                                         a_->transpose_body(), binary_);
  }
  bool binary01() const override { return binary_; }
  std::string kind() const override { return "product"; }
  void signature(std::string& out) const override {
    out += "product(";
    a_->signature(out);
    out += ",";
    b_->signature(out);
    out += binary_ ? ";binary)" : ")";
  }
  std::size_t state_bytes() const override {
    return sizeof(*this) + a_->state_bytes() + b_->state_bytes();
  }
  const BodyPtr& left() const { return a_; }
  const BodyPtr& right() const { return b_; }

 private:
  BodyPtr a_;
  BodyPtr b_;
  bool binary_;
};

class WeightedBody final : public OpBody {
 public:
  WeightedBody(double w, BodyPtr a) : OpBody(a->rows(), a->cols()), w_(w), a_(a) {}
  void apply(std::span<const double> x, std::span<double> y) const override {
    a_->apply(x, y);
    for (auto& v : y) v *= w_;
  }
  void apply_t(std::span<const double> x, std::span<double> y) const override {
    a_->apply_t(x, y);
    for (auto& v : y) v *= w_;
  }
  BodyPtr transpose_body() const override {
    return std::make_shared<WeightedBody>(w_, a_->transpose_body());
  }
  BodyPtr abs_body() const override {
    return std::make_shared<WeightedBody>(std::fabs(w_), a_->abs_body());
  }
  BodyPtr sqr_body() const override {
    return std::make_shared<WeightedBody>(w_ * w_, a_->sqr_body());
  }
  bool binary01() const override { return w_ == 1.0 && a_->binary01(); }
  std::string kind() const override { return "weighted"; }
  void signature(std::string& out) const override {
    out += "weighted(";
    append_num(out, w_);
    out += ",";
    a_->signature(out);
    out += ")";
  }
  std::size_t state_bytes() const override {
    return sizeof(*this) + a_->state_bytes();
  }
  std::optional<double> l1_direct() const override;
  std::optional<double> l2_direct() const override;
  double weight() const { return w_; }
  const BodyPtr& child() const { return a_; }

 private:
  double w_;
  BodyPtr a_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Value-semantic handle.

class LinOp {
 public:
  LinOp() = default;
  explicit LinOp(BodyPtr b) : body_(std::move(b)) {}

  bool valid() const { return body_ != nullptr; }
  std::size_t rows() const { return must().rows(); }
  std::size_t cols() const { return must().cols(); }
  std::string kind() const { return must().kind(); }
  bool binary01() const { return must().binary01(); }
  const OpBody& body() const { return must(); }
  const BodyPtr& body_ptr() const { return body_; }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != cols()) throw DimensionError("matvec length mismatch");
    std::vector<double> y(rows());
    must().apply(x, y);
    return y;
  }
  std::vector<double> apply_t(std::span<const double> x) const {
    if (x.size() != rows())
      throw DimensionError("transposed matvec length mismatch");
    std::vector<double> y(cols());
    must().apply_t(x, y);
    return y;
  }
  void apply_into(std::span<const double> x, std::span<double> y) const {
    if (x.size() != cols() || y.size() != rows())
      throw DimensionError("matvec length mismatch");
    must().apply(x, y);
  }
  void apply_t_into(std::span<const double> x, std::span<double> y) const {
    if (x.size() != rows() || y.size() != cols())
      throw DimensionError("transposed matvec length mismatch");
    must().apply_t(x, y);
  }

  LinOp transpose() const { return LinOp(must().transpose_body()); }
  LinOp abs() const { return LinOp(must().abs_body()); }
  LinOp sqr() const { return LinOp(must().sqr_body()); }

  // Max column norms over |entries| and entries^2; the scale of additive
  // noise is proportional to these.
  double sensitivity_l1() const {
    if (auto d = must().l1_direct()) return *d;
    std::vector<double> ones(rows(), 1.0);
    auto cs = abs().apply_t(ones);
    return *std::max_element(cs.begin(), cs.end());
  }
  double sensitivity_l2() const {
    if (auto d = must().l2_direct()) return *d;
    std::vector<double> ones(rows(), 1.0);
    auto cs = sqr().apply_t(ones);
    return std::sqrt(*std::max_element(cs.begin(), cs.end()));
  }

  std::size_t state_bytes() const { return must().state_bytes(); }
  std::string signature() const {
    std::string s;
    must().signature(s);
    return s;
  }

 private:
  const OpBody& must() const {
    if (!body_) throw Error("empty operator");
    return *body_;
  }
  BodyPtr body_;
};

inline bool structurally_equal(const LinOp& a, const LinOp& b) {
  return a.signature() == b.signature();
}

// ---------------------------------------------------------------------------
// Builders.

inline LinOp identity(std::size_t n) {
  return LinOp(std::make_shared<detail::IdentityBody>(n));
}
inline LinOp ones(std::size_t m, std::size_t n) {
  return LinOp(std::make_shared<detail::OnesBody>(m, n));
}
inline LinOp total(std::size_t n) {
  return LinOp(std::make_shared<detail::TotalBody>(n));
}
inline LinOp prefix(std::size_t n) {
  return LinOp(std::make_shared<detail::PrefixBody>(n));
}
inline LinOp suffix(std::size_t n) {
  return LinOp(std::make_shared<detail::SuffixBody>(n));
}
inline LinOp wavelet(std::size_t n) {
  return LinOp(std::make_shared<detail::WaveletBody>(n));
}
inline LinOp dense(DenseMatrix m) {
  check_dense_alloc(m.rows, m.cols);
  return LinOp(std::make_shared<detail::DenseBody>(std::move(m)));
}
inline LinOp sparse(Csr m) {
  return LinOp(std::make_shared<detail::SparseBody>(std::move(m)));
}
inline LinOp sparse(std::size_t rows, std::size_t cols,
                    std::vector<Triplet> t) {
  return sparse(build_csr(rows, cols, std::move(t)));
}
inline LinOp kronecker(const LinOp& a, const LinOp& b) {
  return LinOp(std::make_shared<detail::KroneckerBody>(a.body_ptr(),
                                                       b.body_ptr()));
}
inline LinOp kronecker(const std::vector<LinOp>& factors) {
  if (factors.empty()) throw DimensionError("kronecker needs a factor");
  LinOp acc = factors.back();
  for (std::size_t i = factors.size() - 1; i-- > 0;)
    acc = kronecker(factors[i], acc);
  return acc;
}
inline LinOp union_of(const std::vector<LinOp>& children) {
  std::vector<BodyPtr> cs;
  cs.reserve(children.size());
  for (const auto& c : children) cs.push_back(c.body_ptr());
  return LinOp(std::make_shared<detail::UnionBody>(std::move(cs)));
}
inline LinOp product(const LinOp& a, const LinOp& b, bool binary_hint = false) {
  return LinOp(std::make_shared<detail::ProductBody>(a.body_ptr(), b.body_ptr(),
                                                     binary_hint));
}
inline LinOp weighted(double w, const LinOp& a) {
  return LinOp(std::make_shared<detail::WeightedBody>(w, a.body_ptr()));
}

// Primitive aliases used throughout.
inline std::vector<double> matvec(const LinOp& a, std::span<const double> x) {
  return a.apply(x);
}
inline LinOp transpose(const LinOp& a) { return a.transpose(); }
inline LinOp matmul(const LinOp& a, const LinOp& b) { return product(a, b); }
inline LinOp abs(const LinOp& a) { return a.abs(); }
inline LinOp sqr(const LinOp& a) { return a.sqr(); }

// Row i of A as a plain vector (A^T e_i).
inline std::vector<double> row_of(const LinOp& a, std::size_t i) {
  if (i >= a.rows()) throw DimensionError("row index out of range");
  std::vector<double> e(a.rows(), 0.0);
  e[i] = 1.0;
  return a.apply_t(e);
}

// Cap-guarded dense form, built one basis column at a time so only the
// target allocation is ever resident.
inline DenseMatrix materialize(const LinOp& a) {
  check_dense_alloc(a.rows(), a.cols());
  DenseMatrix m(a.rows(), a.cols());
  std::vector<double> e(a.cols(), 0.0), col(a.rows());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    e[j] = 1.0;
    a.apply_into(e, col);
    e[j] = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) m.at(i, j) = col[i];
  }
  return m;
}

namespace detail {

// A^T A as a dense block.  Kronecker factors split: the gram of a kronecker
// product is the kronecker product of the grams, so children are resolved
// first and combined entrywise, which keeps the big-row case (huge stacks of
// measurements over a modest domain) cheap.
inline DenseMatrix gram_dense(const BodyPtr& b);

inline DenseMatrix gram_generic(const OpBody& a) {
  check_dense_alloc(a.cols(), a.cols());
  DenseMatrix g(a.cols(), a.cols());
  std::vector<double> e(a.cols(), 0.0), mid(a.rows()), col(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    e[j] = 1.0;
    a.apply(e, mid);
    e[j] = 0.0;
    a.apply_t(mid, col);
    for (std::size_t i = 0; i < a.cols(); ++i) g.at(i, j) = col[i];
  }
  return g;
}

inline DenseMatrix gram_dense(const BodyPtr& b) {
  if (auto* k = dynamic_cast<const KroneckerBody*>(b.get())) {
    DenseMatrix ga = gram_dense(k->left());
    DenseMatrix gb = gram_dense(k->right());
    check_dense_alloc(ga.rows * gb.rows, ga.cols * gb.cols);
    DenseMatrix g(ga.rows * gb.rows, ga.cols * gb.cols);
    for (std::size_t ia = 0; ia < ga.rows; ++ia)
      for (std::size_t ja = 0; ja < ga.cols; ++ja) {
        double v = ga.at(ia, ja);
        if (v == 0.0) continue;
        for (std::size_t ib = 0; ib < gb.rows; ++ib)
          for (std::size_t jb = 0; jb < gb.cols; ++jb)
            g.at(ia * gb.rows + ib, ja * gb.cols + jb) = v * gb.at(ib, jb);
      }
    return g;
  }
  return gram_generic(*b);
}

inline std::optional<double> KroneckerBody::l1_direct() const {
  return LinOp(a_).sensitivity_l1() * LinOp(b_).sensitivity_l1();
}
inline std::optional<double> KroneckerBody::l2_direct() const {
  return LinOp(a_).sensitivity_l2() * LinOp(b_).sensitivity_l2();
}
inline std::optional<double> WeightedBody::l1_direct() const {
  return std::fabs(w_) * LinOp(a_).sensitivity_l1();
}
inline std::optional<double> WeightedBody::l2_direct() const {
  return std::fabs(w_) * LinOp(a_).sensitivity_l2();
}

}  // namespace detail

inline BodyPtr OpBody::fallback_entrywise(bool square) const {
  check_dense_alloc(rows_, cols_);
  DenseMatrix m(rows_, cols_);
  std::vector<double> e(cols_, 0.0), col(rows_);
  for (std::size_t j = 0; j < cols_; ++j) {
    e[j] = 1.0;
    apply(e, col);
    e[j] = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
      m.at(i, j) = square ? col[i] * col[i] : std::fabs(col[i]);
  }
  return std::make_shared<detail::DenseBody>(std::move(m));
}

inline DenseMatrix gram(const LinOp& a) {
  return detail::gram_dense(a.body_ptr());
}

}  // namespace privq

#endif  // PRIVQ_LINOP_HPP_
