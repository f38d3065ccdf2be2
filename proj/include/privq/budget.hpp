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

#ifndef PRIVQ_BUDGET_HPP_
#define PRIVQ_BUDGET_HPP_

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>

#include "privq/errors.hpp"

namespace privq {

// Exact nonnegative rational used for privacy-budget accounting.  Budget
// comparisons drive grant/deny decisions, so they must not be subject to
// floating-point drift; everything here is exact.  Conversion to double
// happens only at the point where a noise scale is computed.
class Budget {
 public:
  using Rat = boost::multiprecision::cpp_rational;

  Budget() : r_(0) {}
  explicit Budget(const Rat& r) : r_(r) {
    if (r_ < 0) throw ConfigError("budget must be nonnegative");
  }

  static Budget zero() { return Budget(); }

  static Budget of(std::int64_t num, std::int64_t den) {
    if (den <= 0) throw ConfigError("budget denominator must be positive");
    return Budget(Rat(num, den));
  }

  // Parses a decimal string such as "1", "0.25", or "2.5e-1" exactly.
  static Budget parse(const std::string& s) {
    std::size_t i = 0;
    auto fail = [&]() -> Budget {
      throw ConfigError("cannot parse budget value '" + s + "'");
    };
    if (s.empty()) return fail();
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') {
      neg = s[i] == '-';
      ++i;
    }
    boost::multiprecision::cpp_int mant = 0;
    int frac_digits = 0;
    bool any = false;
    for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) {
      mant = mant * 10 + (s[i] - '0');
      any = true;
    }
    if (i < s.size() && s[i] == '.') {
      ++i;
      for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) {
        mant = mant * 10 + (s[i] - '0');
        ++frac_digits;
        any = true;
      }
    }
    if (!any) return fail();
    long exp10 = 0;
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
      ++i;
      bool eneg = false;
      if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
        eneg = s[i] == '-';
        ++i;
      }
      if (i >= s.size()) return fail();
      long e = 0;
      for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) {
        e = e * 10 + (s[i] - '0');
        if (e > 1000000) return fail();
      }
      exp10 = eneg ? -e : e;
    }
    if (i != s.size()) return fail();
    long shift = exp10 - frac_digits;
    boost::multiprecision::cpp_int num = mant, den = 1;
    for (long k = 0; k < shift; ++k) num *= 10;
    for (long k = 0; k < -shift; ++k) den *= 10;
    Rat r(num, den);
    if (neg && r != 0) throw ConfigError("budget must be nonnegative");
    return Budget(r);
  }

  const Rat& rat() const { return r_; }
  double value() const { return r_.convert_to<double>(); }
  bool is_zero() const { return r_ == 0; }

  // Exact "p/q" form, used for transcripts and the ledger.
  std::string str() const {
    return numerator(r_).str() + "/" + denominator(r_).str();
  }

  Budget operator+(const Budget& o) const { return Budget(r_ + o.r_); }
  Budget operator-(const Budget& o) const {
    if (r_ < o.r_) throw ConfigError("budget subtraction went negative");
    return Budget(r_ - o.r_);
  }
  Budget operator*(const Budget& o) const { return Budget(r_ * o.r_); }
  Budget times(std::int64_t num, std::int64_t den) const {
    if (den <= 0) throw ConfigError("budget denominator must be positive");
    Rat r = r_ * Rat(num, den);
    return Budget(r);
  }
  friend bool operator==(const Budget& a, const Budget& b) { return a.r_ == b.r_; }
  friend bool operator!=(const Budget& a, const Budget& b) { return a.r_ != b.r_; }
  friend bool operator<(const Budget& a, const Budget& b) { return a.r_ < b.r_; }
  friend bool operator<=(const Budget& a, const Budget& b) { return a.r_ <= b.r_; }
  friend bool operator>(const Budget& a, const Budget& b) { return a.r_ > b.r_; }
  friend bool operator>=(const Budget& a, const Budget& b) { return a.r_ >= b.r_; }

 private:
  Rat r_;
};

// Edge stabilities multiply budget requests, so they share the exact
// representation.  A Stability is any nonnegative rational; doubles coming
// from matrix column norms convert exactly (every finite double is rational).
inline Budget::Rat exact_from_double(double v) {
  if (!std::isfinite(v)) throw ConfigError("stability must be finite");
  if (v == 0.0) return Budget::Rat(0);
  int exp = 0;
  double m = std::frexp(v, &exp);  // v = m * 2^exp, 0.5 <= |m| < 1
  // 53 doublings make the mantissa integral.
  boost::multiprecision::cpp_int num =
      static_cast<std::int64_t>(std::ldexp(m, 53));
  int e2 = exp - 53;
  boost::multiprecision::cpp_int den = 1;
  if (e2 >= 0) {
    num <<= e2;
  } else {
    den <<= -e2;
  }
  return Budget::Rat(num, den);
}

}  // namespace privq

#endif  // PRIVQ_BUDGET_HPP_
