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

#ifndef PRIVQ_MEASUREMENT_HPP_
#define PRIVQ_MEASUREMENT_HPP_

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "privq/budget.hpp"
#include "privq/errors.hpp"
#include "privq/kernel.hpp"
#include "privq/linop.hpp"
#include "privq/rng.hpp"

namespace privq {

// Noisy linear measurement of a histogram: y = Q x + (s1(Q)/eps) b with b
// standard Laplace, where s1 is the max absolute column sum.  Scaling by the
// column norm makes the per-invocation privacy cost exactly eps regardless
// of how many rows Q has.
class VectorLaplace : public PrivateQuery {
 public:
  VectorLaplace(LinOp q, Budget eps) : q_(std::move(q)), eps_(eps) {}

  std::string name() const override { return "vector_laplace"; }
  Budget epsilon() const override { return eps_; }

  QueryAnswer run(const QueryCtx& ctx) const override {
    if (!ctx.vec) throw LineageError("vector_laplace needs a vector source");
    if (q_.cols() != ctx.vec->size())
      throw DimensionError("query width does not match the vector");
    std::vector<double> y = q_.apply(ctx.vec->values);
    double scale = q_.sensitivity_l1() / eps_.value();
    for (double& v : y) v += laplace(*ctx.rng, scale);
    return y;
  }

  const LinOp& query() const { return q_; }

 private:
  LinOp q_;
  Budget eps_;
};

// Noisy row count of a table source, or noisy total of a vector source.
// Either way one record shifts the answer by one, so the Laplace scale is
// 1/eps.
class NoisyCount : public PrivateQuery {
 public:
  explicit NoisyCount(Budget eps) : eps_(eps) {}

  std::string name() const override { return "noisy_count"; }
  Budget epsilon() const override { return eps_; }

  QueryAnswer run(const QueryCtx& ctx) const override {
    double c;
    if (ctx.vec)
      c = ctx.vec->total();
    else if (ctx.table)
      c = static_cast<double>(ctx.table->rows.size());
    else
      throw LineageError("noisy_count needs a table or vector source");
    return c + laplace(*ctx.rng, 1.0 / eps_.value());
  }

 private:
  Budget eps_;
};

// One completed measurement, kept with enough lineage to re-express it
// against the base histogram the inference step reconstructs.
struct MeasurementItem {
  LinOp q;                  // as issued against the measured source
  std::vector<double> y;    // noisy answers
  Budget eps;
  LinOp chain;              // measured source in terms of the lineage base
  std::uint64_t base_id = 0;

  // Query mapping the base histogram to this measurement's answers.
  LinOp effective() const {
    if (chain.kind() == "identity") return q;
    return product(q, chain);
  }
};

// A batch of measurements over one lineage base, stackable into a single
// least-squares system.
struct MeasurementSet {
  std::vector<MeasurementItem> items;

  bool empty() const { return items.empty(); }

  void add(MeasurementItem item) {
    if (!items.empty() && item.base_id != items.front().base_id)
      throw LineageError("measurements span different lineage bases");
    items.push_back(std::move(item));
  }

  std::size_t base_cols() const {
    if (items.empty()) throw LineageError("empty measurement set");
    return items.front().chain.cols();
  }

  LinOp stacked() const {
    if (items.empty()) throw LineageError("empty measurement set");
    if (items.size() == 1) return items.front().effective();
    std::vector<LinOp> ops;
    ops.reserve(items.size());
    for (const auto& it : items) ops.push_back(it.effective());
    return union_of(ops);
  }

  std::vector<double> stacked_y() const {
    std::vector<double> out;
    for (const auto& it : items)
      out.insert(out.end(), it.y.begin(), it.y.end());
    return out;
  }

  Budget total_eps() const {
    Budget b;
    for (const auto& it : items) b = b + it.eps;
    return b;
  }
};

// Issues a Laplace vector measurement against src and packages the answer
// with its lineage.  Throws BudgetExceeded when the kernel denies it.
inline MeasurementItem take_laplace(Kernel& k, SourceRef src, const LinOp& q,
                                    Budget eps) {
  VectorLaplace pq(q, eps);
  QueryAnswer ans = k.measure(src, pq);
  MeasurementItem item;
  item.q = q;
  item.y = std::get<std::vector<double>>(std::move(ans));
  item.eps = eps;
  item.chain = k.chain(src);
  item.base_id = k.chain_base(src).id;
  return item;
}

}  // namespace privq

#endif  // PRIVQ_MEASUREMENT_HPP_
