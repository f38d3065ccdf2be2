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

#ifndef PRIVQ_KERNEL_HPP_
#define PRIVQ_KERNEL_HPP_

#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "privq/budget.hpp"
#include "privq/data_vector.hpp"
#include "privq/errors.hpp"
#include "privq/linop.hpp"
#include "privq/partition_map.hpp"
#include "privq/rng.hpp"
#include "privq/schema.hpp"
#include "privq/table.hpp"

namespace privq {

// Handle to a private data source held by the kernel.  Clients only ever see
// these ids; the underlying rows and histograms never cross the boundary.
struct SourceRef {
  std::uint64_t id = 0;
  friend bool operator==(const SourceRef& a, const SourceRef& b) {
    return a.id == b.id;
  }
};

// Everything a measurement may hand back across the trust boundary.
using QueryAnswer =
    std::variant<double, std::vector<double>, PartitionMap, std::size_t>;

// View of the protected payload passed to a query after its budget request
// was granted.  Exactly one of table/vec is set for measurable sources.
struct QueryCtx {
  const Table* table = nullptr;
  const DataVector* vec = nullptr;
  Rng* rng = nullptr;
};

// A differentially private operation.  epsilon() is the cost charged at the
// source it runs against; the kernel scales it through the lineage.
class PrivateQuery {
 public:
  virtual ~PrivateQuery() = default;
  virtual std::string name() const = 0;
  virtual Budget epsilon() const = 0;
  virtual QueryAnswer run(const QueryCtx& ctx) const = 0;
};

// One granted measurement, as recorded in the public transcript.
// root_charge is how much of the global budget the grant actually consumed
// after stability scaling and sibling sharing.
struct TranscriptRow {
  std::uint64_t seq = 0;
  std::uint64_t source = 0;
  std::string query;
  Budget cost;
  Budget root_charge;
  std::uint64_t answer_digest = 0;
};

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t digest_answer(const QueryAnswer& a) {
  struct V {
    std::uint64_t operator()(double d) const { return fnv1a(&d, sizeof d); }
    std::uint64_t operator()(const std::vector<double>& v) const {
      std::uint64_t n = v.size();
      std::uint64_t h = fnv1a(&n, sizeof n);
      return v.empty() ? h : fnv1a(v.data(), v.size() * sizeof(double), h);
    }
    std::uint64_t operator()(const PartitionMap& pm) const {
      std::uint64_t p = pm.p;
      std::uint64_t h = fnv1a(&p, sizeof p);
      return pm.group_of.empty()
                 ? h
                 : fnv1a(pm.group_of.data(),
                         pm.group_of.size() * sizeof(std::uint32_t), h);
    }
    std::uint64_t operator()(std::size_t s) const {
      std::uint64_t v = s;
      return fnv1a(&v, sizeof v);
    }
  };
  return std::visit(V{}, a);
}

}  // namespace detail

// Protected kernel.  Owns the root table, every derived source, and the
// budget ledger.  All public methods are safe to call from multiple threads.
//
// Budget semantics: a request of sigma at a source is forwarded toward the
// root, multiplied by each edge's stability on the way.  Sources created by
// a partition share their slot: the hidden parent forwards only the amount
// by which the requesting child's total would exceed the running maximum
// over its siblings.  A request is granted when the accumulated charge fits
// under the global budget; denial changes no state anywhere.
class Kernel {
 public:
  Kernel(Table root_table, Budget eps_total, std::uint64_t seed)
      : eps_total_(eps_total), rng_(make_rng(seed)) {
    if (!root_table.schema) throw ConfigError("root table has no schema");
    auto n = std::make_unique<Node>();
    n->id = 0;
    n->parent = 0;
    n->kind = NodeKind::kTable;
    n->table = std::make_shared<const Table>(std::move(root_table));
    n->label = "root";
    nodes_.push_back(std::move(n));
  }

  // Vector-rooted kernel: the protected payload enters as a histogram that
  // was materialized elsewhere.  The root starts its own vector lineage with
  // an identity chain, so measurement and partition calls work unchanged.
  Kernel(DataVector root_vec, Budget eps_total, std::uint64_t seed)
      : eps_total_(eps_total), rng_(make_rng(seed)) {
    root_vec.validate();
    std::size_t n = root_vec.size();
    auto node = std::make_unique<Node>();
    node->id = 0;
    node->parent = 0;
    node->kind = NodeKind::kVector;
    node->vec = std::make_shared<const DataVector>(std::move(root_vec));
    node->base = 0;
    node->chain = identity(n);
    node->label = "root";
    nodes_.push_back(std::move(node));
  }

  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  SourceRef root() const { return {0}; }

  bool holds_vector(SourceRef s) const {
    std::lock_guard<std::mutex> lk(mu_);
    return node(s.id).kind == NodeKind::kVector;
  }
  Budget total_budget() const { return eps_total_; }

  Budget consumed(SourceRef s) const {
    std::lock_guard<std::mutex> lk(mu_);
    return node(s.id).consumed;
  }
  Budget consumed_root() const {
    std::lock_guard<std::mutex> lk(mu_);
    return nodes_[0]->consumed;
  }
  Budget remaining() const {
    std::lock_guard<std::mutex> lk(mu_);
    return eps_total_ - nodes_[0]->consumed;
  }

  // --- public, data-independent metadata -----------------------------------

  const Schema& schema_of(SourceRef s) const {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = node(s.id);
    if (v.kind != NodeKind::kTable)
      throw LineageError("source does not hold a table");
    return *v.table->schema;
  }

  std::vector<std::size_t> domain_shape(SourceRef s) const {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = node(s.id);
    if (v.kind != NodeKind::kVector)
      throw LineageError("source does not hold a vector");
    return v.vec->domain_shape;
  }

  std::size_t domain_size(SourceRef s) const {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = node(s.id);
    if (v.kind != NodeKind::kVector)
      throw LineageError("source does not hold a vector");
    return v.vec->size();
  }

  // Operator mapping the lineage's base histogram to this vector source.
  LinOp chain(SourceRef s) const {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = node(s.id);
    if (v.kind != NodeKind::kVector || !v.chain)
      throw LineageError("source has no vector lineage");
    return *v.chain;
  }

  SourceRef chain_base(SourceRef s) const {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = node(s.id);
    if (v.kind != NodeKind::kVector)
      throw LineageError("source has no vector lineage");
    return {v.base};
  }

  std::vector<TranscriptRow> transcript() const {
    std::lock_guard<std::mutex> lk(mu_);
    return transcript_;
  }

  // One row per source in creation order: the public face of the budget
  // ledger.  Field values are data-independent, so dumping them is free.
  struct LedgerRow {
    std::uint64_t id = 0;
    std::uint64_t parent = 0;
    std::string kind;
    std::string label;
    Budget stability;
    Budget consumed;
  };

  std::vector<LedgerRow> ledger() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<LedgerRow> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) {
      const char* kind = n->kind == NodeKind::kTable    ? "table"
                         : n->kind == NodeKind::kVector ? "vector"
                                                        : "dummy";
      out.push_back(
          {n->id, n->parent, kind, n->label, n->stability, n->consumed});
    }
    return out;
  }

  // --- table transformations (stability in parentheses) --------------------

  // (1) Rows passing the predicate.
  SourceRef where(SourceRef s, const Predicate& pred) {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = table_node(s.id);
    Table t = table_where(*v.table, pred);
    return add_table(s.id, std::move(t), Budget::of(1, 1), "where");
  }

  // (1) Projection onto the named attributes.
  SourceRef select(SourceRef s, const std::vector<std::string>& attrs) {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = table_node(s.id);
    Table t = table_select(*v.table, attrs);
    return add_table(s.id, std::move(t), Budget::of(1, 1), "select");
  }

  // (2) One row per distinct key combination.  Changing one input row moves
  // it between at most two groups, hence the doubled stability.
  SourceRef group_by(SourceRef s, const std::vector<std::string>& keys) {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = table_node(s.id);
    Table t = table_group_by(*v.table, keys);
    return add_table(s.id, std::move(t), Budget::of(2, 1), "group_by");
  }

  // (1) Disjoint children by value code of one attribute.  The children
  // share their parent's budget slot: only the maximum over them is charged
  // upward, since a row lands in exactly one child.
  std::vector<SourceRef> split_by_partition(
      SourceRef s, const std::string& attr,
      const std::vector<std::vector<std::size_t>>& groups) {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = table_node(s.id);
    std::vector<Table> parts = table_partition(*v.table, attr, groups);
    std::uint64_t dummy = add_dummy(s.id, "partition");
    std::vector<SourceRef> out;
    out.reserve(parts.size());
    for (auto& part : parts)
      out.push_back(
          add_table(dummy, std::move(part), Budget::of(1, 1), "partition"));
    return out;
  }

  // --- vector transformations ----------------------------------------------

  // (1) Histogram over the table's full domain.  Starts a vector lineage:
  // later measurements on descendants are expressible against this base.
  SourceRef vectorize(SourceRef s) {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = table_node(s.id);
    DataVector dv = vectorize_table(*v.table);
    std::size_t n = dv.size();
    return add_vector(s.id, std::move(dv), Budget::of(1, 1), identity(n),
                      /*base=*/std::nullopt, "vectorize");
  }

  // (1) Group sums under the partition map.
  SourceRef vreduce(SourceRef s, const PartitionMap& pm) {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = vector_node(s.id);
    if (pm.n() != v.vec->size())
      throw DimensionError("partition length does not match the vector");
    pm.validate();
    DataVector dv;
    dv.values = reduce_values(pm, v.vec->values);
    dv.domain_shape = {pm.p};
    LinOp step = reduce_op(pm);
    return add_vector(s.id, std::move(dv), Budget::of(1, 1),
                      compose(step, *v.chain), v.base, "vreduce");
  }

  // (1) Disjoint subvectors under the partition map, sharing one budget slot
  // the same way partitioned tables do.
  std::vector<SourceRef> vsplit(SourceRef s, const PartitionMap& pm) {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = vector_node(s.id);
    if (pm.n() != v.vec->size())
      throw DimensionError("partition length does not match the vector");
    pm.validate();
    auto pieces = split_values(pm, v.vec->values);
    std::uint64_t dummy = add_dummy(s.id, "vsplit");
    std::vector<SourceRef> out;
    out.reserve(pm.p);
    for (std::size_t g = 0; g < pm.p; ++g) {
      DataVector dv;
      dv.values = std::move(pieces[g]);
      dv.domain_shape = {dv.values.size()};
      LinOp sel = select_group_op(pm, g);
      out.push_back(add_vector(dummy, std::move(dv), Budget::of(1, 1),
                               compose(sel, *node(s.id).chain), node(s.id).base,
                               "vsplit"));
    }
    return out;
  }

  // (max absolute column sum of t) Linear map of the vector.  The stability
  // is the operator's column norm taken exactly as a rational, so repeated
  // charges stay exact.
  SourceRef vtransform(SourceRef s, const LinOp& t) {
    std::lock_guard<std::mutex> lk(mu_);
    const Node& v = vector_node(s.id);
    if (t.cols() != v.vec->size())
      throw DimensionError("transform width does not match the vector");
    DataVector dv;
    dv.values = t.apply(v.vec->values);
    dv.domain_shape = {t.rows()};
    Budget stab{exact_from_double(t.sensitivity_l1())};
    return add_vector(s.id, std::move(dv), stab, compose(t, *v.chain), v.base,
                      "vtransform");
  }

  // --- measurement ----------------------------------------------------------

  // Runs q against the source if the scaled cost fits in the remaining
  // budget.  Throws BudgetExceeded on denial without touching the data.
  QueryAnswer measure(SourceRef s, const PrivateQuery& q) {
    QueryAnswer out;
    if (!try_measure(s, q, &out))
      throw BudgetExceeded("budget denied for query " + q.name());
    return out;
  }

  // Like measure, but reports denial through the return value.
  bool try_measure(SourceRef s, const PrivateQuery& q, QueryAnswer* out) {
    std::lock_guard<std::mutex> lk(mu_);
    Node& v = node(s.id);
    if (v.kind == NodeKind::kDummy)
      throw LineageError("cannot measure a partition placeholder");
    Budget sigma = q.epsilon();
    if (sigma <= Budget::zero())
      throw ConfigError("query cost must be positive");
    Budget before = nodes_[0]->consumed;
    if (!ask(v, sigma)) return false;
    QueryCtx ctx;
    ctx.table = v.table.get();
    ctx.vec = v.vec.get();
    ctx.rng = &rng_;
    QueryAnswer ans = q.run(ctx);
    TranscriptRow row;
    row.seq = transcript_.size();
    row.source = s.id;
    row.query = q.name();
    row.cost = sigma;
    row.root_charge = nodes_[0]->consumed - before;
    row.answer_digest = detail::digest_answer(ans);
    transcript_.push_back(std::move(row));
    if (out) *out = std::move(ans);
    return true;
  }

 private:
  enum class NodeKind { kTable, kVector, kDummy };

  struct Node {
    std::uint64_t id = 0;
    std::uint64_t parent = 0;
    NodeKind kind = NodeKind::kTable;
    Budget stability;        // edge multiplier toward the parent
    bool parent_is_dummy = false;
    Budget consumed;         // granted so far at this node
    std::shared_ptr<const Table> table;
    std::shared_ptr<const DataVector> vec;
    std::uint64_t base = 0;  // head of the vector lineage
    std::optional<LinOp> chain;
    std::string label;
  };

  Node& node(std::uint64_t id) {
    if (id >= nodes_.size()) throw LineageError("unknown source id");
    return *nodes_[id];
  }
  const Node& node(std::uint64_t id) const {
    if (id >= nodes_.size()) throw LineageError("unknown source id");
    return *nodes_[id];
  }
  const Node& table_node(std::uint64_t id) const {
    const Node& v = node(id);
    if (v.kind != NodeKind::kTable)
      throw LineageError("transformation needs a table source");
    return v;
  }
  const Node& vector_node(std::uint64_t id) const {
    const Node& v = node(id);
    if (v.kind != NodeKind::kVector)
      throw LineageError("transformation needs a vector source");
    return v;
  }

  static LinOp compose(const LinOp& step, const LinOp& base) {
    if (base.kind() == "identity") return step;
    return product(step, base);
  }

  std::uint64_t add_dummy(std::uint64_t parent, const std::string& label) {
    auto n = std::make_unique<Node>();
    n->id = nodes_.size();
    n->parent = parent;
    n->kind = NodeKind::kDummy;
    n->stability = Budget::of(1, 1);
    n->label = label;
    nodes_.push_back(std::move(n));
    return nodes_.back()->id;
  }

  SourceRef add_table(std::uint64_t parent, Table t, Budget stab,
                      const std::string& label) {
    auto n = std::make_unique<Node>();
    n->id = nodes_.size();
    n->parent = parent;
    n->kind = NodeKind::kTable;
    n->stability = stab;
    n->parent_is_dummy = node(parent).kind == NodeKind::kDummy;
    n->table = std::make_shared<const Table>(std::move(t));
    n->label = label;
    nodes_.push_back(std::move(n));
    return {nodes_.back()->id};
  }

  SourceRef add_vector(std::uint64_t parent, DataVector dv, Budget stab,
                       LinOp chain, std::optional<std::uint64_t> base,
                       const std::string& label) {
    dv.validate();
    auto n = std::make_unique<Node>();
    n->id = nodes_.size();
    n->parent = parent;
    n->kind = NodeKind::kVector;
    n->stability = stab;
    n->parent_is_dummy = node(parent).kind == NodeKind::kDummy;
    n->vec = std::make_shared<const DataVector>(std::move(dv));
    n->base = base ? *base : n->id;
    n->chain = std::move(chain);
    n->label = label;
    nodes_.push_back(std::move(n));
    return {nodes_.back()->id};
  }

  // Core budget walk.  v wants to grow its own consumption by sigma; the
  // charge is forwarded up and applied only if the root accepts.  All
  // mutations happen on the unwind, so a denied request leaves every
  // counter untouched.
  bool ask(Node& v, const Budget& sigma) {
    if (v.id == 0) {
      if (nodes_[0]->consumed + sigma > eps_total_) return false;
      nodes_[0]->consumed = nodes_[0]->consumed + sigma;
      return true;
    }
    Node& p = node(v.parent);
    Budget fwd;
    if (v.parent_is_dummy) {
      Budget want = v.consumed + sigma;
      fwd = want > p.consumed ? want - p.consumed : Budget::zero();
    } else {
      fwd = v.stability * sigma;
    }
    if (!ask(p, fwd)) return false;
    v.consumed = v.consumed + sigma;
    return true;
  }

  Budget eps_total_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<TranscriptRow> transcript_;
  Rng rng_;
  mutable std::mutex mu_;
};

}  // namespace privq

#endif  // PRIVQ_KERNEL_HPP_
