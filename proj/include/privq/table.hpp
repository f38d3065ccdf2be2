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

#ifndef PRIVQ_TABLE_HPP_
#define PRIVQ_TABLE_HPP_

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "privq/errors.hpp"
#include "privq/schema.hpp"

namespace privq {

// A cell holds the raw numeric value for range attributes and the value code
// for categorical ones.
using Cell = std::variant<double, std::int64_t>;
using Row = std::vector<Cell>;

struct Table {
  std::shared_ptr<const Schema> schema;
  std::vector<Row> rows;
  // Filled by group_by: per-row group sizes.  Ignored by every other
  // transformation; kept so grouped results stay inspectable.
  std::vector<std::size_t> group_counts;
};

// Value code of row r's attribute a (bin index for numeric attributes).
inline std::size_t cell_code(const Schema& s, const Row& r, std::size_t a) {
  if (s.at(a).categorical())
    return static_cast<std::size_t>(std::get<std::int64_t>(r[a]));
  return s.bin_of(a, std::get<double>(r[a]));
}

// ---------------------------------------------------------------------------
// Predicates: conjunctions of per-attribute tests, resolved against a schema
// at construction so row evaluation is cheap.

class Predicate {
 public:
  static Predicate always(bool v) {
    Predicate p;
    p.const_ = v ? 1 : 0;
    return p;
  }
  static Predicate eq(const std::string& attr, const std::string& value) {
    Predicate p;
    p.atoms_.push_back({attr, Eq{value}, {}});
    return p;
  }
  static Predicate between(const std::string& attr, double lo, double hi) {
    Predicate p;
    p.atoms_.push_back({attr, {}, Range{lo, hi}});
    return p;
  }
  Predicate operator&&(const Predicate& o) const {
    Predicate p;
    if (const_ == 0 || o.const_ == 0) return always(false);
    p.const_ = (const_ == 1 && o.const_ == 1) ? 1 : -1;
    if (const_ == -1) p.atoms_ = atoms_;
    if (o.const_ == -1)
      p.atoms_.insert(p.atoms_.end(), o.atoms_.begin(), o.atoms_.end());
    if (!p.atoms_.empty()) p.const_ = -1;
    return p;
  }

  // Binds attribute names and categorical values to the schema; throws
  // ConfigError for unknown names, Error for out-of-domain values.
  struct Bound {
    struct BAtom {
      std::size_t attr;
      bool is_eq;
      std::size_t code;  // eq
      double lo, hi;     // closed numeric interval
    };
    int const_;
    std::vector<BAtom> atoms;
    bool matches(const Schema& s, const Row& r) const {
      if (const_ == 0) return false;
      for (const auto& a : atoms) {
        if (a.is_eq) {
          if (cell_code(s, r, a.attr) != a.code) return false;
        } else {
          double v = std::get<double>(r[a.attr]);
          if (!(v >= a.lo && v <= a.hi)) return false;
        }
      }
      return true;
    }
  };

  Bound bind(const Schema& s) const {
    Bound b;
    b.const_ = const_;
    for (const auto& a : atoms_) {
      std::size_t idx = s.index_of(a.attr);
      Bound::BAtom ba{};
      ba.attr = idx;
      if (a.eq.has_value()) {
        if (!s.at(idx).categorical())
          throw ConfigError("equality predicate needs a categorical attribute");
        ba.is_eq = true;
        ba.code = s.code_of(idx, a.eq->value);
      } else {
        if (s.at(idx).categorical())
          throw ConfigError("range predicate needs a numeric attribute");
        ba.is_eq = false;
        ba.lo = a.range->lo;
        ba.hi = a.range->hi;
      }
      b.atoms.push_back(ba);
    }
    return b;
  }

 private:
  struct Eq {
    std::string value;
  };
  struct Range {
    double lo, hi;
  };
  struct Atom {
    std::string attr;
    std::optional<Eq> eq;
    std::optional<Range> range;
  };
  int const_ = -1;  // -1: evaluate atoms, 0: false, 1: true
  std::vector<Atom> atoms_;
};

// ---------------------------------------------------------------------------
// Pure table transformations.  The kernel wraps these with lineage and
// stability registration; nothing here is privileged.

inline Table table_where(const Table& t, const Predicate& pred) {
  auto b = pred.bind(*t.schema);
  Table out;
  out.schema = t.schema;
  for (const auto& r : t.rows)
    if (b.matches(*t.schema, r)) out.rows.push_back(r);
  return out;
}

inline Table table_select(const Table& t, const std::vector<std::string>& attrs) {
  if (attrs.empty()) throw ConfigError("select needs at least one attribute");
  std::vector<std::size_t> idx;
  std::vector<Attribute> kept;
  for (const auto& name : attrs) {
    idx.push_back(t.schema->index_of(name));
    kept.push_back(t.schema->at(idx.back()));
  }
  Table out;
  out.schema = std::make_shared<Schema>(std::move(kept));
  out.rows.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    Row nr;
    nr.reserve(idx.size());
    for (std::size_t i : idx) nr.push_back(r[i]);
    out.rows.push_back(std::move(nr));
  }
  return out;
}

// One output row per distinct key combination, in first-appearance order,
// with the member count alongside.
inline Table table_group_by(const Table& t,
                            const std::vector<std::string>& keys) {
  if (keys.empty()) throw ConfigError("group_by needs at least one key");
  std::vector<std::size_t> idx;
  std::vector<Attribute> kept;
  for (const auto& name : keys) {
    idx.push_back(t.schema->index_of(name));
    kept.push_back(t.schema->at(idx.back()));
  }
  Table out;
  out.schema = std::make_shared<Schema>(std::move(kept));
  std::map<std::vector<std::size_t>, std::size_t> seen;  // key codes -> out row
  for (const auto& r : t.rows) {
    std::vector<std::size_t> key;
    key.reserve(idx.size());
    for (std::size_t i : idx) key.push_back(cell_code(*t.schema, r, i));
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(key, out.rows.size());
      Row nr;
      for (std::size_t i : idx) nr.push_back(r[i]);
      out.rows.push_back(std::move(nr));
      out.group_counts.push_back(1);
    } else {
      out.group_counts[it->second]++;
    }
  }
  return out;
}

// Splits by the value code of one attribute.  `groups` must cover the
// attribute's domain exactly once; children keep the parent schema.
inline std::vector<Table> table_partition(
    const Table& t, const std::string& attr,
    const std::vector<std::vector<std::size_t>>& groups) {
  std::size_t a = t.schema->index_of(attr);
  std::size_t dom = t.schema->at(a).size();
  std::vector<std::size_t> owner(dom, groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t code : groups[g]) {
      if (code >= dom) throw PartitionError("group value out of domain");
      if (owner[code] != groups.size())
        throw PartitionError("groups overlap on a value");
      owner[code] = g;
    }
  for (std::size_t c = 0; c < dom; ++c)
    if (owner[c] == groups.size())
      throw PartitionError("groups do not cover the attribute domain");
  std::vector<Table> out(groups.size());
  for (auto& o : out) o.schema = t.schema;
  for (const auto& r : t.rows)
    out[owner[cell_code(*t.schema, r, a)]].rows.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion.  Header row names the columns; every schema attribute must
// be present.  A row that fails to parse aborts ingestion with its index.

inline Table read_csv_table(std::istream& in,
                            std::shared_ptr<const Schema> schema) {
  auto split = [](const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    f.push_back(cur);
    return f;
  };
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv input is empty");
  auto header = split(line);
  std::vector<std::size_t> col_of(schema->arity());
  for (std::size_t a = 0; a < schema->arity(); ++a) {
    bool found = false;
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == schema->at(a).name) {
        col_of[a] = c;
        found = true;
        break;
      }
    if (!found)
      throw ConfigError("csv is missing column '" + schema->at(a).name + "'");
  }
  Table t;
  t.schema = std::move(schema);
  std::size_t row_idx = 0;
  while (std::getline(in, line)) {
    if (line.empty()) {
      ++row_idx;
      continue;
    }
    auto fields = split(line);
    Row r(t.schema->arity());
    for (std::size_t a = 0; a < t.schema->arity(); ++a) {
      if (col_of[a] >= fields.size())
        throw IngestError(row_idx, "missing field for '" +
                                       t.schema->at(a).name + "'");
      const std::string& f = fields[col_of[a]];
      try {
        if (t.schema->at(a).categorical()) {
          r[a] = static_cast<std::int64_t>(t.schema->code_of(a, f));
        } else {
          std::size_t used = 0;
          double v = std::stod(f, &used);
          if (used != f.size()) throw Error("trailing characters");
          t.schema->bin_of(a, v);  // range check
          r[a] = v;
        }
      } catch (const std::exception& e) {
        throw IngestError(row_idx, std::string(e.what()));
      }
    }
    t.rows.push_back(std::move(r));
    ++row_idx;
  }
  return t;
}

}  // namespace privq

#endif  // PRIVQ_TABLE_HPP_
