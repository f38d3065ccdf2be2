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

#ifndef PRIVQ_IO_HPP_
#define PRIVQ_IO_HPP_

// Codecs for everything that crosses the process boundary: operator trees,
// schema configs, histograms (JSON or raw binary), partition maps,
// measurement bundles, estimates, transcripts, and the named workload
// registry shared by the command-line tools.  All emitters use insertion-
// ordered JSON so a fixed input always serializes to identical bytes.

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "privq/budget.hpp"
#include "privq/data_vector.hpp"
#include "privq/errors.hpp"
#include "privq/inference.hpp"
#include "privq/kernel.hpp"
#include "privq/linop.hpp"
#include "privq/measurement.hpp"
#include "privq/partition_map.hpp"
#include "privq/plans.hpp"
#include "privq/schema.hpp"
#include "privq/selection.hpp"

namespace privq {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Small file helpers.

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  out.flush();
  if (!out) throw ConfigError("short write to " + path);
}

inline Json parse_json(const std::string& text, const std::string& what) {
  Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("malformed JSON in " + what);
  return j;
}

namespace detail {

inline std::size_t parse_size(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ConfigError("bad " + what + " '" + s + "'");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operator trees: nested {kind, params, children}.

inline Json linop_to_json(const LinOp& op);

namespace detail {

inline Json body_to_json(const OpBody& b) {
  Json j;
  j["kind"] = b.kind();
  j["params"] = Json::object();
  j["children"] = Json::array();
  const std::string k = b.kind();
  if (k == "identity" || k == "total" || k == "prefix" || k == "suffix" ||
      k == "wavelet") {
    j["params"]["n"] = b.cols();
  } else if (k == "ones") {
    j["params"]["rows"] = b.rows();
    j["params"]["cols"] = b.cols();
  } else if (auto* d = dynamic_cast<const DenseBody*>(&b)) {
    j["params"]["rows"] = d->matrix().rows;
    j["params"]["cols"] = d->matrix().cols;
    j["params"]["values"] = d->matrix().a;
  } else if (auto* s = dynamic_cast<const SparseBody*>(&b)) {
    const Csr& m = s->matrix();
    j["params"]["rows"] = m.rows;
    j["params"]["cols"] = m.cols;
    Json trips = Json::array();
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p)
        trips.push_back(Json::array({r, m.col[p], m.val[p]}));
    j["params"]["triplets"] = std::move(trips);
  } else if (auto* t = dynamic_cast<const TransposeBody*>(&b)) {
    j["children"].push_back(body_to_json(*t->child()));
  } else if (auto* kr = dynamic_cast<const KroneckerBody*>(&b)) {
    j["children"].push_back(body_to_json(*kr->left()));
    j["children"].push_back(body_to_json(*kr->right()));
  } else if (auto* u = dynamic_cast<const UnionBody*>(&b)) {
    for (const auto& c : u->children())
      j["children"].push_back(body_to_json(*c));
  } else if (auto* p = dynamic_cast<const ProductBody*>(&b)) {
    j["params"]["binary"] = p->binary01();
    j["children"].push_back(body_to_json(*p->left()));
    j["children"].push_back(body_to_json(*p->right()));
  } else if (auto* w = dynamic_cast<const WeightedBody*>(&b)) {
    j["params"]["weight"] = w->weight();
    j["children"].push_back(body_to_json(*w->child()));
  } else {
    throw ConfigError("operator kind '" + k + "' has no serialization");
  }
  return j;
}

}  // namespace detail

inline Json linop_to_json(const LinOp& op) {
  return detail::body_to_json(op.body());
}

inline LinOp linop_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("kind"))
    throw ConfigError("operator description needs a 'kind'");
  const std::string k = j.at("kind").get<std::string>();
  const Json params = j.contains("params") ? j.at("params") : Json::object();
  const Json kids = j.contains("children") ? j.at("children") : Json::array();
  auto want_kids = [&](std::size_t c) {
    if (!kids.is_array() || kids.size() != c)
      throw ConfigError("operator '" + k + "' expects " + std::to_string(c) +
                        " children");
  };
  auto n_param = [&]() { return params.at("n").get<std::size_t>(); };
  if (k == "identity") return identity(n_param());
  if (k == "total") return total(n_param());
  if (k == "prefix") return prefix(n_param());
  if (k == "suffix") return suffix(n_param());
  if (k == "wavelet") return wavelet(n_param());
  if (k == "ones")
    return ones(params.at("rows").get<std::size_t>(),
                params.at("cols").get<std::size_t>());
  if (k == "dense") {
    DenseMatrix m(params.at("rows").get<std::size_t>(),
                  params.at("cols").get<std::size_t>());
    auto vals = params.at("values").get<std::vector<double>>();
    if (vals.size() != m.rows * m.cols)
      throw ConfigError("dense operator has " + std::to_string(vals.size()) +
                        " values for a " + std::to_string(m.rows) + "x" +
                        std::to_string(m.cols) + " shape");
    m.a = std::move(vals);
    return dense(std::move(m));
  }
  if (k == "sparse") {
    std::size_t rows = params.at("rows").get<std::size_t>();
    std::size_t cols = params.at("cols").get<std::size_t>();
    std::vector<Triplet> trips;
    for (const auto& t : params.at("triplets")) {
      if (!t.is_array() || t.size() != 3)
        throw ConfigError("sparse triplet must be [row, col, value]");
      trips.push_back({t.at(0).get<std::size_t>(), t.at(1).get<std::size_t>(),
                       t.at(2).get<double>()});
    }
    return sparse(rows, cols, std::move(trips));
  }
  if (k == "transpose") {
    want_kids(1);
    return linop_from_json(kids.at(0)).transpose();
  }
  if (k == "kronecker") {
    want_kids(2);
    return kronecker(linop_from_json(kids.at(0)), linop_from_json(kids.at(1)));
  }
  if (k == "union") {
    if (!kids.is_array() || kids.empty())
      throw ConfigError("union needs at least one child");
    std::vector<LinOp> cs;
    cs.reserve(kids.size());
    for (const auto& c : kids) cs.push_back(linop_from_json(c));
    return union_of(cs);
  }
  if (k == "product") {
    want_kids(2);
    bool binary = params.contains("binary") && params.at("binary").get<bool>();
    return product(linop_from_json(kids.at(0)), linop_from_json(kids.at(1)),
                   binary);
  }
  if (k == "weighted") {
    want_kids(1);
    return weighted(params.at("weight").get<double>(),
                    linop_from_json(kids.at(0)));
  }
  throw ConfigError("unknown operator kind '" + k + "'");
}

// ---------------------------------------------------------------------------
// Schema configs: {attributes: [{name, type, values | lo, hi, bins}]}.

inline Json schema_to_json(const Schema& s) {
  Json attrs = Json::array();
  for (const auto& a : s.attributes()) {
    Json ja;
    ja["name"] = a.name;
    if (a.categorical()) {
      ja["type"] = "categorical";
      ja["values"] = std::get<Categorical>(a.domain).values;
    } else {
      const auto& r = std::get<UniformRanges>(a.domain);
      ja["type"] = "range";
      ja["lo"] = r.lo;
      ja["hi"] = r.hi;
      ja["bins"] = r.bins;
    }
    attrs.push_back(std::move(ja));
  }
  Json j;
  j["attributes"] = std::move(attrs);
  return j;
}

inline Schema schema_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("attributes"))
    throw ConfigError("schema config needs an 'attributes' array");
  std::vector<Attribute> attrs;
  for (const auto& ja : j.at("attributes")) {
    Attribute a;
    a.name = ja.at("name").get<std::string>();
    const std::string type = ja.at("type").get<std::string>();
    if (type == "categorical") {
      a.domain = Categorical{ja.at("values").get<std::vector<std::string>>()};
    } else if (type == "range") {
      a.domain = UniformRanges{ja.at("lo").get<double>(),
                               ja.at("hi").get<double>(),
                               ja.at("bins").get<std::size_t>()};
    } else {
      throw ConfigError("attribute '" + a.name + "' has unknown type '" +
                        type + "'");
    }
    attrs.push_back(std::move(a));
  }
  return Schema(std::move(attrs));
}

inline Schema read_schema_file(const std::string& path) {
  return schema_from_json(parse_json(read_text_file(path), path));
}

// ---------------------------------------------------------------------------
// Histograms: JSON {domain_shape, values}, or raw little-endian float64 with
// a {domain_shape, count, encoding} sidecar at <path>.meta.json.  The reader
// picks the format by probing for the sidecar.

enum class VectorFormat { kJson, kBinary };

inline Json data_vector_to_json(const DataVector& v) {
  Json j;
  j["domain_shape"] = v.domain_shape;
  j["values"] = v.values;
  return j;
}

inline DataVector data_vector_from_json(const Json& j) {
  DataVector v;
  v.domain_shape = j.at("domain_shape").get<std::vector<std::size_t>>();
  v.values = j.at("values").get<std::vector<double>>();
  v.validate();
  return v;
}

inline void write_data_vector(const std::string& path, const DataVector& v,
                              VectorFormat format) {
  static_assert(std::endian::native == std::endian::little,
                "binary vector files are little-endian");
  if (format == VectorFormat::kJson) {
    write_text_file(path, data_vector_to_json(v).dump(2) + "\n");
    return;
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(v.values.data()),
              static_cast<std::streamsize>(v.values.size() * sizeof(double)));
    out.flush();
    if (!out) throw ConfigError("short write to " + path);
  }
  Json meta;
  meta["domain_shape"] = v.domain_shape;
  meta["count"] = v.size();
  meta["encoding"] = "float64-le";
  write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

inline DataVector read_data_vector(const std::string& path) {
  const std::string meta_path = path + ".meta.json";
  if (std::filesystem::exists(meta_path)) {
    Json meta = parse_json(read_text_file(meta_path), meta_path);
    if (meta.contains("encoding") &&
        meta.at("encoding").get<std::string>() != "float64-le")
      throw ConfigError(meta_path + " declares an unsupported encoding");
    DataVector v;
    v.domain_shape = meta.at("domain_shape").get<std::vector<std::size_t>>();
    const std::size_t count = meta.at("count").get<std::size_t>();
    v.values.resize(count);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    in.read(reinterpret_cast<char*>(v.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
      throw ConfigError(path + " is shorter than its sidecar declares");
    v.validate();
    return v;
  }
  return data_vector_from_json(parse_json(read_text_file(path), path));
}

// ---------------------------------------------------------------------------
// Partition maps: {p, group_of}.

inline Json partition_to_json(const PartitionMap& pm) {
  Json j;
  j["p"] = pm.p;
  j["group_of"] = pm.group_of;
  return j;
}

inline PartitionMap partition_from_json(const Json& j) {
  PartitionMap pm;
  pm.p = j.at("p").get<std::size_t>();
  pm.group_of = j.at("group_of").get<std::vector<std::uint32_t>>();
  pm.validate();
  return pm;
}

// ---------------------------------------------------------------------------
// Measurement bundles: the unit handed to inference.  Each item carries the
// query re-expressed against the lineage base, its noisy answers, the
// per-entry Laplace scale actually applied, and the base source id.

inline Json bundle_to_json(const MeasurementSet& ms) {
  Json items = Json::array();
  for (const auto& it : ms.items) {
    Json ji;
    ji["q"] = linop_to_json(it.effective());
    ji["y"] = it.y;
    ji["noise_scale"] = it.q.sensitivity_l1() / it.eps.value();
    ji["source_id"] = it.base_id;
    items.push_back(std::move(ji));
  }
  Json j;
  j["items"] = std::move(items);
  return j;
}

inline MeasurementSet bundle_from_json(const Json& j) {
  MeasurementSet ms;
  for (const auto& ji : j.at("items")) {
    MeasurementItem item;
    item.q = linop_from_json(ji.at("q"));
    item.y = ji.at("y").get<std::vector<double>>();
    if (item.y.size() != item.q.rows())
      throw ConfigError("bundle item has " + std::to_string(item.y.size()) +
                        " answers for " + std::to_string(item.q.rows()) +
                        " query rows");
    const double scale = ji.at("noise_scale").get<double>();
    if (!(scale > 0.0))
      throw ConfigError("bundle item needs a positive noise_scale");
    // The loaded query already absorbs its lineage, so the budget that
    // produced this scale is sensitivity / scale.
    item.eps = Budget{exact_from_double(item.q.sensitivity_l1() / scale)};
    item.chain = identity(item.q.cols());
    item.base_id = ji.at("source_id").get<std::uint64_t>();
    ms.add(std::move(item));
  }
  return ms;
}

// ---------------------------------------------------------------------------
// Estimates.

struct Estimate {
  std::vector<double> x_hat;
  std::size_t iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
};

inline Estimate to_estimate(const LsmrResult& r) {
  return {r.x, r.iters, r.normr, r.istop != 7};
}

inline Estimate to_estimate(const NnlsResult& r) {
  return {r.x, r.iters, r.kkt, r.converged};
}

inline Json estimate_to_json(const Estimate& e) {
  Json j;
  j["x_hat"] = e.x_hat;
  j["iterations"] = e.iterations;
  j["residual_norm"] = e.residual_norm;
  j["converged"] = e.converged;
  return j;
}

inline Estimate estimate_from_json(const Json& j) {
  Estimate e;
  e.x_hat = j.at("x_hat").get<std::vector<double>>();
  e.iterations = j.at("iterations").get<std::size_t>();
  e.residual_norm = j.at("residual_norm").get<double>();
  e.converged = j.at("converged").get<bool>();
  return e;
}

// ---------------------------------------------------------------------------
// Kernel accounting dumps.

inline Json transcript_to_json(const std::vector<TranscriptRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json jr;
    jr["seq"] = r.seq;
    jr["source"] = r.source;
    jr["query"] = r.query;
    jr["cost"] = r.cost.value();
    jr["root_charge"] = r.root_charge.value();
    jr["answer_digest"] = r.answer_digest;
    out.push_back(std::move(jr));
  }
  return out;
}

inline Json ledger_to_json(const std::vector<Kernel::LedgerRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json jr;
    jr["source_id"] = r.id;
    jr["parent_id"] = r.parent;
    jr["kind"] = r.kind;
    jr["label"] = r.label;
    jr["stability"] = r.stability.value();
    jr["budget"] = r.consumed.value();
    out.push_back(std::move(jr));
  }
  return out;
}

// Core result fields of a finished run.  Wall-clock timings are deliberately
// not serialized so identical inputs produce identical bytes.
inline Json plan_result_to_json(const PlanResult& r) {
  Json j;
  j["plan"] = r.plan;
  j["budget_spent"] = r.budget_spent.value();
  j["inference_converged"] = r.inference_converged;
  j["x_hat"] = data_vector_to_json(r.x_hat);
  j["workload_answers"] = r.workload_answers;
  j["transcript"] = transcript_to_json(r.transcript);
  return j;
}

// ---------------------------------------------------------------------------
// Named workload registry.  A name must denote one fixed matrix everywhere,
// so the randomized collection uses a constant internal seed: the workload
// is a public object and run seeds only drive noise.

inline constexpr std::uint64_t kAllrangeSeed = 0xA11CE5ULL;

inline const std::vector<std::string>& workload_names() {
  static const std::vector<std::string> names = {
      "identity",        "total",
      "prefix",          "h2",
      "hb",              "wavelet",
      "quadtree",        "allrange:<count>",
      "marginals:<spec>", "stripe:<axis>:<sub>"};
  return names;
}

inline LinOp workload_from_spec(const std::string& spec,
                                const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw DimensionError("empty domain shape");
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  if (spec == "identity") return identity(n);
  if (spec == "total") return total(n);
  if (spec == "prefix") return prefix(n);
  if (spec == "h2") return h2(n);
  if (spec == "hb") return hb(n);
  if (spec == "wavelet") return wavelet(n);
  if (spec == "quadtree") {
    if (shape.size() != 2)
      throw ConfigError("workload 'quadtree' needs a 2-d domain");
    return quadtree(shape[0], shape[1]);
  }
  if (spec == "ugrid" || spec == "agrid" || spec == "greedyh")
    throw ConfigError("'" + spec +
                      "' picks measurements inside a plan and does not define "
                      "a workload; choose a data-independent workload name");
  if (spec.starts_with("allrange:")) {
    std::size_t k = detail::parse_size(spec.substr(9), "range count");
    return random_ranges(n, k, kAllrangeSeed);
  }
  if (spec.starts_with("marginals:")) {
    // Groups separated by '+', axes within a group by ','.  "0+1" asks for
    // the two one-way marginals of a 2-d domain; "0,1" for their joint.
    std::vector<std::vector<bool>> keeps;
    std::stringstream groups(spec.substr(10));
    std::string group;
    while (std::getline(groups, group, '+')) {
      std::vector<bool> keep(shape.size(), false);
      if (!group.empty()) {
        std::stringstream axes(group);
        std::string axis;
        while (std::getline(axes, axis, ',')) {
          std::size_t a = detail::parse_size(axis, "marginal axis");
          if (a >= shape.size())
            throw ConfigError("marginal axis " + axis +
                              " is out of range for a " +
                              std::to_string(shape.size()) + "-d domain");
          keep[a] = true;
        }
      }
      keeps.push_back(std::move(keep));
    }
    if (keeps.empty()) throw ConfigError("empty marginals spec");
    return marginals_workload(shape, keeps);
  }
  if (spec.starts_with("stripe:")) {
    const std::string rest = spec.substr(7);
    const std::size_t colon = rest.find(':');
    if (colon == std::string::npos)
      throw ConfigError("stripe workload is 'stripe:<axis>:<sub>'");
    std::size_t axis = detail::parse_size(rest.substr(0, colon), "stripe axis");
    if (axis >= shape.size())
      throw ConfigError("stripe axis " + std::to_string(axis) +
                        " is out of range for a " +
                        std::to_string(shape.size()) + "-d domain");
    LinOp sub = workload_from_spec(rest.substr(colon + 1), {shape[axis]});
    return stripe_select(shape, axis, sub);
  }
  throw ConfigError("unknown workload '" + spec + "'");
}

}  // namespace privq

#endif  // PRIVQ_IO_HPP_
