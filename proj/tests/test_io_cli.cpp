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

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "privq/eval.hpp"
#include "privq/io.hpp"

using Catch::Approx;
using privq::Budget;
using privq::DataVector;
using privq::Json;
using privq::Kernel;
using privq::LinOp;

namespace fs = std::filesystem;

namespace {

// Scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("privq_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

// Runs the installed binary with the given arguments, captures combined
// output, and returns the exit code.
int run_cli(const std::string& args, const TempDir& dir,
            std::string* output = nullptr, const std::string& env = "") {
  const std::string capture = dir.file("cli_capture.txt");
  std::string cmd = env.empty() ? std::string() : env + " ";
  cmd += std::string(PRIVQ_CLI_PATH) + " " + args + " > " + capture + " 2>&1";
  int raw = std::system(cmd.c_str());
  if (output) *output = privq::read_text_file(capture);
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool matvec_close(const LinOp& a, const LinOp& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  privq::Rng rng = privq::make_rng(99);
  std::vector<double> x(a.cols());
  for (double& v : x) v = privq::uniform01(rng) - 0.5;
  auto ya = a.apply(x), yb = b.apply(x);
  for (std::size_t i = 0; i < ya.size(); ++i)
    if (std::fabs(ya[i] - yb[i]) > 1e-12) return false;
  return true;
}

DataVector make_vec(std::vector<std::size_t> shape, std::vector<double> vals) {
  DataVector v;
  v.domain_shape = std::move(shape);
  v.values = std::move(vals);
  return v;
}

}  // namespace

TEST_CASE("operator descriptions round-trip through JSON") {
  privq::DenseMatrix dm(2, 3);
  dm.a = {1.5, -2.0, 0.0, 0.25, 4.0, -0.125};
  std::vector<privq::Triplet> trips{{0, 1, 2.0}, {1, 0, -1.0}, {2, 3, 0.5}};
  std::vector<LinOp> zoo = {
      privq::identity(5),
      privq::total(4),
      privq::prefix(6),
      privq::suffix(6),
      privq::wavelet(8),
      privq::ones(3, 4),
      privq::dense(dm),
      privq::sparse(3, 4, trips),
      privq::kronecker(privq::prefix(3), privq::identity(2)),
      privq::union_of({privq::total(4), privq::identity(4)}),
      privq::product(privq::sparse(3, 4, trips), privq::prefix(4)),
      privq::weighted(2.5, privq::prefix(4)),
      privq::wavelet(4).transpose(),
      privq::h2(16),
      privq::stripe_select({3, 4}, 1, privq::h2(4)),
  };
  for (const auto& op : zoo) {
    Json j = privq::linop_to_json(op);
    LinOp back = privq::linop_from_json(j);
    INFO(j.dump());
    CHECK(back.signature() == op.signature());
    CHECK(matvec_close(back, op));
    // A second hop must be textually stable.
    CHECK(privq::linop_to_json(back).dump() == j.dump());
  }
}

TEST_CASE("operator parser rejects malformed descriptions") {
  CHECK_THROWS_AS(privq::linop_from_json(Json{{"kind", "sphinx"}}),
                  privq::ConfigError);
  CHECK_THROWS_AS(privq::linop_from_json(Json::parse(R"({"params":{"n":3}})")),
                  privq::ConfigError);
  Json bad_kron = privq::linop_to_json(
      privq::kronecker(privq::identity(2), privq::identity(2)));
  bad_kron["children"].erase(1);
  CHECK_THROWS_AS(privq::linop_from_json(bad_kron), privq::ConfigError);
  Json bad_dense = Json::parse(
      R"({"kind":"dense","params":{"rows":2,"cols":2,"values":[1,2,3]}})");
  CHECK_THROWS_AS(privq::linop_from_json(bad_dense), privq::ConfigError);
}

TEST_CASE("schema configs round-trip and report domain sizes") {
  std::vector<privq::Attribute> attrs;
  attrs.push_back({"color", privq::Categorical{{"red", "green", "blue"}}});
  attrs.push_back({"age", privq::UniformRanges{0.0, 100.0, 5}});
  privq::Schema s(attrs);
  privq::Schema back = privq::schema_from_json(privq::schema_to_json(s));
  REQUIRE(back.arity() == 2);
  CHECK(back.at(0).name == "color");
  CHECK(back.at(1).name == "age");
  CHECK(back.domain_shape() == std::vector<std::size_t>{3, 5});

  // A survey-scale config stays metadata only: the domain size is known
  // without touching any records.
  Json big = Json::parse(R"({"attributes":[
      {"name":"zone","type":"range","lo":0,"hi":1,"bins":1400},
      {"name":"code","type":"range","lo":0,"hi":1,"bins":1000}]})");
  CHECK(privq::schema_from_json(big).domain_size() == 1400000);

  CHECK_THROWS_AS(privq::schema_from_json(Json::parse(
                      R"({"attributes":[{"name":"x","type":"mystery"}]})")),
                  privq::ConfigError);
}

TEST_CASE("histograms round-trip through JSON and binary files") {
  TempDir dir;
  DataVector v = make_vec({2, 3}, {1.0, 0.0, 2.5, 3.0, 0.0, 4.0});

  DataVector jv = privq::data_vector_from_json(privq::data_vector_to_json(v));
  CHECK(jv.domain_shape == v.domain_shape);
  CHECK(jv.values == v.values);

  const std::string jpath = dir.file("h.json");
  privq::write_data_vector(jpath, v, privq::VectorFormat::kJson);
  DataVector jr = privq::read_data_vector(jpath);
  CHECK(jr.values == v.values);

  const std::string bpath = dir.file("h.bin");
  privq::write_data_vector(bpath, v, privq::VectorFormat::kBinary);
  REQUIRE(fs::exists(bpath + ".meta.json"));
  DataVector br = privq::read_data_vector(bpath);
  CHECK(br.domain_shape == v.domain_shape);
  CHECK(br.values == v.values);

  // Truncated payloads must be caught, not silently zero-filled.
  privq::write_text_file(bpath, "abc");
  CHECK_THROWS_AS(privq::read_data_vector(bpath), privq::ConfigError);
}

TEST_CASE("partition maps round-trip through JSON") {
  privq::PartitionMap pm;
  pm.p = 3;
  pm.group_of = {0, 0, 1, 2, 2, 1};
  privq::PartitionMap back =
      privq::partition_from_json(privq::partition_to_json(pm));
  CHECK(back.p == 3);
  CHECK(back.group_of == pm.group_of);

  Json bad = privq::partition_to_json(pm);
  bad["p"] = 2;  // group id 2 now out of range
  CHECK_THROWS(privq::partition_from_json(bad));
}

TEST_CASE("measurement bundles round-trip with their noise scales") {
  DataVector v = make_vec({8}, {5, 0, 3, 1, 0, 0, 2, 4});
  Kernel k(std::move(v), Budget::of(1, 1), 17);
  privq::MeasurementSet ms;
  ms.add(privq::take_laplace(k, k.root(), privq::h2(8), Budget::of(1, 2)));
  ms.add(privq::take_laplace(k, k.root(), privq::total(8), Budget::of(1, 4)));

  Json j = privq::bundle_to_json(ms);
  REQUIRE(j.at("items").size() == 2);
  privq::MeasurementSet back = privq::bundle_from_json(j);
  REQUIRE(back.items.size() == 2);
  CHECK(back.stacked().signature() == ms.stacked().signature());
  CHECK(back.stacked_y() == ms.stacked_y());
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = ms.items[i];
    const auto& b = back.items[i];
    CHECK(b.base_id == a.base_id);
    double want = a.q.sensitivity_l1() / a.eps.value();
    double got = b.q.sensitivity_l1() / b.eps.value();
    CHECK(got == Approx(want).epsilon(1e-12));
  }

  // Items claiming different base sources cannot form one system.
  Json mixed = privq::bundle_to_json(ms);
  mixed["items"][1]["source_id"] = 42;
  CHECK_THROWS_AS(privq::bundle_from_json(mixed), privq::LineageError);
}

TEST_CASE("estimates serialize from both solvers") {
  DataVector v = make_vec({4}, {1, 2, 3, 4});
  auto y = privq::prefix(4).apply(v.values);
  privq::Estimate e = privq::to_estimate(privq::lsmr(privq::prefix(4), y));
  CHECK(e.converged);
  privq::Estimate back = privq::estimate_from_json(privq::estimate_to_json(e));
  CHECK(back.x_hat == e.x_hat);
  CHECK(back.iterations == e.iterations);
  CHECK(back.residual_norm == e.residual_norm);
  CHECK(back.converged == e.converged);

  privq::Estimate en = privq::to_estimate(privq::nnls(privq::prefix(4), y));
  for (double x : en.x_hat) CHECK(x >= -1e-9);
}

TEST_CASE("workload registry resolves names against a domain shape") {
  const std::vector<std::size_t> line{8};
  CHECK(privq::workload_from_spec("identity", line).rows() == 8);
  CHECK(privq::workload_from_spec("total", line).rows() == 1);
  CHECK(privq::workload_from_spec("prefix", line).rows() == 8);
  CHECK(privq::workload_from_spec("h2", line).cols() == 8);
  CHECK(privq::workload_from_spec("hb", line).cols() == 8);
  CHECK(privq::workload_from_spec("wavelet", line).rows() == 8);

  const std::vector<std::size_t> grid{4, 4};
  LinOp qt = privq::workload_from_spec("quadtree", grid);
  CHECK(qt.cols() == 16);
  CHECK_THROWS_AS(privq::workload_from_spec("quadtree", line),
                  privq::ConfigError);

  LinOp ar = privq::workload_from_spec("allrange:12", line);
  CHECK(ar.rows() == 12);
  // The collection is a fixed public object, not a per-run draw.
  CHECK(privq::workload_from_spec("allrange:12", line).signature() ==
        ar.signature());
  CHECK_THROWS_AS(privq::workload_from_spec("allrange:x", line),
                  privq::ConfigError);

  const std::vector<std::size_t> rect{3, 4};
  CHECK(privq::workload_from_spec("marginals:0+1", rect).rows() == 7);
  CHECK(privq::workload_from_spec("marginals:0,1", rect).rows() == 12);
  CHECK_THROWS_AS(privq::workload_from_spec("marginals:5", rect),
                  privq::ConfigError);

  LinOp st = privq::workload_from_spec("stripe:1:h2", rect);
  CHECK(st.cols() == 12);
  CHECK(st.rows() == 3 * privq::h2(4).rows());
  CHECK_THROWS_AS(privq::workload_from_spec("stripe:9:h2", rect),
                  privq::ConfigError);

  for (const char* name : {"ugrid", "agrid", "greedyh"})
    CHECK_THROWS_AS(privq::workload_from_spec(name, grid), privq::ConfigError);
  CHECK_THROWS_AS(privq::workload_from_spec("sphinx", line),
                  privq::ConfigError);
}

// ---------------------------------------------------------------------------
// Subprocess tests against the installed binary.

TEST_CASE("cli vectorize produces the expected histogram") {
  TempDir dir;
  privq::write_text_file(
      dir.file("s.json"),
      R"({"attributes":[{"name":"k","type":"categorical",
          "values":["a","b","c","d"]}]})");
  privq::write_text_file(dir.file("d.csv"), "k\na\na\na\n");

  std::string out;
  int rc = run_cli("vectorize --data " + dir.file("d.csv") + " --schema " +
                       dir.file("s.json") + " --out " + dir.file("h.json"),
                   dir, &out);
  REQUIRE(rc == 0);
  DataVector v = privq::read_data_vector(dir.file("h.json"));
  CHECK(v.domain_shape == std::vector<std::size_t>{4});
  CHECK(v.values == std::vector<double>{3, 0, 0, 0});

  // Binary emission reads back identically.
  rc = run_cli("vectorize --data " + dir.file("d.csv") + " --schema " +
                   dir.file("s.json") + " --out " + dir.file("h.bin") +
                   " --format bin",
               dir, &out);
  REQUIRE(rc == 0);
  CHECK(privq::read_data_vector(dir.file("h.bin")).values == v.values);
}

TEST_CASE("cli vectorize reports the offending row") {
  TempDir dir;
  privq::write_text_file(dir.file("s.json"),
                         R"({"attributes":[{"name":"k","type":"categorical",
                             "values":["a","b"]}]})");
  privq::write_text_file(dir.file("d.csv"), "k\na\nzebra\nb\n");
  std::string out;
  int rc = run_cli("vectorize --data " + dir.file("d.csv") + " --schema " +
                       dir.file("s.json") + " --out " + dir.file("h.json"),
                   dir, &out);
  CHECK(rc == 2);
  CHECK(out.find("row 1") != std::string::npos);
  CHECK(out.find("zebra") != std::string::npos);
}

namespace {

// 2-d histogram file shared by the run/sweep cases.
std::string write_grid_hist(const TempDir& dir) {
  DataVector v = make_vec({8, 8}, std::vector<double>(64, 0.0));
  privq::Rng rng = privq::make_rng(5);
  for (std::size_t i = 0; i < 64; ++i)
    v.values[i] = std::floor(privq::uniform01(rng) * 20.0);
  const std::string path = dir.file("grid.json");
  privq::write_data_vector(path, v, privq::VectorFormat::kJson);
  return path;
}

}  // namespace

TEST_CASE("cli run is byte-deterministic under a fixed seed") {
  TempDir dir;
  const std::string hist = write_grid_hist(dir);
  const std::string base = "run --plan hb_striped --data " + hist +
                           " --workload stripe:0:prefix --epsilon 0.5";
  REQUIRE(run_cli(base + " --seed 3 --out " + dir.file("a.json"), dir) == 0);
  REQUIRE(run_cli(base + " --seed 3 --out " + dir.file("b.json"), dir) == 0);
  REQUIRE(run_cli(base + " --seed 4 --out " + dir.file("c.json"), dir) == 0);
  CHECK(privq::read_text_file(dir.file("a.json")) ==
        privq::read_text_file(dir.file("b.json")));
  CHECK(privq::read_text_file(dir.file("a.json")) !=
        privq::read_text_file(dir.file("c.json")));
}

TEST_CASE("cli run emits results with accounting attached") {
  TempDir dir;
  const std::string hist = write_grid_hist(dir);
  std::string out;
  int rc = run_cli("run --plan hb --data " + hist +
                       " --workload allrange:20 --epsilon 0.8 --seed 11",
                   dir, &out);
  REQUIRE(rc == 0);
  Json j = Json::parse(out);
  CHECK(j.at("plan") == "hb");
  CHECK(j.at("epsilon").get<double>() == Approx(0.8));
  CHECK(j.at("budget_spent").get<double>() == Approx(0.8));
  CHECK(j.at("x_hat").at("values").size() == 64);
  CHECK(j.at("workload_answers").size() == 20);
  CHECK(j.at("inference_converged").is_boolean());
  REQUIRE(!j.at("transcript").empty());
  CHECK(j.at("transcript").at(0).contains("answer_digest"));
  REQUIRE(!j.at("ledger").empty());
  CHECK(j.at("ledger").at(0).at("source_id") == 0);
  CHECK(j.at("ledger").at(0).at("kind") == "vector");

  // Domain reduction shows up as a derived source in the ledger.
  rc = run_cli("run --plan identity --data " + hist +
                   " --workload total --epsilon 0.8 --seed 11 "
                   "--workload-reduce",
               dir, &out);
  REQUIRE(rc == 0);
  j = Json::parse(out);
  bool saw_reduced = false;
  for (const auto& row : j.at("ledger"))
    if (row.at("label") == "vreduce") saw_reduced = true;
  CHECK(saw_reduced);
}

TEST_CASE("cli run rejects unusable invocations") {
  TempDir dir;
  const std::string hist = write_grid_hist(dir);
  std::string out;
  CHECK(run_cli("run --plan hb --data " + hist + " --epsilon 0", dir, &out) ==
        2);
  CHECK(run_cli("run --plan hb --data " + hist + " --epsilon -1", dir,
                &out) == 2);
  CHECK(run_cli("run --plan sphinx --data " + hist + " --epsilon 1", dir,
                &out) == 2);
  CHECK(run_cli("run --plan hb --data " + hist +
                    " --workload sphinx --epsilon 1",
                dir, &out) == 2);
  CHECK(run_cli("run --plan hb --data " + dir.file("missing.json") +
                    " --epsilon 1",
                dir, &out) == 2);
  CHECK(run_cli("run --plan hb --epsilon 1", dir, &out) == 2);  // no --data
}

TEST_CASE("cli sweep emits one row per plan, epsilon, seed") {
  TempDir dir;
  const std::string hist = write_grid_hist(dir);
  std::string out;
  int rc = run_cli("sweep --plan identity,hb --epsilon 0.5,2.0 --seeds 0,1,2 "
                       "--data " +
                       hist + " --workload prefix --out " + dir.file("s.jsonl"),
                   dir, &out);
  REQUIRE(rc == 0);
  auto rows = lines_of(privq::read_text_file(dir.file("s.jsonl")));
  REQUIRE(rows.size() == 12);
  std::size_t hb_rows = 0;
  for (const auto& line : rows) {
    Json j = Json::parse(line);
    for (const char* field :
         {"plan", "dataset", "workload", "epsilon", "seed", "error",
          "runtime_ms"})
      CHECK(j.contains(field));
    CHECK(j.at("error").get<double>() >= 0.0);
    if (j.at("plan") == "hb") ++hb_rows;
  }
  CHECK(hb_rows == 6);

  // Error columns are functions of (plan, epsilon, seed): rerunning the
  // sweep reproduces them even though timings move.
  REQUIRE(run_cli("sweep --plan identity,hb --epsilon 0.5,2.0 --seeds 0,1,2 "
                      "--data " +
                      hist + " --workload prefix --out " + dir.file("t.jsonl"),
                  dir, &out) == 0);
  auto rows2 = lines_of(privq::read_text_file(dir.file("t.jsonl")));
  REQUIRE(rows2.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(Json::parse(rows[i]).at("error").get<double>() ==
          Json::parse(rows2[i]).at("error").get<double>());
  }

  CHECK(run_cli("sweep --plan identity --epsilon 1 --seeds bad --data " + hist,
                dir, &out) == 2);
}

TEST_CASE("cli bench reports per-representation rows and honors caps") {
  TempDir dir;
  std::string out;
  int rc = run_cli("bench --sizes 32 --out " + dir.file("b.jsonl"), dir, &out);
  REQUIRE(rc == 0);
  auto rows = lines_of(privq::read_text_file(dir.file("b.jsonl")));
  REQUIRE(rows.size() == 6);  // {prefix, h2} x {implicit, sparse, dense}
  for (const auto& line : rows) {
    Json j = Json::parse(line);
    CHECK(j.at("status") == "ok");
    CHECK(j.at("matvec_ms").get<double>() >= 0.0);
    CHECK(j.at("inference_ms").get<double>() >= 0.0);
  }

  // A tight memory cap knocks out the materialized forms with a reason.
  rc = run_cli("bench --sizes 64 --out " + dir.file("c.jsonl"), dir, &out,
               "PRIVQ_MEM_CAP_BYTES=5000");
  REQUIRE(rc == 0);
  std::size_t skipped = 0;
  for (const auto& line : lines_of(privq::read_text_file(dir.file("c.jsonl")))) {
    Json j = Json::parse(line);
    if (j.at("repr") == "implicit") {
      CHECK(j.at("status") == "ok");
    } else {
      CHECK(j.at("status") == "skipped");
      CHECK(j.at("reason") == "memory-cap");
      CHECK(!j.contains("matvec_ms"));
      ++skipped;
    }
  }
  CHECK(skipped == 4);

  // A zero timeout turns every surviving row into a bare timeout marker.
  rc = run_cli("bench --sizes 32 --timeout 0 --out " + dir.file("d.jsonl"),
               dir, &out);
  REQUIRE(rc == 0);
  for (const auto& line : lines_of(privq::read_text_file(dir.file("d.jsonl")))) {
    Json j = Json::parse(line);
    CHECK(j.at("status") == "timeout");
    CHECK(!j.contains("matvec_ms"));
    CHECK(!j.contains("inference_ms"));
  }
}

TEST_CASE("cli honors the memory cap variable for dense work") {
  TempDir dir;
  std::string out;
  // Identity inference on 64 cells easily fits any sane cap; the variable
  // must still parse strictly.
  int rc = run_cli("bench --sizes 16", dir, &out, "PRIVQ_MEM_CAP_BYTES=abc");
  CHECK(rc == 2);
  CHECK(out.find("PRIVQ_MEM_CAP_BYTES") != std::string::npos);
}
