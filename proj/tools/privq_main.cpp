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

// privq: batch front end for private workload answering.
//
//   privq vectorize --data d.csv --schema s.json --out hist.json
//   privq run --plan hb --data hist.json --workload prefix --epsilon 0.5
//   privq sweep --plan hb,mwem --epsilon 0.1,1.0 --seeds 0,1,2 --data ...
//   privq bench --sizes 1024,4096 --timeout 1000 --out bench.jsonl
//
// Exit codes: 0 success, 2 usage or input error, 3 budget exhausted,
// 4 memory cap or timeout.  Every command is a pure function of its flags,
// its input files, and --seed.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "privq/eval.hpp"
#include "privq/io.hpp"

namespace {

using privq::Json;

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  }
};

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  privq::write_text_file(out_path, text);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (out.empty()) throw privq::ConfigError("empty list '" + s + "'");
  return out;
}

privq::Budget positive_budget(const std::string& s) {
  privq::Budget b = privq::Budget::parse(s);
  if (!(b.value() > 0.0))
    throw privq::ConfigError("epsilon must be positive, got '" + s + "'");
  return b;
}

// ---------------------------------------------------------------------------

int cmd_vectorize(const std::string& data_path, const std::string& schema_path,
                  const std::string& out_path, const std::string& format) {
  auto schema = std::make_shared<const privq::Schema>(
      privq::read_schema_file(schema_path));
  std::ifstream csv(data_path, std::ios::binary);
  if (!csv) throw privq::ConfigError("cannot open " + data_path);
  privq::Table table = privq::read_csv_table(csv, schema);
  privq::DataVector vec = privq::vectorize_table(table);
  std::cerr << "vectorized " << table.rows.size() << " records into "
            << vec.size() << " cells\n";
  if (format == "bin") {
    if (out_path.empty())
      throw privq::ConfigError("--format bin needs --out for its sidecar");
    privq::write_data_vector(out_path, vec, privq::VectorFormat::kBinary);
  } else if (out_path.empty()) {
    std::cout << privq::data_vector_to_json(vec).dump(2) << "\n";
  } else {
    privq::write_data_vector(out_path, vec, privq::VectorFormat::kJson);
  }
  return 0;
}

int cmd_run(const std::string& plan, const std::string& data_path,
            const std::string& workload, const std::string& eps_str,
            std::uint64_t seed, bool reduce, const std::string& out_path) {
  privq::Budget eps = positive_budget(eps_str);
  privq::DataVector vec = privq::read_data_vector(data_path);
  const std::vector<std::size_t> shape = vec.domain_shape;
  const double mass = vec.total();
  privq::LinOp w = privq::workload_from_spec(workload, shape);

  privq::Kernel kernel(std::move(vec), eps, seed);
  privq::PlanParams params;
  params.workload_reduce = reduce;
  params.n_total = mass;
  privq::PlanResult result = privq::run_plan(kernel, plan, w, eps, params);

  Json j;
  j["command"] = "run";
  j["plan"] = plan;
  j["data"] = data_path;
  j["workload"] = workload;
  j["workload_reduce"] = reduce;
  j["epsilon"] = eps.value();
  j["seed"] = seed;
  Json body = privq::plan_result_to_json(result);
  for (auto& [key, val] : body.items())
    if (key != "plan") j[key] = std::move(val);
  j["ledger"] = privq::ledger_to_json(kernel.ledger());
  emit(out_path, j.dump(2) + "\n");
  return 0;
}

int cmd_sweep(const std::string& plans_csv, const std::string& eps_csv,
              const std::string& seeds_csv, const std::string& data_path,
              const std::string& workload, bool reduce, double scale,
              const std::string& out_path) {
  const std::vector<std::string> plans = split_list(plans_csv);
  for (const auto& p : plans) {
    const auto& names = privq::plan_names();
    if (std::find(names.begin(), names.end(), p) == names.end())
      throw privq::ConfigError("unknown plan '" + p + "'");
  }
  std::vector<privq::Budget> epsilons;
  for (const auto& e : split_list(eps_csv))
    epsilons.push_back(positive_budget(e));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_csv)) {
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
      throw privq::ConfigError("bad seed '" + s + "'");
    seeds.push_back(v);
  }

  const privq::DataVector vec = privq::read_data_vector(data_path);
  privq::LinOp w = privq::workload_from_spec(workload, vec.domain_shape);
  const std::vector<double> want = w.apply(vec.values);
  const double mass = vec.total();
  const double err_scale = scale > 0.0 ? scale : mass;
  if (!(err_scale > 0.0))
    throw privq::ConfigError("dataset has zero mass; pass a positive --scale");

  std::ostringstream lines;
  for (const auto& plan : plans) {
    for (const auto& eps : epsilons) {
      for (std::uint64_t seed : seeds) {
        privq::DataVector copy = vec;
        privq::Kernel kernel(std::move(copy), eps, seed);
        privq::PlanParams params;
        params.workload_reduce = reduce;
        params.n_total = mass;
        Stopwatch sw;
        privq::PlanResult result =
            privq::run_plan(kernel, plan, w, eps, params);
        const double runtime_ms = sw.ms();
        const double err =
            privq::answer_error(result.workload_answers, want, err_scale);
        Json row;
        row["plan"] = plan;
        row["dataset"] = data_path;
        row["workload"] = workload;
        row["epsilon"] = eps.value();
        row["seed"] = seed;
        row["error"] = err;
        row["runtime_ms"] = runtime_ms;
        lines << row.dump() << "\n";
      }
    }
  }
  emit(out_path, lines.str());
  return 0;
}

// ---------------------------------------------------------------------------
// Benchmarks: matvec and least-squares wall time for two query families in
// implicit, sparse, and dense form.  Rows that would blow the memory cap are
// skipped with the reason recorded; rows that overrun --timeout keep their
// status only, never a partial timing.

privq::LinOp build_sparse_rows(
    std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& rs) {
  std::vector<privq::Triplet> trips;
  for (std::size_t i = 0; i < rs.size(); ++i)
    for (std::size_t c = rs[i].first; c <= rs[i].second; ++c)
      trips.push_back({i, c, 1.0});
  return privq::sparse(rs.size(), n, std::move(trips));
}

std::uint64_t sparse_bytes_needed(
    const std::vector<std::pair<std::size_t, std::size_t>>& rs) {
  std::uint64_t nnz = 0;
  for (const auto& [lo, hi] : rs) nnz += hi - lo + 1;
  return nnz * (sizeof(double) + sizeof(std::uint32_t)) +
         (rs.size() + 1) * sizeof(std::size_t);
}

int cmd_bench(const std::string& sizes_csv, double timeout_s,
              const std::string& out_path) {
  std::vector<std::size_t> sizes;
  for (const auto& s : split_list(sizes_csv))
    sizes.push_back(privq::detail::parse_size(s, "size"));

  std::ostringstream lines;
  privq::Rng rng = privq::make_rng(1, 0xBE);
  for (std::size_t n : sizes) {
    std::vector<double> x(n);
    for (double& v : x) v = privq::uniform01(rng);
    for (const std::string& op_name : {"prefix", "h2"}) {
      std::vector<std::pair<std::size_t, std::size_t>> rows;
      if (op_name == "prefix") {
        rows.reserve(n);
        for (std::size_t i = 0; i < n; ++i) rows.emplace_back(0, i);
      } else {
        rows = privq::detail::tree_ranges(n, 2);
      }
      for (const std::string& repr : {"implicit", "sparse", "dense"}) {
        Json row;
        row["op"] = op_name;
        row["repr"] = repr;
        row["n"] = n;
        privq::LinOp a;
        if (repr == "implicit") {
          a = op_name == "prefix" ? privq::prefix(n) : privq::h2(n);
        } else if (repr == "sparse") {
          if (sparse_bytes_needed(rows) > privq::dense_cap_bytes()) {
            row["status"] = "skipped";
            row["reason"] = "memory-cap";
            lines << row.dump() << "\n";
            continue;
          }
          a = build_sparse_rows(n, rows);
        } else {
          try {
            privq::check_dense_alloc(rows.size(), n);
          } catch (const privq::CapacityError&) {
            row["status"] = "skipped";
            row["reason"] = "memory-cap";
            lines << row.dump() << "\n";
            continue;
          }
          a = privq::dense(privq::materialize(
              op_name == "prefix" ? privq::prefix(n) : privq::h2(n)));
        }

        Stopwatch total;
        std::vector<double> y(a.rows());
        a.apply_into(x, y);  // warm-up, also the rhs for inference
        Stopwatch mv;
        std::size_t reps = 0;
        do {
          a.apply_into(x, y);
          ++reps;
        } while (mv.ms() < 50.0 && reps < 50);
        const double matvec_ms = mv.ms() / static_cast<double>(reps);
        if (total.ms() > timeout_s * 1000.0) {
          row["status"] = "timeout";
          lines << row.dump() << "\n";
          continue;
        }

        Stopwatch inf;
        privq::LsmrResult sol = privq::lsmr(a, y);
        const double inference_ms = inf.ms();
        if (total.ms() > timeout_s * 1000.0) {
          row["status"] = "timeout";
          lines << row.dump() << "\n";
          continue;
        }
        row["status"] = "ok";
        row["matvec_ms"] = matvec_ms;
        row["inference_ms"] = inference_ms;
        row["inference_iters"] = sol.iters;
        lines << row.dump() << "\n";
      }
    }
  }
  emit(out_path, lines.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"private workload answering toolkit"};
  app.require_subcommand(1);

  if (const char* cap = std::getenv("PRIVQ_MEM_CAP_BYTES")) {
    char* end = nullptr;
    unsigned long long bytes = std::strtoull(cap, &end, 10);
    if (end == cap || *end != '\0' || bytes == 0) {
      std::cerr << "error: PRIVQ_MEM_CAP_BYTES must be a positive integer\n";
      return 2;
    }
    privq::set_dense_cap_bytes(bytes);
  }

  std::string data_path, schema_path, out_path, format = "json";
  std::string plan, workload = "identity", epsilon, seeds, sizes;
  std::uint64_t seed = 0;
  bool reduce = false;
  double scale = 0.0, timeout_s = 1000.0;

  CLI::App* v = app.add_subcommand(
      "vectorize", "Histogram a CSV over its schema's cell domain");
  v->add_option("--data", data_path, "input CSV with a header row")
      ->required();
  v->add_option("--schema", schema_path, "schema config JSON")->required();
  v->add_option("--out", out_path, "output path (default: stdout)");
  v->add_option("--format", format, "output encoding")
      ->check(CLI::IsMember({"json", "bin"}));

  CLI::App* r = app.add_subcommand("run", "Execute one plan once");
  r->add_option("--plan", plan, "plan name from the catalog")->required();
  r->add_option("--data", data_path, "histogram file (JSON or binary)")
      ->required();
  r->add_option("--workload", workload, "workload name (default: identity)");
  r->add_option("--epsilon", epsilon, "total privacy budget, decimal")
      ->required();
  r->add_option("--seed", seed, "noise seed (default: 0)");
  r->add_flag("--workload-reduce", reduce,
              "reduce the domain to the workload's column groups first");
  r->add_option("--out", out_path, "output path (default: stdout)");

  CLI::App* s = app.add_subcommand(
      "sweep", "Cross-product of plans x epsilons x seeds, one JSONL row each");
  s->add_option("--plan", plan, "comma-separated plan names")->required();
  s->add_option("--data", data_path, "histogram file (JSON or binary)")
      ->required();
  s->add_option("--workload", workload, "workload name (default: identity)");
  s->add_option("--epsilon", epsilon, "comma-separated budgets")->required();
  s->add_option("--seeds", seeds, "comma-separated seeds")->required();
  s->add_flag("--workload-reduce", reduce,
              "reduce the domain to the workload's column groups first");
  s->add_option("--scale", scale,
                "error normalization (default: dataset record count)");
  s->add_option("--out", out_path, "output path (default: stdout)");

  CLI::App* b = app.add_subcommand(
      "bench", "Time matvec and inference per representation and size");
  b->add_option("--sizes", sizes, "comma-separated domain sizes")
      ->default_val("1024,4096");
  b->add_option("--timeout", timeout_s,
                "per-row wall-clock cutoff in seconds (default: 1000)");
  b->add_option("--out", out_path, "output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*v) return cmd_vectorize(data_path, schema_path, out_path, format);
    if (*r)
      return cmd_run(plan, data_path, workload, epsilon, seed, reduce,
                     out_path);
    if (*s)
      return cmd_sweep(plan, epsilon, seeds, data_path, workload, reduce,
                       scale, out_path);
    if (*b) return cmd_bench(sizes, timeout_s, out_path);
  } catch (const privq::BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return 3;
  } catch (const privq::CapacityError& e) {
    std::cerr << "capacity: " << e.what() << "\n";
    return 4;
  } catch (const privq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
