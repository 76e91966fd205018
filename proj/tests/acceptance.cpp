// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any failure.

#include <bit>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "faults.hpp"
#include "spatialqr/cli.hpp"
#include "spatialqr/dataflow.hpp"
#include "spatialqr/matrix_io.hpp"
#include "spatialqr/simulator.hpp"

using namespace spatialqr;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string size_tag(std::int64_t m, std::int64_t n) { return std::to_string(m) + "x" + std::to_string(n); }

AugmentedMatrix<double> seeded_system(std::uint64_t seed, Index size) {
  return AugmentedMatrix<double>(random_matrix(seed, size, size), random_matrix(seed + 1000, size, 1).col(0));
}

Outcome golden_trace() {
  Outcome o;
  std::ostringstream out, err;
  const int code = run_cli({"spatialqr", "trace", "4", "4"}, out, err);
  const std::string golden = slurp(SPATIALQR_FIXTURES "/trace_4x4.txt");
  if (code != 0) o.fail("exit code " + std::to_string(code));
  if (golden.empty()) o.fail("fixture missing");
  if (out.str() != golden) o.fail("trace differs from fixture");
  o.detail = o.ok ? "26 events match" : o.detail;
  return o;
}

Outcome graph_census() {
  Outcome o;
  const SpatialSpec spec = builtin_qr_spec();
  const DataflowGraph g = build_graph(spec, 4, 4);
  const GraphStats s = graph_stats(g);
  if (s.x_nodes != 6 || s.y_nodes != 20) o.fail("node counts " + std::to_string(s.x_nodes) + "/" + std::to_string(s.y_nodes));
  std::map<std::string, std::vector<std::string>> x_patterns;
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    if (g.info[v].pattern.empty()) o.fail(g.nodes[v].label() + " unclassified");
    if (g.info[v].kernel == Kernel::Eliminate) x_patterns[g.info[v].pattern].push_back(g.nodes[v].label());
  }
  if (x_patterns["a"] != std::vector<std::string>{"X(1,4)"}) o.fail("pattern a is not exactly X(1,4)");
  // One pattern-c node on the bottom row of every column after the first.
  if (x_patterns["c"] != std::vector<std::string>{"X(2,4)", "X(3,4)"}) o.fail("pattern c nodes differ");
  for (std::int64_t m = 1; m <= 8; ++m) {
    for (std::int64_t n = 1; n <= m; ++n) {
      std::size_t xs = 0, ys = 0;
      for (std::int64_t col = 1; col <= n; ++col) {
        xs += static_cast<std::size_t>(std::max<std::int64_t>(0, m - col));
        ys += static_cast<std::size_t>(std::max<std::int64_t>(0, m - col) * (n + 1 - col));
      }
      const GraphStats st = graph_stats(build_graph(spec, m, n));
      if (st.x_nodes != xs || st.y_nodes != ys) o.fail("closed form mismatch at " + size_tag(m, n));
    }
  }
  if (o.ok) o.detail = "6 X + 20 Y; a={X(1,4)} c={X(2,4),X(3,4)}; closed forms hold to 8x8";
  return o;
}

Outcome qr_correctness() {
  Outcome o;
  double worst = 0.0;
  const auto start = std::chrono::steady_clock::now();
  for (const Index size : {4, 8, 16}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = seeded_system(seed, size);
      const auto report = verify_qr(a, qr_givens_reference(a, true), 1e-10);
      worst = std::max({worst, report.reconstruction_error, report.orthogonality_error});
      if (!report.ok()) o.fail("seed " + std::to_string(seed) + " size " + std::to_string(size));
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (seconds >= 1.0) o.fail("took " + format_double(seconds) + " s");
  if (o.ok) o.detail = "max error " + format_double(worst) + ", lower triangle exactly zero";
  return o;
}

Outcome solve_residual() {
  Outcome o;
  double worst = 0.0;
  for (const Index size : {4, 8, 16}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = seeded_system(seed, size);
      const VectorXd y = solve<double>(a.coefficients(), a.rhs());
      worst = std::max(worst, (a.coefficients() * y - a.rhs()).cwiseAbs().maxCoeff());
    }
  }
  if (!(worst < 1e-9)) o.fail("residual " + format_double(worst));
  if (o.ok) o.detail = "max residual " + format_double(worst);
  return o;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

Outcome three_way_equivalence() {
  Outcome o;
  const SpatialSpec spec = builtin_qr_spec();
  std::size_t runs = 0, deadlocks = 0;
  for (const Index size : {4, 8, 16}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = seeded_system(seed, size);
      const auto reference = qr_givens_reference(a, false).r_aug;
      const DataflowGraph graph = build_graph(spec, size, size);
      if (!(AugmentedMatrix<double>::from_inner(evaluate_graph(graph, spec, a)) == reference)) {
        o.fail("graph evaluation differs at seed " + std::to_string(seed) + " size " + std::to_string(size));
      }
      for (const bool folded : {false, true}) {
        for (const bool relay : {false, true}) {
          for (const std::size_t capacity : {1u, 2u, 8u}) {
            SimConfig cfg = folded ? SimConfig::folded(spec) : SimConfig::from_directives(spec);
            cfg.relay_enabled = relay;
            cfg.channel_capacity = capacity;
            const SimReport r = run(spec, cfg, a);
            ++runs;
            if (r.status != SimStatus::Completed) {
              ++deadlocks;
              if (capacity != 1 || r.blocked.empty()) o.fail(to_string(r.status) + " without a pinned capacity-1 case");
              continue;
            }
            for (const auto& d : r.drained->entries) {
              if (!same_bits(d.value, reference(d.row, d.col))) {
                o.fail("simulator differs at (" + std::to_string(d.row) + "," + std::to_string(d.col) + ")");
                break;
              }
            }
          }
        }
      }
    }
  }
  if (o.ok) {
    o.detail = std::to_string(runs) + " simulator runs bitwise equal, " + std::to_string(deadlocks) + " deadlocks";
  }
  return o;
}

Outcome drain_coverage() {
  Outcome o;
  const SpatialSpec spec = builtin_qr_spec();
  const SimReport r = run(spec, SimConfig::from_directives(spec), seeded_system(0, 4));
  if (r.status != SimStatus::Completed) return {false, "run did not complete"};
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (const auto& d : r.drained->entries)
    if (!seen.insert({d.row, d.col}).second) o.fail("position stored twice");
  std::set<std::pair<std::int64_t, std::int64_t>> expected;
  for (std::int64_t i = 1; i <= 4; ++i)
    for (std::int64_t j = i; j <= 5; ++j) expected.insert({i, j});
  if (seen != expected) o.fail("drained set differs from the upper triangle of the 4x5 result");
  if (o.ok) o.detail = std::to_string(seen.size()) + " positions, each once";
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path() / "spatialqr_acceptance";
  std::filesystem::create_directories(dir);
  const std::string matrix = (dir / "system.txt").string();
  const std::string plain = (dir / "a.txt").string();
  {
    const auto a = seeded_system(3, 6);
    write_matrix(matrix, a.inner());
    write_matrix(plain, a.coefficients());
  }
  const std::string fixture_dir = SPATIALQR_FIXTURES;
  const std::vector<std::vector<std::string>> commands = {
      {"trace", "4", "4"},
      {"trace", "6", "3", "--format", "json"},
      {"graph", "5", "5"},
      {"graph", "5", "5", "--relay", "on", "--format", "json"},
      {"decompose", plain, "--q-output", "-"},
      {"solve", fixture_dir + "/random4.txt", fixture_dir + "/rhs4.csv"},
      {"verify", plain},
      {"simulate", matrix, "--report", "-", "--event-log", "-"},
      {"simulate", matrix, "--unroll", "folded", "--capacity", "1", "--report", "-", "--event-log", "-"},
      {"spec"},
      {"spec", "--validate", "5", "3"},
      {"selfcheck", "--max-size", "3"},
  };
  for (const auto& args : commands) {
    std::vector<std::string> full{"spatialqr"};
    full.insert(full.end(), args.begin(), args.end());
    std::ostringstream out1, err1, out2, err2;
    const int c1 = run_cli(full, out1, err1);
    const int c2 = run_cli(full, out2, err2);
    if (c1 != c2 || out1.str() != out2.str() || err1.str() != err2.str()) o.fail("'" + args.front() + "' differs between runs");
    if (c1 != 0) o.fail("'" + args.front() + "' exited " + std::to_string(c1));
  }
  if (o.ok) o.detail = std::to_string(commands.size()) + " commands byte-identical across runs";
  return o;
}

Outcome spec_validation() {
  Outcome o;
  const SpatialSpec spec = builtin_qr_spec();
  for (std::int64_t m = 1; m <= 8; ++m)
    for (std::int64_t n = 1; n <= m; ++n)
      if (!validate(spec, m, n).ok()) o.fail("violations at " + size_tag(m, n));
  const std::vector<std::pair<std::string, SpatialSpec>> faults = {
      {"guard-overlap", testing::overlapping_guards()},
      {"call-domain", testing::out_of_domain_call()},
      {"tuple-index", testing::bad_tuple_index()},
  };
  for (const auto& [rule, faulty] : faults)
    if (!validate(faulty, 4, 4).has_rule(rule)) o.fail("fault not rejected with " + rule);
  if (o.ok) o.detail = "clean for 1 <= n <= m <= 8; faults rejected as guard-overlap, call-domain, tuple-index";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria = {
      {"golden trace", golden_trace},
      {"graph census", graph_census},
      {"qr correctness", qr_correctness},
      {"solve residual", solve_residual},
      {"three-way bitwise equivalence", three_way_equivalence},
      {"drain coverage", drain_coverage},
      {"determinism", determinism},
      {"spec validation", spec_validation},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.ok ? "PASS" : "FAIL") << " [" << ++index << "] " << name << ": " << o.detail << "\n";
    if (!o.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
