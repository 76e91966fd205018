#include "spatialqr/cli.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "spatialqr/dataflow.hpp"
#include "spatialqr/errors.hpp"
#include "spatialqr/matrix_io.hpp"
#include "spatialqr/numeric.hpp"
#include "spatialqr/simulator.hpp"
#include "spatialqr/spec.hpp"

namespace spatialqr {

namespace {

/// Error carrying its exit code and kind tag.
struct CliError {
  int code;
  std::string kind;
  std::string message;
};

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot write '" + path + "'");
  f << text;
}

VectorXd read_vector(const std::string& path) {
  const MatrixXd m = read_matrix(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw ParseError("'" + path + "' is not a vector (" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")");
}

SpatialSpec load_spec(const std::string& path) { return path.empty() ? builtin_qr_spec() : spec_from_json(read_text(path)); }

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

/// First drained entry that differs bitwise from the reference, if any.
std::optional<DrainedValue> first_mismatch(const DrainResult& drained, const AugmentedMatrix<double>& reference) {
  for (const auto& d : drained.entries)
    if (!same_bits(d.value, reference(d.row, d.col))) return d;
  return std::nullopt;
}

bool bool_flag(const std::string& v) { return v == "on"; }

// ---------------------------------------------------------------------------
// selfcheck

struct CheckLog {
  std::ostream& out;
  std::size_t failures = 0;

  void record(const std::string& name, bool ok, const std::string& detail = {}) {
    out << (ok ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) out << ": " << detail;
    out << "\n";
    if (!ok) ++failures;
  }
};

std::size_t x_count(std::int64_t m, std::int64_t n) {
  std::size_t total = 0;
  for (std::int64_t col = 1; col <= n; ++col) total += static_cast<std::size_t>(std::max<std::int64_t>(0, m - col));
  return total;
}

std::size_t y_count(std::int64_t m, std::int64_t n) {
  std::size_t total = 0;
  for (std::int64_t col = 1; col <= n; ++col)
    total += static_cast<std::size_t>(std::max<std::int64_t>(0, m - col) * (n + 1 - col));
  return total;
}

int run_selfcheck(std::int64_t max_size, std::ostream& out) {
  CheckLog log{out};
  const SpatialSpec spec = builtin_qr_spec();

  {
    std::string bad;
    for (std::int64_t m = 1; m <= max_size; ++m)
      for (std::int64_t n = 1; n <= m; ++n)
        if (!validate(spec, m, n).ok()) bad += " (" + std::to_string(m) + "," + std::to_string(n) + ")";
    log.record("spec validates for 1 <= n <= m <= " + std::to_string(max_size), bad.empty(), bad);
  }
  {
    std::string bad;
    for (std::int64_t m = 1; m <= max_size; ++m) {
      for (std::int64_t n = 1; n <= m; ++n) {
        const GraphStats s = graph_stats(build_graph(spec, m, n));
        if (s.x_nodes != x_count(m, n) || s.y_nodes != y_count(m, n)) {
          bad += " (" + std::to_string(m) + "," + std::to_string(n) + ")";
        }
      }
    }
    log.record("graph node counts match closed forms", bad.empty(), bad);
  }
  {
    double worst = 0.0;
    bool ok = true;
    for (const Index size : {4, 8, 16}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const AugmentedMatrix<double> a(random_matrix(seed, size, size), VectorXd::Ones(size));
        const auto report = verify_qr(a, qr_givens_reference(a, true), 1e-10);
        ok = ok && report.ok();
        worst = std::max({worst, report.reconstruction_error, report.orthogonality_error});
      }
    }
    log.record("qr round trip at tol 1e-10", ok, "max error " + format_double(worst));
  }
  {
    double worst = 0.0;
    for (const Index size : {4, 8, 16}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const MatrixXd a = random_matrix(seed, size, size);
        const VectorXd z = random_matrix(seed + 1000, size, 1).col(0);
        const VectorXd y = solve<double>(a, z);
        worst = std::max(worst, (a * y - z).cwiseAbs().maxCoeff());
      }
    }
    log.record("solve residual below 1e-9", worst < 1e-9, "max residual " + format_double(worst));
  }
  {
    std::string bad;
    const SimConfig full = SimConfig::from_directives(spec);
    const SimConfig folded = SimConfig::folded(spec);
    for (std::int64_t m = 1; m <= max_size; ++m) {
      for (std::int64_t n = 1; n <= m; ++n) {
        const AugmentedMatrix<double> a(random_matrix(static_cast<std::uint64_t>(m * 100 + n), m, n),
                                        random_matrix(static_cast<std::uint64_t>(m * 100 + n + 50), m, 1).col(0));
        const auto reference = qr_givens_reference(a, false).r_aug;
        const DataflowGraph graph = build_graph(spec, m, n);
        const AugmentedMatrix<double> evaluated = AugmentedMatrix<double>::from_inner(evaluate_graph(graph, spec, a));
        if (!(evaluated == reference)) bad += " graph(" + std::to_string(m) + "," + std::to_string(n) + ")";
        for (const auto* base : {&full, &folded}) {
          for (const bool relay : {false, true}) {
            SimConfig cfg = *base;
            cfg.relay_enabled = relay;
            const SimReport r = run(spec, cfg, a);
            if (r.status != SimStatus::Completed || first_mismatch(*r.drained, reference)) {
              bad += " sim(" + std::to_string(m) + "," + std::to_string(n) + (base == &full ? ",full" : ",folded") +
                     (relay ? ",relay" : "") + ")";
            }
          }
        }
      }
    }
    log.record("reference, graph and simulator agree bitwise", bad.empty(), bad);
  }
  {
    const auto first = format_trace_text(emit_trace(4, 4));
    const auto second = format_trace_text(emit_trace(4, 4));
    const auto g = build_graph(spec, 4, 4);
    log.record("trace and DOT output deterministic", first == second && emit_dot(g) == emit_dot(build_graph(spec, 4, 4)));
  }

  out << (log.failures == 0 ? "selfcheck passed" : "selfcheck failed: " + std::to_string(log.failures) + " checks")
      << "\n";
  return log.failures == 0 ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------

int dispatch(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Givens-rotation QR as a spatial dataflow program"};
  app.name(args.empty() ? "spatialqr" : args.front());
  app.require_subcommand(1);

  // decompose
  std::string dec_matrix, dec_rhs, dec_output, dec_q;
  auto* decompose = app.add_subcommand("decompose", "QR-decompose A (optionally augmented with a rhs)");
  decompose->add_option("matrix", dec_matrix, "matrix file")->required();
  decompose->add_option("--rhs", dec_rhs, "right-hand side vector file");
  decompose->add_option("-o,--output", dec_output, "output file for R (or (R | Q^T z)); stdout by default");
  decompose->add_option("--q-output", dec_q, "accumulate Q and write it to this file");

  // solve
  std::string solve_matrix, solve_rhs;
  auto* solve_cmd = app.add_subcommand("solve", "solve A y = z for square A");
  solve_cmd->add_option("matrix", solve_matrix, "matrix file")->required();
  solve_cmd->add_option("rhs", solve_rhs, "right-hand side vector file")->required();

  // trace
  std::int64_t trace_m = 0, trace_n = 0;
  std::string trace_format = "text";
  auto* trace = app.add_subcommand("trace", "print the data accessed by each iteration");
  trace->add_option("m", trace_m)->required();
  trace->add_option("n", trace_n)->required();
  trace->add_option("--format", trace_format)->check(CLI::IsMember({"text", "json"}));

  // graph
  std::int64_t graph_m = 0, graph_n = 0;
  std::string graph_format = "dot", graph_relay = "off", graph_output, graph_spec;
  auto* graph = app.add_subcommand("graph", "export the iteration-level dataflow graph");
  graph->add_option("m", graph_m)->required();
  graph->add_option("n", graph_n)->required();
  graph->add_option("--format", graph_format)->check(CLI::IsMember({"dot", "json"}));
  graph->add_option("--relay", graph_relay, "rewire c,s edges per the relay directive")->check(CLI::IsMember({"on", "off"}));
  graph->add_option("-o,--output", graph_output);
  graph->add_option("--spec", graph_spec, "spec JSON (built-in QR program by default)");

  // simulate
  std::string sim_matrix, sim_rhs, sim_unroll = "full", sim_relay = "on", sim_report, sim_events, sim_config, sim_spec;
  std::int64_t sim_capacity = 2;
  auto* simulate = app.add_subcommand("simulate", "run the program on the simulated PE array");
  simulate->add_option("matrix", sim_matrix, "augmented matrix (A | z), or A when --rhs is given")->required();
  simulate->add_option("--rhs", sim_rhs, "right-hand side vector file");
  simulate->add_option("--unroll", sim_unroll, "unroll every dim, or keep row on one PE")->check(CLI::IsMember({"full", "folded"}));
  simulate->add_option("--capacity", sim_capacity, "FIFO depth of every channel");
  simulate->add_option("--relay", sim_relay, "forward c,s between neighbouring update PEs")->check(CLI::IsMember({"on", "off"}));
  simulate->add_option("--config", sim_config, "JSON config file; overrides --unroll/--capacity/--relay");
  simulate->add_option("--report", sim_report, "write the JSON report here ('-' for stdout)");
  simulate->add_option("--event-log", sim_events, "write one line per firing here ('-' for stdout)");
  simulate->add_option("--spec", sim_spec, "spec JSON (built-in QR program by default)");

  // verify
  std::string verify_matrix, verify_rhs;
  double verify_tol = 1e-10;
  auto* verify = app.add_subcommand("verify", "check A = QR, QQ^T = I and R upper-triangular");
  verify->add_option("matrix", verify_matrix)->required();
  verify->add_option("--tol", verify_tol, "max allowed reconstruction and orthogonality error");
  verify->add_option("--rhs", verify_rhs, "right-hand side vector file");

  // selfcheck
  std::int64_t selfcheck_max = 8;
  auto* selfcheck = app.add_subcommand("selfcheck", "run the built-in property suite");
  selfcheck->add_option("--max-size", selfcheck_max, "largest M for the validation and equivalence sweeps");

  // spec
  std::string spec_input, spec_output;
  std::vector<std::int64_t> spec_validate;
  auto* spec_cmd = app.add_subcommand("spec", "print or validate a spec JSON document");
  spec_cmd->add_option("--input", spec_input, "spec JSON to load (built-in by default)");
  spec_cmd->add_option("--validate", spec_validate, "validate at M N")->expected(2);
  spec_cmd->add_option("-o,--output", spec_output);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    throw CliError{kExitUsage, "usage", e.what()};
  }

  if (*decompose) {
    const MatrixXd a = read_matrix(dec_matrix);
    const VectorXd z = dec_rhs.empty() ? VectorXd::Zero(a.rows()) : read_vector(dec_rhs);
    const auto result = qr_givens_reference(AugmentedMatrix<double>(a, z), !dec_q.empty());
    const MatrixXd r = dec_rhs.empty() ? MatrixXd(result.r_aug.coefficients()) : result.r_aug.inner();
    write_text(dec_output, format_matrix_text(r), out);
    if (dec_q == "-") {
      out << format_matrix_text(*result.q);
    } else if (!dec_q.empty()) {
      write_matrix(dec_q, *result.q);
    }
    return kExitOk;
  }

  if (*solve_cmd) {
    const MatrixXd a = read_matrix(solve_matrix);
    const VectorXd z = read_vector(solve_rhs);
    const VectorXd y = solve<double>(a, z);
    out << format_matrix_text(MatrixXd(y));
    return kExitOk;
  }

  if (*trace) {
    if (trace_m < 1 || trace_n < 1) throw CliError{kExitUsage, "usage", "trace sizes must be >= 1"};
    const auto events = emit_trace(trace_m, trace_n);
    out << (trace_format == "json" ? format_trace_json(events, trace_m, trace_n) : format_trace_text(events));
    return kExitOk;
  }

  if (*graph) {
    if (graph_m < 1 || graph_n < 1) throw CliError{kExitUsage, "usage", "graph sizes must be >= 1"};
    const SpatialSpec spec = load_spec(graph_spec);
    DataflowGraph g = build_graph(spec, graph_m, graph_n);
    if (bool_flag(graph_relay)) g = apply_relay(g, spec);
    write_text(graph_output, graph_format == "json" ? graph_to_json(g) : emit_dot(g), out);
    return kExitOk;
  }

  if (*simulate) {
    const SpatialSpec spec = load_spec(sim_spec);
    SimConfig cfg;
    if (!sim_config.empty()) {
      cfg = sim_config_from_json(read_text(sim_config));
    } else {
      if (sim_capacity < 1) throw CliError{kExitUsage, "usage", "--capacity must be >= 1"};
      cfg = sim_unroll == "folded" ? SimConfig::folded(spec) : SimConfig::from_directives(spec);
      cfg.channel_capacity = static_cast<std::size_t>(sim_capacity);
      cfg.relay_enabled = bool_flag(sim_relay);
    }
    cfg.record_events = !sim_events.empty();

    const MatrixXd m = read_matrix(sim_matrix);
    const AugmentedMatrix<double> a =
        sim_rhs.empty() ? AugmentedMatrix<double>::from_inner(m) : AugmentedMatrix<double>(m, read_vector(sim_rhs));
    const SimReport report = run(spec, cfg, a);

    if (!sim_report.empty()) write_text(sim_report, sim_report_to_json(report), out);
    if (!sim_events.empty()) {
      std::string log;
      for (const auto& line : report.events) log += line + "\n";
      write_text(sim_events, log, out);
    }
    out << "status=" << to_string(report.status) << " pes=" << report.x_pes << "+" << report.y_pes
        << " steps=" << report.steps << " firings=" << report.total_firings << "\n";

    if (report.status != SimStatus::Completed) {
      std::string summary;
      for (const auto& b : report.blocked) {
        summary += " " + b.pe + "@" + b.iteration;
        if (!b.waiting_on.empty()) summary += "{" + b.waiting_on.front() + "}";
      }
      throw CliError{kExitDeadlock, "deadlock", to_string(report.status) + " with blocked PEs:" + summary};
    }
    const auto reference = qr_givens_reference(a, false).r_aug;
    if (const auto bad = first_mismatch(*report.drained, reference)) {
      throw CliError{kExitFailure, "mismatch",
                     "first differing position (" + std::to_string(bad->row) + "," + std::to_string(bad->col) +
                         "): simulated " + format_double(bad->value) + " vs reference " +
                         format_double(reference(bad->row, bad->col))};
    }
    out << "output matches reference bitwise (" << report.drained->entries.size() << " drained values)\n";
    return kExitOk;
  }

  if (*verify) {
    const MatrixXd a = read_matrix(verify_matrix);
    const VectorXd z = verify_rhs.empty() ? VectorXd::Zero(a.rows()) : read_vector(verify_rhs);
    const AugmentedMatrix<double> aug(a, z);
    const auto report = verify_qr(aug, qr_givens_reference(aug, true), verify_tol);
    out << "reconstruction_error " << format_double(report.reconstruction_error) << "\n"
        << "orthogonality_error " << format_double(report.orthogonality_error) << "\n"
        << "lower_triangle_max " << format_double(report.lower_triangle_max) << "\n";
    if (!report.ok()) {
      std::string which;
      if (!report.reconstruction_ok) which += " reconstruction";
      if (!report.orthogonality_ok) which += " orthogonality";
      if (!report.upper_triangular_ok) which += " upper-triangular";
      throw CliError{kExitFailure, "verification", "failed checks:" + which};
    }
    return kExitOk;
  }

  if (*selfcheck) {
    if (selfcheck_max < 1) throw CliError{kExitUsage, "usage", "--max-size must be >= 1"};
    return run_selfcheck(selfcheck_max, out);
  }

  if (*spec_cmd) {
    const SpatialSpec spec = load_spec(spec_input);
    if (!spec_validate.empty()) {
      if (spec_validate[0] < 1 || spec_validate[1] < 1) throw CliError{kExitUsage, "usage", "--validate sizes must be >= 1"};
      const ValidationReport report = validate(spec, spec_validate[0], spec_validate[1]);
      for (const auto& v : report.violations) {
        out << v.rule << " " << v.func;
        if (!v.coords.empty()) {
          out << "(";
          for (std::size_t i = 0; i < v.coords.size(); ++i) out << (i ? "," : "") << v.coords[i];
          out << ")";
        }
        out << ": " << v.message << "\n";
      }
      out << report.violations.size() << " violations\n";
      return report.ok() ? kExitOk : kExitFailure;
    }
    write_text(spec_output, spec_to_json(spec), out);
    return kExitOk;
  }
  return kExitUsage;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out);
  } catch (const CliError& e) {
    err << "error: " << e.kind << ": " << one_line(e.message) << "\n";
    return e.code;
  } catch (const ParseError& e) {
    err << "error: input: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: config: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: spec: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const SingularMatrixError& e) {
    err << "error: singular: " << one_line(e.what()) << "\n";
    return kExitFailure;
  } catch (const CoverageError& e) {
    err << "error: coverage: " << one_line(e.what()) << "\n";
    return kExitFailure;
  } catch (const NumericError& e) {
    err << "error: numeric: " << one_line(e.what()) << "\n";
    return kExitFailure;
  } catch (const DomainError& e) {
    err << "error: domain: " << one_line(e.what()) << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return kExitFailure;
  }
}

}  // namespace spatialqr
