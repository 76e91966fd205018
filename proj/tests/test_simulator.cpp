#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "spatialqr/errors.hpp"
#include "spatialqr/matrix_io.hpp"
#include "spatialqr/simulator.hpp"

using namespace spatialqr;

namespace {

AugmentedMatrix<double> random_system(std::uint64_t seed, Index m, Index n) {
  return AugmentedMatrix<double>(random_matrix(seed, m, n), random_matrix(seed + 500, m, 1).col(0));
}

SimConfig make_config(const SpatialSpec& spec, bool folded, bool relay, std::size_t capacity) {
  SimConfig cfg = folded ? SimConfig::folded(spec) : SimConfig::from_directives(spec);
  cfg.relay_enabled = relay;
  cfg.channel_capacity = capacity;
  return cfg;
}

std::size_t index_of(const DataflowGraph& g, std::string func, std::vector<std::int64_t> coords) {
  const auto v = g.find(IterNode{std::move(func), std::move(coords)});
  REQUIRE(v.has_value());
  return *v;
}

/// Drained positions must equal the reference bitwise; everything else is zero.
void check_matches_reference(const SimReport& report, const AugmentedMatrix<double>& input) {
  REQUIRE(report.status == SimStatus::Completed);
  REQUIRE(report.drained.has_value());
  const auto reference = qr_givens_reference(input, false).r_aug;
  for (const auto& d : report.drained->entries) {
    CAPTURE(d.row);
    CAPTURE(d.col);
    CHECK(std::bit_cast<std::uint64_t>(d.value) == std::bit_cast<std::uint64_t>(reference(d.row, d.col)));
  }
}

}  // namespace

TEST_CASE("placement") {
  const SpatialSpec spec = builtin_qr_spec();
  SUBCASE("full unroll") {
    const Placement p = place(spec, SimConfig::from_directives(spec), 4, 4);
    CHECK(p.count("X") == 6);
    CHECK(p.count("Y") == 20);
    for (const auto& order : p.local_order) CHECK(order.size() == 1);
    CHECK(p.pe(IterNode{"X", {1, 4}}).label() == "X(col=1,row=4)");
  }
  SUBCASE("row folded") {
    const Placement p = place(spec, SimConfig::folded(spec), 4, 4);
    CHECK(p.count("X") == 3);
    CHECK(p.count("Y") == 9);
    const auto pe = p.pe_of.at(IterNode{"X", {1, 3}});
    CHECK(p.pes[pe].label() == "X(col=1)");
    REQUIRE(p.local_order[pe].size() == 3);
    CHECK(p.local_order[pe][0] == IterNode{"X", {1, 4}});
    CHECK(p.local_order[pe][1] == IterNode{"X", {1, 3}});
    std::set<std::string> y_labels;
    for (const auto& q : p.pes)
      if (q.func == "Y") y_labels.insert(q.label());
    CHECK(y_labels.count("Y(col=1,k=5)") == 1);
    CHECK(y_labels.count("Y(col=3,k=3)") == 0);
  }
  SUBCASE("unknown dim") {
    SimConfig cfg = SimConfig::from_directives(spec);
    cfg.unroll["X"].push_back("k");
    CHECK_THROWS_AS(place(spec, cfg, 4, 4), ConfigError);
  }
  SUBCASE("single PE per function") {
    SimConfig cfg;
    const Placement p = place(spec, cfg, 4, 4);
    CHECK(p.pes.size() == 2);
    CHECK(p.local_order[0].size() + p.local_order[1].size() == 26);
  }
}

TEST_CASE("wiring") {
  const SpatialSpec spec = builtin_qr_spec();
  const DataflowGraph g = build_graph(spec, 4, 4);
  SUBCASE("relay off broadcasts c,s") {
    SimConfig cfg = make_config(spec, false, false, 2);
    const Wiring w = wire(g, spec, place(spec, cfg, 4, 4), cfg);
    CHECK(w.outgoing_cs(index_of(w.graph, "X", {1, 4})) == 4);
  }
  SUBCASE("relay on forwards c,s along k") {
    SimConfig cfg = make_config(spec, false, true, 2);
    const Wiring w = wire(g, spec, place(spec, cfg, 4, 4), cfg);
    CHECK(w.outgoing_cs(index_of(w.graph, "X", {1, 4})) == 1);
    for (std::int64_t k = 2; k <= 4; ++k) {
      const auto v = index_of(w.graph, "Y", {1, 4, k});
      std::vector<std::string> relayed_to;
      for (const auto l : w.outputs_of[v])
        if (w.channels[w.links[l].channel].slot == "relay cs") relayed_to.push_back(w.graph.nodes[w.links[l].sink].label());
      CHECK(relayed_to == std::vector<std::string>{"Y(1,4," + std::to_string(k + 1) + ")"});
    }
    const auto last = index_of(w.graph, "Y", {1, 4, 5});
    for (const auto l : w.outputs_of[last]) CHECK_FALSE(w.channels[w.links[l].channel].carries_pair());
  }
  SUBCASE("every c,s pair travels as one link") {
    SimConfig cfg = make_config(spec, true, true, 2);
    const Wiring w = wire(g, spec, place(spec, cfg, 4, 4), cfg);
    for (const auto& link : w.links) {
      if (w.channels[link.channel].carries_pair()) {
        CHECK(link.edges.size() == 2);
      } else {
        CHECK(link.edges.size() == 1);
      }
    }
  }
  SUBCASE("missing channel directive") {
    SpatialSpec bad = spec;
    bad.funcs[1].directives.erase(bad.funcs[1].directives.begin());
    SimConfig cfg = make_config(bad, false, false, 2);
    CHECK_THROWS_AS(wire(build_graph(bad, 4, 4), bad, place(bad, cfg, 4, 4), cfg), ConfigError);
  }
}

TEST_CASE("drain coverage") {
  CHECK(expected_drain_positions(4, 4).size() == 14);
  std::set<std::pair<std::int64_t, std::int64_t>> expected;
  for (std::int64_t i = 1; i <= 4; ++i)
    for (std::int64_t j = i; j <= 5; ++j) expected.insert({i, j});
  const auto positions = expected_drain_positions(4, 4);
  CHECK(std::set(positions.begin(), positions.end()) == expected);

  const SpatialSpec spec = builtin_qr_spec();
  const SimReport r = run(spec, SimConfig::from_directives(spec), random_system(0, 4, 4));
  REQUIRE(r.drained.has_value());
  CHECK(r.drained->entries.size() == 14);
  std::map<std::pair<std::int64_t, std::int64_t>, std::pair<std::string, std::size_t>> source;
  for (const auto& d : r.drained->entries) source[{d.row, d.col}] = {d.source.label(), d.tuple_index};
  CHECK(source.at({1, 1}) == std::pair<std::string, std::size_t>{"X(1,2)", 3});
  CHECK(source.at({4, 4}) == std::pair<std::string, std::size_t>{"Y(3,4,4)", 0});
  CHECK(source.at({4, 5}) == std::pair<std::string, std::size_t>{"Y(3,4,5)", 0});
  CHECK(source.at({1, 5}) == std::pair<std::string, std::size_t>{"Y(1,2,5)", 1});

  SUBCASE("coverage errors") {
    const DataflowGraph g = build_graph(spec, 4, 4);
    std::vector<std::vector<double>> outputs(g.nodes.size());
    for (std::size_t v = 0; v < g.nodes.size(); ++v) outputs[v].assign(spec.func(g.nodes[v].func).tuple_arity, 1.0);
    CHECK_NOTHROW(drain(spec, g, outputs));
    SpatialSpec doubled = spec;
    doubled.funcs[1].directives.push_back(StoreDirective{{1}, Expr::parse("row == col + 1")});
    CHECK_THROWS_AS(drain(doubled, g, outputs), CoverageError);
    SpatialSpec missing = spec;
    missing.funcs[1].directives.pop_back();
    CHECK_THROWS_AS(drain(missing, g, outputs), CoverageError);
  }
}

TEST_CASE("drain expected set for tall and small shapes") {
  CHECK(expected_drain_positions(1, 1).empty());
  CHECK(expected_drain_positions(2, 1).size() == 3);
  // Row M stays untouched once M > N + 1.
  CHECK(expected_drain_positions(6, 2).size() == 2 + 3);
}

TEST_CASE("simulator matches the reference bitwise") {
  const SpatialSpec spec = builtin_qr_spec();
  for (std::int64_t m = 1; m <= 8; ++m) {
    for (std::int64_t n = 1; n <= m; ++n) {
      const auto input = random_system(static_cast<std::uint64_t>(10 * m + n), m, n);
      for (const bool folded : {false, true}) {
        for (const bool relay : {false, true}) {
          for (const std::size_t capacity : {1u, 2u, 8u}) {
            CAPTURE(m);
            CAPTURE(n);
            CAPTURE(folded);
            CAPTURE(relay);
            CAPTURE(capacity);
            const SimReport r = run(spec, make_config(spec, folded, relay, capacity), input);
            check_matches_reference(r, input);
            CHECK(r.channels_empty);
            const GraphStats stats = graph_stats(build_graph(spec, m, n));
            CHECK(r.total_firings == stats.x_nodes + stats.y_nodes);
          }
        }
      }
    }
  }
}

TEST_CASE("relay conserves c,s deliveries") {
  const SpatialSpec spec = builtin_qr_spec();
  const auto input = random_system(3, 6, 5);
  const std::size_t ys = graph_stats(build_graph(spec, 6, 5)).y_nodes;
  for (const bool folded : {false, true}) {
    const SimReport on = run(spec, make_config(spec, folded, true, 2), input);
    const SimReport off = run(spec, make_config(spec, folded, false, 2), input);
    CHECK(on.cs_sends == ys);
    CHECK(off.cs_sends == ys);
  }
}

TEST_CASE("more capacity never costs steps") {
  const SpatialSpec spec = builtin_qr_spec();
  const auto input = random_system(1, 8, 8);
  for (const bool folded : {false, true}) {
    for (const bool relay : {false, true}) {
      std::size_t previous = std::numeric_limits<std::size_t>::max();
      for (const std::size_t capacity : {1u, 2u, 4u, 8u, 16u}) {
        const SimReport r = run(spec, make_config(spec, folded, relay, capacity), input);
        REQUIRE(r.status == SimStatus::Completed);
        CHECK(r.steps <= previous);
        for (std::size_t c = 0; c < r.max_occupancy.size(); ++c) CHECK(r.max_occupancy[c] <= capacity);
        previous = r.steps;
      }
    }
  }
}

TEST_CASE("folded runs use fewer PEs") {
  const SpatialSpec spec = builtin_qr_spec();
  const auto input = random_system(0, 4, 4);
  const SimReport full = run(spec, make_config(spec, false, true, 2), input);
  const SimReport folded = run(spec, make_config(spec, true, true, 2), input);
  CHECK(full.x_pes == 6);
  CHECK(full.y_pes == 20);
  CHECK(folded.x_pes == 3);
  CHECK(folded.y_pes == 9);
  CHECK(full.output() == folded.output());
}

TEST_CASE("deadlock and step limit are reported") {
  // Ascending row order runs X(1,2) before the X(1,3) it depends on.
  SpatialSpec spec = builtin_qr_spec();
  spec.funcs[0].bounds[1] = BoundSpec::parse("row", "col + 1:1:M");
  REQUIRE(validate(spec, 4, 4).ok());
  const auto input = random_system(0, 4, 4);

  const SimReport full = run(spec, make_config(spec, false, false, 2), input);
  CHECK(full.status == SimStatus::Completed);

  const SimReport folded = run(spec, make_config(spec, true, false, 2), input);
  CHECK(folded.status == SimStatus::Deadlock);
  CHECK_FALSE(folded.drained.has_value());
  REQUIRE_FALSE(folded.blocked.empty());
  CHECK(folded.blocked[0].pe == "X(col=1)");
  CHECK(folded.blocked[0].iteration == "X(1,2)");
  CHECK_FALSE(folded.blocked[0].waiting_on.empty());

  SimConfig limited = make_config(builtin_qr_spec(), false, true, 2);
  limited.max_steps = 3;
  const SimReport cut = run(builtin_qr_spec(), limited, input);
  CHECK(cut.status == SimStatus::StepLimit);
  CHECK(cut.steps == 3);
  CHECK_FALSE(cut.blocked.empty());
}

TEST_CASE("numeric failure names the iteration") {
  const SpatialSpec spec = builtin_qr_spec();
  MatrixXd a = MatrixXd::Constant(3, 3, 1.7e308);
  const AugmentedMatrix<double> input(a, VectorXd::Constant(3, 1.7e308));
  try {
    run(spec, SimConfig::from_directives(spec), input);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("(") != std::string::npos);
  }
  CHECK_THROWS_AS(run(spec, SimConfig::from_directives(spec), AugmentedMatrix<double>::from_inner(MatrixXd::Ones(3, 1))),
                  DomainError);
}

TEST_CASE("config json") {
  const SpatialSpec spec = builtin_qr_spec();
  SimConfig cfg = make_config(spec, true, false, 5);
  const std::string text = sim_config_to_json(cfg);
  const SimConfig back = sim_config_from_json(text);
  CHECK(back.unroll == cfg.unroll);
  CHECK(back.channel_capacity == 5);
  CHECK_FALSE(back.relay_enabled);
  CHECK(sim_config_to_json(back) == text);
  CHECK_THROWS_AS(sim_config_from_json("{\"channel_capacity\": 0}"), ConfigError);
  CHECK_THROWS_AS(sim_config_from_json("not json"), ConfigError);
}

TEST_CASE("reports and event logs are deterministic") {
  const SpatialSpec spec = builtin_qr_spec();
  const auto input = random_system(4, 5, 4);
  SimConfig cfg = make_config(spec, true, true, 1);
  cfg.record_events = true;
  const SimReport a = run(spec, cfg, input);
  const SimReport b = run(spec, cfg, input);
  CHECK(sim_report_to_json(a) == sim_report_to_json(b));
  CHECK(a.events == b.events);
  CHECK(a.events.size() == a.total_firings);
  const auto doc = nlohmann::json::parse(sim_report_to_json(a));
  CHECK(doc["status"] == "Completed");
  CHECK(doc["pes"]["x"] == 4);
}

TEST_CASE("capacity-1 sweep matches the pinned fixture") {
  const SpatialSpec spec = builtin_qr_spec();
  std::ifstream in(SPATIALQR_FIXTURES "/capacity1_sweep.txt");
  REQUIRE(in);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) {
    std::istringstream fields(line);
    std::int64_t m = 0, n = 0;
    std::string unroll, relay, status;
    std::size_t steps = 0;
    fields >> m >> n >> unroll >> relay >> status >> steps;
    CAPTURE(line);
    const auto input = random_system(static_cast<std::uint64_t>(10 * m + n), m, n);
    const SimReport r = run(spec, make_config(spec, unroll == "folded", relay == "relay", 1), input);
    CHECK(to_string(r.status) == status);
    CHECK(r.steps == steps);
    ++rows;
  }
  CHECK(rows == 144);
}
