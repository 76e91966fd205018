#include "spatialqr/dataflow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>

#include "json.hpp"
#include "spatialqr/errors.hpp"

namespace spatialqr {

using ojson = nlohmann::ordered_json;

std::string IterNode::label() const {
  std::string out = func + "(";
  for (std::size_t i = 0; i < coords.size(); ++i) out += (i ? "," : "") + std::to_string(coords[i]);
  return out + ")";
}

std::string IterNode::dot_id() const {
  std::string out;
  for (const char ch : func) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  for (const auto c : coords) out += "_" + std::to_string(c);
  return out;
}

std::optional<std::size_t> DataflowGraph::find(const IterNode& node) const {
  const auto it = index.find(node);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

namespace {

std::optional<std::size_t> producer_of(const FlowEdge& e) {
  if (const auto* p = std::get_if<ProducerSource>(&e.source)) return p->node;
  return std::nullopt;
}

std::vector<std::size_t> cycle_witness(const DataflowGraph& g, const std::vector<std::size_t>& indegree) {
  // Every remaining node has a remaining predecessor; walk backwards until a repeat.
  std::size_t cur = 0;
  while (cur < indegree.size() && indegree[cur] == 0) ++cur;
  std::vector<std::size_t> path;
  std::vector<int> seen(g.nodes.size(), -1);
  while (seen[cur] < 0) {
    seen[cur] = static_cast<int>(path.size());
    path.push_back(cur);
    for (const auto e : g.in_adj[cur]) {
      const auto p = producer_of(g.edges[e]);
      if (p && indegree[*p] > 0) {
        cur = *p;
        break;
      }
    }
  }
  std::vector<std::size_t> cycle(path.begin() + seen[cur], path.end());
  std::reverse(cycle.begin(), cycle.end());
  return cycle;
}

}  // namespace

void DataflowGraph::reindex() {
  index.clear();
  for (std::size_t i = 0; i < nodes.size(); ++i) index.emplace(nodes[i], i);
  in_adj.assign(nodes.size(), {});
  out_adj.assign(nodes.size(), {});
  for (std::size_t e = 0; e < edges.size(); ++e) {
    in_adj[edges[e].sink].push_back(e);
    if (const auto p = producer_of(edges[e])) out_adj[*p].push_back(e);
  }
  for (auto& list : in_adj) {
    std::stable_sort(list.begin(), list.end(),
                     [&](std::size_t a, std::size_t b) { return edges[a].port < edges[b].port; });
  }

  // Kahn's algorithm, smallest index first for a stable order.
  std::vector<std::size_t> indegree(nodes.size(), 0);
  for (const auto& e : edges)
    if (producer_of(e)) ++indegree[e.sink];
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (indegree[i] == 0) ready.push(i);
  topo_order.clear();
  while (!ready.empty()) {
    const std::size_t v = ready.top();
    ready.pop();
    topo_order.push_back(v);
    for (const auto e : out_adj[v])
      if (--indegree[edges[e].sink] == 0) ready.push(edges[e].sink);
  }
  if (topo_order.size() != nodes.size()) {
    std::string witness;
    for (const auto v : cycle_witness(*this, indegree)) witness += (witness.empty() ? "" : " -> ") + nodes[v].label();
    throw CycleError("dependency cycle: " + witness);
  }
}

std::vector<IterNode> enumerate_iterations(const SpatialSpec& spec, const FuncSpec& func, std::int64_t m,
                                           std::int64_t n) {
  std::vector<IterNode> out;
  for (auto& coords : enumerate_domain(func, constant_bindings(spec, m, n))) out.push_back({func.name, std::move(coords)});
  return out;
}

DataflowGraph build_graph(const SpatialSpec& spec, std::int64_t m, std::int64_t n) {
  const ValidationReport report = validate(spec, m, n);
  if (!report.ok()) {
    const Violation& v = report.violations.front();
    throw ValidationError("spec does not validate at M=" + std::to_string(m) + ", N=" + std::to_string(n) + ": " +
                          v.rule + " in " + v.func + ": " + v.message + " (" +
                          std::to_string(report.violations.size()) + " violations)");
  }

  DataflowGraph g;
  g.m = m;
  g.n = n;
  const Bindings constants = constant_bindings(spec, m, n);
  for (const auto& func : spec.funcs) {
    for (auto& node : enumerate_iterations(spec, func, m, n)) g.nodes.push_back(std::move(node));
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) g.index.emplace(g.nodes[i], i);

  g.info.reserve(g.nodes.size());
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    const FuncSpec& func = spec.func(g.nodes[v].func);
    const Bindings b = bind_coords(func, g.nodes[v].coords, constants);
    const std::size_t ci = firing_case(func, b);
    const RecurrenceCase& c = func.cases[ci];
    g.info.push_back({ci, c.kernel, c.pattern});

    for (std::size_t port = 0; port < c.args.size(); ++port) {
      FlowEdge edge;
      edge.sink = v;
      edge.port = port;
      edge.pattern = (c.kernel == Kernel::Update && port < 2) ? "cs" : c.pattern;
      const Argument& arg = c.args[port];
      if (const auto* mref = std::get_if<MemoryRef>(&arg)) {
        edge.source = MemorySource{mref->matrix, eval_int(mref->row, b), eval_int(mref->col, b)};
      } else if (const auto* call = std::get_if<CallRef>(&arg)) {
        IterNode target{call->func, {}};
        for (const auto& ce : call->coords) target.coords.push_back(eval_int(ce, b));
        edge.source = ProducerSource{g.index.at(target), call->index, false};
      } else {
        edge.source = ConstSource{std::get<ConstRef>(arg).value};
      }
      g.edges.push_back(std::move(edge));
    }
  }
  g.reindex();
  return g;
}

DataflowGraph apply_relay(const DataflowGraph& graph, const SpatialSpec& spec) {
  DataflowGraph g = graph;

  // Origin (producer node, tuple index) of the value arriving on an edge.
  std::function<std::pair<std::size_t, std::size_t>(std::size_t)> origin = [&](std::size_t e) {
    const auto& src = std::get<ProducerSource>(g.edges[e].source);
    if (!src.relayed) return std::pair{src.node, src.tuple_index};
    for (const auto pe : g.in_adj[src.node])
      if (g.edges[pe].port == g.edges[e].port) return origin(pe);
    throw ValidationError("relay edge without an upstream input");
  };

  // Process sinks in topological order so upstream rewiring is settled first.
  for (const auto v : graph.topo_order) {
    const FuncSpec& func = spec.func(g.nodes[v].func);
    for (const auto& relay : func.directives_of<RelayDirective>()) {
      if (relay.vector.size() != func.dims.size()) throw ConfigError("relay vector of " + func.name + " does not match its dims");
      IterNode prev = g.nodes[v];
      for (std::size_t d = 0; d < prev.coords.size(); ++d) prev.coords[d] -= relay.vector[d];
      const auto prev_index = g.find(prev);
      if (!prev_index) continue;
      for (const auto e : g.in_adj[v]) {
        auto* src = std::get_if<ProducerSource>(&g.edges[e].source);
        if (!src || src->relayed || g.nodes[src->node].func != relay.source) continue;
        if (std::find(relay.indices.begin(), relay.indices.end(), src->tuple_index) == relay.indices.end()) continue;
        // The upstream iteration must receive the same value on the same port.
        bool same = false;
        for (const auto pe : g.in_adj[*prev_index]) {
          if (g.edges[pe].port == g.edges[e].port && std::holds_alternative<ProducerSource>(g.edges[pe].source)) {
            same = origin(pe) == std::pair{src->node, src->tuple_index};
          }
        }
        if (same) *src = ProducerSource{*prev_index, src->tuple_index, true};
      }
    }
  }
  g.reindex();
  return g;
}

GraphStats graph_stats(const DataflowGraph& g) {
  GraphStats s;
  for (const auto& info : g.info) (info.kernel == Kernel::Eliminate ? s.x_nodes : s.y_nodes)++;
  std::set<std::pair<std::size_t, std::size_t>> cs_pairs;
  for (const auto& e : g.edges) {
    if (std::holds_alternative<MemorySource>(e.source)) {
      ++s.memory_edges;
    } else if (const auto* p = std::get_if<ProducerSource>(&e.source)) {
      if (e.pattern == "cs") {
        cs_pairs.emplace(p->node, e.sink);
      } else {
        ++s.data_edges;
      }
    }
  }
  s.cs_edges = cs_pairs.size();
  std::vector<std::size_t> depth(g.nodes.size(), 1);
  for (const auto v : g.topo_order) {
    for (const auto e : g.in_adj[v])
      if (const auto p = producer_of(g.edges[e])) depth[v] = std::max(depth[v], depth[*p] + 1);
    s.critical_path_length = std::max(s.critical_path_length, depth[v]);
  }
  return s;
}

std::string emit_dot(const DataflowGraph& g) {
  std::string out = "digraph dataflow {\n";
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    const bool round = g.info.size() > v && g.info[v].kernel == Kernel::Eliminate;
    out += "  " + g.nodes[v].dot_id() + " [shape=" + (round ? "ellipse" : "box") + ", label=\"" + g.nodes[v].label() +
           "\"];\n";
  }
  std::set<std::pair<std::size_t, std::size_t>> cs_drawn;
  for (const auto& e : g.edges) {
    const auto* p = std::get_if<ProducerSource>(&e.source);
    if (!p) continue;
    const std::string head = "  " + g.nodes[p->node].dot_id() + " -> " + g.nodes[e.sink].dot_id();
    if (e.pattern == "cs") {
      // c and s travel together; one line per pair.
      if (!cs_drawn.emplace(p->node, e.sink).second) continue;
      out += head + " [label=\"cs\", color=green" + std::string(p->relayed ? ", style=dashed" : "") + "];\n";
    } else {
      out += head + " [label=\"[" + std::to_string(p->tuple_index) + "]\"];\n";
    }
  }
  out += "}\n";
  return out;
}

namespace {

ojson source_json(const DataflowGraph& g, const EdgeSource& source) {
  ojson j;
  if (const auto* m = std::get_if<MemorySource>(&source)) {
    j["kind"] = "memory";
    j["matrix"] = m->matrix;
    j["row"] = m->row;
    j["col"] = m->col;
  } else if (const auto* p = std::get_if<ProducerSource>(&source)) {
    j["kind"] = p->relayed ? "relay" : "node";
    j["node"] = g.nodes[p->node].label();
    j["tuple_index"] = p->tuple_index;
  } else {
    j["kind"] = "const";
    j["value"] = std::get<ConstSource>(source).value;
  }
  return j;
}

}  // namespace

std::string graph_to_json(const DataflowGraph& g) {
  ojson doc;
  doc["schema"] = 1;
  doc["m"] = g.m;
  doc["n"] = g.n;
  doc["nodes"] = ojson::array();
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    doc["nodes"].push_back({{"id", g.nodes[v].label()},
                            {"func", g.nodes[v].func},
                            {"coords", g.nodes[v].coords},
                            {"kernel", kernel_tag(g.info[v].kernel)},
                            {"pattern", g.info[v].pattern}});
  }
  doc["edges"] = ojson::array();
  for (const auto& e : g.edges) {
    doc["edges"].push_back({{"source", source_json(g, e.source)},
                            {"sink", g.nodes[e.sink].label()},
                            {"port", e.port},
                            {"pattern", e.pattern}});
  }
  doc["topo_order"] = ojson::array();
  for (const auto v : g.topo_order) doc["topo_order"].push_back(g.nodes[v].label());
  const GraphStats s = graph_stats(g);
  doc["stats"] = {{"x_nodes", s.x_nodes},
                  {"y_nodes", s.y_nodes},
                  {"memory_edges", s.memory_edges},
                  {"cs_edges", s.cs_edges},
                  {"data_edges", s.data_edges},
                  {"critical_path_length", s.critical_path_length}};
  return doc.dump(2) + "\n";
}

std::vector<double> apply_kernel(Kernel kernel, const std::vector<double>& in) {
  if (in.size() != kernel_input_arity(kernel)) throw DomainError("kernel " + kernel_tag(kernel) + ": wrong input count");
  std::vector<double> out;
  if (kernel == Kernel::Eliminate) {
    // in = (A'[row,col], A'[row-1,col]); the lower element is eliminated.
    const auto [pair, r] = compute_rotation(in[1], in[0]);
    out = {pair.c, pair.s, 0.0, r};
  } else {
    // in = (c, s, A'[row,k], A'[row-1,k]); out = (A'[row,k]', A'[row-1,k]').
    const auto [top, bottom] = apply_rotation(RotationPair<double>{in[0], in[1]}, in[3], in[2]);
    out = {bottom, top};
  }
  for (const double v : out)
    if (!std::isfinite(v)) throw NumericError("kernel " + kernel_tag(kernel) + " produced a non-finite value");
  return out;
}

MatrixXd evaluate_graph(const DataflowGraph& g, const SpatialSpec& spec, const AugmentedMatrix<double>& input) {
  if (input.m() != g.m || input.n() != g.n) throw DomainError("evaluate_graph: input does not match graph constants");
  MatrixXd result = input.inner();
  const Bindings constants = constant_bindings(spec, g.m, g.n);
  std::vector<std::vector<double>> inputs(g.nodes.size());
  std::vector<std::vector<double>> outputs(g.nodes.size());

  for (const auto v : g.topo_order) {
    const auto& in_list = g.in_edges(v);
    std::vector<double>& in = inputs[v];
    in.assign(in_list.size(), 0.0);
    for (const auto e : in_list) {
      const FlowEdge& edge = g.edges[e];
      if (const auto* m = std::get_if<MemorySource>(&edge.source)) {
        in[edge.port] = input(m->row, m->col);
      } else if (const auto* p = std::get_if<ProducerSource>(&edge.source)) {
        in[edge.port] = p->relayed ? inputs[p->node].at(edge.port) : outputs[p->node].at(p->tuple_index);
      } else {
        in[edge.port] = std::get<ConstSource>(edge.source).value;
      }
    }
    try {
      outputs[v] = apply_kernel(g.info[v].kernel, in);
    } catch (const NumericError& err) {
      throw NumericError(g.nodes[v].label() + ": " + err.what());
    }

    const FuncSpec& func = spec.func(g.nodes[v].func);
    const Bindings b = bind_coords(func, g.nodes[v].coords, constants);
    for (std::size_t slot = 0; slot < func.writes.size(); ++slot) {
      if (!func.writes[slot]) continue;
      at(result, eval_int(func.writes[slot]->row, b), eval_int(func.writes[slot]->col, b)) = outputs[v][slot];
    }
  }
  return result;
}

std::vector<TraceEvent> emit_trace(std::int64_t m, std::int64_t n) {
  if (m < 1 || n < 1) throw PreconditionError("emit_trace: M and N must be >= 1");
  std::vector<TraceEvent> events;
  for (std::int64_t col = 1; col <= n; ++col) {
    for (std::int64_t row = m; row >= col + 1; --row) {
      events.push_back({col, row, std::nullopt,
                        {{"c,s", row, col, AccessMode::Write},
                         {"A'", row, col, AccessMode::ReadWrite},
                         {"A'", row - 1, col, AccessMode::ReadWrite}}});
      for (std::int64_t k = col + 1; k <= n + 1; ++k) {
        events.push_back({col, row, k,
                          {{"c,s", row, col, AccessMode::Read},
                           {"A'", row, k, AccessMode::ReadWrite},
                           {"A'", row - 1, k, AccessMode::ReadWrite}}});
      }
    }
  }
  return events;
}

std::string format_trace_text(const std::vector<TraceEvent>& events) {
  std::string out;
  for (const auto& ev : events) {
    out += std::to_string(ev.col) + "," + std::to_string(ev.row) + "," + (ev.k ? std::to_string(*ev.k) : "-") + " ";
    for (const auto& a : ev.accesses) {
      out += " " + a.name + "[" + std::to_string(a.i) + "," + std::to_string(a.j) + "]";
      if (a.mode == AccessMode::Write) out += "(W)";
      if (a.mode == AccessMode::Read) out += "(R)";
    }
    out += "\n";
  }
  return out;
}

std::string format_trace_json(const std::vector<TraceEvent>& events, std::int64_t m, std::int64_t n) {
  ojson doc;
  doc["schema"] = 1;
  doc["m"] = m;
  doc["n"] = n;
  doc["events"] = ojson::array();
  for (const auto& ev : events) {
    ojson je;
    je["col"] = ev.col;
    je["row"] = ev.row;
    je["k"] = ev.k ? ojson(*ev.k) : ojson(nullptr);
    je["accesses"] = ojson::array();
    for (const auto& a : ev.accesses) {
      const char* mode = a.mode == AccessMode::Write ? "write" : a.mode == AccessMode::Read ? "read" : "read-write";
      je["accesses"].push_back({{"name", a.name}, {"indices", {a.i, a.j}}, {"mode", mode}});
    }
    doc["events"].push_back(std::move(je));
  }
  return doc.dump(2) + "\n";
}

}  // namespace spatialqr
