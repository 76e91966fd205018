#include "spatialqr/simulator.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "json.hpp"
#include "spatialqr/errors.hpp"
#include "spatialqr/matrix_io.hpp"

namespace spatialqr {

using ojson = nlohmann::ordered_json;

std::string PeId::label() const {
  std::string out = func + "(";
  for (std::size_t i = 0; i < fixed.size(); ++i) out += (i ? "," : "") + dims[i] + "=" + std::to_string(fixed[i]);
  return out + ")";
}

SimConfig SimConfig::from_directives(const SpatialSpec& spec) {
  SimConfig cfg;
  for (const auto& f : spec.funcs) {
    auto& dims = cfg.unroll[f.name];
    for (const auto& u : f.directives_of<UnrollDirective>()) dims.push_back(u.dim);
  }
  return cfg;
}

SimConfig SimConfig::folded(const SpatialSpec& spec, const std::string& dim) {
  SimConfig cfg = from_directives(spec);
  for (auto& [name, dims] : cfg.unroll) std::erase(dims, dim);
  return cfg;
}

std::string sim_config_to_json(const SimConfig& cfg) {
  ojson j;
  j["schema"] = 1;
  j["unroll"] = ojson::object();
  for (const auto& [name, dims] : cfg.unroll) j["unroll"][name] = dims;
  j["channel_capacity"] = cfg.channel_capacity;
  j["relay"] = cfg.relay_enabled;
  j["max_steps"] = cfg.max_steps;
  return j.dump(2) + "\n";
}

SimConfig sim_config_from_json(const std::string& text) {
  try {
    const ojson j = ojson::parse(text);
    SimConfig cfg;
    if (j.contains("unroll")) {
      for (const auto& [name, dims] : j.at("unroll").items()) cfg.unroll[name] = dims.get<std::vector<std::string>>();
    }
    if (j.contains("channel_capacity")) {
      const auto cap = j.at("channel_capacity").get<std::int64_t>();
      if (cap < 1) throw ConfigError("channel_capacity must be >= 1");
      cfg.channel_capacity = static_cast<std::size_t>(cap);
    }
    if (j.contains("relay")) cfg.relay_enabled = j.at("relay").get<bool>();
    if (j.contains("max_steps")) cfg.max_steps = j.at("max_steps").get<std::size_t>();
    return cfg;
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError(std::string("sim config: ") + err.what());
  }
}

std::size_t Placement::count(const std::string& func) const {
  return static_cast<std::size_t>(std::count_if(pes.begin(), pes.end(), [&](const PeId& p) { return p.func == func; }));
}

Placement place(const SpatialSpec& spec, const SimConfig& cfg, std::int64_t m, std::int64_t n) {
  Placement placement;
  std::map<PeId, std::size_t> index;
  for (const auto& func : spec.funcs) {
    std::vector<std::size_t> kept;
    std::vector<std::string> dims;
    if (const auto it = cfg.unroll.find(func.name); it != cfg.unroll.end()) {
      for (const auto& d : it->second) {
        if (!func.dim_index(d)) throw ConfigError("cannot unroll unknown dim '" + d + "' of " + func.name);
      }
      for (std::size_t i = 0; i < func.dims.size(); ++i) {
        if (std::find(it->second.begin(), it->second.end(), func.dims[i]) != it->second.end()) {
          kept.push_back(i);
          dims.push_back(func.dims[i]);
        }
      }
    }
    for (const auto& node : enumerate_iterations(spec, func, m, n)) {
      PeId pe{func.name, dims, {}};
      for (const auto i : kept) pe.fixed.push_back(node.coords[i]);
      auto [it, inserted] = index.emplace(pe, placement.pes.size());
      if (inserted) {
        placement.pes.push_back(pe);
        placement.local_order.emplace_back();
      }
      placement.pe_of.emplace(node, it->second);
      placement.local_order[it->second].push_back(node);
    }
  }
  return placement;
}

std::size_t Wiring::outgoing_cs(std::size_t node) const {
  std::size_t count = 0;
  for (const auto l : outputs_of.at(node))
    if (channels[links[l].channel].slot == "cs") ++count;
  return count;
}

Wiring wire(const DataflowGraph& graph, const SpatialSpec& spec, const Placement& placement, const SimConfig& cfg) {
  if (cfg.channel_capacity < 1) throw ConfigError("channel capacity must be >= 1");
  Wiring w;
  w.graph = cfg.relay_enabled ? apply_relay(graph, spec) : graph;
  const DataflowGraph& g = w.graph;

  std::vector<std::size_t> pe_of(g.nodes.size());
  std::vector<std::size_t> local_pos(g.nodes.size());
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    const auto it = placement.pe_of.find(g.nodes[v]);
    if (it == placement.pe_of.end()) throw ConfigError("placement does not cover " + g.nodes[v].label());
    pe_of[v] = it->second;
  }
  for (const auto& order : placement.local_order) {
    for (std::size_t i = 0; i < order.size(); ++i) local_pos[g.index.at(order[i])] = i;
  }

  std::map<std::tuple<std::size_t, std::string, std::size_t, std::size_t>, std::size_t> channel_index;
  w.inputs_of.assign(g.nodes.size(), {});
  w.outputs_of.assign(g.nodes.size(), {});

  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    const FuncSpec& sink_func = spec.func(g.nodes[v].func);
    std::set<std::string> channeled;
    for (const auto& ch : sink_func.directives_of<ChannelDirective>()) channeled.insert(ch.callees.begin(), ch.callees.end());

    std::map<std::pair<std::size_t, bool>, std::size_t> cs_link;  // (source, relayed) -> link
    for (const auto e : g.in_edges(v)) {
      const FlowEdge& edge = g.edges[e];
      const auto* src = std::get_if<ProducerSource>(&edge.source);
      if (!src) continue;
      if (!src->relayed && !channeled.count(g.nodes[src->node].func)) {
        throw ConfigError(sink_func.name + " reads " + g.nodes[src->node].func + " without a channel directive");
      }
      const bool pair = edge.pattern == "cs";
      if (pair) {
        if (const auto it = cs_link.find({src->node, src->relayed}); it != cs_link.end()) {
          w.links[it->second].edges.push_back(e);
          continue;
        }
      }
      std::string slot = pair ? "cs" : "[" + std::to_string(src->tuple_index) + "]";
      if (src->relayed) slot = "relay " + slot;
      const auto key = std::tuple{pe_of[src->node], slot, pe_of[v], edge.port};
      auto [it, inserted] = channel_index.emplace(key, w.channels.size());
      if (inserted) w.channels.push_back({pe_of[src->node], pe_of[v], slot, edge.port, cfg.channel_capacity});
      const std::size_t link = w.links.size();
      w.links.push_back({it->second, src->node, v, {e}});
      if (pair) cs_link.emplace(std::pair{src->node, src->relayed}, link);
      w.inputs_of[v].push_back(link);
      w.outputs_of[src->node].push_back(link);
    }
  }
  // Tokens bound for one channel in a single firing go out in consumer order.
  for (auto& outs : w.outputs_of) {
    std::stable_sort(outs.begin(), outs.end(), [&](std::size_t a, std::size_t b) {
      const Link& la = w.links[a];
      const Link& lb = w.links[b];
      if (la.channel != lb.channel) return la.channel < lb.channel;
      return local_pos[la.sink] < local_pos[lb.sink];
    });
  }
  return w;
}

std::vector<std::pair<std::int64_t, std::int64_t>> expected_drain_positions(std::int64_t m, std::int64_t n) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (std::int64_t i = 1; i <= m; ++i) {
    const bool eliminated_top = i <= std::min(m - 1, n);
    const bool last_row = i == m && m >= 2 && m <= n + 1;
    if (!eliminated_top && !last_row) continue;
    for (std::int64_t j = i; j <= n + 1; ++j) out.emplace_back(i, j);
  }
  return out;
}

DrainResult drain(const SpatialSpec& spec, const DataflowGraph& graph, const std::vector<std::vector<double>>& outputs) {
  const Bindings constants = constant_bindings(spec, graph.m, graph.n);
  std::map<std::pair<std::int64_t, std::int64_t>, DrainedValue> stored;
  std::vector<std::string> doubles;

  for (std::size_t v = 0; v < graph.nodes.size(); ++v) {
    const FuncSpec& func = spec.func(graph.nodes[v].func);
    const auto stores = func.directives_of<StoreDirective>();
    if (stores.empty()) continue;
    const Bindings b = bind_coords(func, graph.nodes[v].coords, constants);
    for (const auto& store : stores) {
      if (!eval_bool(store.condition, b)) continue;
      for (const auto idx : store.indices) {
        if (idx >= func.writes.size() || !func.writes[idx]) throw CoverageError("store index without a target element");
        const std::int64_t row = eval_int(func.writes[idx]->row, b);
        const std::int64_t col = eval_int(func.writes[idx]->col, b);
        DrainedValue dv{row, col, outputs.at(v).at(idx), graph.nodes[v], idx};
        const auto [it, inserted] = stored.emplace(std::pair{row, col}, dv);
        if (!inserted) {
          doubles.push_back("(" + std::to_string(row) + "," + std::to_string(col) + ") from " +
                            it->second.source.label() + " and " + graph.nodes[v].label());
        }
      }
    }
  }

  std::vector<std::string> missing;
  std::vector<std::string> unexpected;
  const auto expected = expected_drain_positions(graph.m, graph.n);
  const std::set<std::pair<std::int64_t, std::int64_t>> expected_set(expected.begin(), expected.end());
  for (const auto& pos : expected)
    if (!stored.count(pos)) missing.push_back("(" + std::to_string(pos.first) + "," + std::to_string(pos.second) + ")");
  for (const auto& [pos, dv] : stored)
    if (!expected_set.count(pos)) unexpected.push_back("(" + std::to_string(pos.first) + "," + std::to_string(pos.second) + ")");

  if (!doubles.empty() || !missing.empty() || !unexpected.empty()) {
    std::string msg = "drain coverage:";
    auto list = [&](const char* what, const std::vector<std::string>& items) {
      if (items.empty()) return;
      msg += std::string(" ") + what + ":";
      for (const auto& s : items) msg += " " + s;
      msg += ";";
    };
    list("stored twice", doubles);
    list("missing", missing);
    list("outside result", unexpected);
    throw CoverageError(msg);
  }

  DrainResult result;
  result.values = MatrixXd::Zero(graph.m, graph.n + 1);
  for (const auto& [pos, dv] : stored) {
    at(result.values, pos.first, pos.second) = dv.value;
    result.entries.push_back(dv);
  }
  return result;
}

std::string to_string(SimStatus s) {
  switch (s) {
    case SimStatus::Completed: return "Completed";
    case SimStatus::Deadlock: return "Deadlock";
    case SimStatus::StepLimit: return "StepLimit";
  }
  return "?";
}

AugmentedMatrix<double> SimReport::output() const {
  if (drained) return AugmentedMatrix<double>::from_inner(drained->values);
  return AugmentedMatrix<double>::from_inner(MatrixXd::Zero(m, n + 1));
}

namespace {

struct Token {
  std::size_t sink = 0;
  std::vector<double> values;
};

std::string format_values(const std::vector<double>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? " " : "") + format_double(values[i]);
  return out + "]";
}

class Engine {
 public:
  Engine(const SpatialSpec& spec, const SimConfig& cfg, const AugmentedMatrix<double>& input, const Placement& placement,
         const Wiring& wiring)
      : spec_(spec), cfg_(cfg), input_(input), placement_(placement), w_(wiring), g_(wiring.graph) {
    queues_.resize(w_.channels.size());
    start_size_.assign(w_.channels.size(), 0);
    popped_.assign(w_.channels.size(), 0);
    next_.assign(placement_.pes.size(), 0);
    inputs_.resize(g_.nodes.size());
    outputs_.resize(g_.nodes.size());
    pe_node_.resize(placement_.pes.size());
    for (std::size_t p = 0; p < placement_.pes.size(); ++p) {
      for (const auto& node : placement_.local_order[p]) pe_node_[p].push_back(g_.index.at(node));
    }
  }

  SimReport execute() {
    SimReport report;
    report.m = input_.m();
    report.n = input_.n();
    report.config = cfg_;
    report.firings.assign(placement_.pes.size(), 0);
    report.max_occupancy.assign(w_.channels.size(), 0);
    for (const auto& pe : placement_.pes) {
      report.pe_labels.push_back(pe.label());
      const FuncSpec& f = spec_.func(pe.func);
      const bool eliminates = !f.cases.empty() && f.cases.front().kernel == Kernel::Eliminate;
      (eliminates ? report.x_pes : report.y_pes)++;
    }
    for (const auto& ch : w_.channels) report.channel_labels.push_back(channel_label(ch));

    std::size_t remaining = g_.nodes.size();
    report.status = SimStatus::Completed;
    while (remaining > 0) {
      if (report.steps >= cfg_.max_steps) {
        report.status = SimStatus::StepLimit;
        break;
      }
      ++report.steps;
      for (std::size_t c = 0; c < queues_.size(); ++c) {
        start_size_[c] = queues_[c].size();
        popped_[c] = 0;
      }
      bool fired = false;
      for (std::size_t p = 0; p < placement_.pes.size(); ++p) {
        if (next_[p] >= pe_node_[p].size()) continue;
        const std::size_t v = pe_node_[p][next_[p]];
        if (!can_fire(v, nullptr)) continue;
        fire(p, v, report);
        ++next_[p];
        --remaining;
        fired = true;
      }
      if (!fired) {
        report.status = SimStatus::Deadlock;
        break;
      }
    }

    if (report.status != SimStatus::Completed) {
      for (std::size_t p = 0; p < placement_.pes.size(); ++p) {
        if (next_[p] >= pe_node_[p].size()) continue;
        const std::size_t v = pe_node_[p][next_[p]];
        BlockedPe blocked{placement_.pes[p].label(), g_.nodes[v].label(), {}};
        can_fire(v, &blocked.waiting_on);
        report.blocked.push_back(std::move(blocked));
      }
    }

    report.channels_empty = std::all_of(queues_.begin(), queues_.end(), [](const auto& q) { return q.empty(); });
    if (report.status == SimStatus::Completed) report.drained = drain(spec_, g_, outputs_);
    return report;
  }

 private:
  std::string channel_label(const Channel& ch) const {
    return placement_.pes[ch.producer].label() + " " + ch.slot + " -> " + placement_.pes[ch.consumer].label() + "." +
           std::to_string(ch.port);
  }

  // Readiness against the sweep-start snapshot. Fills `why` with every
  // unmet condition when given.
  bool can_fire(std::size_t v, std::vector<std::string>* why) const {
    bool ok = true;
    std::map<std::size_t, std::size_t> pops;
    for (const auto l : w_.inputs_of[v]) {
      const std::size_t c = w_.links[l].channel;
      const auto& q = queues_[c];
      const bool visible = start_size_[c] > popped_[c];
      if (!visible || q.front().sink != v) {
        ok = false;
        if (!why) return false;
        std::string reason = "input " + channel_label(w_.channels[c]);
        if (!q.empty() && q.front().sink != v) reason += " (head is for " + g_.nodes[q.front().sink].label() + ")";
        why->push_back(reason);
      }
      ++pops[c];
    }
    std::map<std::size_t, std::size_t> pushes;
    for (const auto l : w_.outputs_of[v]) ++pushes[w_.links[l].channel];
    for (const auto& [c, count] : pushes) {
      const auto it = pops.find(c);
      const std::size_t own_pops = it == pops.end() ? 0 : it->second;
      const std::size_t occupancy = start_size_[c] - std::min(start_size_[c], own_pops);
      if (occupancy + count > w_.channels[c].capacity) {
        ok = false;
        if (!why) return false;
        why->push_back("space " + channel_label(w_.channels[c]));
      }
    }
    return ok;
  }

  void fire(std::size_t p, std::size_t v, SimReport& report) {
    std::vector<double>& in = inputs_[v];
    const auto& in_edges = g_.in_edges(v);
    in.assign(in_edges.size(), 0.0);
    for (const auto e : in_edges) {
      const FlowEdge& edge = g_.edges[e];
      if (const auto* mref = std::get_if<MemorySource>(&edge.source)) {
        in[edge.port] = input_(mref->row, mref->col);
      } else if (const auto* cref = std::get_if<ConstSource>(&edge.source)) {
        in[edge.port] = cref->value;
      }
    }
    for (const auto l : w_.inputs_of[v]) {
      const Link& link = w_.links[l];
      auto& q = queues_[link.channel];
      Token token = std::move(q.front());
      q.pop_front();
      ++popped_[link.channel];
      for (std::size_t i = 0; i < link.edges.size(); ++i) in[g_.edges[link.edges[i]].port] = token.values[i];
    }

    try {
      outputs_[v] = apply_kernel(g_.info[v].kernel, in);
    } catch (const NumericError& err) {
      throw NumericError(g_.nodes[v].label() + ": " + err.what());
    }

    std::string sent;
    for (const auto l : w_.outputs_of[v]) {
      const Link& link = w_.links[l];
      Token token{link.sink, {}};
      for (const auto e : link.edges) {
        const FlowEdge& edge = g_.edges[e];
        const auto& src = std::get<ProducerSource>(edge.source);
        token.values.push_back(src.relayed ? in.at(edge.port) : outputs_[v].at(src.tuple_index));
      }
      if (w_.channels[link.channel].carries_pair()) ++report.cs_sends;
      if (cfg_.record_events) sent += " " + g_.nodes[link.sink].label() + format_values(token.values);
      auto& q = queues_[link.channel];
      q.push_back(std::move(token));
      report.max_occupancy[link.channel] = std::max(report.max_occupancy[link.channel], q.size());
    }

    ++report.firings[p];
    ++report.total_firings;
    if (cfg_.record_events) {
      report.events.push_back("step=" + std::to_string(report.steps) + " pe=" + placement_.pes[p].label() +
                              " iter=" + g_.nodes[v].label() + " in=" + format_values(in) +
                              " out=" + format_values(outputs_[v]) + " sent=" + (sent.empty() ? "-" : sent.substr(1)));
    }
  }

  const SpatialSpec& spec_;
  const SimConfig& cfg_;
  const AugmentedMatrix<double>& input_;
  const Placement& placement_;
  const Wiring& w_;
  const DataflowGraph& g_;

  std::vector<std::deque<Token>> queues_;
  std::vector<std::size_t> start_size_;
  std::vector<std::size_t> popped_;
  std::vector<std::size_t> next_;
  std::vector<std::vector<std::size_t>> pe_node_;
  std::vector<std::vector<double>> inputs_;
  std::vector<std::vector<double>> outputs_;
};

}  // namespace

SimReport run(const SpatialSpec& spec, const SimConfig& cfg, const AugmentedMatrix<double>& input) {
  if (cfg.channel_capacity < 1) throw ConfigError("channel capacity must be >= 1");
  const std::int64_t m = input.m();
  const std::int64_t n = input.n();
  for (const auto& in : spec.inputs) {
    const Bindings constants = constant_bindings(spec, m, n);
    if (eval_int(in.rows, constants) != m || eval_int(in.cols, constants) != n + 1) {
      throw DomainError("input " + in.name + " does not match the spec's shape");
    }
  }
  const DataflowGraph graph = build_graph(spec, m, n);
  const Placement placement = place(spec, cfg, m, n);
  const Wiring wiring = wire(graph, spec, placement, cfg);
  return Engine(spec, cfg, input, placement, wiring).execute();
}

std::string sim_report_to_json(const SimReport& r) {
  ojson j;
  j["schema"] = 1;
  j["status"] = to_string(r.status);
  j["m"] = r.m;
  j["n"] = r.n;
  j["config"] = ojson::parse(sim_config_to_json(r.config));
  j["config"].erase("schema");
  j["steps"] = r.steps;
  j["pes"] = {{"x", r.x_pes}, {"y", r.y_pes}, {"total", r.pe_labels.size()}};
  j["channels"] = r.channel_labels.size();
  j["total_firings"] = r.total_firings;
  j["cs_sends"] = r.cs_sends;
  j["channels_empty"] = r.channels_empty;
  j["firings"] = ojson::object();
  for (std::size_t i = 0; i < r.pe_labels.size(); ++i) j["firings"][r.pe_labels[i]] = r.firings[i];
  j["max_occupancy"] = ojson::object();
  for (std::size_t i = 0; i < r.channel_labels.size(); ++i) j["max_occupancy"][r.channel_labels[i]] = r.max_occupancy[i];
  j["blocked"] = ojson::array();
  for (const auto& b : r.blocked) j["blocked"].push_back({{"pe", b.pe}, {"iteration", b.iteration}, {"waiting_on", b.waiting_on}});
  if (r.drained) {
    j["drained"] = ojson::array();
    for (const auto& d : r.drained->entries) {
      j["drained"].push_back({{"row", d.row},
                              {"col", d.col},
                              {"value", d.value},
                              {"source", d.source.label() + "[" + std::to_string(d.tuple_index) + "]"}});
    }
    j["output"] = ojson::array();
    for (Index i = 0; i < r.drained->values.rows(); ++i) {
      ojson row = ojson::array();
      for (Index c = 0; c < r.drained->values.cols(); ++c) row.push_back(r.drained->values(i, c));
      j["output"].push_back(std::move(row));
    }
  } else {
    j["drained"] = nullptr;
    j["output"] = nullptr;
  }
  return j.dump(2) + "\n";
}

}  // namespace spatialqr
