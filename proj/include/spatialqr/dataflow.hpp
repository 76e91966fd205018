#pragma once

// Iteration-level dataflow graph of a SpatialSpec at concrete constants,
// the instrumented access trace of the reference loop nest, and exporters.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spatialqr/numeric.hpp"
#include "spatialqr/spec.hpp"

namespace spatialqr {

struct IterNode {
  std::string func;
  std::vector<std::int64_t> coords;

  /// "X(1,4)"
  std::string label() const;
  /// "X_1_4", usable as a DOT identifier.
  std::string dot_id() const;

  friend auto operator<=>(const IterNode&, const IterNode&) = default;
};

struct MemorySource {
  std::string matrix;
  std::int64_t row = 0;
  std::int64_t col = 0;
};

struct ProducerSource {
  std::size_t node = 0;
  std::size_t tuple_index = 0;
  /// Set when the edge was rewired by a relay directive: `node` forwards the
  /// value it received on the same port instead of producing it.
  bool relayed = false;
};

struct ConstSource {
  double value = 0.0;
};

using EdgeSource = std::variant<MemorySource, ProducerSource, ConstSource>;

struct FlowEdge {
  EdgeSource source;
  std::size_t sink = 0;
  std::size_t port = 0;
  /// "a".."d" for data inputs (the firing case's pattern), "cs" for the
  /// rotation-parameter inputs of an update node.
  std::string pattern;
};

struct NodeInfo {
  std::size_t case_index = 0;
  Kernel kernel = Kernel::Eliminate;
  std::string pattern;
};

struct DataflowGraph {
  std::int64_t m = 0;
  std::int64_t n = 0;
  std::vector<IterNode> nodes;
  std::vector<NodeInfo> info;  // parallel to nodes
  std::vector<FlowEdge> edges;
  std::vector<std::size_t> topo_order;

  std::optional<std::size_t> find(const IterNode& node) const;
  /// Edge indices into `node`, ordered by port.
  const std::vector<std::size_t>& in_edges(std::size_t node) const { return in_adj.at(node); }
  /// Edge indices whose source is `node`, in edge order.
  const std::vector<std::size_t>& out_edges(std::size_t node) const { return out_adj.at(node); }

  /// Rebuilds index, adjacency and topo_order from nodes/edges.
  void reindex();

  std::map<IterNode, std::size_t> index;
  std::vector<std::vector<std::size_t>> in_adj;
  std::vector<std::vector<std::size_t>> out_adj;
};

/// Iterations of one function in loop-nest order.
std::vector<IterNode> enumerate_iterations(const SpatialSpec& spec, const FuncSpec& func, std::int64_t m,
                                           std::int64_t n);

/// One node per iteration, one edge per argument of the firing case.
/// Throws ValidationError when the spec does not validate, CycleError on a
/// dependency cycle.
DataflowGraph build_graph(const SpatialSpec& spec, std::int64_t m, std::int64_t n);

/// Rewires edges per a function's relay directives: an input of `sink`
/// produced by the relay source is taken instead from the iteration one step
/// back along the relay vector, when that iteration exists.
DataflowGraph apply_relay(const DataflowGraph& graph, const SpatialSpec& spec);

struct GraphStats {
  std::size_t x_nodes = 0;
  std::size_t y_nodes = 0;
  std::size_t memory_edges = 0;
  std::size_t cs_edges = 0;  // logical (c, s) pair connections
  std::size_t data_edges = 0;
  std::size_t critical_path_length = 0;  // nodes on the longest path
};

GraphStats graph_stats(const DataflowGraph& g);

std::string emit_dot(const DataflowGraph& g);
std::string graph_to_json(const DataflowGraph& g);

/// Applies f or g to the node's inputs (ordered by port). Throws NumericError
/// when a result is not finite.
std::vector<double> apply_kernel(Kernel kernel, const std::vector<double>& inputs);

/// Evaluates every node in topological order with the numeric kernels,
/// reading memory sources from `input`, and returns A' after all writes.
/// Test oracle for the simulator.
MatrixXd evaluate_graph(const DataflowGraph& g, const SpatialSpec& spec, const AugmentedMatrix<double>& input);

enum class AccessMode { Read, Write, ReadWrite };

struct Access {
  std::string name;  // "c,s" or "A'"
  std::int64_t i = 0;
  std::int64_t j = 0;
  AccessMode mode = AccessMode::ReadWrite;
};

struct TraceEvent {
  std::int64_t col = 0;
  std::int64_t row = 0;
  std::optional<std::int64_t> k;
  std::vector<Access> accesses;
};

/// Data touched by each iteration of the reference loop nest, in order.
std::vector<TraceEvent> emit_trace(std::int64_t m, std::int64_t n);

/// "1,4,-  c,s[4,1](W) A'[4,1] A'[3,1]" per line.
std::string format_trace_text(const std::vector<TraceEvent>& events);
std::string format_trace_json(const std::vector<TraceEvent>& events, std::int64_t m, std::int64_t n);

}  // namespace spatialqr
