#pragma once

// Functional simulator for a SpatialSpec mapped onto processing elements.
//
// Each PE owns the iterations that share its values on the unrolled dims and
// runs them in loop-nest order. PEs talk through bounded FIFO channels. The
// scheduler sweeps the PEs in a fixed order; a PE fires at most one iteration
// per sweep, deciding against the channel state at the start of the sweep.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spatialqr/dataflow.hpp"
#include "spatialqr/numeric.hpp"
#include "spatialqr/spec.hpp"

namespace spatialqr {

struct PeId {
  std::string func;
  std::vector<std::string> dims;  // unrolled dims, in the function's dim order
  std::vector<std::int64_t> fixed;

  /// "Y(col=1,k=2)"
  std::string label() const;

  friend auto operator<=>(const PeId&, const PeId&) = default;
};

struct SimConfig {
  /// Unrolled dims per function. A function absent from the map runs on a single PE.
  std::map<std::string, std::vector<std::string>> unroll;
  std::size_t channel_capacity = 2;
  bool relay_enabled = true;
  std::size_t max_steps = 1'000'000;
  bool record_events = false;

  /// Unroll sets taken from the spec's unroll directives.
  static SimConfig from_directives(const SpatialSpec& spec);
  /// Same as from_directives with `dim` removed from every function.
  static SimConfig folded(const SpatialSpec& spec, const std::string& dim = "row");
};

std::string sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const std::string& text);

struct Placement {
  std::vector<PeId> pes;                         // first-appearance order
  std::map<IterNode, std::size_t> pe_of;         // iteration -> index into pes
  std::vector<std::vector<IterNode>> local_order;  // per PE, loop-nest order

  const PeId& pe(const IterNode& node) const { return pes.at(pe_of.at(node)); }
  std::size_t count(const std::string& func) const;
};

/// Maps each iteration to the PE keyed by its unrolled coordinates.
Placement place(const SpatialSpec& spec, const SimConfig& cfg, std::int64_t m, std::int64_t n);

struct Channel {
  std::size_t producer = 0;  // PE index
  std::size_t consumer = 0;  // PE index
  /// "[t]" for tuple slot t, "cs" for a rotation pair, "relay cs" when forwarded.
  std::string slot;
  std::size_t port = 0;  // first consumer port fed
  std::size_t capacity = 1;

  bool carries_pair() const { return slot == "cs" || slot == "relay cs"; }
};

/// A value (or c/s pair) moving from one iteration to another over a channel.
struct Link {
  std::size_t channel = 0;
  std::size_t source = 0;  // graph node
  std::size_t sink = 0;    // graph node
  std::vector<std::size_t> edges;  // graph edges carried, ordered by port
};

struct Wiring {
  DataflowGraph graph;  // after relay rewriting, when enabled
  std::vector<Channel> channels;
  std::vector<Link> links;
  std::vector<std::vector<std::size_t>> inputs_of;   // node -> links into it
  std::vector<std::vector<std::size_t>> outputs_of;  // node -> links out of it, in send order

  std::size_t outgoing_cs(std::size_t node) const;
};

/// Builds channels for every producer-sourced edge. Memory and constant
/// inputs get none. With relay enabled, c/s inputs are rewired per the
/// spec's relay directives first. Throws ConfigError on an invalid setup.
Wiring wire(const DataflowGraph& graph, const SpatialSpec& spec, const Placement& placement, const SimConfig& cfg);

struct DrainedValue {
  std::int64_t row = 0;
  std::int64_t col = 0;
  double value = 0.0;
  IterNode source;
  std::size_t tuple_index = 0;
};

struct DrainResult {
  MatrixXd values;  // drained positions set, zero elsewhere
  std::vector<DrainedValue> entries;  // row-major order
};

/// Positions the store directives must cover: the rows finalized by an
/// elimination (rows 1..min(M-1, N), plus row M when 2 <= M <= N+1), from
/// the diagonal to column N+1.
std::vector<std::pair<std::int64_t, std::int64_t>> expected_drain_positions(std::int64_t m, std::int64_t n);

/// Applies each function's store directives to the fired outputs (indexed by
/// graph node). Throws CoverageError on a double store or a missing position.
DrainResult drain(const SpatialSpec& spec, const DataflowGraph& graph, const std::vector<std::vector<double>>& outputs);

enum class SimStatus { Completed, Deadlock, StepLimit };
std::string to_string(SimStatus s);

struct BlockedPe {
  std::string pe;
  std::string iteration;
  std::vector<std::string> waiting_on;  // "input <channel>" / "space <channel>"
};

struct SimReport {
  SimStatus status = SimStatus::Completed;
  std::int64_t m = 0;
  std::int64_t n = 0;
  SimConfig config;
  std::size_t steps = 0;
  std::vector<std::string> pe_labels;
  std::vector<std::size_t> firings;  // per PE
  std::vector<std::string> channel_labels;
  std::vector<std::size_t> max_occupancy;  // per channel
  std::size_t x_pes = 0;
  std::size_t y_pes = 0;
  std::size_t cs_sends = 0;
  std::size_t total_firings = 0;
  bool channels_empty = false;
  std::vector<BlockedPe> blocked;
  std::optional<DrainResult> drained;  // set when Completed
  std::vector<std::string> events;     // when cfg.record_events

  AugmentedMatrix<double> output() const;
};

/// Places, wires, executes and drains. Throws NumericError when a kernel
/// yields a non-finite value, CoverageError when the drain is incomplete.
SimReport run(const SpatialSpec& spec, const SimConfig& cfg, const AugmentedMatrix<double>& input);

std::string sim_report_to_json(const SimReport& report);

}  // namespace spatialqr
