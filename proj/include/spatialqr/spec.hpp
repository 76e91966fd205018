#pragma once

// A spatial program as data: functions defined by guarded recurrence cases
// over a (possibly triangular) loop nest, plus the scheduling directives
// (channel, unroll, relay, store) that map it onto processing elements.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spatialqr/expr.hpp"

namespace spatialqr {

/// The two kernels a recurrence may call.
///   Eliminate (f): (A'[row,col], A'[row-1,col]) -> (c, s, A'[row,col]', A'[row-1,col]')
///   Update    (g): (c, s, A'[row,k], A'[row-1,k]) -> (A'[row,k]', A'[row-1,k]')
enum class Kernel { Eliminate, Update };

std::size_t kernel_input_arity(Kernel k) noexcept;
std::size_t kernel_output_arity(Kernel k) noexcept;
/// "f" / "g".
std::string kernel_tag(Kernel k);
Kernel kernel_from_tag(const std::string& tag);

struct MemoryRef {
  std::string matrix;
  Expr row;
  Expr col;
};

struct CallRef {
  std::string func;
  std::vector<Expr> coords;
  std::size_t index = 0;
};

struct ConstRef {
  double value = 0.0;
};

using Argument = std::variant<MemoryRef, CallRef, ConstRef>;

struct RecurrenceCase {
  std::string pattern;  // boundary pattern tag, "a".."d"
  Expr guard;
  Kernel kernel = Kernel::Eliminate;
  std::vector<Argument> args;
};

struct ChannelDirective {
  std::vector<std::string> callees;
};

struct UnrollDirective {
  std::string dim;
};

/// Forward tuple elements of a call to `source` across PEs along `vector`.
struct RelayDirective {
  std::string source;
  std::vector<std::size_t> indices;
  std::vector<std::int64_t> vector;
};

struct StoreDirective {
  std::vector<std::size_t> indices;
  Expr condition;
};

using Directive = std::variant<ChannelDirective, UnrollDirective, RelayDirective, StoreDirective>;

/// Matrix element a tuple slot finalizes, e.g. slot [3] of X is A'[row-1, col].
struct ElementRef {
  std::string matrix;
  Expr row;
  Expr col;
};

struct FuncSpec {
  std::string name;
  std::vector<std::string> dims;  // outermost first
  std::vector<BoundSpec> bounds;  // one per dim, same order
  std::size_t tuple_arity = 1;
  std::vector<std::optional<ElementRef>> writes;  // one per tuple slot
  std::vector<RecurrenceCase> cases;
  std::vector<Directive> directives;

  std::optional<std::size_t> dim_index(const std::string& dim) const;

  template <typename D>
  std::vector<D> directives_of() const {
    std::vector<D> out;
    for (const auto& d : directives)
      if (const auto* p = std::get_if<D>(&d)) out.push_back(*p);
    return out;
  }
};

struct InputSpec {
  std::string name;
  Expr rows;
  Expr cols;
};

struct SpatialSpec {
  std::vector<std::string> constants;
  std::vector<InputSpec> inputs;
  std::vector<FuncSpec> funcs;

  const FuncSpec* find(const std::string& name) const;
  const FuncSpec& func(const std::string& name) const;  // throws ValidationError
};

/// Constant bindings {M: m, N: n}.
Bindings constant_bindings(const SpatialSpec& spec, std::int64_t m, std::int64_t n);

/// Binds dims[0..coords.size()) onto a copy of base.
Bindings bind_coords(const FuncSpec& func, const std::vector<std::int64_t>& coords, Bindings base);

/// All iterations of a function in nesting order (outermost first, each
/// dim stepping in its bound's direction).
std::vector<std::vector<std::int64_t>> enumerate_domain(const FuncSpec& func, const Bindings& constants);

bool in_domain(const FuncSpec& func, const std::vector<std::int64_t>& coords, const Bindings& constants);

/// Index of the unique case whose guard holds; throws ValidationError otherwise.
std::size_t firing_case(const FuncSpec& func, const Bindings& iteration);

/// The Givens-QR program: X (elimination) and Y (update) with full unroll,
/// channels between them, c/s relay along k, and stores of the final rows.
SpatialSpec builtin_qr_spec();

struct Violation {
  std::string rule;
  std::string func;
  std::vector<std::int64_t> coords;  // empty when not tied to an iteration
  std::string message;
};

struct ValidationReport {
  std::int64_t m = 0;
  std::int64_t n = 0;
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has_rule(const std::string& rule) const;
};

/// Checks the spec at concrete constants. Collects every violation.
/// Rule ids: bound, guard-eval, guard-overlap, guard-gap, kernel-arity,
/// call-unknown, call-arity, call-domain, tuple-index, memory-range,
/// write-index, relay-source, relay-vector, relay-index, store-index,
/// store-eval, unroll-dim, channel-unknown.
ValidationReport validate(const SpatialSpec& spec, std::int64_t m, std::int64_t n);

/// JSON document (schema 1). Serialization is canonical: parse then
/// serialize reproduces the input byte-for-byte when it was produced here.
std::string spec_to_json(const SpatialSpec& spec);
SpatialSpec spec_from_json(const std::string& text);

}  // namespace spatialqr
