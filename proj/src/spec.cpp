#include "spatialqr/spec.hpp"

#include <algorithm>
#include <functional>

#include "spatialqr/errors.hpp"

namespace spatialqr {

std::size_t kernel_input_arity(Kernel k) noexcept { return k == Kernel::Eliminate ? 2 : 4; }
std::size_t kernel_output_arity(Kernel k) noexcept { return k == Kernel::Eliminate ? 4 : 2; }

std::string kernel_tag(Kernel k) { return k == Kernel::Eliminate ? "f" : "g"; }

Kernel kernel_from_tag(const std::string& tag) {
  if (tag == "f") return Kernel::Eliminate;
  if (tag == "g") return Kernel::Update;
  throw ValidationError("unknown kernel '" + tag + "'");
}

std::optional<std::size_t> FuncSpec::dim_index(const std::string& dim) const {
  const auto it = std::find(dims.begin(), dims.end(), dim);
  if (it == dims.end()) return std::nullopt;
  return static_cast<std::size_t>(it - dims.begin());
}

const FuncSpec* SpatialSpec::find(const std::string& name) const {
  for (const auto& f : funcs)
    if (f.name == name) return &f;
  return nullptr;
}

const FuncSpec& SpatialSpec::func(const std::string& name) const {
  if (const FuncSpec* f = find(name)) return *f;
  throw ValidationError("unknown function '" + name + "'");
}

Bindings constant_bindings(const SpatialSpec& spec, std::int64_t m, std::int64_t n) {
  Bindings b;
  const std::int64_t values[] = {m, n};
  for (std::size_t i = 0; i < spec.constants.size() && i < 2; ++i) b[spec.constants[i]] = values[i];
  return b;
}

Bindings bind_coords(const FuncSpec& func, const std::vector<std::int64_t>& coords, Bindings base) {
  for (std::size_t i = 0; i < coords.size() && i < func.dims.size(); ++i) base[func.dims[i]] = coords[i];
  return base;
}

std::vector<std::vector<std::int64_t>> enumerate_domain(const FuncSpec& func, const Bindings& constants) {
  std::vector<std::vector<std::int64_t>> out;
  std::vector<std::int64_t> prefix;
  std::function<void(Bindings&)> recurse = [&](Bindings& bindings) {
    const std::size_t depth = prefix.size();
    if (depth == func.bounds.size()) {
      out.push_back(prefix);
      return;
    }
    const BoundSpec& bound = func.bounds[depth];
    for (const std::int64_t v : eval_range(bound, bindings)) {
      bindings[bound.var] = v;
      prefix.push_back(v);
      recurse(bindings);
      prefix.pop_back();
    }
    bindings.erase(bound.var);
  };
  Bindings bindings = constants;
  recurse(bindings);
  return out;
}

bool in_domain(const FuncSpec& func, const std::vector<std::int64_t>& coords, const Bindings& constants) {
  if (coords.size() != func.bounds.size()) return false;
  Bindings bindings = constants;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!in_range(func.bounds[i], bindings, coords[i])) return false;
    bindings[func.bounds[i].var] = coords[i];
  }
  return true;
}

std::size_t firing_case(const FuncSpec& func, const Bindings& iteration) {
  std::optional<std::size_t> hit;
  for (std::size_t i = 0; i < func.cases.size(); ++i) {
    if (!eval_bool(func.cases[i].guard, iteration)) continue;
    if (hit) throw ValidationError("function " + func.name + ": overlapping guards");
    hit = i;
  }
  if (!hit) throw ValidationError("function " + func.name + ": no guard holds");
  return *hit;
}

namespace {

Expr e(std::string_view text) { return Expr::parse(text); }

MemoryRef mem(std::string_view row, std::string_view col) { return {"A'", e(row), e(col)}; }

CallRef call(std::string func, std::initializer_list<std::string_view> coords, std::size_t index) {
  CallRef ref{std::move(func), {}, index};
  for (auto c : coords) ref.coords.push_back(e(c));
  return ref;
}

}  // namespace

SpatialSpec builtin_qr_spec() {
  SpatialSpec spec;
  spec.constants = {"M", "N"};
  spec.inputs.push_back({"A'", e("M"), e("N + 1")});

  FuncSpec x;
  x.name = "X";
  x.dims = {"col", "row"};
  x.bounds = {BoundSpec::parse("col", "1:1:N"), BoundSpec::parse("row", "M:-1:col + 1")};
  x.tuple_arity = 4;
  x.writes = {std::nullopt, std::nullopt, ElementRef{"A'", e("row"), e("col")},
              ElementRef{"A'", e("row - 1"), e("col")}};
  x.cases = {
      {"a", e("col == 1 && row == M"), Kernel::Eliminate, {mem("M", "1"), mem("M - 1", "1")}},
      {"b", e("col == 1 && row != M"), Kernel::Eliminate, {call("X", {"1", "row + 1"}, 3), mem("row - 1", "1")}},
      {"c",
       e("col != 1 && row == M"),
       Kernel::Eliminate,
       {call("Y", {"col - 1", "M", "col"}, 0), call("Y", {"col - 1", "M - 1", "col"}, 0)}},
      {"d",
       e("col != 1 && row != M"),
       Kernel::Eliminate,
       {call("X", {"col", "row + 1"}, 3), call("Y", {"col - 1", "row - 1", "col"}, 0)}},
  };
  x.directives = {
      ChannelDirective{{"X", "Y"}},
      UnrollDirective{"col"},
      UnrollDirective{"row"},
      StoreDirective{{3}, e("row == col + 1")},
  };

  FuncSpec y;
  y.name = "Y";
  y.dims = {"col", "row", "k"};
  y.bounds = {BoundSpec::parse("col", "1:1:N"), BoundSpec::parse("row", "M:-1:col + 1"),
              BoundSpec::parse("k", "col + 1:1:N + 1")};
  y.tuple_arity = 2;
  y.writes = {ElementRef{"A'", e("row"), e("k")}, ElementRef{"A'", e("row - 1"), e("k")}};
  y.cases = {
      {"a",
       e("col == 1 && row == M"),
       Kernel::Update,
       {call("X", {"1", "M"}, 0), call("X", {"1", "M"}, 1), mem("M", "k"), mem("M - 1", "k")}},
      {"b",
       e("col == 1 && row != M"),
       Kernel::Update,
       {call("X", {"1", "row"}, 0), call("X", {"1", "row"}, 1), call("Y", {"1", "row + 1", "k"}, 1),
        mem("row - 1", "k")}},
      {"c",
       e("col != 1 && row == M"),
       Kernel::Update,
       {call("X", {"col", "M"}, 0), call("X", {"col", "M"}, 1), call("Y", {"col - 1", "M", "k"}, 0),
        call("Y", {"col - 1", "M - 1", "k"}, 0)}},
      {"d",
       e("col != 1 && row != M"),
       Kernel::Update,
       {call("X", {"col", "row"}, 0), call("X", {"col", "row"}, 1), call("Y", {"col", "row + 1", "k"}, 1),
        call("Y", {"col - 1", "row - 1", "k"}, 0)}},
  };
  y.directives = {
      ChannelDirective{{"X", "Y"}},
      UnrollDirective{"col"},
      UnrollDirective{"row"},
      UnrollDirective{"k"},
      RelayDirective{"X", {0, 1}, {0, 0, 1}},
      StoreDirective{{1}, e("row == col + 1")},
      StoreDirective{{0}, e("row == col + 1 && row == M")},
  };

  spec.funcs = {std::move(x), std::move(y)};
  return spec;
}

bool ValidationReport::has_rule(const std::string& rule) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == rule; });
}

namespace {

class Validator {
 public:
  Validator(const SpatialSpec& spec, std::int64_t m, std::int64_t n) : spec_(spec) {
    report_.m = m;
    report_.n = n;
    constants_ = constant_bindings(spec, m, n);
  }

  ValidationReport run() {
    for (const auto& func : spec_.funcs) check_static(func);
    for (const auto& func : spec_.funcs) check_iterations(func);
    return std::move(report_);
  }

 private:
  void add(std::string rule, const FuncSpec& func, std::vector<std::int64_t> coords, std::string message) {
    report_.violations.push_back({std::move(rule), func.name, std::move(coords), std::move(message)});
  }

  void check_static(const FuncSpec& func) {
    if (func.bounds.size() != func.dims.size()) {
      add("bound", func, {}, "expected one bound per dim");
    } else {
      for (std::size_t i = 0; i < func.dims.size(); ++i) {
        if (func.bounds[i].var != func.dims[i]) add("bound", func, {}, "bound " + std::to_string(i) + " is for '" +
                                                                            func.bounds[i].var + "', expected '" +
                                                                            func.dims[i] + "'");
        if (func.bounds[i].step == 0) add("bound", func, {}, "zero step for '" + func.dims[i] + "'");
      }
    }
    for (std::size_t i = 0; i < func.cases.size(); ++i) {
      const auto& c = func.cases[i];
      if (c.args.size() != kernel_input_arity(c.kernel)) {
        add("kernel-arity", func, {}, "case " + c.pattern + " passes " + std::to_string(c.args.size()) +
                                          " arguments to kernel " + kernel_tag(c.kernel));
      }
      if (func.tuple_arity != kernel_output_arity(c.kernel)) {
        add("kernel-arity", func, {}, "tuple arity " + std::to_string(func.tuple_arity) + " does not match kernel " +
                                          kernel_tag(c.kernel));
      }
      for (const auto& arg : c.args) {
        if (const auto* ref = std::get_if<CallRef>(&arg)) {
          const FuncSpec* callee = spec_.find(ref->func);
          if (!callee) {
            add("call-unknown", func, {}, "case " + c.pattern + " calls unknown function '" + ref->func + "'");
            continue;
          }
          if (ref->coords.size() != callee->dims.size()) {
            add("call-arity", func, {}, "case " + c.pattern + " calls " + ref->func + " with " +
                                            std::to_string(ref->coords.size()) + " coordinates");
          }
          if (ref->index >= callee->tuple_arity) {
            add("tuple-index", func, {}, "case " + c.pattern + " reads " + ref->func + "[" +
                                             std::to_string(ref->index) + "] but arity is " +
                                             std::to_string(callee->tuple_arity));
          }
        } else if (const auto* mref = std::get_if<MemoryRef>(&arg)) {
          if (!find_input(mref->matrix)) add("memory-range", func, {}, "unknown input '" + mref->matrix + "'");
        }
      }
    }
    if (func.writes.size() != func.tuple_arity) add("write-index", func, {}, "writes must list every tuple slot");

    for (const auto& ch : func.directives_of<ChannelDirective>()) {
      for (const auto& callee : ch.callees)
        if (!spec_.find(callee)) add("channel-unknown", func, {}, "channel names unknown function '" + callee + "'");
    }
    for (const auto& un : func.directives_of<UnrollDirective>()) {
      if (!func.dim_index(un.dim)) add("unroll-dim", func, {}, "unroll of unknown dim '" + un.dim + "'");
    }
    for (const auto& relay : func.directives_of<RelayDirective>()) {
      const FuncSpec* source = spec_.find(relay.source);
      if (!source) {
        add("relay-source", func, {}, "relay of unknown function '" + relay.source + "'");
      } else {
        for (const auto idx : relay.indices)
          if (idx >= source->tuple_arity)
            add("relay-index", func, {}, "relay index " + std::to_string(idx) + " exceeds " + relay.source + " arity");
      }
      const auto nonzero = std::count_if(relay.vector.begin(), relay.vector.end(), [](auto v) { return v != 0; });
      if (relay.vector.size() != func.dims.size() || nonzero != 1) {
        add("relay-vector", func, {}, "relay vector must have one entry per dim and exactly one nonzero entry");
      }
    }
    for (const auto& store : func.directives_of<StoreDirective>()) {
      for (const auto idx : store.indices) {
        if (idx >= func.tuple_arity) {
          add("store-index", func, {}, "store index " + std::to_string(idx) + " exceeds tuple arity");
        } else if (idx < func.writes.size() && !func.writes[idx]) {
          add("store-index", func, {}, "store index " + std::to_string(idx) + " has no target element");
        }
      }
    }
  }

  const InputSpec* find_input(const std::string& name) const {
    for (const auto& in : spec_.inputs)
      if (in.name == name) return &in;
    return nullptr;
  }

  void check_memory(const FuncSpec& func, const std::vector<std::int64_t>& coords, const Bindings& b,
                    const std::string& matrix, const Expr& row_e, const Expr& col_e, const std::string& rule) {
    const InputSpec* in = find_input(matrix);
    if (!in) return;
    const std::int64_t rows = eval_int(in->rows, constants_);
    const std::int64_t cols = eval_int(in->cols, constants_);
    const std::int64_t row = eval_int(row_e, b);
    const std::int64_t col = eval_int(col_e, b);
    if (row < 1 || row > rows || col < 1 || col > cols) {
      add(rule, func, coords,
          matrix + "[" + std::to_string(row) + "," + std::to_string(col) + "] is outside " + std::to_string(rows) +
              "x" + std::to_string(cols));
    }
  }

  void check_args(const FuncSpec& func, const std::vector<std::int64_t>& coords, const Bindings& b,
                  const RecurrenceCase& c) {
    for (const auto& arg : c.args) {
      if (const auto* ref = std::get_if<CallRef>(&arg)) {
        const FuncSpec* callee = spec_.find(ref->func);
        if (!callee || ref->coords.size() != callee->dims.size()) continue;
        std::vector<std::int64_t> target;
        for (const auto& ce : ref->coords) target.push_back(eval_int(ce, b));
        if (!in_domain(*callee, target, constants_)) {
          std::string at = ref->func + "(";
          for (std::size_t i = 0; i < target.size(); ++i) at += (i ? "," : "") + std::to_string(target[i]);
          add("call-domain", func, coords, "case " + c.pattern + " reads " + at + ") outside its domain");
        }
      } else if (const auto* mref = std::get_if<MemoryRef>(&arg)) {
        check_memory(func, coords, b, mref->matrix, mref->row, mref->col, "memory-range");
      }
    }
  }

  void check_iterations(const FuncSpec& func) {
    std::vector<std::vector<std::int64_t>> domain;
    try {
      domain = enumerate_domain(func, constants_);
    } catch (const ValidationError& err) {
      add("bound", func, {}, err.what());
      return;
    }
    for (const auto& coords : domain) {
      const Bindings b = bind_coords(func, coords, constants_);
      std::vector<std::size_t> hits;
      bool guard_failed = false;
      for (std::size_t i = 0; i < func.cases.size(); ++i) {
        try {
          if (eval_bool(func.cases[i].guard, b)) hits.push_back(i);
        } catch (const ValidationError& err) {
          add("guard-eval", func, coords, "case " + func.cases[i].pattern + ": " + err.what());
          guard_failed = true;
        }
      }
      if (!guard_failed && hits.empty()) add("guard-gap", func, coords, "no case guard holds");
      if (hits.size() > 1) {
        std::string which;
        for (const auto h : hits) which += (which.empty() ? "" : ",") + func.cases[h].pattern;
        add("guard-overlap", func, coords, "guards of cases " + which + " all hold");
      }
      for (const auto h : hits) {
        try {
          check_args(func, coords, b, func.cases[h]);
        } catch (const ValidationError& err) {
          add("call-domain", func, coords, err.what());
        }
      }
      for (std::size_t slot = 0; slot < func.writes.size(); ++slot) {
        if (!func.writes[slot]) continue;
        try {
          check_memory(func, coords, b, func.writes[slot]->matrix, func.writes[slot]->row, func.writes[slot]->col,
                       "write-index");
        } catch (const ValidationError& err) {
          add("write-index", func, coords, err.what());
        }
      }
      for (const auto& store : func.directives_of<StoreDirective>()) {
        try {
          (void)eval_bool(store.condition, b);
        } catch (const ValidationError& err) {
          add("store-eval", func, coords, err.what());
        }
      }
    }
  }

  const SpatialSpec& spec_;
  Bindings constants_;
  ValidationReport report_;
};

}  // namespace

ValidationReport validate(const SpatialSpec& spec, std::int64_t m, std::int64_t n) {
  if (m < 1 || n < 1) throw PreconditionError("validate: M and N must be >= 1");
  return Validator(spec, m, n).run();
}

}  // namespace spatialqr
