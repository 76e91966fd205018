#include "json.hpp"

#include "spatialqr/errors.hpp"
#include "spatialqr/spec.hpp"

namespace spatialqr {

using ojson = nlohmann::ordered_json;

namespace {

ojson arg_to_json(const Argument& arg) {
  ojson j;
  if (const auto* m = std::get_if<MemoryRef>(&arg)) {
    j["kind"] = "memory";
    j["matrix"] = m->matrix;
    j["row"] = m->row.to_string();
    j["col"] = m->col.to_string();
  } else if (const auto* c = std::get_if<CallRef>(&arg)) {
    j["kind"] = "call";
    j["func"] = c->func;
    j["coords"] = ojson::array();
    for (const auto& e : c->coords) j["coords"].push_back(e.to_string());
    j["index"] = c->index;
  } else {
    j["kind"] = "const";
    j["value"] = std::get<ConstRef>(arg).value;
  }
  return j;
}

ojson directive_to_json(const Directive& d) {
  ojson j;
  if (const auto* ch = std::get_if<ChannelDirective>(&d)) {
    j["kind"] = "channel";
    j["callees"] = ch->callees;
  } else if (const auto* un = std::get_if<UnrollDirective>(&d)) {
    j["kind"] = "unroll";
    j["dim"] = un->dim;
  } else if (const auto* relay = std::get_if<RelayDirective>(&d)) {
    j["kind"] = "relay";
    j["source"] = relay->source;
    j["indices"] = relay->indices;
    j["vector"] = relay->vector;
  } else {
    const auto& store = std::get<StoreDirective>(d);
    j["kind"] = "store";
    j["indices"] = store.indices;
    j["condition"] = store.condition.to_string();
  }
  return j;
}

const ojson& field(const ojson& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("spec json: missing field '") + key + "'");
  return j.at(key);
}

std::string str(const ojson& j, const char* key) {
  const ojson& v = field(j, key);
  if (!v.is_string()) throw ValidationError(std::string("spec json: field '") + key + "' must be a string");
  return v.get<std::string>();
}

Expr expr(const ojson& j, const char* key) { return Expr::parse(str(j, key)); }

template <typename T>
T number(const ojson& j, const char* key) {
  const ojson& v = field(j, key);
  if (!v.is_number()) throw ValidationError(std::string("spec json: field '") + key + "' must be a number");
  return v.get<T>();
}

Argument arg_from_json(const ojson& j) {
  const std::string kind = str(j, "kind");
  if (kind == "memory") return MemoryRef{str(j, "matrix"), expr(j, "row"), expr(j, "col")};
  if (kind == "call") {
    CallRef ref{str(j, "func"), {}, number<std::size_t>(j, "index")};
    for (const auto& c : field(j, "coords")) ref.coords.push_back(Expr::parse(c.get<std::string>()));
    return ref;
  }
  if (kind == "const") return ConstRef{number<double>(j, "value")};
  throw ValidationError("spec json: unknown argument kind '" + kind + "'");
}

Directive directive_from_json(const ojson& j) {
  const std::string kind = str(j, "kind");
  if (kind == "channel") return ChannelDirective{field(j, "callees").get<std::vector<std::string>>()};
  if (kind == "unroll") return UnrollDirective{str(j, "dim")};
  if (kind == "relay") {
    return RelayDirective{str(j, "source"), field(j, "indices").get<std::vector<std::size_t>>(),
                          field(j, "vector").get<std::vector<std::int64_t>>()};
  }
  if (kind == "store") return StoreDirective{field(j, "indices").get<std::vector<std::size_t>>(), expr(j, "condition")};
  throw ValidationError("spec json: unknown directive kind '" + kind + "'");
}

}  // namespace

std::string spec_to_json(const SpatialSpec& spec) {
  ojson doc;
  doc["schema"] = 1;
  doc["constants"] = spec.constants;
  doc["inputs"] = ojson::array();
  for (const auto& in : spec.inputs) {
    doc["inputs"].push_back({{"name", in.name}, {"rows", in.rows.to_string()}, {"cols", in.cols.to_string()}});
  }
  doc["funcs"] = ojson::array();
  for (const auto& f : spec.funcs) {
    ojson jf;
    jf["name"] = f.name;
    jf["dims"] = f.dims;
    jf["bounds"] = ojson::array();
    for (const auto& b : f.bounds) jf["bounds"].push_back({{"var", b.var}, {"range", b.to_string()}});
    jf["tuple_arity"] = f.tuple_arity;
    jf["writes"] = ojson::array();
    for (const auto& w : f.writes) {
      if (w) {
        jf["writes"].push_back({{"matrix", w->matrix}, {"row", w->row.to_string()}, {"col", w->col.to_string()}});
      } else {
        jf["writes"].push_back(nullptr);
      }
    }
    jf["cases"] = ojson::array();
    for (const auto& c : f.cases) {
      ojson jc;
      jc["pattern"] = c.pattern;
      jc["guard"] = c.guard.to_string();
      jc["kernel"] = kernel_tag(c.kernel);
      jc["args"] = ojson::array();
      for (const auto& a : c.args) jc["args"].push_back(arg_to_json(a));
      jf["cases"].push_back(std::move(jc));
    }
    jf["directives"] = ojson::array();
    for (const auto& d : f.directives) jf["directives"].push_back(directive_to_json(d));
    doc["funcs"].push_back(std::move(jf));
  }
  return doc.dump(2) + "\n";
}

SpatialSpec spec_from_json(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const ojson::parse_error& err) {
    throw ValidationError(std::string("spec json: ") + err.what());
  }
  try {
    if (number<int>(doc, "schema") != 1) throw ValidationError("spec json: unsupported schema version");
    SpatialSpec spec;
    spec.constants = field(doc, "constants").get<std::vector<std::string>>();
    for (const auto& in : field(doc, "inputs")) spec.inputs.push_back({str(in, "name"), expr(in, "rows"), expr(in, "cols")});
    for (const auto& jf : field(doc, "funcs")) {
      FuncSpec f;
      f.name = str(jf, "name");
      f.dims = field(jf, "dims").get<std::vector<std::string>>();
      for (const auto& jb : field(jf, "bounds")) f.bounds.push_back(BoundSpec::parse(str(jb, "var"), str(jb, "range")));
      f.tuple_arity = number<std::size_t>(jf, "tuple_arity");
      for (const auto& jw : field(jf, "writes")) {
        if (jw.is_null()) {
          f.writes.push_back(std::nullopt);
        } else {
          f.writes.push_back(ElementRef{str(jw, "matrix"), expr(jw, "row"), expr(jw, "col")});
        }
      }
      for (const auto& jc : field(jf, "cases")) {
        RecurrenceCase c{str(jc, "pattern"), expr(jc, "guard"), kernel_from_tag(str(jc, "kernel")), {}};
        for (const auto& ja : field(jc, "args")) c.args.push_back(arg_from_json(ja));
        f.cases.push_back(std::move(c));
      }
      for (const auto& jd : field(jf, "directives")) f.directives.push_back(directive_from_json(jd));
      spec.funcs.push_back(std::move(f));
    }
    return spec;
  } catch (const nlohmann::json::exception& err) {
    throw ValidationError(std::string("spec json: ") + err.what());
  }
}

}  // namespace spatialqr
