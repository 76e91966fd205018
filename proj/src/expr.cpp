#include "spatialqr/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "spatialqr/errors.hpp"

namespace spatialqr {

struct Expr::Node {
  Op op;
  std::int64_t value = 0;
  std::string name;
  std::vector<Expr> operands;
};

namespace {

int precedence(Expr::Op op) {
  switch (op) {
    case Expr::Op::And:
      return 1;
    case Expr::Op::Eq:
    case Expr::Op::Ne:
    case Expr::Op::Lt:
    case Expr::Op::Le:
      return 2;
    case Expr::Op::Add:
    case Expr::Op::Sub:
      return 3;
    case Expr::Op::Mul:
      return 4;
    case Expr::Op::Literal:
    case Expr::Op::Name:
      return 5;
  }
  return 5;
}

const char* symbol(Expr::Op op) {
  switch (op) {
    case Expr::Op::Add: return "+";
    case Expr::Op::Sub: return "-";
    case Expr::Op::Mul: return "*";
    case Expr::Op::Eq: return "==";
    case Expr::Op::Ne: return "!=";
    case Expr::Op::Lt: return "<";
    case Expr::Op::Le: return "<=";
    case Expr::Op::And: return "&&";
    default: return "?";
  }
}

bool is_comparison(Expr::Op op) { return precedence(op) == 2; }

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    Expr e = parse_and();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(text_.substr(pos_)) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("expression '" + std::string(text_) + "': " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(std::string_view tok) {
    skip_space();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  Expr parse_and() {
    Expr lhs = parse_comparison();
    while (accept("&&")) lhs = Expr::binary(Expr::Op::And, lhs, parse_comparison());
    return lhs;
  }

  Expr parse_comparison() {
    Expr lhs = parse_additive();
    if (accept("==")) return Expr::binary(Expr::Op::Eq, lhs, parse_additive());
    if (accept("!=")) return Expr::binary(Expr::Op::Ne, lhs, parse_additive());
    if (accept("<=")) return Expr::binary(Expr::Op::Le, lhs, parse_additive());
    if (accept("<")) return Expr::binary(Expr::Op::Lt, lhs, parse_additive());
    return lhs;
  }

  Expr parse_additive() {
    Expr lhs = parse_multiplicative();
    while (true) {
      if (accept("+")) {
        lhs = Expr::binary(Expr::Op::Add, lhs, parse_multiplicative());
      } else if (peek_binary_minus()) {
        ++pos_;
        lhs = Expr::binary(Expr::Op::Sub, lhs, parse_multiplicative());
      } else {
        return lhs;
      }
    }
  }

  bool peek_binary_minus() {
    skip_space();
    return pos_ < text_.size() && text_[pos_] == '-';
  }

  Expr parse_multiplicative() {
    Expr lhs = parse_primary();
    while (accept("*")) lhs = Expr::binary(Expr::Op::Mul, lhs, parse_primary());
    return lhs;
  }

  Expr parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    if (accept("(")) {
      Expr inner = parse_and();
      if (!accept(")")) fail("missing ')'");
      return inner;
    }
    const char ch = text_[pos_];
    if (ch == '-' || std::isdigit(static_cast<unsigned char>(ch))) {
      std::size_t end = pos_ + (ch == '-' ? 1 : 0);
      while (end < text_.size() && std::isdigit(static_cast<unsigned char>(text_[end]))) ++end;
      std::int64_t v = 0;
      const auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + end, v);
      if (ec != std::errc() || ptr != text_.data() + end) fail("bad integer literal");
      pos_ = end;
      return Expr::literal(v);
    }
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t end = pos_;
      while (end < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_' || text_[end] == '\'')) {
        ++end;
      }
      std::string id(text_.substr(pos_, end - pos_));
      pos_ = end;
      return Expr::name(std::move(id));
    }
    fail(std::string("unexpected character '") + ch + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr Expr::literal(std::int64_t value) { return Expr(std::make_shared<const Node>(Node{Op::Literal, value, {}, {}})); }

Expr Expr::name(std::string name) {
  return Expr(std::make_shared<const Node>(Node{Op::Name, 0, std::move(name), {}}));
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  if (op == Op::Literal || op == Op::Name) throw ValidationError("Expr::binary needs an operator");
  return Expr(std::make_shared<const Node>(Node{op, 0, {}, {std::move(lhs), std::move(rhs)}}));
}

Expr Expr::parse(std::string_view text) { return Parser(text).parse(); }

Expr::Op Expr::op() const noexcept { return node_->op; }

std::int64_t Expr::value() const {
  if (node_->op != Op::Literal) throw ValidationError("not a literal");
  return node_->value;
}

const std::string& Expr::identifier() const {
  if (node_->op != Op::Name) throw ValidationError("not a name");
  return node_->name;
}

const Expr& Expr::lhs() const {
  if (node_->operands.size() != 2) throw ValidationError("leaf expression has no operands");
  return node_->operands[0];
}

const Expr& Expr::rhs() const {
  if (node_->operands.size() != 2) throw ValidationError("leaf expression has no operands");
  return node_->operands[1];
}

std::string Expr::to_string() const {
  const Node& n = *node_;
  switch (n.op) {
    case Op::Literal:
      return std::to_string(n.value);
    case Op::Name:
      return n.name;
    default:
      break;
  }
  const int p = precedence(n.op);
  const Expr& l = n.operands[0];
  const Expr& r = n.operands[1];
  const bool paren_l = precedence(l.op()) < p || (is_comparison(n.op) && precedence(l.op()) == p);
  const bool paren_r = precedence(r.op()) <= p;
  std::string out;
  out += paren_l ? "(" + l.to_string() + ")" : l.to_string();
  out += ' ';
  out += symbol(n.op);
  out += ' ';
  out += paren_r ? "(" + r.to_string() + ")" : r.to_string();
  return out;
}

std::vector<std::string> Expr::names() const {
  std::vector<std::string> out;
  std::function<void(const Expr&)> walk = [&](const Expr& e) {
    if (e.op() == Op::Name) {
      if (std::find(out.begin(), out.end(), e.identifier()) == out.end()) out.push_back(e.identifier());
      return;
    }
    for (const Expr& child : e.node_->operands) walk(child);
  };
  walk(*this);
  return out;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  return a.node_->op == b.node_->op && a.node_->value == b.node_->value && a.node_->name == b.node_->name &&
         a.node_->operands == b.node_->operands;
}

Expr operator+(Expr a, Expr b) { return Expr::binary(Expr::Op::Add, std::move(a), std::move(b)); }
Expr operator-(Expr a, Expr b) { return Expr::binary(Expr::Op::Sub, std::move(a), std::move(b)); }
Expr operator*(Expr a, Expr b) { return Expr::binary(Expr::Op::Mul, std::move(a), std::move(b)); }
Expr operator+(Expr a, std::int64_t b) { return std::move(a) + Expr::literal(b); }
Expr operator-(Expr a, std::int64_t b) { return std::move(a) - Expr::literal(b); }

ExprValue eval_expr(const Expr& e, const Bindings& bindings) {
  switch (e.op()) {
    case Expr::Op::Literal:
      return e.value();
    case Expr::Op::Name: {
      const auto it = bindings.find(e.identifier());
      if (it == bindings.end()) throw ValidationError("unbound name '" + e.identifier() + "'");
      return it->second;
    }
    case Expr::Op::And:
      return eval_bool(e.lhs(), bindings) && eval_bool(e.rhs(), bindings);
    case Expr::Op::Eq:
    case Expr::Op::Ne: {
      const ExprValue l = eval_expr(e.lhs(), bindings);
      const ExprValue r = eval_expr(e.rhs(), bindings);
      if (l.index() != r.index()) throw ValidationError("type mismatch in '" + e.to_string() + "'");
      return e.op() == Expr::Op::Eq ? l == r : l != r;
    }
    default:
      break;
  }
  const std::int64_t l = eval_int(e.lhs(), bindings);
  const std::int64_t r = eval_int(e.rhs(), bindings);
  switch (e.op()) {
    case Expr::Op::Add: return l + r;
    case Expr::Op::Sub: return l - r;
    case Expr::Op::Mul: return l * r;
    case Expr::Op::Lt: return l < r;
    case Expr::Op::Le: return l <= r;
    default: break;
  }
  throw ValidationError("unsupported operator");
}

std::int64_t eval_int(const Expr& e, const Bindings& bindings) {
  const ExprValue v = eval_expr(e, bindings);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw ValidationError("expected an integer from '" + e.to_string() + "'");
}

bool eval_bool(const Expr& e, const Bindings& bindings) {
  const ExprValue v = eval_expr(e, bindings);
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  throw ValidationError("expected a boolean from '" + e.to_string() + "'");
}

std::string BoundSpec::to_string() const {
  return lower.to_string() + ":" + std::to_string(step) + ":" + upper.to_string();
}

BoundSpec BoundSpec::parse(std::string var, std::string_view range) {
  const auto first = range.find(':');
  const auto second = first == std::string_view::npos ? first : range.find(':', first + 1);
  if (second == std::string_view::npos) throw ValidationError("range '" + std::string(range) + "' is not lower:step:upper");
  const Expr step = Expr::parse(range.substr(first + 1, second - first - 1));
  if (step.op() != Expr::Op::Literal) throw ValidationError("range step must be an integer literal");
  if (step.value() == 0) throw ValidationError("range '" + std::string(range) + "' has zero step");
  return {std::move(var), Expr::parse(range.substr(0, first)), step.value(), Expr::parse(range.substr(second + 1))};
}

std::vector<std::int64_t> eval_range(const BoundSpec& bound, const Bindings& bindings) {
  if (bound.step == 0) throw ValidationError("bound of '" + bound.var + "' has zero step");
  const std::int64_t lo = eval_int(bound.lower, bindings);
  const std::int64_t hi = eval_int(bound.upper, bindings);
  std::vector<std::int64_t> out;
  if (bound.step > 0) {
    for (std::int64_t v = lo; v <= hi; v += bound.step) out.push_back(v);
  } else {
    for (std::int64_t v = lo; v >= hi; v += bound.step) out.push_back(v);
  }
  return out;
}

bool in_range(const BoundSpec& bound, const Bindings& bindings, std::int64_t value) {
  if (bound.step == 0) throw ValidationError("bound of '" + bound.var + "' has zero step");
  const std::int64_t lo = eval_int(bound.lower, bindings);
  const std::int64_t hi = eval_int(bound.upper, bindings);
  const bool inside = bound.step > 0 ? (lo <= value && value <= hi) : (hi <= value && value <= lo);
  return inside && (value - lo) % bound.step == 0;
}

}  // namespace spatialqr
