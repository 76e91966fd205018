#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spatialqr {

/// Integer/boolean expression over symbolic constants and loop variables.
/// Supports literals, names, + - *, == != < <=, and &&.
class Expr {
 public:
  enum class Op { Literal, Name, Add, Sub, Mul, Eq, Ne, Lt, Le, And };

  static Expr literal(std::int64_t value);
  static Expr name(std::string name);
  static Expr binary(Op op, Expr lhs, Expr rhs);

  /// Parses the infix form produced by to_string(). Throws ValidationError.
  static Expr parse(std::string_view text);

  Op op() const noexcept;
  std::int64_t value() const;          // Literal only
  const std::string& identifier() const;  // Name only
  const Expr& lhs() const;
  const Expr& rhs() const;

  /// Canonical infix rendering with minimal parentheses.
  std::string to_string() const;

  /// Free names in first-occurrence order.
  std::vector<std::string> names() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  std::shared_ptr<const Node> node_;
};

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator+(Expr a, std::int64_t b);
Expr operator-(Expr a, std::int64_t b);

using Bindings = std::map<std::string, std::int64_t, std::less<>>;
using ExprValue = std::variant<std::int64_t, bool>;

/// Evaluates under the given bindings. Unbound names and type mismatches
/// throw ValidationError.
ExprValue eval_expr(const Expr& e, const Bindings& bindings);
std::int64_t eval_int(const Expr& e, const Bindings& bindings);
bool eval_bool(const Expr& e, const Bindings& bindings);

/// Loop bound "lower : step : upper", both ends inclusive.
struct BoundSpec {
  std::string var;
  Expr lower;
  std::int64_t step = 1;
  Expr upper;

  /// Renders as "lower:step:upper".
  std::string to_string() const;
  /// Parses "lower:step:upper".
  static BoundSpec parse(std::string var, std::string_view range);

  friend bool operator==(const BoundSpec&, const BoundSpec&) = default;
};

/// Values of the range in iteration order (empty when the range is empty).
std::vector<std::int64_t> eval_range(const BoundSpec& bound, const Bindings& bindings);

/// Whether value lies in the range.
bool in_range(const BoundSpec& bound, const Bindings& bindings, std::int64_t value);

}  // namespace spatialqr
