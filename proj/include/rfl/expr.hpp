#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rfl {

// Symbols are namespaced by class, so a parameter named `x` never collides
// with a state named `x`. `Uncertainty` holds the Δp deviations produced by
// the nominal/uncertain split.
enum class SymbolClass : std::uint8_t { State, Input, Parameter, Uncertainty, Reference };

std::string_view to_string(SymbolClass cls);

struct Symbol {
  SymbolClass cls = SymbolClass::State;
  std::string name;

  friend auto operator<=>(const Symbol&, const Symbol&) = default;
  friend bool operator==(const Symbol&, const Symbol&) = default;
};

inline Symbol state(std::string name) { return {SymbolClass::State, std::move(name)}; }
inline Symbol input(std::string name) { return {SymbolClass::Input, std::move(name)}; }
inline Symbol parameter(std::string name) { return {SymbolClass::Parameter, std::move(name)}; }
inline Symbol uncertainty(std::string name) { return {SymbolClass::Uncertainty, std::move(name)}; }
inline Symbol reference(std::string name) { return {SymbolClass::Reference, std::move(name)}; }

enum class Op : std::uint8_t {
  Const,
  Sym,
  Neg,
  Sin,
  Cos,
  Tan,
  Exp,
  Ln,
  Sqrt,
  Add,
  Sub,
  Mul,
  Div,
  Pow,  // constant exponent, stored in the node
};

int arity(Op op);

// Immutable handle to a node of an expression DAG. Copies share structure;
// nothing reachable from an Expr is ever mutated, so handles can be read,
// evaluated and differentiated from several threads at once.
class Expr {
 public:
  Expr();  // the constant 0
  Expr(double value);  // NOLINT: implicit so `2.0 * e` reads naturally

  static Expr symbol(Symbol s);
  // Raw constructors; they never simplify. Prefer the operators below.
  static Expr make_unary(Op op, Expr a);
  static Expr make_binary(Op op, Expr a, Expr b);
  static Expr make_pow(Expr base, double exponent);

  Op op() const;
  // Value of a constant, or the exponent of a Pow node.
  double number() const;
  const Symbol& sym() const;
  const Expr& arg(int i) const;

  bool is_constant() const { return op() == Op::Const; }
  bool is_constant(double v) const { return is_constant() && number() == v; }
  bool is_zero() const { return is_constant(0.0); }

  // Node identity. Two handles with the same id are the same subexpression.
  const void* id() const { return node_.get(); }
  bool same(const Expr& other) const { return node_ == other.node_; }

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  // Empty child slot of a leaf node.
  struct EmptyTag {};
  explicit Expr(EmptyTag) {}
  std::shared_ptr<const Node> node_;
};

// Simplifying constructors: constant folding and the 0/1 identities are
// applied on the spot, which keeps Lie-derivative chains small.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr tan(const Expr& a);
Expr exp(const Expr& a);
Expr ln(const Expr& a);
Expr sqrt(const Expr& a);
Expr pow(const Expr& base, double exponent);

// Rebuilds the whole DAG through the simplifying constructors.
Expr simplify(const Expr& e);

Expr diff(const Expr& e, const Symbol& s);
std::vector<Expr> gradient(const Expr& e, std::span<const Symbol> symbols);

// Replaces symbols by expressions. Subexpressions that contain none of the
// replaced symbols are returned unchanged (same node identity).
Expr substitute(const Expr& e, const std::map<Symbol, Expr>& replacements);

using Binding = std::map<Symbol, double>;

// Checked evaluation: throws EvalError on an unbound symbol or on a domain
// error (ln of a non-positive value, division by zero, ...), naming the
// offending subexpression.
double eval(const Expr& e, const Binding& binding);

// Infix rendering that `parse` reads back. Constants use the shortest
// round-trip representation.
std::string to_string(const Expr& e);

// Number of distinct nodes reachable from e (DAG size, not tree size).
std::size_t node_count(const Expr& e);
std::size_t node_count(std::span<const Expr> roots);

void collect_symbols(const Expr& e, std::set<Symbol>& out);
std::set<Symbol> symbols_of(const Expr& e);
bool depends_on(const Expr& e, SymbolClass cls);
bool depends_on(const Expr& e, const Symbol& s);

// Identifier -> expression. Declared names map to symbol expressions, named
// definitions map to whatever they expand to.
using Scope = std::map<std::string, Expr, std::less<>>;

// Parses one scalar expression. `line` and `first_column` locate the text in
// its source file for error messages.
Expr parse(std::string_view text, const Scope& scope, int line = 1, int first_column = 1);

}  // namespace rfl
