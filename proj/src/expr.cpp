#include "rfl/expr.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <unordered_set>

#include "rfl/errors.hpp"

namespace rfl {

struct Expr::Node {
  Op op = Op::Const;
  double number = 0.0;
  Symbol sym;
  Expr args[2] = {Expr(EmptyTag{}), Expr(EmptyTag{})};
};

std::string_view to_string(SymbolClass cls) {
  switch (cls) {
    case SymbolClass::State: return "state";
    case SymbolClass::Input: return "input";
    case SymbolClass::Parameter: return "parameter";
    case SymbolClass::Uncertainty: return "uncertainty";
    case SymbolClass::Reference: return "reference";
  }
  return "?";
}

int arity(Op op) {
  switch (op) {
    case Op::Const:
    case Op::Sym: return 0;
    case Op::Neg:
    case Op::Sin:
    case Op::Cos:
    case Op::Tan:
    case Op::Exp:
    case Op::Ln:
    case Op::Sqrt:
    case Op::Pow: return 1;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: return 2;
  }
  return 0;
}

Expr::Expr() : Expr(0.0) {}

Expr::Expr(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->number = value;
  node_ = std::move(n);
}

Expr Expr::symbol(Symbol s) {
  auto n = std::make_shared<Node>();
  n->op = Op::Sym;
  n->sym = std::move(s);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::make_unary(Op op, Expr a) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args[0] = std::move(a);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::make_binary(Op op, Expr a, Expr b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args[0] = std::move(a);
  n->args[1] = std::move(b);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::make_pow(Expr base, double exponent) {
  auto n = std::make_shared<Node>();
  n->op = Op::Pow;
  n->number = exponent;
  n->args[0] = std::move(base);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Op Expr::op() const { return node_->op; }
double Expr::number() const { return node_->number; }
const Symbol& Expr::sym() const { return node_->sym; }
const Expr& Expr::arg(int i) const { return node_->args[i]; }

// ---------------------------------------------------------------------------
// Simplifying constructors

namespace {

bool is_integer(double v) { return std::isfinite(v) && std::floor(v) == v; }

// Folds only when the result is an ordinary number, so that domain errors
// still surface from eval instead of turning into a NaN constant.
Expr fold_or(double value, const std::function<Expr()>& keep) {
  if (std::isfinite(value)) return Expr(value);
  return keep();
}

double apply_unary(Op op, double a) {
  switch (op) {
    case Op::Neg: return -a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Tan: return std::tan(a);
    case Op::Exp: return std::exp(a);
    case Op::Ln: return a > 0.0 ? std::log(a) : std::nan("");
    case Op::Sqrt: return a >= 0.0 ? std::sqrt(a) : std::nan("");
    default: return std::nan("");
  }
}

double int_pow(double base, double exponent) {
  if (exponent == 2.0) return base * base;
  if (exponent == 3.0) return base * base * base;
  if (exponent == -1.0) return 1.0 / base;
  if (exponent == -2.0) return 1.0 / (base * base);
  return std::pow(base, exponent);
}

Expr unary_fn(Op op, const Expr& a) {
  if (a.is_constant()) {
    return fold_or(apply_unary(op, a.number()), [&] { return Expr::make_unary(op, a); });
  }
  return Expr::make_unary(op, a);
}

}  // namespace

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.number() + b.number());
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  if (b.op() == Op::Neg) return a - b.arg(0);
  if (a.op() == Op::Neg) return b - a.arg(0);
  if (a.same(b)) return 2.0 * a;
  return Expr::make_binary(Op::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.number() - b.number());
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  if (a.same(b)) return Expr(0.0);
  if (b.op() == Op::Neg) return a + b.arg(0);
  return Expr::make_binary(Op::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.number() * b.number());
  if (a.is_zero() || b.is_zero()) return Expr(0.0);
  if (b.is_constant()) return b * a;  // constants to the left
  if (a.is_constant(1.0)) return b;
  if (a.is_constant(-1.0)) return -b;
  if (a.is_constant() && b.op() == Op::Mul && b.arg(0).is_constant()) {
    return Expr(a.number() * b.arg(0).number()) * b.arg(1);
  }
  if (a.op() == Op::Neg) return -(a.arg(0) * b);
  if (b.op() == Op::Neg) return -(a * b.arg(0));
  if (a.same(b)) return pow(a, 2.0);
  return Expr::make_binary(Op::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_constant(1.0)) return a;
  if (b.is_constant(-1.0)) return -a;
  if (a.is_zero() && !b.is_zero()) return Expr(0.0);
  if (a.is_constant() && b.is_constant() && b.number() != 0.0) {
    return Expr(a.number() / b.number());
  }
  if (a.same(b)) return Expr(1.0);
  return Expr::make_binary(Op::Div, a, b);
}

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr(-a.number());
  if (a.op() == Op::Neg) return a.arg(0);
  if (a.op() == Op::Sub) return Expr::make_binary(Op::Sub, a.arg(1), a.arg(0));
  return Expr::make_unary(Op::Neg, a);
}

Expr sin(const Expr& a) { return unary_fn(Op::Sin, a); }
Expr cos(const Expr& a) { return unary_fn(Op::Cos, a); }
Expr tan(const Expr& a) { return unary_fn(Op::Tan, a); }
Expr exp(const Expr& a) { return unary_fn(Op::Exp, a); }
Expr ln(const Expr& a) { return unary_fn(Op::Ln, a); }
Expr sqrt(const Expr& a) { return unary_fn(Op::Sqrt, a); }

Expr pow(const Expr& base, double exponent) {
  if (exponent == 0.0) return Expr(1.0);
  if (exponent == 1.0) return base;
  if (base.is_constant()) {
    const double b = base.number();
    if (b >= 0.0 || is_integer(exponent)) {
      return fold_or(int_pow(b, exponent), [&] { return Expr::make_pow(base, exponent); });
    }
  }
  if (base.op() == Op::Pow && is_integer(base.number()) && is_integer(exponent)) {
    return pow(base.arg(0), base.number() * exponent);
  }
  return Expr::make_pow(base, exponent);
}

// ---------------------------------------------------------------------------
// Structural rewrites

namespace {

using Memo = std::unordered_map<const void*, Expr>;

Expr rebuild(const Expr& e, const Expr& a, const Expr& b) {
  switch (e.op()) {
    case Op::Neg: return -a;
    case Op::Sin: return sin(a);
    case Op::Cos: return cos(a);
    case Op::Tan: return tan(a);
    case Op::Exp: return exp(a);
    case Op::Ln: return ln(a);
    case Op::Sqrt: return sqrt(a);
    case Op::Pow: return pow(a, e.number());
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    default: return e;
  }
}

Expr simplify_rec(const Expr& e, Memo& memo) {
  if (arity(e.op()) == 0) return e;
  if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
  Expr a = simplify_rec(e.arg(0), memo);
  Expr b = arity(e.op()) == 2 ? simplify_rec(e.arg(1), memo) : Expr();
  Expr out = rebuild(e, a, b);
  memo.emplace(e.id(), out);
  return out;
}

Expr diff_rec(const Expr& e, const Symbol& s, Memo& memo) {
  switch (e.op()) {
    case Op::Const: return Expr(0.0);
    case Op::Sym: return Expr(e.sym() == s ? 1.0 : 0.0);
    default: break;
  }
  if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
  const Expr& a = e.arg(0);
  const Expr da = diff_rec(a, s, memo);
  Expr out;
  switch (e.op()) {
    case Op::Neg: out = -da; break;
    case Op::Sin: out = da.is_zero() ? Expr(0.0) : cos(a) * da; break;
    case Op::Cos: out = da.is_zero() ? Expr(0.0) : -(sin(a) * da); break;
    case Op::Tan: out = da.is_zero() ? Expr(0.0) : da / pow(cos(a), 2.0); break;
    case Op::Exp: out = e * da; break;
    case Op::Ln: out = da / a; break;
    case Op::Sqrt: out = da.is_zero() ? Expr(0.0) : da / (2.0 * e); break;
    case Op::Pow: {
      const double c = e.number();
      out = da.is_zero() ? Expr(0.0) : (c * pow(a, c - 1.0)) * da;
      break;
    }
    case Op::Add: out = da + diff_rec(e.arg(1), s, memo); break;
    case Op::Sub: out = da - diff_rec(e.arg(1), s, memo); break;
    case Op::Mul: {
      const Expr& b = e.arg(1);
      out = da * b + a * diff_rec(b, s, memo);
      break;
    }
    case Op::Div: {
      // d(a/b) = (a' - (a/b) b') / b reuses the quotient node.
      const Expr& b = e.arg(1);
      const Expr db = diff_rec(b, s, memo);
      out = db.is_zero() ? da / b : (da - e * db) / b;
      break;
    }
    default: break;
  }
  memo.emplace(e.id(), out);
  return out;
}

Expr substitute_rec(const Expr& e, const std::map<Symbol, Expr>& rep, Memo& memo) {
  if (e.op() == Op::Const) return e;
  if (e.op() == Op::Sym) {
    auto it = rep.find(e.sym());
    return it == rep.end() ? e : it->second;
  }
  if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
  Expr a = substitute_rec(e.arg(0), rep, memo);
  Expr b = arity(e.op()) == 2 ? substitute_rec(e.arg(1), rep, memo) : Expr();
  Expr out;
  if (a.same(e.arg(0)) && (arity(e.op()) == 1 || b.same(e.arg(1)))) {
    out = e;
  } else {
    out = rebuild(e, a, b);
  }
  memo.emplace(e.id(), out);
  return out;
}

}  // namespace

Expr simplify(const Expr& e) {
  Memo memo;
  return simplify_rec(e, memo);
}

Expr diff(const Expr& e, const Symbol& s) {
  Memo memo;
  return diff_rec(e, s, memo);
}

std::vector<Expr> gradient(const Expr& e, std::span<const Symbol> symbols) {
  std::vector<Expr> out;
  out.reserve(symbols.size());
  for (const auto& s : symbols) out.push_back(diff(e, s));
  return out;
}

Expr substitute(const Expr& e, const std::map<Symbol, Expr>& replacements) {
  Memo memo;
  return substitute_rec(e, replacements, memo);
}

// ---------------------------------------------------------------------------
// Checked evaluation

namespace {

std::string excerpt(const Expr& e) {
  if (node_count(e) > 64) return "<subexpression of " + std::to_string(node_count(e)) + " nodes>";
  return to_string(e);
}

double eval_rec(const Expr& e, const Binding& binding, std::unordered_map<const void*, double>& memo) {
  switch (e.op()) {
    case Op::Const: return e.number();
    case Op::Sym: {
      auto it = binding.find(e.sym());
      if (it == binding.end()) {
        throw EvalError("unbound " + std::string(to_string(e.sym().cls)) + " symbol '" +
                        e.sym().name + "'");
      }
      return it->second;
    }
    default: break;
  }
  if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
  const double a = eval_rec(e.arg(0), binding, memo);
  double out = 0.0;
  auto domain = [&](const char* what) {
    throw EvalError(std::string("domain error (") + what + ") in " + excerpt(e));
  };
  switch (e.op()) {
    case Op::Neg: out = -a; break;
    case Op::Sin: out = std::sin(a); break;
    case Op::Cos: out = std::cos(a); break;
    case Op::Tan: out = std::tan(a); break;
    case Op::Exp: out = std::exp(a); break;
    case Op::Ln:
      if (!(a > 0.0)) domain("logarithm of a non-positive value");
      out = std::log(a);
      break;
    case Op::Sqrt:
      if (!(a >= 0.0)) domain("square root of a negative value");
      out = std::sqrt(a);
      break;
    case Op::Pow: {
      const double c = e.number();
      if (a < 0.0 && !is_integer(c)) domain("fractional power of a negative value");
      if (a == 0.0 && c < 0.0) domain("negative power of zero");
      out = int_pow(a, c);
      break;
    }
    case Op::Add: out = a + eval_rec(e.arg(1), binding, memo); break;
    case Op::Sub: out = a - eval_rec(e.arg(1), binding, memo); break;
    case Op::Mul: out = a * eval_rec(e.arg(1), binding, memo); break;
    case Op::Div: {
      const double b = eval_rec(e.arg(1), binding, memo);
      if (b == 0.0) domain("division by zero");
      out = a / b;
      break;
    }
    default: break;
  }
  memo.emplace(e.id(), out);
  return out;
}

}  // namespace

double eval(const Expr& e, const Binding& binding) {
  std::unordered_map<const void*, double> memo;
  return eval_rec(e, binding, memo);
}

// ---------------------------------------------------------------------------
// Printing

namespace {

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    case Op::Const: return e.number() < 0.0 || std::signbit(e.number()) ? 0 : 5;
    default: return 5;
  }
}

std::string number_text(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

const char* function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tan: return "tan";
    case Op::Exp: return "exp";
    case Op::Ln: return "ln";
    case Op::Sqrt: return "sqrt";
    default: return "?";
  }
}

void print_rec(const Expr& e, std::string& out);

void print_child(const Expr& child, int min_prec, std::string& out) {
  if (precedence(child) < min_prec) {
    out += '(';
    print_rec(child, out);
    out += ')';
  } else {
    print_rec(child, out);
  }
}

void print_rec(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::Const: out += number_text(e.number()); return;
    case Op::Sym: out += e.sym().name; return;
    case Op::Neg:
      out += '-';
      print_child(e.arg(0), 4, out);
      return;
    case Op::Sin:
    case Op::Cos:
    case Op::Tan:
    case Op::Exp:
    case Op::Ln:
    case Op::Sqrt:
      out += function_name(e.op());
      out += '(';
      print_rec(e.arg(0), out);
      out += ')';
      return;
    case Op::Pow: {
      print_child(e.arg(0), 5, out);
      out += '^';
      const double c = e.number();
      if (c >= 0.0 && is_integer(c)) {
        out += number_text(c);
      } else {
        out += '(' + number_text(c) + ')';
      }
      return;
    }
    case Op::Add:
    case Op::Sub:
      print_child(e.arg(0), 1, out);
      out += e.op() == Op::Add ? " + " : " - ";
      print_child(e.arg(1), 2, out);
      return;
    case Op::Mul:
    case Op::Div:
      print_child(e.arg(0), 2, out);
      out += e.op() == Op::Mul ? "*" : "/";
      print_child(e.arg(1), 3, out);
      return;
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  print_rec(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Traversal helpers

namespace {

template <typename Visit>
void walk_unique(std::span<const Expr> roots, Visit&& visit) {
  std::unordered_set<const void*> seen;
  std::vector<Expr> stack(roots.begin(), roots.end());
  while (!stack.empty()) {
    Expr e = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(e.id()).second) continue;
    visit(e);
    for (int i = 0; i < arity(e.op()); ++i) stack.push_back(e.arg(i));
  }
}

}  // namespace

std::size_t node_count(std::span<const Expr> roots) {
  std::size_t n = 0;
  walk_unique(roots, [&](const Expr&) { ++n; });
  return n;
}

std::size_t node_count(const Expr& e) { return node_count(std::span<const Expr>(&e, 1)); }

void collect_symbols(const Expr& e, std::set<Symbol>& out) {
  walk_unique(std::span<const Expr>(&e, 1), [&](const Expr& n) {
    if (n.op() == Op::Sym) out.insert(n.sym());
  });
}

std::set<Symbol> symbols_of(const Expr& e) {
  std::set<Symbol> out;
  collect_symbols(e, out);
  return out;
}

bool depends_on(const Expr& e, SymbolClass cls) {
  for (const auto& s : symbols_of(e)) {
    if (s.cls == cls) return true;
  }
  return false;
}

bool depends_on(const Expr& e, const Symbol& s) { return symbols_of(e).contains(s); }

}  // namespace rfl
