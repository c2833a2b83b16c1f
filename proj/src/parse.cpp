#include <cctype>
#include <charconv>
#include <string>

#include "rfl/errors.hpp"
#include "rfl/expr.hpp"

namespace rfl {

namespace {

// Recursive descent over
//   expr  := term (('+'|'-') term)*
//   term  := unary (('*'|'/') unary)*
//   unary := ('-'|'+') unary | power
//   power := base ('^' unary)?
//   base  := number | identifier | func '(' expr ')' | '(' expr ')'
// A constant exponent yields a Pow node; anything else becomes exp(b*ln(a)).
class Parser {
 public:
  Parser(std::string_view text, const Scope& scope, int line, int first_column)
      : text_(text), scope_(scope), line_(line), first_column_(first_column) {}

  Expr parse_all() {
    skip_space();
    if (at_end()) fail("empty expression");
    Expr e = expr();
    skip_space();
    if (!at_end()) fail(std::string("unexpected '") + peek() + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const { fail_at(pos_, message); }

  [[noreturn]] void fail_at(std::size_t pos, const std::string& message) const {
    throw ParseError(message, line_, first_column_ + static_cast<int>(pos));
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (at_end()) fail(std::string("expected '") + c + "' but reached end of input");
      fail(std::string("expected '") + c + "'");
    }
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = lhs + term();
      } else if (accept('-')) {
        lhs = lhs - term();
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = lhs * unary();
      } else if (accept('/')) {
        lhs = lhs / unary();
      } else {
        return lhs;
      }
    }
  }

  Expr unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base_expr = base();
    if (!accept('^')) return base_expr;
    Expr exponent = unary();
    if (exponent.is_constant()) return pow(base_expr, exponent.number());
    return exp(exponent * ln(base_expr));
  }

  Expr base() {
    skip_space();
    if (at_end()) fail("expected an operand but reached end of input");
    const char c = peek();
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("unexpected '") + c + "'");
  }

  Expr number() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.')) ++pos_;
    if (!at_end() && (peek() == 'e' || peek() == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && std::isdigit(static_cast<unsigned char>(text_[look]))) {
        pos_ = look;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
      }
    }
    double value = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) fail_at(start, "malformed number '" + std::string(first, last) + "'");
    return Expr(value);
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);
    skip_space();
    if (peek() == '(') {
      ++pos_;
      Expr arg = expr();
      expect(')');
      if (name == "sin") return sin(arg);
      if (name == "cos") return cos(arg);
      if (name == "tan") return tan(arg);
      if (name == "exp") return exp(arg);
      if (name == "ln") return ln(arg);
      if (name == "sqrt") return sqrt(arg);
      fail_at(start, "unknown function '" + std::string(name) + "'");
    }
    auto it = scope_.find(name);
    if (it == scope_.end()) {
      fail_at(start, "unknown symbol '" + std::string(name) +
                         "' (not declared as state, input, parameter or definition)");
    }
    return it->second;
  }

  std::string_view text_;
  const Scope& scope_;
  int line_;
  int first_column_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text, const Scope& scope, int line, int first_column) {
  return Parser(text, scope, line, first_column).parse_all();
}

}  // namespace rfl
