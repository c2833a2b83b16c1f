#include "rfl/tape.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <tuple>
#include <unordered_map>

#include "rfl/errors.hpp"

namespace rfl {

namespace {

struct InstrKey {
  Op op;
  std::int32_t a;
  std::int32_t b;
  std::uint64_t number_bits;

  bool operator==(const InstrKey&) const = default;
};

struct InstrKeyHash {
  std::size_t operator()(const InstrKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.op);
    h = h * 1000003u ^ static_cast<std::size_t>(k.a);
    h = h * 1000003u ^ static_cast<std::size_t>(k.b);
    h = h * 1000003u ^ static_cast<std::size_t>(k.number_bits);
    return h;
  }
};

}  // namespace

Tape::Tape(std::span<const Expr> outputs, std::span<const Symbol> inputs)
    : num_inputs_(inputs.size()) {
  std::map<Symbol, std::int32_t> input_slot;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    input_slot.emplace(inputs[i], static_cast<std::int32_t>(i));
    code_.push_back({Op::Sym, -1, -1, 0.0});
  }
  std::unordered_map<const void*, std::int32_t> by_node;
  std::unordered_map<InstrKey, std::int32_t, InstrKeyHash> by_value;

  auto emit = [&](Op op, std::int32_t a, std::int32_t b, double number) {
    InstrKey key{op, a, b, std::bit_cast<std::uint64_t>(number)};
    if (auto it = by_value.find(key); it != by_value.end()) return it->second;
    const auto slot = static_cast<std::int32_t>(code_.size());
    code_.push_back({op, a, b, number});
    by_value.emplace(key, slot);
    return slot;
  };

  // Iterative post-order so deep chains do not exhaust the stack.
  auto compile = [&](const Expr& root) {
    std::vector<std::pair<Expr, bool>> stack{{root, false}};
    while (!stack.empty()) {
      auto [e, expanded] = stack.back();
      stack.pop_back();
      if (by_node.contains(e.id())) continue;
      if (e.op() == Op::Const) {
        by_node.emplace(e.id(), emit(Op::Const, -1, -1, e.number()));
        continue;
      }
      if (e.op() == Op::Sym) {
        auto it = input_slot.find(e.sym());
        if (it == input_slot.end()) {
          throw EvalError("unbound " + std::string(to_string(e.sym().cls)) + " symbol '" +
                          e.sym().name + "' while compiling expressions");
        }
        by_node.emplace(e.id(), it->second);
        continue;
      }
      const int n = arity(e.op());
      if (!expanded) {
        stack.push_back({e, true});
        for (int i = n - 1; i >= 0; --i) {
          if (!by_node.contains(e.arg(i).id())) stack.push_back({e.arg(i), false});
        }
        continue;
      }
      const std::int32_t a = by_node.at(e.arg(0).id());
      const std::int32_t b = n == 2 ? by_node.at(e.arg(1).id()) : -1;
      by_node.emplace(e.id(), emit(e.op(), a, b, e.op() == Op::Pow ? e.number() : 0.0));
    }
  };

  outputs_.reserve(outputs.size());
  for (const auto& e : outputs) {
    compile(e);
    outputs_.push_back(by_node.at(e.id()));
  }
}

void Tape::eval(std::span<const double> in, std::span<double> out, std::vector<double>& scratch) const {
  scratch.resize(code_.size());
  double* v = scratch.data();
  for (std::size_t i = 0; i < num_inputs_; ++i) v[i] = in[i];
  const std::size_t n = code_.size();
  for (std::size_t i = num_inputs_; i < n; ++i) {
    const Instr& ins = code_[i];
    switch (ins.op) {
      case Op::Const: v[i] = ins.number; break;
      case Op::Neg: v[i] = -v[ins.a]; break;
      case Op::Sin: v[i] = std::sin(v[ins.a]); break;
      case Op::Cos: v[i] = std::cos(v[ins.a]); break;
      case Op::Tan: v[i] = std::tan(v[ins.a]); break;
      case Op::Exp: v[i] = std::exp(v[ins.a]); break;
      case Op::Ln: v[i] = std::log(v[ins.a]); break;
      case Op::Sqrt: v[i] = std::sqrt(v[ins.a]); break;
      case Op::Add: v[i] = v[ins.a] + v[ins.b]; break;
      case Op::Sub: v[i] = v[ins.a] - v[ins.b]; break;
      case Op::Mul: v[i] = v[ins.a] * v[ins.b]; break;
      case Op::Div: v[i] = v[ins.a] / v[ins.b]; break;
      case Op::Pow: {
        const double x = v[ins.a];
        const double c = ins.number;
        if (c == 2.0) {
          v[i] = x * x;
        } else if (c == 3.0) {
          v[i] = x * x * x;
        } else if (c == -1.0) {
          v[i] = 1.0 / x;
        } else if (c == -2.0) {
          v[i] = 1.0 / (x * x);
        } else {
          v[i] = std::pow(x, c);
        }
        break;
      }
      case Op::Sym: break;
    }
  }
  for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = v[outputs_[k]];
}

std::vector<double> Tape::eval(std::span<const double> in) const {
  std::vector<double> out(outputs_.size());
  std::vector<double> scratch;
  eval(in, out, scratch);
  return out;
}

}  // namespace rfl
