#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rfl/expr.hpp"

namespace rfl {

// Straight-line compiled form of a batch of expressions over a fixed input
// layout. Structurally identical subexpressions are evaluated once, so the
// cost is the size of the deduplicated DAG. Evaluation is unchecked: domain
// errors show up as NaN or infinity in the outputs and callers test for
// finiteness. A Tape is immutable and may be shared across threads; each
// thread brings its own scratch buffer.
class Tape {
 public:
  Tape() = default;
  // Throws EvalError when an expression references a symbol that is not in
  // `inputs`.
  Tape(std::span<const Expr> outputs, std::span<const Symbol> inputs);

  std::size_t num_inputs() const { return num_inputs_; }
  std::size_t num_outputs() const { return outputs_.size(); }
  std::size_t size() const { return code_.size(); }

  void eval(std::span<const double> in, std::span<double> out, std::vector<double>& scratch) const;
  std::vector<double> eval(std::span<const double> in) const;

 private:
  struct Instr {
    Op op;
    std::int32_t a;
    std::int32_t b;
    double number;
  };

  std::size_t num_inputs_ = 0;
  std::vector<Instr> code_;  // slots [0, num_inputs_) are the inputs
  std::vector<std::int32_t> outputs_;
};

}  // namespace rfl
