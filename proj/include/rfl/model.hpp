#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfl/expr.hpp"

namespace rfl {

// One uncertain parameter: admissible values are [nominal - half_width,
// nominal + half_width]. A zero half-width marks the parameter as certain.
struct ParameterSpec {
  std::string name;
  double nominal = 0.0;
  double half_width = 0.0;

  double lower() const { return nominal - half_width; }
  double upper() const { return nominal + half_width; }
  bool uncertain() const { return half_width > 0.0; }
  bool contains(double p) const { return p >= lower() && p <= upper(); }
};

// Input-affine plant
//   x' = f(x, p) + sum_k g_k(x, p) u_k,   y_i = nu_i(x)
// with as many outputs as inputs.
struct UncertainSystem {
  std::vector<std::string> state_names;
  std::vector<std::string> input_names;
  std::vector<ParameterSpec> parameters;
  std::vector<Expr> drift;                      // n entries
  std::vector<std::vector<Expr>> input_fields;  // [k][i]: entry i of g_k
  std::vector<std::string> output_names;
  std::vector<Expr> outputs;                    // m entries, states only
  Eigen::VectorXd x_trim;
  Eigen::VectorXd u_trim;

  std::size_t n() const { return state_names.size(); }
  std::size_t m() const { return input_names.size(); }

  std::vector<Symbol> state_symbols() const;
  std::vector<Symbol> input_symbols() const;
  std::vector<Symbol> parameter_symbols() const;
  // Δp symbols of the parameters with a nonzero half-width, in declaration order.
  std::vector<Symbol> uncertainty_symbols() const;
  std::vector<std::size_t> uncertain_parameter_indices() const;
  Eigen::VectorXd nominal_parameters() const;

  // Builds the drift and input fields from full right-hand sides F_i(x, u, p).
  // Throws ModelError when some F_i is not affine in u.
  static UncertainSystem from_rhs(std::vector<std::string> states, std::vector<std::string> inputs,
                                  std::vector<ParameterSpec> params, std::span<const Expr> rhs,
                                  std::vector<std::string> output_names, std::vector<Expr> outputs,
                                  Eigen::VectorXd x_trim, Eigen::VectorXd u_trim);

  // Throws ModelError on a non-square system, outputs that read inputs or
  // parameters, undeclared symbols or inconsistent dimensions.
  void validate() const;

  // Infinity norm of f(x0, p0) + g(x0, p0) u0. Published trim tables are
  // rounded, so callers compare against trim_tolerance() and warn.
  double trim_residual() const;
  double trim_tolerance() const { return 1e-6 * (1.0 + x_trim.lpNorm<Eigen::Infinity>()); }
};

// Nominal and uncertain parts of the plant. Nominal fields contain no
// parameter symbols; uncertain fields are f(x, p0 + Δp) - f(x, p0) written in
// the Δp symbols, and vanish identically when Δp = 0.
struct NominalSplit {
  std::vector<Expr> f0;
  std::vector<std::vector<Expr>> g0;  // [k][i]
  std::vector<Expr> df;
  std::vector<std::vector<Expr>> dg;  // [k][i]
};

NominalSplit split_nominal_uncertain(const UncertainSystem& sys);

// Hyper-rectangle in the transformed coordinates chi and the new inputs v.
struct OperatingBox {
  Eigen::VectorXd chi_lower, chi_upper;
  Eigen::VectorXd v_lower, v_upper;

  // Throws ModelError unless lower <= upper componentwise and 0 is inside.
  void validate() const;
  bool contains(const Eigen::VectorXd& chi, const Eigen::VectorXd& v) const;
};

enum class SampleScheme { Grid, UniformRandom, CornersCenter, LatinHypercube };

struct SampleSpec {
  SampleScheme scheme = SampleScheme::Grid;
  int per_axis = 5;         // Grid
  std::size_t count = 0;    // UniformRandom, LatinHypercube
  std::uint64_t seed = 0;   // UniformRandom, LatinHypercube
};

// Points of the axis-aligned box [lo, hi]. Degenerate axes (lo == hi) are
// allowed. CornersCenter throws BoundError above 20 dimensions.
std::vector<Eigen::VectorXd> sample_hyperrect(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                              const SampleSpec& spec);

struct BoxSample {
  Eigen::VectorXd chi;
  Eigen::VectorXd v;
  Eigen::VectorXd p;
};

std::vector<BoxSample> sample_box(const OperatingBox& box, std::span<const ParameterSpec> theta,
                                  const SampleSpec& spec);

}  // namespace rfl
