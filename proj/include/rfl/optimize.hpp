#pragma once

#include <functional>

#include <Eigen/Dense>

namespace rfl {

struct NelderMeadOptions {
  int max_evals = 400;
  double ftol = 1e-10;  // relative spread of simplex values
  double xtol = 1e-9;   // simplex diameter relative to the initial step
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evals = 0;
};

// Minimizes f from x0 with an axis-aligned initial simplex of edge `step`.
// Non-finite values are treated as +inf. When `lo`/`hi` are given (same size
// as x0), every trial point is clamped into the box before evaluation.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& step, const NelderMeadOptions& opt = {},
                             const Eigen::VectorXd* lo = nullptr, const Eigen::VectorXd* hi = nullptr);

}  // namespace rfl
