#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rfl/expr.hpp"
#include "rfl/model.hpp"
#include "rfl/tape.hpp"

namespace rfl {

// L_f h = (dh/dx) f.
Expr lie_derivative(const Expr& h, std::span<const Expr> field, std::span<const Symbol> x);

// Output derivative chains along the nominal drift.
struct LieChain {
  std::vector<int> r;                           // relative degree per output
  std::vector<std::vector<Expr>> chains;        // [i][j] = L_f0^j nu_i, j = 0..r_i
  std::vector<std::vector<Expr>> decoupling;    // [i][k] = L_g0k L_f0^(r_i-1) nu_i
  std::vector<Symbol> states;

  std::size_t m() const { return r.size(); }
  int total_degree() const;
  // f_* entries: L_f0^(r_i) nu_i.
  std::vector<Expr> fstar() const;
};

struct RelativeDegreeOptions {
  double tol = 1e-9;        // relative to the size of the entry's inputs
  double ball_radius = 1e-3;
  int ball_points = 8;
  std::uint64_t seed = 1;
};

// Smallest r_i for which some L_g0k L_f0^(r_i-1) nu_i is nonzero at x0.
// Throws DegreeError when an entry vanishes at x0 but not in a small ball
// around it, when no input appears within n differentiations, or when the
// degrees do not add up to n.
LieChain relative_degree(const UncertainSystem& sys, const NominalSplit& split, const Eigen::VectorXd& x0,
                         const RelativeDegreeOptions& opt = {});

struct DecouplingMatrix {
  std::vector<std::vector<Expr>> entries;  // m x m
  Eigen::MatrixXd at_trim;
  double condition = 0.0;
};

// Throws DegreeError when g_*(x0) has condition number above 1e12.
DecouplingMatrix decoupling_matrix(const LieChain& chain, const Eigen::VectorXd& x0);

Eigen::MatrixXd evaluate_matrix(const std::vector<std::vector<Expr>>& entries, std::span<const Symbol> x,
                                const Eigen::VectorXd& at);

// u = g_*(x)^-1 (v - f_*(x)), closed over nominal parameters.
class FeedbackLaw {
 public:
  FeedbackLaw() = default;
  explicit FeedbackLaw(const LieChain& chain);

  std::size_t n() const { return n_; }
  std::size_t m() const { return m_; }

  // Throws SimError when g_*(x) is singular.
  Eigen::VectorXd control(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;
  void terms(const Eigen::VectorXd& x, Eigen::VectorXd& fstar, Eigen::MatrixXd& gstar) const;
  // Partial derivatives d f_*/dx (m x n) and d g_*/dx_i (m x m each).
  void term_jacobians(const Eigen::VectorXd& x, Eigen::MatrixXd& dfstar, std::vector<Eigen::MatrixXd>& dgstar) const;

 private:
  std::size_t n_ = 0, m_ = 0;
  Tape terms_;      // [f_* (m); g_* column-major (m*m)]
  Tape jacobians_;  // [df_*/dx row-major (m*n); dg_*/dx_i for each i, column-major]
};

// Chain coordinates chi with one integrator per output:
//   block i = [int(y_i - yc_i), y_i - yc_i, L_f0 nu_i, ..., L_f0^(r_i-1) nu_i].
// The non-integral components xi = T(x, yc) form a square map R^n -> R^n.
class Diffeomorphism {
 public:
  Diffeomorphism() = default;
  Diffeomorphism(const LieChain& chain, std::vector<std::string> output_names);

  std::size_t n() const { return n_; }
  std::size_t m() const { return r_.size(); }
  std::size_t nbar() const { return n_ + r_.size(); }
  const std::vector<int>& r() const { return r_; }

  // First chi index of block i; the integral component sits there.
  std::size_t block_offset(std::size_t i) const { return offsets_[i]; }
  std::size_t integral_index(std::size_t i) const { return offsets_[i]; }
  // Chi index of the j-th non-integral component (j in 0..n-1).
  std::size_t chi_index_of_xi(std::size_t j) const { return xi_to_chi_[j]; }
  bool is_integral(std::size_t chi_index) const;

  // Symbolic components of xi, in x and the reference symbols.
  const std::vector<Expr>& components() const { return components_; }
  const std::vector<Symbol>& reference_symbols() const { return references_; }

  Eigen::VectorXd xi(const Eigen::VectorXd& x, const Eigen::VectorXd& yc) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;  // dxi/dx, n x n
  Eigen::VectorXd chi(const Eigen::VectorXd& xi, const Eigen::VectorXd& integrals) const;
  Eigen::VectorXd xi_of_chi(const Eigen::VectorXd& chi) const;
  Eigen::VectorXd integrals_of_chi(const Eigen::VectorXd& chi) const;

  // Newton solve of xi(x, yc) = target from `guess`. Returns false when the
  // iteration fails to reach a residual of tol * (1 + |target|).
  bool invert(const Eigen::VectorXd& target, const Eigen::VectorXd& yc, const Eigen::VectorXd& guess,
              Eigen::VectorXd& x, double tol = 1e-11, int max_iter = 50) const;

 private:
  std::size_t n_ = 0;
  std::vector<int> r_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> xi_to_chi_;
  std::vector<Expr> components_;
  std::vector<Symbol> references_;
  Tape xi_tape_;   // inputs [x, yc]
  Tape jac_tape_;  // inputs [x], outputs row-major n x n
};

// Block-diagonal integrator chains of length r_i + 1 with the input entering
// at the bottom of each block.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> brunovsky(std::span<const int> r);

int controllability_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace rfl
