#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "rfl/expr.hpp"
#include "rfl/random.hpp"

namespace rfl::oracle {

// Random smooth expression whose domain covers all of R^3: arguments of ln
// and sqrt, divisors and tangent arguments are wrapped so the value stays
// finite and the function stays differentiable. Leaves are drawn from
// `leaves` and from quarter-integer constants in [-3, 3].
inline Expr random_expr(Rng& rng, int depth, const Symbol (&leaves)[3]) {
  const auto pick = [&](int n) { return static_cast<int>(rng.next() % static_cast<std::uint64_t>(n)); };
  if (depth == 0 || pick(5) == 0) {
    switch (pick(4)) {
      case 0: return Expr::symbol(leaves[0]);
      case 1: return Expr::symbol(leaves[1]);
      case 2: return Expr::symbol(leaves[2]);
      default: return Expr(std::round(rng.uniform(-3.0, 3.0) * 4.0) / 4.0);
    }
  }
  const Expr a = random_expr(rng, depth - 1, leaves);
  switch (pick(11)) {
    case 0: return -a;
    case 1: return sin(a);
    case 2: return cos(a);
    case 3: return tan(Expr(0.5) * sin(a));
    case 4: return exp(Expr(0.5) * sin(a));
    case 5: return ln(Expr(1.0) + pow(a, 2.0));
    case 6: return sqrt(Expr(0.5) + pow(sin(a), 2.0));
    case 7: return a + random_expr(rng, depth - 1, leaves);
    case 8: return a - random_expr(rng, depth - 1, leaves);
    case 9: return a * random_expr(rng, depth - 1, leaves);
    default: {
      const Expr b = random_expr(rng, depth - 1, leaves);
      return pick(2) == 0 ? a / (Expr(1.0) + pow(b, 2.0)) : pow(Expr(1.0) + pow(sin(a), 2.0), pick(2) == 0 ? 3.0 : -1.5);
    }
  }
}

// Standard-ARE solver independent of the library: matrix sign function of the
// Hamiltonian by determinant-scaled Newton iteration, then the stabilizing
// solution from [W12; W22 + I] X = -[W11 + I; W21].
inline Eigen::MatrixXd care_by_sign_function(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                             const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd Z(2 * n, 2 * n);
  Z << A, -B * R.ldlt().solve(B.transpose()), -Q, -A.transpose();
  for (int it = 0; it < 100; ++it) {
    const Eigen::MatrixXd Zi = Z.inverse();
    const double c = std::pow(std::abs(Z.determinant()), 1.0 / static_cast<double>(2 * n));
    const Eigen::MatrixXd next = 0.5 * (Z / c + c * Zi);
    const double change = (next - Z).norm();
    Z = next;
    if (change < 1e-14 * Z.norm()) break;
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd lhs(2 * n, n), rhs(2 * n, n);
  lhs << Z.topRightCorner(n, n), Z.bottomRightCorner(n, n) + I;
  rhs << Z.topLeftCorner(n, n) + I, Z.bottomLeftCorner(n, n);
  const Eigen::MatrixXd X = lhs.colPivHouseholderQr().solve(-rhs);
  return 0.5 * (X + X.transpose());
}

// Smallest singular value of [A - lambda I, B] over the eigenvalues of A.
// Zero means uncontrollable; small values mean the ARE itself is
// ill-conditioned, so no solver can deliver 1e-8 agreement.
inline double pbh_margin(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows(), m = B.cols();
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  double margin = INFINITY;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXcd P(n, n + m);
    P.leftCols(n) = A.cast<std::complex<double>>();
    P.leftCols(n).diagonal().array() -= es.eigenvalues()[i];
    P.rightCols(m) = B.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(P);
    margin = std::min(margin, svd.singularValues()(n - 1));
  }
  return margin;
}

struct RandomLqr {
  Eigen::MatrixXd A, B, Q, R;
};

// Random (A, B, Q, R) with n in 2..12, m in 1..3, entries uniform in [-1, 1],
// Q, R positive definite. Draws with PBH margin below 0.05 are redrawn.
inline RandomLqr random_lqr(Rng& rng) {
  for (;;) {
    const auto n = static_cast<Eigen::Index>(2 + rng.next() % 11);
    const auto m = static_cast<Eigen::Index>(1 + rng.next() % 3);
    RandomLqr s;
    s.A.resize(n, n);
    s.B.resize(n, m);
    Eigen::MatrixXd L(n, n), S(m, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) s.A(i, j) = rng.uniform(-1, 1), L(i, j) = rng.uniform(-1, 1);
      for (Eigen::Index j = 0; j < m; ++j) s.B(i, j) = rng.uniform(-1, 1);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) S(i, j) = rng.uniform(-1, 1);
    }
    s.Q = L * L.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    s.R = S * S.transpose() + 0.5 * Eigen::MatrixXd::Identity(m, m);
    if (pbh_margin(s.A, s.B) >= 0.05) return s;
  }
}

}  // namespace rfl::oracle
