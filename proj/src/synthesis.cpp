#include "rfl/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "rfl/errors.hpp"
#include "rfl/optimize.hpp"

namespace rfl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Solves F^T D + D F = -Rhs through the Kronecker form; fine for nbar <= ~20.
bool solve_lyapunov(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Rhs, Eigen::MatrixXd& D) {
  const Eigen::Index n = F.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd Ft = F.transpose();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n * n, n * n);
  // Column-major vec: vec(F^T D) = (I kron F^T) vec D, vec(D F) = (F^T kron I) vec D.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      L.block(i * n, j * n, n, n) += I(i, j) * Ft;
      L.block(i * n, j * n, n, n) += Ft(i, j) * I;
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(L);
  if (!(lu.rcond() > 1e-15)) return false;
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Rhs.data(), n * n);
  const Eigen::VectorXd d = lu.solve(rhs);
  D = Eigen::Map<const Eigen::MatrixXd>(d.data(), n, n);
  D = 0.5 * (D + D.transpose()).eval();
  return D.allFinite();
}

struct GameData {
  Eigen::MatrixXd At, N, M;
};

GameData game_data(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GameMatrices& g) {
  const Eigen::LDLT<Eigen::MatrixXd> E(g.E);
  GameData d;
  d.At = A - B * E.solve(g.G.transpose() * g.K);
  d.N = B * E.solve(B.transpose()) - g.C * g.C.transpose();
  d.N = 0.5 * (d.N + d.N.transpose()).eval();
  const Eigen::MatrixXd P =
      Eigen::MatrixXd::Identity(g.G.rows(), g.G.rows()) - g.G * E.solve(g.G.transpose());
  d.M = g.K.transpose() * P * g.K;
  d.M = 0.5 * (d.M + d.M.transpose()).eval();
  return d;
}

Eigen::MatrixXd residual_matrix(const GameData& d, const Eigen::MatrixXd& X) {
  return d.At.transpose() * X + X * d.At - X * d.N * X + d.M;
}

}  // namespace

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& S, const char* name) {
  if (S.rows() != S.cols()) throw RiccatiError(std::string(name) + " must be square");
  if (!((S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + S.cwiseAbs().maxCoeff()))) {
    throw RiccatiError(std::string(name) + " must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = 1.0 + ev.cwiseAbs().maxCoeff();
  if (ev.minCoeff() < -1e-12 * scale) throw RiccatiError(std::string(name) + " must be positive semidefinite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

GameMatrices assemble_game(const LinearizedUncertainModel& model, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           const Eigen::VectorXd& tau) {
  const auto nbar = static_cast<Eigen::Index>(model.nbar());
  const auto m = static_cast<Eigen::Index>(model.m());
  if (Q.rows() != nbar || Q.cols() != nbar) throw RiccatiError("Q must be " + std::to_string(nbar) + "x" + std::to_string(nbar));
  if (R.rows() != m || R.cols() != m) throw RiccatiError("R must be " + std::to_string(m) + "x" + std::to_string(m));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rs(0.5 * (R + R.transpose()));
  if (!(rs.eigenvalues().minCoeff() > 0.0)) throw RiccatiError("R must be positive definite");

  GameMatrices g;
  g.channels = model.active();
  const auto p = static_cast<Eigen::Index>(g.channels.size());
  if (tau.size() != p) {
    throw RiccatiError("expected " + std::to_string(p) + " multipliers, got " + std::to_string(tau.size()));
  }
  g.K = Eigen::MatrixXd::Zero(nbar + m + p, nbar);
  g.G = Eigen::MatrixXd::Zero(nbar + m + p, m);
  g.C = Eigen::MatrixXd::Zero(nbar, p);
  g.K.topRows(nbar) = symmetric_sqrt(Q, "Q");
  g.G.middleRows(nbar, m) = symmetric_sqrt(R, "R");
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(tau[j] > 0.0) || !std::isfinite(tau[j])) throw RiccatiError("multipliers must be positive and finite");
    const auto k = static_cast<Eigen::Index>(g.channels[static_cast<std::size_t>(j)]);
    const double s = std::sqrt(tau[j]);
    g.K.row(nbar + m + j) = s * model.Kt.row(k);
    g.G.row(nbar + m + j) = s * model.Gt.row(k);
    g.C.col(j) = model.Ct.col(k) / s;
  }
  g.E = g.G.transpose() * g.G;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.E);
  if (!(es.eigenvalues().minCoeff() > 1e-14 * (1.0 + es.eigenvalues().maxCoeff()))) {
    throw RiccatiError("E = G^T G is singular");
  }
  return g;
}

double game_riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GameMatrices& game,
                             const Eigen::MatrixXd& X) {
  return residual_matrix(game_data(A, B, game), X).norm();
}

double spectral_abscissa(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return -kInf;
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  if (es.info() != Eigen::Success) return kInf;
  return es.eigenvalues().real().maxCoeff();
}

RiccatiSolution solve_game_riccati(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GameMatrices& game) {
  RiccatiSolution sol;
  const Eigen::Index n = A.rows();
  const GameData d = game_data(A, B, game);

  Eigen::MatrixXd H(2 * n, 2 * n);
  H << d.At, -d.N, -d.M, -d.At.transpose();
  if (!H.allFinite()) {
    sol.failure = "Hamiltonian has non-finite entries";
    return sol;
  }
  Eigen::ComplexEigenSolver<Eigen::MatrixXd> ces(H, true);
  if (ces.info() != Eigen::Success) {
    sol.failure = "Hamiltonian eigen-decomposition failed";
    return sol;
  }
  const double hscale = 1.0 + H.cwiseAbs().maxCoeff();
  Eigen::MatrixXcd V(2 * n, n);
  Eigen::Index stable = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    const double re = ces.eigenvalues()[i].real();
    if (std::abs(re) <= 1e-10 * hscale) {
      sol.failure = "Hamiltonian has eigenvalues on the imaginary axis";
      return sol;
    }
    if (re < 0.0) {
      if (stable == n) break;
      V.col(stable++) = ces.eigenvectors().col(i);
    }
  }
  if (stable != n) {
    sol.failure = "Hamiltonian stable subspace has wrong dimension";
    return sol;
  }
  const Eigen::MatrixXcd V1 = V.topRows(n);
  const Eigen::MatrixXcd V2 = V.bottomRows(n);
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(V1);
  if (!(lu.rcond() > 1e-13)) {
    sol.failure = "no stabilizing solution (stable subspace is not a graph over the state space)";
    return sol;
  }
  Eigen::MatrixXd X = (V2 * lu.inverse()).real();
  X = 0.5 * (X + X.transpose()).eval();

  const double tol_scale = 1e-8;
  Eigen::MatrixXd Res = residual_matrix(d, X);
  double res = Res.norm();
  // Newton steps from the eigenvector solution. Newton converges
  // quadratically but not monotonically in the residual, so keep the best
  // iterate and stop once converged or once the closed loop loses stability.
  Eigen::MatrixXd best = X;
  double best_res = res;
  for (int it = 0; it < 50; ++it) {
    if (it >= 1 && best_res <= 1e-3 * tol_scale * (1.0 + best.norm())) break;
    const Eigen::MatrixXd Acl = d.At - d.N * X;
    if (!(spectral_abscissa(Acl) < 0.0)) break;
    Eigen::MatrixXd Delta;
    if (!solve_lyapunov(Acl, Res, Delta)) break;
    X = X + Delta;
    X = 0.5 * (X + X.transpose()).eval();
    if (!X.allFinite()) break;
    Res = residual_matrix(d, X);
    res = Res.norm();
    ++sol.newton_steps;
    if (res < best_res) {
      best = X;
      best_res = res;
    } else if (it >= 1 && res > 1e3 * best_res) {
      break;
    }
  }
  X = best;
  X = 0.5 * (X + X.transpose()).eval();
  sol.X = X;
  sol.residual = residual_matrix(d, X).norm();
  if (!X.allFinite()) {
    sol.failure = "Riccati solution is not finite";
    return sol;
  }
  if (!(sol.residual <= tol_scale * (1.0 + X.norm()))) {
    std::ostringstream os;
    os << "Riccati residual " << sol.residual << " exceeds 1e-8*(1+|X|_F)";
    sol.failure = os.str();
    return sol;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X);
  if (es.eigenvalues().minCoeff() < -1e-8 * (1.0 + X.norm())) {
    sol.failure = "Riccati solution is not positive semidefinite";
    return sol;
  }
  if (!(spectral_abscissa(d.At - d.N * X) < 0.0)) {
    sol.failure = "Riccati solution is not stabilizing";
    return sol;
  }
  sol.ok = true;
  return sol;
}

Eigen::MatrixXd game_gain(const Eigen::MatrixXd& X, const Eigen::MatrixXd& B, const GameMatrices& game) {
  return game.E.ldlt().solve(B.transpose() * X + game.G.transpose() * game.K);
}

double cost_bound(const Eigen::MatrixXd& X, const Eigen::VectorXd& tau, const std::vector<Eigen::MatrixXd>& D,
                  const Eigen::VectorXd& chi0) {
  double b = chi0.dot(X * chi0);
  for (Eigen::Index j = 0; j < tau.size(); ++j) b += tau[j] * chi0.dot(D[static_cast<std::size_t>(j)] * chi0);
  return b;
}

double average_cost_bound(const Eigen::MatrixXd& X, const Eigen::VectorXd& tau, const std::vector<Eigen::MatrixXd>& D) {
  double b = X.trace();
  for (Eigen::Index j = 0; j < tau.size(); ++j) b += tau[j] * D[static_cast<std::size_t>(j)].trace();
  return b / static_cast<double>(X.rows());
}

namespace {

DesignInputs with_defaults(const LinearizedUncertainModel& model, DesignInputs in) {
  const std::size_t p = model.active().size();
  const auto nbar = static_cast<Eigen::Index>(model.nbar());
  if (in.D.empty()) in.D.assign(p, 1e-2 * Eigen::MatrixXd::Identity(nbar, nbar));
  if (in.D.size() != p) throw RiccatiError("expected one IQC matrix D per active channel");
  for (const auto& D : in.D) {
    if (D.rows() != nbar || D.cols() != nbar) throw RiccatiError("IQC matrices must be nbar x nbar");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (D + D.transpose()));
    if (!(es.eigenvalues().minCoeff() > 0.0)) throw RiccatiError("IQC matrices D must be positive definite");
  }
  if (in.tau_init.size() == 0) in.tau_init = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(p));
  if (static_cast<std::size_t>(in.tau_init.size()) != p) throw RiccatiError("expected one initial tau per active channel");
  if (in.chi0.size() != 0 && in.chi0.size() != nbar) throw RiccatiError("chi0 must have nbar entries");
  return in;
}

double bound_of(const DesignInputs& in, const Eigen::MatrixXd& X, const Eigen::VectorXd& tau) {
  return in.chi0.size() == 0 ? average_cost_bound(X, tau, in.D) : cost_bound(X, tau, in.D, in.chi0);
}

}  // namespace

double evaluate_tau(const LinearizedUncertainModel& model, const DesignInputs& raw, const Eigen::VectorXd& tau) {
  const DesignInputs in = with_defaults(model, raw);
  if (!tau.allFinite() || (tau.size() > 0 && !(tau.minCoeff() > 0.0))) return kInf;
  GameMatrices g;
  try {
    g = assemble_game(model, in.Q, in.R, tau);
  } catch (const RiccatiError&) {
    return kInf;
  }
  const RiccatiSolution sol = solve_game_riccati(model.A, model.B, g);
  if (!sol.ok) return kInf;
  const Eigen::MatrixXd Gt = game_gain(sol.X, model.B, g);
  if (!(spectral_abscissa(model.A - model.B * Gt) < 0.0)) return kInf;
  return bound_of(in, sol.X, tau);
}

TauSearchResult optimize_tau(const LinearizedUncertainModel& model, const DesignInputs& raw,
                             const TauSearchOptions& opt) {
  const DesignInputs in = with_defaults(model, raw);
  const auto p = static_cast<Eigen::Index>(model.active().size());
  TauSearchResult res;
  auto f_log = [&](const Eigen::VectorXd& lt) {
    ++res.evaluations;
    const Eigen::VectorXd clamped = lt.cwiseMax(opt.log10_min).cwiseMin(opt.log10_max);
    return evaluate_tau(model, in, clamped.unaryExpr([](double v) { return std::pow(10.0, v); }));
  };
  if (p == 0) {
    res.tau = Eigen::VectorXd();
    res.bound = res.initial_bound = evaluate_tau(model, in, res.tau);
    res.evaluations = 1;
    if (!std::isfinite(res.bound)) throw RiccatiError("the nominal LQR problem has no stabilizing solution");
    return res;
  }

  // Joint sweep, then tau_init; ties keep the earlier candidate.
  Eigen::VectorXd best_lt;
  double best = kInf;
  const double a = std::log10(opt.sweep_lo);
  const double b = std::log10(opt.sweep_hi);
  for (int s = 0; s < opt.sweep_points; ++s) {
    const double l = opt.sweep_points == 1 ? a : a + (b - a) * s / (opt.sweep_points - 1);
    const Eigen::VectorXd lt = Eigen::VectorXd::Constant(p, l);
    const double v = f_log(lt);
    res.sweep.push_back({lt.unaryExpr([](double x) { return std::pow(10.0, x); }), v});
    if (v < best) {
      best = v;
      best_lt = lt;
    }
  }
  const Eigen::VectorXd init_lt = in.tau_init.array().log10().matrix();
  res.initial_bound = f_log(init_lt);
  res.sweep.push_back({in.tau_init, res.initial_bound});
  if (res.initial_bound <= best) {
    best = res.initial_bound;
    best_lt = init_lt;
  }
  if (!std::isfinite(best)) {
    throw RiccatiError("no feasible multipliers found: the game Riccati equation has no stabilizing solution for tau in [" +
                       std::to_string(opt.sweep_lo) + ", " + std::to_string(opt.sweep_hi) + "]");
  }

  double step = 1.0;
  for (int pass = 0; pass < opt.coordinate_passes && step >= 1e-3; ++pass) {
    bool improved = false;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (double dir : {1.0, -1.0}) {
        Eigen::VectorXd trial = best_lt;
        trial[j] = std::clamp(trial[j] + dir * step, opt.log10_min, opt.log10_max);
        const double v = f_log(trial);
        if (v < best) {
          best = v;
          best_lt = trial;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }

  NelderMeadOptions nm;
  nm.max_evals = opt.nelder_mead_evals;
  nm.ftol = 1e-12;
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, opt.log10_min);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, opt.log10_max);
  const auto r = nelder_mead(f_log, best_lt, Eigen::VectorXd::Constant(p, 0.25), nm, &lo, &hi);
  if (r.f < best) {
    best = r.f;
    best_lt = r.x;
  }
  res.tau = best_lt.unaryExpr([](double v) { return std::pow(10.0, v); });
  res.bound = best;
  return res;
}

MinimaxDesign design_for_tau(const LinearizedUncertainModel& model, const DesignInputs& raw, const Eigen::VectorXd& tau) {
  const DesignInputs in = with_defaults(model, raw);
  MinimaxDesign d;
  d.Q = in.Q;
  d.R = in.R;
  d.D = in.D;
  d.channels = model.active();
  d.tau = tau;
  d.standard_lqr = d.channels.empty();
  const GameMatrices g = assemble_game(model, in.Q, in.R, tau);
  const RiccatiSolution sol = solve_game_riccati(model.A, model.B, g);
  if (!sol.ok) throw RiccatiError("game Riccati equation: " + sol.failure);
  d.X = sol.X;
  d.residual = sol.residual;
  d.gain = game_gain(sol.X, model.B, g);
  const Eigen::MatrixXd Acl = model.A - model.B * d.gain;
  Eigen::EigenSolver<Eigen::MatrixXd> es(Acl, false);
  d.closed_loop_eigenvalues = es.eigenvalues();
  if (!(d.closed_loop_eigenvalues.real().maxCoeff() < 0.0)) {
    throw RiccatiError("closed loop A - B*G_tau is not Hurwitz");
  }
  d.bound = bound_of(in, sol.X, tau);
  return d;
}

MinimaxDesign synthesize(const LinearizedUncertainModel& model, const DesignInputs& in, const TauSearchOptions& opt) {
  const TauSearchResult t = optimize_tau(model, in, opt);
  return design_for_tau(model, in, t.tau);
}

}  // namespace rfl
