#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfl/uncertainty.hpp"

namespace rfl {

// Stacked game data for the active channels j:
//   K = [Q^1/2; 0; sqrt(tau_j) K~_j],  G = [0; R^1/2; sqrt(tau_j) G~_j],
//   E = G^T G,  C = [C~_j / sqrt(tau_j)].
struct GameMatrices {
  Eigen::MatrixXd K, G, E, C;
  std::vector<std::size_t> channels;
};

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& S, const char* name);

// `tau` holds one multiplier per active channel of `model`. Throws
// RiccatiError when Q is not positive semidefinite, R is not positive
// definite, a tau is not positive, or E is singular.
GameMatrices assemble_game(const LinearizedUncertainModel& model, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           const Eigen::VectorXd& tau);

struct RiccatiSolution {
  bool ok = false;
  std::string failure;  // set when !ok
  Eigen::MatrixXd X;
  double residual = 0.0;  // Frobenius norm
  int newton_steps = 0;
};

// Stabilizing solution of
//   At^T X + X At - X (B E^-1 B^T - C C^T) X + K^T (I - G E^-1 G^T) K = 0,
//   At = A - B E^-1 G^T K,
// from the stable invariant subspace of the Hamiltonian, refined by Newton
// steps. Reports failure instead of throwing: no stabilizing solution means
// the multipliers are infeasible.
RiccatiSolution solve_game_riccati(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GameMatrices& game);

// Residual of the game equation at X (Frobenius norm).
double game_riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GameMatrices& game,
                             const Eigen::MatrixXd& X);

// G_tau = E^-1 (B^T X + G^T K); the control is v = -G_tau chi.
Eigen::MatrixXd game_gain(const Eigen::MatrixXd& X, const Eigen::MatrixXd& B, const GameMatrices& game);

double cost_bound(const Eigen::MatrixXd& X, const Eigen::VectorXd& tau, const std::vector<Eigen::MatrixXd>& D,
                  const Eigen::VectorXd& chi0);
// Bound averaged over the unit initial states e_1..e_nbar.
double average_cost_bound(const Eigen::MatrixXd& X, const Eigen::VectorXd& tau, const std::vector<Eigen::MatrixXd>& D);

double spectral_abscissa(const Eigen::MatrixXd& M);

struct TauSearchOptions {
  double sweep_lo = 1e-3;
  double sweep_hi = 1e6;
  int sweep_points = 7;
  double log10_min = -6.0;
  double log10_max = 9.0;
  int coordinate_passes = 40;
  int nelder_mead_evals = 400;
};

struct TauEvaluation {
  Eigen::VectorXd tau;
  double bound = 0.0;  // +inf when infeasible
};

struct TauSearchResult {
  Eigen::VectorXd tau;
  double bound = 0.0;
  double initial_bound = 0.0;  // at tau_init, +inf when infeasible
  std::vector<TauEvaluation> sweep;
  int evaluations = 0;
};

struct DesignInputs {
  Eigen::MatrixXd Q, R;
  std::vector<Eigen::MatrixXd> D;  // one per active channel
  Eigen::VectorXd chi0;            // empty: average over unit initial states
  Eigen::VectorXd tau_init;        // one per active channel
};

// Bound for given multipliers, +inf when the design is infeasible.
double evaluate_tau(const LinearizedUncertainModel& model, const DesignInputs& in, const Eigen::VectorXd& tau);

// Derivative-free search in log10(tau): joint sweep, coordinate descent,
// then Nelder-Mead. Throws RiccatiError when the sweep finds no feasible tau.
TauSearchResult optimize_tau(const LinearizedUncertainModel& model, const DesignInputs& in,
                             const TauSearchOptions& opt = {});

struct MinimaxDesign {
  Eigen::MatrixXd Q, R;
  std::vector<Eigen::MatrixXd> D;
  std::vector<std::size_t> channels;  // active channels (0-based chi rows)
  Eigen::VectorXd tau;
  Eigen::MatrixXd X;
  Eigen::MatrixXd gain;  // m x nbar
  double bound = 0.0;
  double residual = 0.0;
  Eigen::VectorXcd closed_loop_eigenvalues;
  bool standard_lqr = false;  // no active channels
};

// Optimizes tau (when there are active channels) and returns the accepted
// design. Throws RiccatiError when no feasible design exists or the accepted
// solution fails its checks.
MinimaxDesign synthesize(const LinearizedUncertainModel& model, const DesignInputs& in,
                         const TauSearchOptions& opt = {});

// Design for fixed multipliers; throws RiccatiError when infeasible.
MinimaxDesign design_for_tau(const LinearizedUncertainModel& model, const DesignInputs& in, const Eigen::VectorXd& tau);

}  // namespace rfl
