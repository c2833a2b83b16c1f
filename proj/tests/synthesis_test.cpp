#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "rfl/errors.hpp"
#include "rfl/pipeline.hpp"
#include "rfl/random.hpp"
#include "rfl/synthesis.hpp"
#include "oracles.hpp"

namespace rfl {
namespace {

const std::string kModels = RFL_MODELS_DIR;

using oracle::care_by_sign_function;

LinearizedUncertainModel certain_model(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const auto nbar = static_cast<std::size_t>(A.rows());
  return assemble_structured_model(A, B, std::vector<int>(static_cast<std::size_t>(B.cols()), 1),
                                   Eigen::VectorXd::Zero(A.rows()), std::vector<bool>(nbar, false));
}

DesignInputs weights(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  DesignInputs in;
  in.Q = Q;
  in.R = R;
  return in;
}

TEST(Riccati, ScalarIntegratorAnalytic) {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1), B = Eigen::MatrixXd::Ones(1, 1);
  const MinimaxDesign d = synthesize(certain_model(A, B), weights(A + B, B));
  EXPECT_TRUE(d.standard_lqr);
  EXPECT_NEAR(d.X(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(d.gain(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(d.closed_loop_eigenvalues[0].real(), -1.0, 1e-12);
}

TEST(Riccati, ZeroUncertaintyMatchesSignFunctionOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const oracle::RandomLqr sys = oracle::random_lqr(rng);
    const Eigen::MatrixXd &A = sys.A, &B = sys.B, &Q = sys.Q, &R = sys.R;
    const Eigen::Index n = A.rows();
    const MinimaxDesign d = synthesize(certain_model(A, B), weights(Q, R));
    const Eigen::MatrixXd oracle = care_by_sign_function(A, B, Q, R);
    EXPECT_LE((d.X - oracle).norm(), 1e-8 * (1.0 + oracle.norm())) << "trial " << trial << " n = " << n;
    EXPECT_LE(d.residual, 1e-8 * (1.0 + d.X.norm()));
    EXPECT_LE((d.gain - R.ldlt().solve(B.transpose() * oracle)).norm(), 1e-7 * (1.0 + d.gain.norm()));
  }
}

// Scalar game with A = 0, B = 1, Q = R = 1, one channel with C~ = 1,
// K~ = 1/2 and tau = 2: N = 1 - 1/2, M = 1 + 2/4, so X = sqrt(M / N) = sqrt(3).
TEST(Riccati, ScalarGameAnalytic) {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1), B = Eigen::MatrixXd::Ones(1, 1);
  const auto model =
      assemble_structured_model(A, B, {1}, Eigen::VectorXd::Constant(1, 0.5), {false}, KConvention::Sparse);
  const GameMatrices g = assemble_game(model, B, B, Eigen::VectorXd::Constant(1, 2.0));
  const RiccatiSolution sol = solve_game_riccati(A, B, g);
  ASSERT_TRUE(sol.ok) << sol.failure;
  EXPECT_NEAR(sol.X(0, 0), std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(game_gain(sol.X, B, g)(0, 0), std::sqrt(3.0), 1e-12);
  EXPECT_LE(game_riccati_residual(A, B, g, sol.X), 1e-12);
}

TEST(Riccati, InfeasibleMultiplierReportsFailure) {
  // With tau = 1/2 the disturbance term outweighs the control term (N < 0)
  // and no stabilizing positive semidefinite solution exists.
  const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1), B = Eigen::MatrixXd::Ones(1, 1);
  const auto model =
      assemble_structured_model(A, B, {1}, Eigen::VectorXd::Constant(1, 0.5), {false}, KConvention::Sparse);
  const GameMatrices g = assemble_game(model, B, B, Eigen::VectorXd::Constant(1, 0.5));
  EXPECT_FALSE(solve_game_riccati(A, B, g).ok);
  EXPECT_TRUE(std::isinf(evaluate_tau(model, weights(B, B), Eigen::VectorXd::Constant(1, 0.5))));
  EXPECT_THROW(design_for_tau(model, weights(B, B), Eigen::VectorXd::Constant(1, 0.5)), RiccatiError);
}

TEST(Riccati, InvalidWeights) {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1), B = Eigen::MatrixXd::Ones(1, 1);
  const auto model = certain_model(A, B);
  EXPECT_THROW(assemble_game(model, -B, B, Eigen::VectorXd()), RiccatiError);
  EXPECT_THROW(assemble_game(model, B, 0.0 * B, Eigen::VectorXd()), RiccatiError);
}

TEST(CostBound, AverageIsMeanOverUnitVectors) {
  Rng rng(9);
  Eigen::MatrixXd L(4, 4);
  for (Eigen::Index i = 0; i < 16; ++i) L.data()[i] = rng.uniform(-1, 1);
  const Eigen::MatrixXd X = L * L.transpose();
  const Eigen::Vector2d tau(0.5, 3.0);
  const std::vector<Eigen::MatrixXd> D{0.01 * Eigen::MatrixXd::Identity(4, 4), Eigen::MatrixXd(Eigen::Vector4d(1, 2, 3, 4).asDiagonal())};
  double mean = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i) mean += cost_bound(X, tau, D, Eigen::VectorXd::Unit(4, i)) / 4.0;
  EXPECT_NEAR(average_cost_bound(X, tau, D), mean, 1e-14);
  const Eigen::Vector4d chi0(1, -1, 0.5, 2);
  EXPECT_NEAR(cost_bound(X, tau, D, chi0),
              chi0.dot(X * chi0) + 0.5 * 0.01 * chi0.squaredNorm() + 3.0 * chi0.dot(D[1] * chi0), 1e-12);
}

struct Designed {
  ModelFile mf;
  std::unique_ptr<Linearization> lin;
  LinearizedUncertainModel model;
  MinimaxDesign design;
};

Designed design(const std::string& name) {
  Designed d{load_model_file(kModels + "/" + name + ".rfl"), nullptr, {}, {}};
  d.lin = linearize_model(d.mf);
  d.model = structured_model(d.mf, *d.lin, bound_model(d.mf, *d.lin).rho);
  d.design = synthesize_model(d.mf, d.model);
  return d;
}

TEST(Synthesis, ExampleDesignsAreAcceptedAndRobust) {
  for (const char* name : {"pendulum", "scalar", "double_integrator"}) {
    const Designed d = design(name);
    const MinimaxDesign& md = d.design;
    EXPECT_FALSE(md.standard_lqr) << name;
    EXPECT_LE(md.residual, 1e-8 * (1.0 + md.X.norm())) << name;
    EXPECT_LT(md.closed_loop_eigenvalues.real().maxCoeff(), 0.0) << name;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(md.X);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10) << name;
    // Structured perturbations |Delta_k| <= 1 keep the closed loop Hurwitz.
    Rng rng(17);
    const Eigen::MatrixXd Acl = d.model.A - d.model.B * md.gain;
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::MatrixXd P = Acl;
      for (std::size_t k : md.channels) {
        const auto kk = static_cast<Eigen::Index>(k);
        P += d.model.Ct.col(kk) * rng.uniform(-1, 1) * (d.model.Kt.row(kk) - d.model.Gt.row(kk) * md.gain);
      }
      EXPECT_LT(spectral_abscissa(P), 0.0) << name << " trial " << trial;
    }
  }
}

TEST(Synthesis, TauSearchImprovesOnItsStartAndSweep) {
  const Designed d = design("pendulum");
  const DesignInputs in = design_inputs(d.mf, d.model);
  const TauSearchResult r = optimize_tau(d.model, in);
  EXPECT_LE(r.bound, r.initial_bound);
  for (const auto& s : r.sweep) EXPECT_LE(r.bound, s.bound);
  EXPECT_NEAR(r.bound, evaluate_tau(d.model, in, r.tau), 1e-12 * (1.0 + r.bound));
  EXPECT_EQ(r.tau, optimize_tau(d.model, in).tau);
  EXPECT_DOUBLE_EQ(d.design.bound, r.bound);
}

TEST(Synthesis, FixedTauMatchesEvaluation) {
  const Designed d = design("scalar");
  const Eigen::VectorXd tau = Eigen::VectorXd::Constant(1, 3.0);
  const MinimaxDesign fixed = synthesize_model(d.mf, d.model, tau);
  EXPECT_EQ(fixed.tau, tau);
  EXPECT_NEAR(fixed.bound, evaluate_tau(d.model, design_inputs(d.mf, d.model), tau), 1e-12);
  EXPECT_THROW(synthesize_model(d.mf, d.model, Eigen::VectorXd::Ones(2)), RiccatiError);
}

TEST(Synthesis, ZeroBoundsReduceToStandardLqr) {
  const Designed d = design("pendulum");
  const auto model = structured_model(d.mf, *d.lin, Eigen::VectorXd::Zero(3));
  const MinimaxDesign md = synthesize_model(d.mf, model);
  EXPECT_TRUE(md.standard_lqr);
  EXPECT_EQ(md.tau.size(), 0);
  const Eigen::MatrixXd oracle = care_by_sign_function(model.A, model.B, md.Q, md.R);
  EXPECT_LE((md.X - oracle).norm(), 1e-8 * (1.0 + oracle.norm()));
}

TEST(Synthesis, HypersonicDesign) {
  const Designed d = design("ahfv");
  const MinimaxDesign& md = d.design;
  EXPECT_EQ(md.channels, (std::vector<std::size_t>{2, 3, 6, 7, 8}));
  EXPECT_LE(md.residual, 1e-8 * (1.0 + md.X.norm()));
  EXPECT_LT(md.closed_loop_eigenvalues.real().maxCoeff(), 0.0);
  EXPECT_EQ(md.gain.rows(), 2);
  EXPECT_EQ(md.gain.cols(), 9);
}

}  // namespace
}  // namespace rfl
