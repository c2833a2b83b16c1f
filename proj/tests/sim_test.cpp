#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "rfl/errors.hpp"
#include "rfl/pipeline.hpp"
#include "rfl/report.hpp"
#include "rfl/sim.hpp"

namespace rfl {
namespace {

const std::string kModels = RFL_MODELS_DIR;

struct Designed {
  ModelFile mf;
  std::unique_ptr<Linearization> lin;
  LinearizedUncertainModel model;
  MinimaxDesign design;
  ClosedLoop loop;
};

std::unique_ptr<Designed> design_from(ModelFile mf) {
  auto d = std::make_unique<Designed>();
  d->mf = std::move(mf);
  d->lin = linearize_model(d->mf);
  const StructuredBounds b = bound_model(d->mf, *d->lin);
  d->model = structured_model(d->mf, *d->lin, b.rho);
  d->design = synthesize_model(d->mf, d->model);
  d->loop = closed_loop(d->mf, *d->lin, d->design);
  return d;
}

std::unique_ptr<Designed> design_file(const std::string& name) { return design_from(load_model_file(kModels + "/" + name)); }

// Open-loop v = const through the law; no gain involved.
ClosedLoop open_loop(const Linearization& lin, const UncertainSystem& sys, Eigen::VectorXd v) {
  ClosedLoop loop;
  loop.sys = &sys;
  loop.law = &lin.law;
  loop.diffeo = &lin.diffeo;
  loop.open_loop_v = [v](double) { return v; };
  return loop;
}

Scenario nominal_scenario(const ModelFile& mf, double horizon, double step) {
  Scenario sc = base_scenario(mf);
  sc.p_true = mf.system.nominal_parameters();
  sc.horizon = horizon;
  sc.step = step;
  return sc;
}

double factorial(int r) { return r <= 1 ? 1.0 : r * factorial(r - 1); }

TEST(Simulate, EquilibriumIsInvariantAndGridIsUniform) {
  auto d = design_file("pendulum.rfl");
  Scenario sc = base_scenario(d->mf);
  sc.p_true = d->mf.system.nominal_parameters();
  for (auto& ref : sc.references) ref.steps.clear();
  sc.horizon = 2.0;
  const Trajectory tr = simulate(d->loop, sc);
  ASSERT_FALSE(tr.truncated) << tr.diagnostic;
  EXPECT_EQ(tr.size(), static_cast<std::size_t>(std::llround(sc.horizon / sc.step)) + 1);
  for (std::size_t s = 0; s < tr.size(); ++s) {
    EXPECT_NEAR(tr.t[s], static_cast<double>(s) * sc.step, 1e-12);
    EXPECT_LE((tr.x[s] - d->mf.system.x_trim).norm(), 1e-12);
    EXPECT_LE((tr.u[s] - d->mf.system.u_trim).norm(), 1e-12);
    EXPECT_LE((tr.y[s] - tr.yc[s]).norm(), 1e-12);
  }
}

TEST(Simulate, CsvHasOneRowPerSample) {
  auto d = design_file("scalar.rfl");
  const auto runs = run_cases(d->loop, base_scenario(d->mf));
  ASSERT_EQ(runs.size(), 3u);
  for (const auto& c : runs) {
    std::ostringstream os;
    write_csv(os, c.trajectory);
    const std::string text = os.str();
    const auto rows = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    EXPECT_EQ(rows, static_cast<std::size_t>(std::llround(c.scenario.horizon / c.scenario.step)) + 2);
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,x1,chi1,chi2,u1,v1,y1,yc1,cost");
  }
}

TEST(Simulate, ChiIsConsistentWithStateAtEverySample) {
  auto d = design_file("pendulum.rfl");
  Scenario sc = base_scenario(d->mf);
  sc.horizon = 3.0;
  const auto runs = run_cases(d->loop, sc, {3});
  const Trajectory& tr = runs[0].trajectory;
  const Diffeomorphism& diffeo = d->lin->diffeo;
  for (std::size_t s = 0; s < tr.size(); s += 50) {
    const Eigen::VectorXd chi = diffeo.chi(diffeo.xi(tr.x[s], tr.yc[s]), diffeo.integrals_of_chi(tr.chi[s]));
    EXPECT_LE((chi - tr.chi[s]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

// Constant v on the nominal plant: each output is a polynomial of degree r_i,
// y_i(t) = y_i(0) + v_i t^r_i / r_i!, as long as the trim is an equilibrium.
void expect_exact_chain(const std::string& file, const Eigen::VectorXd& v, double horizon, double rel_tol) {
  const ModelFile mf = load_model_file(kModels + "/" + file);
  const auto lin = linearize_model(mf);
  const Trajectory tr = simulate(open_loop(*lin, mf.system, v), nominal_scenario(mf, horizon, 1e-3));
  ASSERT_FALSE(tr.truncated) << tr.diagnostic;
  const auto& r = lin->diffeo.r();
  for (std::size_t s = 0; s < tr.size(); s += 100) {
    const double t = tr.t[s];
    for (std::size_t i = 0; i < r.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double expected = tr.y[0][ii] + v[ii] * std::pow(t, r[i]) / factorial(r[i]);
      EXPECT_NEAR(tr.y[s][ii], expected, rel_tol * (1.0 + std::abs(expected))) << file << " output " << i << " t " << t;
    }
  }
}

TEST(Simulate, NominalPlantIsExactlyLinearized) {
  expect_exact_chain("pendulum.rfl", Eigen::VectorXd::Constant(1, 0.3), 2.0, 1e-10);
  expect_exact_chain("double_integrator.rfl", Eigen::VectorXd::Constant(1, -0.7), 2.0, 1e-10);
  expect_exact_chain("scalar.rfl", Eigen::VectorXd::Constant(1, 0.4), 2.0, 1e-10);
  Eigen::VectorXd v(2);
  v << 0.01, -0.002;
  expect_exact_chain("ahfv.rfl", v, 1.0, 1e-9);
}

TEST(Simulate, OutputDerivativeMatchesVByFiniteDifference) {
  // Nonconstant v: y^(r) from a central difference of the sampled output.
  const ModelFile mf = load_model_file(kModels + "/pendulum.rfl");
  const auto lin = linearize_model(mf);
  ClosedLoop loop = open_loop(*lin, mf.system, Eigen::VectorXd::Zero(1));
  const double h = 1e-3;
  // Steps of v are held over each integration step, so hold a smooth signal
  // piecewise-constant on a coarse grid and difference inside the plateaus.
  loop.open_loop_v = [](double t) { return Eigen::VectorXd::Constant(1, std::sin(std::floor(t / 0.1) * 0.1)); };
  const Trajectory tr = simulate(loop, nominal_scenario(mf, 2.0, h));
  ASSERT_FALSE(tr.truncated);
  const double fd = 0.02;
  const auto k = static_cast<std::size_t>(std::llround(fd / h));
  for (int plateau = 1; plateau < 19; ++plateau) {
    const auto c = static_cast<std::size_t>(plateau * 100 + 50);
    const double d2 = (tr.y[c + k][0] - 2.0 * tr.y[c][0] + tr.y[c - k][0]) / (fd * fd);
    EXPECT_NEAR(d2, tr.v[c][0], 1e-5) << "plateau " << plateau;
  }
}

TEST(Simulate, Rk4ConvergesAtFourthOrder) {
  const ModelFile mf = load_model_file(kModels + "/pendulum.rfl");
  const auto lin = linearize_model(mf);
  const ClosedLoop loop = open_loop(*lin, mf.system, Eigen::VectorXd::Constant(1, 0.5));
  Scenario sc = nominal_scenario(mf, 2.0, 0.04);
  sc.p_true[0] *= 1.2;  // mismatch keeps the closed loop nonlinear
  auto terminal = [&](double h) {
    sc.step = h;
    return simulate(loop, sc).x.back();
  };
  const Eigen::VectorXd a = terminal(0.04), b = terminal(0.02), c = terminal(0.01);
  const double ratio = (a - b).norm() / (b - c).norm();
  EXPECT_GT(ratio, 13.0);
  EXPECT_LT(ratio, 19.0);
}

TEST(Simulate, NominalCaseHasNoRealizedUncertainty) {
  auto d = design_file("pendulum.rfl");
  const auto runs = run_cases(d->loop, base_scenario(d->mf), {1});
  for (const auto& z : runs[0].trajectory.zeta) EXPECT_LE(z.cwiseAbs().maxCoeff(), 1e-12);
  const ChannelModel& cm = *d->lin->channels;
  const IqcReport rep = iqc_monitor(runs[0].trajectory, d->model, d->design, d->mf.box(3, 1), d->lin->diffeo,
                                    cm.xi_trim(), cm.y_commanded());
  EXPECT_TRUE(rep.holds);
  for (const auto& c : rep.channels) EXPECT_GE(c.running.back(), 0.0);
}

TEST(Simulate, PendulumSettlesInAllCases) {
  auto d = design_file("pendulum.rfl");
  const Scenario base = base_scenario(d->mf);
  const double step = std::abs(base.references[0].steps.back().value - base.references[0].initial);
  for (const auto& c : run_cases(d->loop, base)) {
    ASSERT_FALSE(c.trajectory.truncated) << c.trajectory.diagnostic;
    const double e = std::abs(c.trajectory.y.back()[0] - c.trajectory.yc.back()[0]);
    EXPECT_LE(e, 1e-3 * step) << c.scenario.name;
  }
}

// x' = -p x + u with p scaled by 0.8 / 1.2: the weaker damping of case 2
// runs ahead of case 1 and the stronger damping of case 3 lags it, up to the
// time case 1 enters its 5% settling band. The tail oscillates and may cross.
TEST(Simulate, ScalarPerturbationsBracketNominalTransient) {
  auto d = design_file("scalar.rfl");
  const auto runs = run_cases(d->loop, base_scenario(d->mf));
  const Trajectory &c1 = runs[0].trajectory, &c2 = runs[1].trajectory, &c3 = runs[2].trajectory;
  const double target = c1.yc.back()[0];
  const double step = std::abs(target - c1.y.front()[0]);
  std::size_t settle = 0;
  for (std::size_t s = 0; s < c1.size(); ++s) {
    if (std::abs(c1.y[s][0] - target) > 0.05 * step) settle = s;
  }
  ASSERT_GT(settle, 100u);
  for (std::size_t s = 1; s <= settle; ++s) {
    EXPECT_GE(c2.y[s][0], c1.y[s][0]) << "t = " << c1.t[s];
    EXPECT_LE(c3.y[s][0], c1.y[s][0]) << "t = " << c1.t[s];
  }
}

TEST(Simulate, RealizedUncertaintyStaysWithinBoundsInsideBox) {
  auto d = design_file("pendulum.rfl");
  const Eigen::VectorXd& y0 = d->lin->channels->y_commanded();
  const Eigen::VectorXd& xi0 = d->lin->channels->xi_trim();
  for (const auto& c : run_cases(d->loop, base_scenario(d->mf))) {
    const IqcReport rep = iqc_monitor(c.trajectory, d->model, d->design, d->mf.box(3, 1), d->lin->diffeo, xi0, y0);
    EXPECT_GT(rep.coverage_checked, 0u);
    EXPECT_EQ(rep.coverage_violations, 0u) << c.scenario.name << " worst ratio " << rep.worst_coverage_ratio;
    EXPECT_LE(rep.worst_coverage_ratio, 1.0);
  }
}

TEST(Simulate, BoxExitIsFlagged) {
  auto d = design_file("pendulum.rfl");
  Scenario sc = base_scenario(d->mf);
  sc.references[0].steps = {{0.0, 3.0}};  // far outside the +-1 chi box
  sc.horizon = 2.0;
  const auto runs = run_cases(d->loop, sc, {2});
  const ChannelModel& cm = *d->lin->channels;
  const IqcReport rep = iqc_monitor(runs[0].trajectory, d->model, d->design, d->mf.box(3, 1), d->lin->diffeo,
                                    cm.xi_trim(), cm.y_commanded());
  ASSERT_TRUE(rep.box_exit_time.has_value());
  EXPECT_DOUBLE_EQ(*rep.box_exit_time, 0.0);
  const CaseSummary cs = summarize_case(runs[0], 0.8, d->model, d->design, d->mf.box(3, 1), *d->lin, GradientNorm::Inf);
  std::vector<CaseSummary> all{cs};
  EXPECT_NE(sim_summary(d->mf, all).find("bound region exited at t="), std::string::npos);
}

TEST(Simulate, SingularDecouplingTruncatesWithDiagnostic) {
  const ModelFile mf = parse_model_file(R"(
[states]
x = 0
[inputs]
u = 0
[dynamics]
x' = (1 - x)*u
[outputs]
y = x
[box]
chi = -10 10
v = -10 10
[weights]
Q = 1 1
R = 1
)");
  const auto lin = linearize_model(mf);
  Scenario sc = nominal_scenario(mf, 1.0, 1e-3);
  sc.x0 = Eigen::VectorXd::Ones(1);  // g_*(x) = 1 - x vanishes here
  const Trajectory tr = simulate(open_loop(*lin, mf.system, Eigen::VectorXd::Ones(1)), sc);
  EXPECT_TRUE(tr.truncated);
  EXPECT_NE(tr.diagnostic.find("decoupling matrix singular"), std::string::npos) << tr.diagnostic;
}

TEST(Simulate, RejectsInvalidScenarios) {
  auto d = design_file("scalar.rfl");
  Scenario sc = base_scenario(d->mf);
  sc.step = 0.0;
  EXPECT_THROW(simulate(d->loop, sc), SimError);
  sc = base_scenario(d->mf);
  sc.p_true[0] = 10.0;
  EXPECT_THROW(simulate(d->loop, sc), SimError);
  sc.out_of_set = true;
  EXPECT_FALSE(simulate(d->loop, sc).truncated);
  EXPECT_THROW(run_cases(d->loop, base_scenario(d->mf), {4}), SimError);
}

}  // namespace
}  // namespace rfl
