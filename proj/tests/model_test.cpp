#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "rfl/errors.hpp"
#include "rfl/model.hpp"
#include "rfl/model_file.hpp"

namespace rfl {
namespace {

const std::string kModels = RFL_MODELS_DIR;

const char* const kScalar = R"(
[states]
x = 0
[inputs]
u = 0
[parameters]
p = 2 +- 0.5
[dynamics]
x' = -p*x + u
[outputs]
y = x
[box]
chi = -1 1
v = -2 2
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return text.replace(pos, from.size(), to);
}

template <typename E>
std::string error_of(const std::string& text) {
  try {
    parse_model_file(text);
  } catch (const E& e) {
    return e.what();
  }
  ADD_FAILURE() << "no error raised";
  return {};
}

TEST(ModelFile, ParsesShippedPendulum) {
  const ModelFile mf = load_model_file(kModels + "/pendulum.rfl");
  const UncertainSystem& s = mf.system;
  EXPECT_EQ(s.n(), 2u);
  EXPECT_EQ(s.m(), 1u);
  ASSERT_EQ(s.parameters.size(), 2u);
  EXPECT_DOUBLE_EQ(s.parameters[0].nominal, 9.81);
  EXPECT_DOUBLE_EQ(s.parameters[0].half_width, 2.5);
  EXPECT_TRUE(s.parameters[0].uncertain());
  EXPECT_FALSE(s.parameters[1].uncertain());
  EXPECT_EQ(s.uncertain_parameter_indices(), std::vector<std::size_t>{0});
  EXPECT_TRUE(mf.warnings.empty());
  EXPECT_EQ(mf.solver.horizon, 30.0);
  ASSERT_EQ(mf.references.size(), 1u);
  EXPECT_DOUBLE_EQ(mf.references[0].at(0.0), 0.2);
}

TEST(ModelFile, EveryShippedModelPassesStaticChecks) {
  for (const char* name : {"pendulum", "double_integrator", "scalar", "ahfv"}) {
    const ModelFile mf = load_model_file(kModels + "/" + name + ".rfl");
    EXPECT_NO_THROW(mf.system.validate()) << name;
    EXPECT_LE(mf.system.trim_residual(), mf.system.trim_tolerance()) << name;
    EXPECT_NO_THROW(mf.box(mf.system.n() + mf.system.m(), mf.system.m())) << name;
  }
}

TEST(ModelFile, NonSquareSystemIsRejected) {
  const std::string text = replace(kScalar, "y = x", "y = x\nz = 2*x");
  EXPECT_NE(error_of<ModelError>(text).find("system not square: 2 outputs, 1 inputs"), std::string::npos);
}

TEST(ModelFile, UnsetCoefficientIsReportedByName) {
  try {
    load_model_file(kModels + "/ahfv_unset.rfl");
    FAIL() << "no error raised";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("parameter value missing: CL_alpha"), std::string::npos);
    EXPECT_GT(e.line(), 1);
  }
}

TEST(ModelFile, SyntaxErrorsCarryLocation) {
  const std::string text = replace(kScalar, "x' = -p*x + u", "x' = -p*x +");
  try {
    parse_model_file(text);
    FAIL() << "no error raised";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 9);
    EXPECT_EQ(e.column(), 12);  // end of the line, where an operand is missing
  }
}

TEST(ModelFile, UndeclaredSymbolIsRejected) {
  EXPECT_NE(error_of<ParseError>(replace(kScalar, "-p*x + u", "-q*x + u")).find("q"), std::string::npos);
}

TEST(ModelFile, StructuralErrors) {
  EXPECT_NE(error_of<ParseError>(replace(kScalar, "[box]", "[boxes]")).find("unknown section"), std::string::npos);
  EXPECT_NE(error_of<ParseError>(replace(kScalar, "u = 0", "x = 0")).find("declared twice"), std::string::npos);
  EXPECT_NE(error_of<ModelError>(replace(kScalar, "x' = -p*x + u", "")).find("no dynamics"), std::string::npos);
  EXPECT_NE(error_of<ModelError>(replace(kScalar, "-p*x + u", "-p*x + u^2")).find("affine"), std::string::npos);
  EXPECT_NE(error_of<ParseError>(replace(kScalar, "chi = -1 1", "chi = 1 -1")).find("lower bound"), std::string::npos);
  EXPECT_NE(error_of<ParseError>(kScalar + std::string("[solver]\nfoo = 1\n")).find("unknown solver setting"),
            std::string::npos);
}

TEST(ModelFile, PercentHalfWidthAndCertainParameters) {
  const ModelFile mf = parse_model_file(replace(kScalar, "p = 2 +- 0.5", "p = -2 +- 10%"));
  EXPECT_DOUBLE_EQ(mf.system.parameters[0].half_width, 0.2);
  const ModelFile certain = parse_model_file(replace(kScalar, "p = 2 +- 0.5", "p = 2"));
  EXPECT_FALSE(certain.system.parameters[0].uncertain());
  EXPECT_TRUE(certain.system.uncertain_parameter_indices().empty());
}

TEST(ModelFile, DefinitionsAreSubstituted) {
  const std::string text = replace(replace(kScalar, "[dynamics]", "[definitions]\nk = 3*p\n[dynamics]"), "-p*x", "-k*x");
  const ModelFile mf = parse_model_file(text);
  Binding b{{state("x"), 2.0}, {parameter("p"), 1.5}};
  EXPECT_DOUBLE_EQ(eval(mf.system.drift[0], b), -9.0);
}

TEST(ModelFile, BoxDefaultsAndOverrides) {
  const std::string text = replace(kScalar, "chi = -1 1", "chi = -1 1\nchi2 = -3 4");
  const OperatingBox box = parse_model_file(text).box(2, 1);
  EXPECT_EQ(box.chi_lower[0], -1.0);
  EXPECT_EQ(box.chi_upper[1], 4.0);
  EXPECT_EQ(box.v_lower[0], -2.0);
  EXPECT_THROW(parse_model_file(replace(kScalar, "v = -2 2", "v1 = -2 2")).box(2, 2), ModelError);
  EXPECT_THROW(parse_model_file(replace(kScalar, "chi = -1 1", "chi = 0.5 1")).box(2, 1), ModelError);
}

TEST(ModelFile, Weights) {
  const ModelFile diag = parse_model_file(kScalar + std::string("[weights]\nQ = diag 2 3\nR = 5\n"));
  EXPECT_EQ(diag.q_matrix(2), (Eigen::Matrix2d() << 2, 0, 0, 3).finished());
  EXPECT_EQ(diag.r_matrix(1)(0, 0), 5.0);
  const ModelFile full = parse_model_file(kScalar + std::string("[weights]\nQ = full 2 1 1 3\n"));
  EXPECT_EQ(full.q_matrix(2), (Eigen::Matrix2d() << 2, 1, 1, 3).finished());
  EXPECT_EQ(full.r_matrix(1)(0, 0), 1.0);
  EXPECT_THROW(diag.q_matrix(3), ModelError);
}

TEST(ModelFile, ReferenceSchedules) {
  const ModelFile none = parse_model_file(replace(kScalar, "x = 0", "x = 0.25"));
  EXPECT_DOUBLE_EQ(none.references[0].at(100.0), 0.25);
  const ModelFile steps = parse_model_file(kScalar + std::string("[references]\ny = 2@3 1@1\n"));
  const auto& r = steps.references[0];
  EXPECT_EQ(r.at(0.5), 0.0);
  EXPECT_EQ(r.at(1.0), 1.0);
  EXPECT_EQ(r.at(2.9), 1.0);
  EXPECT_EQ(r.at(3.0), 2.0);
}

TEST(ModelFile, SolverSettings) {
  const ModelFile mf = parse_model_file(kScalar + std::string("[solver]\nseed = 42\nnorm = 2\nk_convention = sparse\n"
                                                              "tau_init = 1 2\nchi0 = 1 0\nh = 0.01\nthreads = 0\n"));
  EXPECT_EQ(mf.solver.seed, 42u);
  EXPECT_EQ(mf.solver.norm, GradientNorm::Two);
  EXPECT_EQ(mf.solver.k_convention, KConvention::Sparse);
  EXPECT_EQ(mf.solver.tau_init, (std::vector<double>{1, 2}));
  EXPECT_EQ(mf.solver.chi0, (std::vector<double>{1, 0}));
  EXPECT_EQ(mf.solver.step, 0.01);
  EXPECT_EQ(mf.solver.threads, 1u);
  EXPECT_THROW(parse_model_file(kScalar + std::string("[solver]\nh = 0\n")), ModelError);
}

TEST(ModelFile, TrimResidualWarns) {
  const ModelFile mf = parse_model_file(replace(kScalar, "x = 0", "x = 1"));
  ASSERT_EQ(mf.warnings.size(), 1u);
  EXPECT_NE(mf.warnings[0].find("trim residual"), std::string::npos);
}

TEST(ModelFile, FingerprintTracksText) {
  const ModelFile a = parse_model_file(kScalar);
  const ModelFile b = parse_model_file(std::string(kScalar) + "# comment\n");
  EXPECT_EQ(a.fingerprint(), parse_model_file(kScalar).fingerprint());
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(UncertainSystem, InputFieldsAndDrift) {
  const ModelFile mf = load_model_file(kModels + "/pendulum.rfl");
  const UncertainSystem& s = mf.system;
  Binding b{{state("theta"), 0.3}, {state("omega"), -0.7}, {parameter("a"), 9.81}, {parameter("b"), 0.1}};
  EXPECT_DOUBLE_EQ(eval(s.drift[1], b), -9.81 * std::sin(0.3) + 0.07);
  EXPECT_DOUBLE_EQ(eval(s.input_fields[0][0], b), 0.0);
  EXPECT_DOUBLE_EQ(eval(s.input_fields[0][1], b), 1.0);
}

TEST(UncertainSystem, OutputsMayNotReadInputs) {
  EXPECT_NE(error_of<ModelError>(replace(kScalar, "y = x", "y = x + u")).find("output"), std::string::npos);
}

TEST(NominalSplit, UncertainPartIsExactDifference) {
  const ModelFile mf = load_model_file(kModels + "/double_integrator.rfl");
  const NominalSplit sp = split_nominal_uncertain(mf.system);
  Binding b{{state("x"), 0.4}, {state("xd"), -0.2}, {uncertainty("c"), 0.15}};
  EXPECT_DOUBLE_EQ(eval(sp.g0[0][1], b), 1.0);
  EXPECT_NEAR(eval(sp.dg[0][1], b), 0.15, 1e-15);
  EXPECT_TRUE(sp.df[0].is_zero());
  EXPECT_TRUE(sp.df[1].is_zero());
  b[uncertainty("c")] = 0.0;
  EXPECT_EQ(eval(sp.dg[0][1], b), 0.0);
}

TEST(NominalSplit, CertainParametersStayNominal) {
  const ModelFile mf = load_model_file(kModels + "/pendulum.rfl");
  const NominalSplit sp = split_nominal_uncertain(mf.system);
  for (const auto& e : sp.df) {
    for (const auto& s : symbols_of(e)) EXPECT_NE(s.name, "b");
  }
  Binding b{{state("theta"), 0.5}, {state("omega"), 1.0}, {uncertainty("a"), -2.0}};
  EXPECT_NEAR(eval(sp.df[1], b), 2.0 * std::sin(0.5), 1e-14);
}

TEST(Sampling, GridCountsAndDegenerateAxes) {
  Eigen::Vector3d lo(-1, 0, 2), hi(1, 0, 3);
  const auto pts = sample_hyperrect(lo, hi, {SampleScheme::Grid, 5, 0, 0});
  EXPECT_EQ(pts.size(), 25u);
  for (const auto& p : pts) EXPECT_EQ(p[1], 0.0);
  const auto corners = sample_hyperrect(lo, hi, {SampleScheme::CornersCenter, 0, 0, 0});
  EXPECT_EQ(corners.size(), 5u);
}

TEST(Sampling, LatinHypercubeStratifiesEveryAxis) {
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(4), hi = Eigen::VectorXd::Ones(4);
  const std::size_t n = 50;
  const auto pts = sample_hyperrect(lo, hi, {SampleScheme::LatinHypercube, 0, n, 7});
  ASSERT_EQ(pts.size(), n);
  for (Eigen::Index d = 0; d < 4; ++d) {
    std::set<int> strata;
    for (const auto& p : pts) strata.insert(static_cast<int>(std::floor(p[d] * static_cast<double>(n))));
    EXPECT_EQ(strata.size(), n);
  }
  const auto again = sample_hyperrect(lo, hi, {SampleScheme::LatinHypercube, 0, n, 7});
  EXPECT_EQ(pts, again);
}

TEST(Sampling, CornersRefusedInHighDimension) {
  const Eigen::VectorXd lo = -Eigen::VectorXd::Ones(21), hi = Eigen::VectorXd::Ones(21);
  EXPECT_THROW(sample_hyperrect(lo, hi, {SampleScheme::CornersCenter, 0, 0, 0}), BoundError);
}

TEST(OperatingBox, MustContainOrigin) {
  OperatingBox box{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1), Eigen::VectorXd::Constant(1, -1),
                   Eigen::VectorXd::Constant(1, 1)};
  EXPECT_NO_THROW(box.validate());
  EXPECT_TRUE(box.contains(Eigen::Vector2d(0.5, -1), Eigen::VectorXd::Zero(1)));
  EXPECT_FALSE(box.contains(Eigen::Vector2d(1.5, 0), Eigen::VectorXd::Zero(1)));
  box.chi_lower[0] = 0.1;
  EXPECT_THROW(box.validate(), ModelError);
}

}  // namespace
}  // namespace rfl
