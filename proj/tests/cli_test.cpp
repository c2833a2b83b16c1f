#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace {

namespace fs = std::filesystem;

const std::string kModels = RFL_MODELS_DIR;
const std::string kCli = RFL_CLI;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr
};

// Fresh scratch directory per test.
class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("rfl_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome rfl(const std::string& model, const std::string& args, const std::string& out = "out") const {
    const fs::path log = dir_ / "log.txt";
    const std::string cmd = "'" + kCli + "' --model '" + model + "' --out '" + (dir_ / out).string() + "' " + args + " > '" +
                            log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = slurp(log);
    return r;
  }

  std::string write_model(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  fs::path dir_;
};

const char* kScalarTail = R"(
[box]
chi = -2 2
v = -5 5
[weights]
Q = diag 1 1
R = 1
[references]
y = 1@0
[solver]
horizon = 10
)";

TEST_F(Cli, CheckAcceptsShippedModels) {
  for (const char* m : {"pendulum.rfl", "double_integrator.rfl", "scalar.rfl", "ahfv.rfl"}) {
    const Outcome r = rfl(kModels + "/" + m, "check");
    EXPECT_EQ(r.code, 0) << m << "\n" << r.output;
  }
}

TEST_F(Cli, NonSquareSystemIsAModelError) {
  const std::string model = write_model("nonsquare.rfl", R"(
[states]
x1 = 0
x2 = 0
[inputs]
u = 0
[dynamics]
x1' = x2
x2' = u
[outputs]
y1 = x1
y2 = x2
)");
  const Outcome r = rfl(model, "check");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("system not square: 2 outputs, 1 inputs"), std::string::npos) << r.output;
}

TEST_F(Cli, UnsetCoefficientIsReportedWithLocation) {
  const Outcome r = rfl(kModels + "/ahfv_unset.rfl", "check");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("parameter value missing: CL_alpha"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("line "), std::string::npos) << r.output;
}

TEST_F(Cli, SyntaxErrorExitsWithParseCode) {
  const Outcome r = rfl(write_model("bad.rfl", "[states]\nx = 0\n[dynamics]\nx' = (x +\n"), "check");
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, RelativeDegreeFailureExitsWithDegreeCode) {
  // u drives only z, which never feeds back into y = x.
  const std::string model = write_model("degree.rfl", std::string(R"(
[states]
x = 0
z = 0
[inputs]
u = 0
[dynamics]
x' = -x
z' = u
[outputs]
y = x
)") + kScalarTail);
  const Outcome r = rfl(model, "linearize");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("no input appears"), std::string::npos) << r.output;
}

TEST_F(Cli, NonzeroUncertaintyAtTrimExitsWithBoundCode) {
  // An additive uncertain offset moves the equilibrium, so w(0, 0, p) != 0.
  const std::string model = write_model("offset.rfl", std::string(R"(
[states]
x = 0
[inputs]
u = 0
[parameters]
d = 0 +- 1
[dynamics]
x' = -x + d + u
[outputs]
y = x
)") + kScalarTail);
  ASSERT_EQ(rfl(model, "linearize").code, 0);
  const Outcome r = rfl(model, "bound");
  EXPECT_EQ(r.code, 4) << r.output;
}

TEST_F(Cli, InfeasibleMultiplierExitsWithRiccatiCode) {
  const std::string model = kModels + "/pendulum.rfl";
  ASSERT_EQ(rfl(model, "bound").code, 0);
  const Outcome r = rfl(model, "synth --tau-fixed 1e-6");
  EXPECT_EQ(r.code, 5) << r.output;
}

TEST_F(Cli, DivergentTrajectoryExitsWithSimCode) {
  // Case 3 leaves a +0.2 x^2 residual that outruns the linear gain on a
  // large step, so the state escapes in finite time.
  const std::string model = write_model("blowup.rfl", R"(
[states]
x = 0
[inputs]
u = 0
[parameters]
p = 1 +- 0.5
[dynamics]
x' = p*x^2 + u
[outputs]
y = x
[box]
chi = -1 1
v = -5 5
[weights]
Q = diag 1 1
R = 1
[references]
y = 50@0
[solver]
horizon = 10
)");
  ASSERT_EQ(rfl(model, "bound").code, 0);
  ASSERT_EQ(rfl(model, "synth").code, 0);
  const Outcome r = rfl(model, "sim");
  EXPECT_EQ(r.code, 6) << r.output;
  EXPECT_NE(r.output.find("truncated"), std::string::npos) << r.output;
}

TEST_F(Cli, LinearizeReportsHypersonicStructure) {
  const Outcome r = rfl(kModels + "/ahfv.rfl", "linearize");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("r = [3, 4], n = 7, nbar = 9"), std::string::npos) << r.output;
  EXPECT_TRUE(fs::exists(dir_ / "out" / "linearize.txt"));
}

TEST_F(Cli, ZeroBoundsReduceToStandardLqr) {
  const std::string model = write_model("certain.rfl", std::string(R"(
[states]
x = 0
[inputs]
u = 0
[parameters]
p = 1
[dynamics]
x' = -p*x + u
[outputs]
y = x
)") + kScalarTail);
  ASSERT_EQ(rfl(model, "bound").code, 0);
  const Outcome r = rfl(model, "synth");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("reduces to standard LQR"), std::string::npos) << r.output;
}

TEST_F(Cli, StagesRequireTheirPredecessor) {
  const std::string model = kModels + "/scalar.rfl";
  Outcome r = rfl(model, "synth");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("bound"), std::string::npos) << r.output;
  r = rfl(model, "sim");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("synth"), std::string::npos) << r.output;
}

TEST_F(Cli, ArtifactsFromAnotherModelAreRejected) {
  ASSERT_EQ(rfl(kModels + "/scalar.rfl", "bound").code, 0);
  const Outcome r = rfl(kModels + "/pendulum.rfl", "synth");
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("different model file or seed"), std::string::npos) << r.output;
}

TEST_F(Cli, FullPipelineWritesEveryArtifact) {
  const std::string model = kModels + "/pendulum.rfl";
  for (const char* stage : {"check", "linearize", "bound", "synth"}) ASSERT_EQ(rfl(model, stage).code, 0) << stage;
  const Outcome r = rfl(model, "sim --cases 1,2,3");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("terminal"), std::string::npos);
  ASSERT_EQ(rfl(model, "plot").code, 0);
  const fs::path out = dir_ / "out";
  for (const char* f : {"linearize.txt", "bounds.txt", "bounds.json", "design.txt", "design.json", "sim_summary.txt"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  for (int c = 1; c <= 3; ++c) {
    const std::string k = "case" + std::to_string(c);
    const std::string csv = slurp(out / (k + ".csv"));
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 30001u + 1u) << k;
    for (const char* fig : {"_outputs.svg", "_inputs.svg", "_states.svg"}) {
      const std::string svg = slurp(out / (k + fig));
      EXPECT_EQ(svg.rfind("<svg", 0), 0u) << k << fig;
    }
  }
}

TEST_F(Cli, SimIsResumableFromStoredDesign) {
  const std::string model = kModels + "/scalar.rfl";
  ASSERT_EQ(rfl(model, "bound").code, 0);
  ASSERT_EQ(rfl(model, "synth").code, 0);
  ASSERT_EQ(rfl(model, "sim").code, 0);
  const fs::path out = dir_ / "out";
  const std::string design = slurp(out / "design.json");
  const std::string first = slurp(out / "case2.csv");
  const std::string summary = slurp(out / "sim_summary.txt");
  fs::remove(out / "case1.csv");
  fs::remove(out / "case2.csv");
  fs::remove(out / "case3.csv");
  fs::remove(out / "sim_summary.txt");
  ASSERT_EQ(rfl(model, "sim").code, 0);
  EXPECT_EQ(slurp(out / "design.json"), design);
  EXPECT_EQ(slurp(out / "case2.csv"), first);
  EXPECT_EQ(slurp(out / "sim_summary.txt"), summary);
}

TEST_F(Cli, ReportsAreByteIdenticalAcrossRuns) {
  const std::string model = kModels + "/pendulum.rfl";
  for (const char* out : {"a", "b"}) {
    ASSERT_EQ(rfl(model, "bound", out).code, 0);
    ASSERT_EQ(rfl(model, "synth", out).code, 0);
  }
  for (const char* f : {"bounds.txt", "bounds.json", "design.txt", "design.json"}) {
    const std::string a = slurp(dir_ / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, SeedOverrideChangesTheFingerprint) {
  const std::string model = kModels + "/pendulum.rfl";
  ASSERT_EQ(rfl(model, "bound --seed 7").code, 0);
  const Outcome r = rfl(model, "synth");
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_EQ(rfl(model, "synth --seed 7").code, 0);
}

}  // namespace
