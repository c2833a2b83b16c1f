#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfl/linearize.hpp"
#include "rfl/model.hpp"
#include "rfl/synthesis.hpp"
#include "rfl/tape.hpp"
#include "rfl/uncertainty.hpp"

namespace rfl {

// Piecewise-constant command: `initial` until the first step time, then
// each step's value from its time on.
struct ReferenceSchedule {
  struct Step {
    double time = 0.0;
    double value = 0.0;
  };
  double initial = 0.0;
  std::vector<Step> steps;

  double at(double t) const;
};

struct Scenario {
  std::string name;
  Eigen::VectorXd p_true;                   // every declared parameter
  std::vector<ReferenceSchedule> references;  // one per output
  double horizon = 10.0;
  double step = 1e-3;
  Eigen::VectorXd x0;                       // empty: trim
  bool out_of_set = false;                  // allow p_true outside Θ
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x, chi, u, v, y, yc;
  std::vector<Eigen::VectorXd> zeta;  // realized mismatch per chi row
  std::vector<double> cost;           // running integral of chi'Q chi + v'R v
  bool truncated = false;
  std::string diagnostic;
  std::vector<std::string> warnings;

  std::size_t size() const { return t.size(); }
};

// Everything the closed loop needs besides the scenario.
struct ClosedLoop {
  const UncertainSystem* sys = nullptr;
  const FeedbackLaw* law = nullptr;
  const Diffeomorphism* diffeo = nullptr;
  Eigen::MatrixXd gain;  // m x nbar; v = -gain chi
  Eigen::MatrixXd Q, R;  // cost weights; empty means zero
  // When set, replaces -gain chi (used for open-loop checks of the law).
  std::function<Eigen::VectorXd(double)> open_loop_v;
};

// Fixed-step RK4 on [x; integrals; cost]. References are sampled at the
// start of each step. The law uses nominal parameters, the plant uses
// p_true. A singular law or a non-finite state truncates the trajectory
// with a diagnostic instead of throwing. Throws SimError on invalid input.
Trajectory simulate(const ClosedLoop& loop, const Scenario& scenario);

struct ChannelIqc {
  std::size_t channel = 0;
  std::vector<double> running;  // integral of z^2 - zeta^2
  double initial_term = 0.0;    // chi0' D chi0
  bool holds = false;           // final integral >= -chi0' D chi0
};

struct IqcReport {
  std::vector<ChannelIqc> channels;
  bool holds = true;  // all channels
  std::optional<double> box_exit_time;
  std::size_t coverage_checked = 0;
  std::size_t coverage_violations = 0;  // |w_k| > rho_k * |[xi - xi0; v]| inside the box
  double worst_coverage_ratio = 0.0;
};

// Checks the IQC of every active channel and the box membership along the
// trajectory. `xi_trim` is the trim value of the non-integral coordinates
// used to express samples relative to the box.
IqcReport iqc_monitor(const Trajectory& traj, const LinearizedUncertainModel& model, const MinimaxDesign& design,
                      const OperatingBox& box, const Diffeomorphism& diffeo, const Eigen::VectorXd& xi_trim,
                      const Eigen::VectorXd& y_trim, GradientNorm norm = GradientNorm::Inf);

struct CaseResult {
  Scenario scenario;
  Trajectory trajectory;
};

// Case 1: nominal parameters; case 2: every uncertain parameter at 0.8 of
// nominal; case 3: at 1.2 of nominal. `cases` selects a subset (1-based).
std::vector<CaseResult> run_cases(const ClosedLoop& loop, const Scenario& base, const std::vector<int>& cases = {1, 2, 3});

void write_csv(std::ostream& os, const Trajectory& traj);

}  // namespace rfl
