#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rfl/linearize.hpp"
#include "rfl/model.hpp"
#include "rfl/model_file.hpp"
#include "rfl/sim.hpp"
#include "rfl/synthesis.hpp"
#include "rfl/uncertainty.hpp"

namespace rfl {

// Everything derived symbolically from a model file. Members refer to each
// other by address, so the object lives behind a unique_ptr and never moves.
struct Linearization {
  NominalSplit split;
  LieChain chain;
  DecouplingMatrix gstar;
  FeedbackLaw law;
  Diffeomorphism diffeo;
  UncertaintyStack stack;
  Eigen::MatrixXd A, B;
  int controllability_rank = 0;
  std::unique_ptr<ChannelModel> channels;

  Linearization() = default;
  Linearization(const Linearization&) = delete;
  Linearization& operator=(const Linearization&) = delete;
};

std::unique_ptr<Linearization> linearize_model(const ModelFile& mf);

BoundConfig bound_config(const SolverSettings& s);
std::vector<ParameterSpec> uncertain_parameters(const UncertainSystem& sys);

StructuredBounds bound_model(const ModelFile& mf, const Linearization& lin);
LinearizedUncertainModel structured_model(const ModelFile& mf, const Linearization& lin, const Eigen::VectorXd& rho);
DesignInputs design_inputs(const ModelFile& mf, const LinearizedUncertainModel& model);

// Optimizes tau unless `tau_fixed` is given.
MinimaxDesign synthesize_model(const ModelFile& mf, const LinearizedUncertainModel& model,
                               const std::optional<Eigen::VectorXd>& tau_fixed = std::nullopt);

ClosedLoop closed_loop(const ModelFile& mf, const Linearization& lin, const MinimaxDesign& design);
Scenario base_scenario(const ModelFile& mf);

}  // namespace rfl
