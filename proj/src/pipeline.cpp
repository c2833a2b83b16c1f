#include "rfl/pipeline.hpp"

#include "rfl/errors.hpp"

namespace rfl {

std::unique_ptr<Linearization> linearize_model(const ModelFile& mf) {
  const UncertainSystem& sys = mf.system;
  auto lin = std::make_unique<Linearization>();
  lin->split = split_nominal_uncertain(sys);
  RelativeDegreeOptions opt;
  opt.tol = mf.solver.degree_tol;
  opt.seed = mf.solver.seed;
  lin->chain = relative_degree(sys, lin->split, sys.x_trim, opt);
  lin->gstar = decoupling_matrix(lin->chain, sys.x_trim);
  lin->law = FeedbackLaw(lin->chain);
  lin->diffeo = Diffeomorphism(lin->chain, sys.output_names);
  lin->stack = build_uncertainty_stack(sys, lin->split, lin->chain, lin->diffeo);
  std::tie(lin->A, lin->B) = brunovsky(lin->chain.r);
  lin->controllability_rank = controllability_rank(lin->A, lin->B);
  lin->channels = std::make_unique<ChannelModel>(sys, lin->stack, lin->law, lin->diffeo);
  return lin;
}

BoundConfig bound_config(const SolverSettings& s) {
  BoundConfig cfg;
  cfg.grid_per_axis = s.grid_points;
  cfg.grid_cap = s.grid_cap;
  cfg.lhs_samples = s.lhs_samples;
  cfg.corner_dim_limit = s.corner_dim_limit;
  cfg.polish_starts = s.polish_starts;
  cfg.safety = s.safety;
  cfg.norm = s.norm;
  cfg.seed = s.seed;
  cfg.threads = s.threads;
  return cfg;
}

std::vector<ParameterSpec> uncertain_parameters(const UncertainSystem& sys) {
  std::vector<ParameterSpec> theta;
  for (std::size_t i : sys.uncertain_parameter_indices()) theta.push_back(sys.parameters[i]);
  return theta;
}

StructuredBounds bound_model(const ModelFile& mf, const Linearization& lin) {
  const OperatingBox box = mf.box(lin.diffeo.nbar(), lin.diffeo.m());
  return bound_rho(*lin.channels, box, uncertain_parameters(mf.system), bound_config(mf.solver));
}

LinearizedUncertainModel structured_model(const ModelFile& mf, const Linearization& lin, const Eigen::VectorXd& rho) {
  std::vector<bool> input_dependent(lin.diffeo.nbar());
  for (std::size_t k = 0; k < input_dependent.size(); ++k) input_dependent[k] = lin.channels->input_dependent(k);
  return assemble_structured_model(lin.A, lin.B, lin.chain.r, rho, input_dependent, mf.solver.k_convention);
}

DesignInputs design_inputs(const ModelFile& mf, const LinearizedUncertainModel& model) {
  const std::size_t nbar = model.nbar();
  const std::size_t p = model.active().size();
  DesignInputs in;
  in.Q = mf.q_matrix(nbar);
  in.R = mf.r_matrix(model.m());
  in.D.assign(p, mf.solver.d_scale * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nbar),
                                                                static_cast<Eigen::Index>(nbar)));
  const auto& ti = mf.solver.tau_init;
  if (ti.size() == 1) {
    in.tau_init = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), ti[0]);
  } else if (!ti.empty()) {
    if (ti.size() != p) {
      throw ModelError("tau_init has " + std::to_string(ti.size()) + " entries but there are " + std::to_string(p) +
                       " active uncertainty channels");
    }
    in.tau_init = Eigen::Map<const Eigen::VectorXd>(ti.data(), static_cast<Eigen::Index>(p));
  }
  const auto& c0 = mf.solver.chi0;
  if (!c0.empty()) {
    if (c0.size() != nbar) throw ModelError("chi0 needs " + std::to_string(nbar) + " entries");
    in.chi0 = Eigen::Map<const Eigen::VectorXd>(c0.data(), static_cast<Eigen::Index>(nbar));
  }
  return in;
}

MinimaxDesign synthesize_model(const ModelFile& mf, const LinearizedUncertainModel& model,
                               const std::optional<Eigen::VectorXd>& tau_fixed) {
  const DesignInputs in = design_inputs(mf, model);
  if (tau_fixed) {
    if (static_cast<std::size_t>(tau_fixed->size()) != model.active().size()) {
      throw RiccatiError("fixed tau has " + std::to_string(tau_fixed->size()) + " entries but there are " +
                         std::to_string(model.active().size()) + " active uncertainty channels");
    }
    return design_for_tau(model, in, *tau_fixed);
  }
  return synthesize(model, in);
}

ClosedLoop closed_loop(const ModelFile& mf, const Linearization& lin, const MinimaxDesign& design) {
  ClosedLoop loop;
  loop.sys = &mf.system;
  loop.law = &lin.law;
  loop.diffeo = &lin.diffeo;
  loop.gain = design.gain;
  loop.Q = design.Q;
  loop.R = design.R;
  return loop;
}

Scenario base_scenario(const ModelFile& mf) {
  Scenario sc;
  sc.name = "nominal";
  sc.p_true = mf.system.nominal_parameters();
  sc.references = mf.references;
  sc.horizon = mf.solver.horizon;
  sc.step = mf.solver.step;
  return sc;
}

}  // namespace rfl
