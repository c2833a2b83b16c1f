#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfl/model_file.hpp"
#include "rfl/pipeline.hpp"
#include "rfl/sim.hpp"
#include "rfl/synthesis.hpp"
#include "rfl/uncertainty.hpp"

namespace rfl {

// Artifacts carry a format name and version and no timestamps, so equal
// inputs give byte-identical files.
inline constexpr int kArtifactVersion = 1;

std::string linearize_report(const ModelFile& mf, const Linearization& lin);

std::string bounds_text(const ModelFile& mf, const StructuredBounds& b);
std::string bounds_json(const ModelFile& mf, const StructuredBounds& b);
// Throws ModelError when the file is malformed or was produced from a
// different model file or seed.
StructuredBounds load_bounds_json(const std::string& text, const ModelFile& mf);

std::string design_text(const ModelFile& mf, const LinearizedUncertainModel& model, const MinimaxDesign& d);
std::string design_json(const ModelFile& mf, const LinearizedUncertainModel& model, const MinimaxDesign& d);
struct StoredDesign {
  Eigen::VectorXd rho;
  MinimaxDesign design;
};
StoredDesign load_design_json(const std::string& text, const ModelFile& mf);

struct CaseSummary {
  std::string name;
  double parameter_scale = 1.0;
  std::vector<double> terminal_error;  // |y_i(T) - yc_i(T)|
  double realized_cost = 0.0;
  double cost_bound = 0.0;             // chi(0)' (X + sum tau_j D_j) chi(0)
  bool truncated = false;
  std::string diagnostic;
  IqcReport iqc;
};

CaseSummary summarize_case(const CaseResult& c, double parameter_scale, const LinearizedUncertainModel& model,
                           const MinimaxDesign& design, const OperatingBox& box, const Linearization& lin,
                           GradientNorm norm);
std::string sim_summary(const ModelFile& mf, const std::vector<CaseSummary>& cases);

// Hex FNV-1a fingerprint, as stored in the artifacts.
std::string fingerprint_hex(std::uint64_t f);

}  // namespace rfl
