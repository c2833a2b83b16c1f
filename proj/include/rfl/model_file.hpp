#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rfl/model.hpp"
#include "rfl/sim.hpp"
#include "rfl/uncertainty.hpp"

namespace rfl {

struct SolverSettings {
  std::uint64_t seed = 1;
  int grid_points = 5;
  std::size_t grid_cap = 100000;
  std::size_t lhs_samples = 20000;
  int corner_dim_limit = 16;
  int polish_starts = 10;
  double safety = 1.1;
  GradientNorm norm = GradientNorm::Inf;
  KConvention k_convention = KConvention::Dense;
  double degree_tol = 1e-9;
  double step = 1e-3;
  double horizon = 10.0;
  double d_scale = 1e-2;
  std::vector<double> tau_init;  // empty: 1 per active channel; one value: broadcast
  std::vector<double> chi0;      // empty: average over unit initial states
  unsigned threads = 1;
};

struct WeightSpec {
  bool given = false;
  bool full = false;
  std::vector<double> values;  // diagonal, or row-major full matrix

  Eigen::MatrixXd matrix(std::size_t dim, const char* name) const;
};

struct ModelFile {
  std::string source_name;
  std::string text;  // raw contents, used as the artifact fingerprint
  UncertainSystem system;
  std::map<std::size_t, std::pair<double, double>> chi_box;  // 0-based index
  std::map<std::size_t, std::pair<double, double>> v_box;
  std::optional<std::pair<double, double>> chi_default, v_default;
  WeightSpec Q, R;
  std::vector<ReferenceSchedule> references;  // one per output
  SolverSettings solver;
  std::vector<std::string> warnings;

  // Throws ModelError when a range is missing for some index.
  OperatingBox box(std::size_t nbar, std::size_t m) const;
  Eigen::MatrixXd q_matrix(std::size_t nbar) const;
  Eigen::MatrixXd r_matrix(std::size_t m) const;
  std::uint64_t fingerprint() const;  // FNV-1a of `text`
};

// Throws ParseError (with line and column) on malformed input and
// ModelError on semantic violations.
ModelFile parse_model_file(const std::string& text, const std::string& source_name = "<model>");
ModelFile load_model_file(const std::string& path);

}  // namespace rfl
