#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfl/expr.hpp"
#include "rfl/linearize.hpp"
#include "rfl/model.hpp"
#include "rfl/tape.hpp"

namespace rfl {

// Mismatch between true and nominal chain derivatives, one entry per chi row.
// Row offset_i + j (j = 1..r_i) carries
//   w = L_df L_f0^(j-1) nu_i + sum_k L_dgk L_f0^(j-1) nu_i * u_k,
// so that along the true plant chi' = A chi + B v + w exactly. Integral rows
// are always zero.
struct UncertaintyStack {
  std::vector<Expr> w;            // nbar entries, in x, u and the Δp symbols
  std::vector<bool> chain_top;    // rows where v enters
  std::vector<Symbol> x, u, dp;   // evaluation layout

  std::size_t nbar() const { return w.size(); }
  std::vector<std::size_t> nonzero_rows() const;
};

// Throws BoundError when an entry exceeds `node_limit` nodes.
UncertaintyStack build_uncertainty_stack(const UncertainSystem& sys, const NominalSplit& split, const LieChain& chain,
                                         const Diffeomorphism& diffeo, std::size_t node_limit = 1'000'000);

// Evaluates uncertainty rows as functions of (chi, v, Δp) by mapping chi back
// to x with the diffeomorphism and v to u with the feedback law. The chi
// coordinates are taken relative to the commanded trim, where every
// non-integral component vanishes.
class ChannelModel {
 public:
  ChannelModel(const UncertainSystem& sys, const UncertaintyStack& stack, const FeedbackLaw& law,
               const Diffeomorphism& diffeo);

  std::size_t n() const { return n_; }
  std::size_t m() const { return m_; }
  std::size_t nbar() const { return n_ + m_; }
  std::size_t num_dp() const { return num_dp_; }
  bool active(std::size_t k) const { return active_[k]; }
  bool input_dependent(std::size_t k) const { return input_dependent_[k]; }
  const Eigen::VectorXd& x_trim() const { return x_trim_; }
  const Eigen::VectorXd& y_commanded() const { return yc_; }
  const Eigen::VectorXd& xi_trim() const { return xi0_; }

  // Plant state and nominal control at a point of the box; false when the
  // inverse map or the feedback law is singular there.
  bool locate(const Eigen::VectorXd& xi_rel, const Eigen::VectorXd& v, Eigen::VectorXd& x, Eigen::VectorXd& u) const;

  // w_k at (chi, v, Δp); nullopt when the point cannot be mapped back.
  std::optional<double> value(std::size_t k, const Eigen::VectorXd& xi_rel, const Eigen::VectorXd& v,
                              const Eigen::VectorXd& dp) const;
  // w_k from plant coordinates directly.
  double value_x(std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& dp) const;

  // Gradient row of w_k over [chi (nbar); v (m)]; nullopt when singular.
  std::optional<Eigen::VectorXd> gradient(std::size_t k, const Eigen::VectorXd& xi_rel, const Eigen::VectorXd& v,
                                          const Eigen::VectorXd& dp) const;

  const Diffeomorphism& diffeomorphism() const { return *diffeo_; }

 private:
  std::size_t n_, m_, num_dp_;
  const FeedbackLaw* law_;
  const Diffeomorphism* diffeo_;
  Eigen::VectorXd x_trim_, yc_, xi0_;
  std::vector<bool> active_, input_dependent_;
  std::vector<Tape> tapes_;  // per row: [w, dw/dx (n), dw/du (m)] over [x, u, Δp]
};

enum class GradientNorm { Inf, Two };

struct BoundConfig {
  int grid_per_axis = 5;
  std::size_t grid_cap = 100000;
  std::size_t lhs_samples = 20000;
  int corner_dim_limit = 16;
  int polish_starts = 10;
  int polish_evals = 300;
  double safety = 1.1;
  GradientNorm norm = GradientNorm::Inf;
  std::uint64_t seed = 1;
  double max_skip_fraction = 0.05;
  unsigned threads = 1;
};

struct MaxResult {
  double value = 0.0;
  Eigen::VectorXd argmax;
  std::size_t samples = 0;  // including polish evaluations
  std::size_t skipped = 0;
  bool used_grid = true;
};

// Global maximum of f over [lo, hi] by sampling plus Nelder-Mead polish.
// f returns nullopt for points to skip. Throws BoundError when f is
// non-finite somewhere or when more than max_skip_fraction of the samples
// are skipped.
MaxResult maximize_over_box(const std::function<std::optional<double>(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const BoundConfig& cfg,
                            std::uint64_t seed);

double gradient_norm(const Eigen::VectorXd& g, GradientNorm norm);
// Dual norm used on [chi; v] in the coverage inequality.
double pairing_norm(const Eigen::VectorXd& z, GradientNorm norm);

struct ChannelBound {
  std::size_t channel = 0;  // 0-based chi row
  double rho = 0.0;         // with safety factor
  double raw_max = 0.0;
  Eigen::VectorXd arg_chi, arg_v, arg_p;
  std::size_t samples = 0;
  std::size_t skipped = 0;
  bool input_dependent = false;
};

struct StructuredBounds {
  Eigen::VectorXd rho;                 // nbar entries
  std::vector<ChannelBound> channels;  // active channels only
  double safety = 1.1;
  GradientNorm norm = GradientNorm::Inf;
};

// Box and parameter ranges are the operating region; `theta` are the
// uncertain parameters in stack order. Throws BoundError when the anchor
// w(0, 0, p) = 0 fails beyond 1e-6.
StructuredBounds bound_rho(const ChannelModel& model, const OperatingBox& box, const std::vector<ParameterSpec>& theta,
                           const BoundConfig& cfg);

enum class KConvention { Dense, Sparse };

struct LinearizedUncertainModel {
  Eigen::MatrixXd A, B;
  std::vector<int> r;
  Eigen::VectorXd rho;
  Eigen::MatrixXd Ct;  // column k is C~_k
  Eigen::MatrixXd Kt;  // row k is K~_k
  Eigen::MatrixXd Gt;  // row k is G~_k
  KConvention convention = KConvention::Dense;

  std::size_t nbar() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(B.cols()); }
  std::vector<std::size_t> active() const;  // channels with rho > 0
};

// `input_dependent[k]` marks rows whose uncertainty reads u; only those get a
// nonzero G~ row.
LinearizedUncertainModel assemble_structured_model(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                                   const std::vector<int>& r, const Eigen::VectorXd& rho,
                                                   const std::vector<bool>& input_dependent,
                                                   KConvention convention = KConvention::Dense);

}  // namespace rfl
