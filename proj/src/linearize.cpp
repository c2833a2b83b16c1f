#include "rfl/linearize.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "rfl/errors.hpp"
#include "rfl/random.hpp"

namespace rfl {

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double eval_at(const Expr& e, std::span<const Symbol> x, const Eigen::VectorXd& at) {
  Binding b;
  for (std::size_t i = 0; i < x.size(); ++i) b[x[i]] = at[static_cast<Eigen::Index>(i)];
  return eval(e, b);
}

std::string format_point(const Eigen::VectorXd& x) {
  std::ostringstream os;
  os.precision(10);
  os << "[";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << "]";
  return os.str();
}

}  // namespace

Expr lie_derivative(const Expr& h, std::span<const Expr> field, std::span<const Symbol> x) {
  Expr acc(0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (field[i].is_zero()) continue;
    const Expr d = diff(h, x[i]);
    if (d.is_zero()) continue;
    acc = acc + d * field[i];
  }
  return simplify(acc);
}

int LieChain::total_degree() const {
  int s = 0;
  for (int ri : r) s += ri;
  return s;
}

std::vector<Expr> LieChain::fstar() const {
  std::vector<Expr> out;
  for (std::size_t i = 0; i < r.size(); ++i) out.push_back(chains[i][static_cast<std::size_t>(r[i])]);
  return out;
}

LieChain relative_degree(const UncertainSystem& sys, const NominalSplit& split, const Eigen::VectorXd& x0,
                         const RelativeDegreeOptions& opt) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  LieChain chain;
  chain.states = sys.state_symbols();
  const std::span<const Symbol> xs(chain.states);

  Rng rng(opt.seed);
  std::vector<Eigen::VectorXd> ball;
  for (int s = 0; s < opt.ball_points; ++s) {
    Eigen::VectorXd p = x0;
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += opt.ball_radius * (1.0 + std::abs(x0[i])) * rng.uniform(-1.0, 1.0);
    ball.push_back(std::move(p));
  }

  for (std::size_t i = 0; i < m; ++i) {
    std::vector<Expr> levels{simplify(sys.outputs[i])};
    bool found = false;
    for (std::size_t j = 0; j < n && !found; ++j) {
      std::vector<Expr> row;
      bool present = false;
      for (std::size_t k = 0; k < m; ++k) {
        Expr e = lie_derivative(levels[j], split.g0[k], xs);
        if (!e.is_zero()) {
          const double at_trim = eval_at(e, xs, x0);
          if (std::abs(at_trim) > opt.tol) {
            present = true;
          } else {
            for (const auto& p : ball) {
              double v = 0.0;
              try {
                v = eval_at(e, xs, p);
              } catch (const EvalError&) {
                continue;
              }
              if (std::abs(v) > 1e3 * opt.tol) {
                throw DegreeError("relative degree of output '" + sys.output_names[i] +
                                  "' is not well defined at the trim: input '" + sys.input_names[k] +
                                  "' appears after " + std::to_string(j + 1) +
                                  " differentiations near the trim but its coefficient vanishes at the trim");
              }
            }
          }
        }
        row.push_back(std::move(e));
      }
      if (present) {
        chain.r.push_back(static_cast<int>(j + 1));
        chain.decoupling.push_back(std::move(row));
        levels.push_back(lie_derivative(levels[j], split.f0, xs));
        found = true;
      } else if (j + 1 < n) {
        levels.push_back(lie_derivative(levels[j], split.f0, xs));
      }
    }
    if (!found) {
      throw DegreeError("relative degree of output '" + sys.output_names[i] + "' is undefined: no input appears within " +
                        std::to_string(n) + " differentiations");
    }
    chain.chains.push_back(std::move(levels));
  }
  if (chain.total_degree() != static_cast<int>(n)) {
    std::string rs;
    for (std::size_t i = 0; i < m; ++i) rs += (i ? "," : "") + std::to_string(chain.r[i]);
    throw DegreeError("full relative degree violated: r = [" + rs + "] sums to " + std::to_string(chain.total_degree()) +
                      " but the plant has n = " + std::to_string(n) + " states (zero dynamics present)");
  }
  return chain;
}

Eigen::MatrixXd evaluate_matrix(const std::vector<std::vector<Expr>>& entries, std::span<const Symbol> x,
                                const Eigen::VectorXd& at) {
  const auto rows = static_cast<Eigen::Index>(entries.size());
  const auto cols = rows ? static_cast<Eigen::Index>(entries[0].size()) : 0;
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) out(i, k) = eval_at(entries[i][k], x, at);
  }
  return out;
}

DecouplingMatrix decoupling_matrix(const LieChain& chain, const Eigen::VectorXd& x0) {
  DecouplingMatrix d;
  d.entries = chain.decoupling;
  d.at_trim = evaluate_matrix(d.entries, chain.states, x0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(d.at_trim);
  const auto& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  d.condition = smin > 0.0 ? s[0] / smin : std::numeric_limits<double>::infinity();
  if (!(d.condition <= 1e12)) {
    std::ostringstream os;
    os << "decoupling matrix is singular at the trim (condition number " << d.condition << ")";
    throw DegreeError(os.str());
  }
  return d;
}

FeedbackLaw::FeedbackLaw(const LieChain& chain) : n_(chain.states.size()), m_(chain.m()) {
  const std::span<const Symbol> xs(chain.states);
  std::vector<Expr> out = chain.fstar();
  for (std::size_t k = 0; k < m_; ++k) {
    for (std::size_t i = 0; i < m_; ++i) out.push_back(chain.decoupling[i][k]);
  }
  terms_ = Tape(out, xs);

  std::vector<Expr> jac;
  const auto fstar = chain.fstar();
  for (std::size_t i = 0; i < m_; ++i) {
    for (const auto& s : chain.states) jac.push_back(simplify(diff(fstar[i], s)));
  }
  for (const auto& s : chain.states) {
    for (std::size_t k = 0; k < m_; ++k) {
      for (std::size_t i = 0; i < m_; ++i) jac.push_back(simplify(diff(chain.decoupling[i][k], s)));
    }
  }
  jacobians_ = Tape(jac, xs);
}

void FeedbackLaw::terms(const Eigen::VectorXd& x, Eigen::VectorXd& fstar, Eigen::MatrixXd& gstar) const {
  const auto out = terms_.eval(to_std(x));
  const auto m = static_cast<Eigen::Index>(m_);
  fstar = Eigen::Map<const Eigen::VectorXd>(out.data(), m);
  gstar = Eigen::Map<const Eigen::MatrixXd>(out.data() + m, m, m);
}

void FeedbackLaw::term_jacobians(const Eigen::VectorXd& x, Eigen::MatrixXd& dfstar,
                                 std::vector<Eigen::MatrixXd>& dgstar) const {
  const auto out = jacobians_.eval(to_std(x));
  const auto m = static_cast<Eigen::Index>(m_);
  const auto n = static_cast<Eigen::Index>(n_);
  dfstar = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.data(), m, n);
  dgstar.resize(n_);
  for (Eigen::Index i = 0; i < n; ++i) {
    dgstar[static_cast<std::size_t>(i)] = Eigen::Map<const Eigen::MatrixXd>(out.data() + m * n + i * m * m, m, m);
  }
}

Eigen::VectorXd FeedbackLaw::control(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
  Eigen::VectorXd fstar;
  Eigen::MatrixXd gstar;
  terms(x, fstar, gstar);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(gstar);
  if (!(std::abs(gstar.determinant()) > 0.0) || !(lu.rcond() > 1e-13) || !fstar.allFinite()) {
    throw SimError("decoupling matrix singular at state " + format_point(x));
  }
  return lu.solve(v - fstar);
}

Diffeomorphism::Diffeomorphism(const LieChain& chain, std::vector<std::string> output_names)
    : n_(chain.states.size()), r_(chain.r) {
  const std::span<const Symbol> xs(chain.states);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < r_.size(); ++i) {
    offsets_.push_back(offset);
    references_.push_back(reference(output_names.at(i)));
    components_.push_back(simplify(chain.chains[i][0] - Expr::symbol(references_.back())));
    xi_to_chi_.push_back(offset + 1);
    for (int j = 1; j < r_[i]; ++j) {
      components_.push_back(chain.chains[i][static_cast<std::size_t>(j)]);
      xi_to_chi_.push_back(offset + 1 + static_cast<std::size_t>(j));
    }
    offset += static_cast<std::size_t>(r_[i]) + 1;
  }
  std::vector<Symbol> inputs(chain.states);
  inputs.insert(inputs.end(), references_.begin(), references_.end());
  xi_tape_ = Tape(components_, inputs);

  std::vector<Expr> jac;
  for (const auto& c : components_) {
    for (const auto& s : xs) jac.push_back(simplify(diff(c, s)));
  }
  jac_tape_ = Tape(jac, xs);
}

bool Diffeomorphism::is_integral(std::size_t chi_index) const {
  for (auto o : offsets_) {
    if (o == chi_index) return true;
  }
  return false;
}

Eigen::VectorXd Diffeomorphism::xi(const Eigen::VectorXd& x, const Eigen::VectorXd& yc) const {
  std::vector<double> in = to_std(x);
  in.insert(in.end(), yc.data(), yc.data() + yc.size());
  const auto out = xi_tape_.eval(in);
  return Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Eigen::MatrixXd Diffeomorphism::jacobian(const Eigen::VectorXd& x) const {
  const auto out = jac_tape_.eval(to_std(x));
  const auto n = static_cast<Eigen::Index>(n_);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.data(), n, n);
}

Eigen::VectorXd Diffeomorphism::chi(const Eigen::VectorXd& xi, const Eigen::VectorXd& integrals) const {
  Eigen::VectorXd c(static_cast<Eigen::Index>(nbar()));
  for (std::size_t j = 0; j < n_; ++j) c[static_cast<Eigen::Index>(xi_to_chi_[j])] = xi[static_cast<Eigen::Index>(j)];
  for (std::size_t i = 0; i < r_.size(); ++i) c[static_cast<Eigen::Index>(offsets_[i])] = integrals[static_cast<Eigen::Index>(i)];
  return c;
}

Eigen::VectorXd Diffeomorphism::xi_of_chi(const Eigen::VectorXd& chi) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n_));
  for (std::size_t j = 0; j < n_; ++j) out[static_cast<Eigen::Index>(j)] = chi[static_cast<Eigen::Index>(xi_to_chi_[j])];
  return out;
}

Eigen::VectorXd Diffeomorphism::integrals_of_chi(const Eigen::VectorXd& chi) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(r_.size()));
  for (std::size_t i = 0; i < r_.size(); ++i) out[static_cast<Eigen::Index>(i)] = chi[static_cast<Eigen::Index>(offsets_[i])];
  return out;
}

bool Diffeomorphism::invert(const Eigen::VectorXd& target, const Eigen::VectorXd& yc, const Eigen::VectorXd& guess,
                            Eigen::VectorXd& x, double tol, int max_iter) const {
  x = guess;
  const double scale = 1.0 + target.lpNorm<Eigen::Infinity>();
  Eigen::VectorXd res = xi(x, yc) - target;
  double norm = res.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < max_iter; ++it) {
    if (norm <= tol * scale) return true;
    if (!std::isfinite(norm)) return false;
    const Eigen::MatrixXd J = jacobian(x);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    if (!(lu.rcond() > 1e-14)) return false;
    const Eigen::VectorXd step = lu.solve(-res);
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      const Eigen::VectorXd trial = x + t * step;
      const Eigen::VectorXd trial_res = xi(trial, yc) - target;
      const double trial_norm = trial_res.lpNorm<Eigen::Infinity>();
      if (std::isfinite(trial_norm) && trial_norm < norm) {
        x = trial;
        res = trial_res;
        norm = trial_norm;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return norm <= tol * scale;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> brunovsky(std::span<const int> r) {
  Eigen::Index nbar = 0;
  for (int ri : r) nbar += ri + 1;
  const auto m = static_cast<Eigen::Index>(r.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nbar, nbar);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nbar, m);
  Eigen::Index offset = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index size = r[static_cast<std::size_t>(i)] + 1;
    for (Eigen::Index j = 0; j + 1 < size; ++j) A(offset + j, offset + j + 1) = 1.0;
    B(offset + size - 1, i) = 1.0;
    offset += size;
  }
  return {A, B};
}

int controllability_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Eigen::MatrixXd C(n, n * m);
  Eigen::MatrixXd block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    C.middleCols(k * m, m) = block;
    block = A * block;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(C);
  return static_cast<int>(qr.rank());
}

}  // namespace rfl
