#include "rfl/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "rfl/errors.hpp"
#include "rfl/optimize.hpp"
#include "rfl/random.hpp"

namespace rfl {

namespace {

std::string format_point(const Eigen::VectorXd& x) {
  std::ostringstream os;
  os.precision(10);
  os << "[";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << "]";
  return os.str();
}

}  // namespace

std::vector<std::size_t> UncertaintyStack::nonzero_rows() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!w[k].is_zero()) out.push_back(k);
  }
  return out;
}

UncertaintyStack build_uncertainty_stack(const UncertainSystem& sys, const NominalSplit& split, const LieChain& chain,
                                         const Diffeomorphism& diffeo, std::size_t node_limit) {
  UncertaintyStack stack;
  stack.x = sys.state_symbols();
  stack.u = sys.input_symbols();
  stack.dp = sys.uncertainty_symbols();
  stack.w.assign(diffeo.nbar(), Expr(0.0));
  stack.chain_top.assign(diffeo.nbar(), false);
  const std::span<const Symbol> xs(stack.x);

  for (std::size_t i = 0; i < chain.m(); ++i) {
    const std::size_t offset = diffeo.block_offset(i);
    const auto ri = static_cast<std::size_t>(chain.r[i]);
    stack.chain_top[offset + ri] = true;
    for (std::size_t j = 1; j <= ri; ++j) {
      const Expr& level = chain.chains[i][j - 1];
      Expr w = lie_derivative(level, split.df, xs);
      for (std::size_t k = 0; k < sys.m(); ++k) {
        const Expr coeff = lie_derivative(level, split.dg[k], xs);
        if (!coeff.is_zero()) w = w + coeff * Expr::symbol(stack.u[k]);
      }
      w = simplify(w);
      const std::size_t nodes = node_count(w);
      if (nodes > node_limit) {
        throw BoundError("uncertainty entry for chi row " + std::to_string(offset + j + 1) + " has " +
                         std::to_string(nodes) +
                         " nodes; simplify the model (introduce definitions, reduce uncertain terms)");
      }
      stack.w[offset + j] = std::move(w);
    }
  }
  return stack;
}

ChannelModel::ChannelModel(const UncertainSystem& sys, const UncertaintyStack& stack, const FeedbackLaw& law,
                           const Diffeomorphism& diffeo)
    : n_(sys.n()), m_(sys.m()), num_dp_(stack.dp.size()), law_(&law), diffeo_(&diffeo), x_trim_(sys.x_trim) {
  Binding b;
  const auto xs = sys.state_symbols();
  for (std::size_t i = 0; i < n_; ++i) b[xs[i]] = x_trim_[static_cast<Eigen::Index>(i)];
  yc_.resize(static_cast<Eigen::Index>(m_));
  for (std::size_t i = 0; i < m_; ++i) yc_[static_cast<Eigen::Index>(i)] = eval(sys.outputs[i], b);
  xi0_ = diffeo.xi(x_trim_, yc_);

  std::vector<Symbol> inputs = stack.x;
  inputs.insert(inputs.end(), stack.u.begin(), stack.u.end());
  inputs.insert(inputs.end(), stack.dp.begin(), stack.dp.end());
  for (const auto& w : stack.w) {
    active_.push_back(!w.is_zero());
    input_dependent_.push_back(depends_on(w, SymbolClass::Input));
    std::vector<Expr> outs{w};
    for (const auto& s : stack.x) outs.push_back(simplify(diff(w, s)));
    for (const auto& s : stack.u) outs.push_back(simplify(diff(w, s)));
    tapes_.emplace_back(outs, inputs);
  }
}

bool ChannelModel::locate(const Eigen::VectorXd& xi_rel, const Eigen::VectorXd& v, Eigen::VectorXd& x,
                          Eigen::VectorXd& u) const {
  if (!diffeo_->invert(xi0_ + xi_rel, yc_, x_trim_, x)) return false;
  try {
    u = law_->control(x, v);
  } catch (const SimError&) {
    return false;
  }
  return u.allFinite();
}

double ChannelModel::value_x(std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& dp) const {
  if (!active_[k]) return 0.0;
  std::vector<double> in(x.data(), x.data() + x.size());
  in.insert(in.end(), u.data(), u.data() + u.size());
  in.insert(in.end(), dp.data(), dp.data() + dp.size());
  std::vector<double> out(tapes_[k].num_outputs());
  std::vector<double> scratch;
  tapes_[k].eval(in, out, scratch);
  return out[0];
}

std::optional<double> ChannelModel::value(std::size_t k, const Eigen::VectorXd& xi_rel, const Eigen::VectorXd& v,
                                          const Eigen::VectorXd& dp) const {
  if (!active_[k]) return 0.0;
  Eigen::VectorXd x, u;
  if (!locate(xi_rel, v, x, u)) return std::nullopt;
  return value_x(k, x, u, dp);
}

std::optional<Eigen::VectorXd> ChannelModel::gradient(std::size_t k, const Eigen::VectorXd& xi_rel,
                                                      const Eigen::VectorXd& v, const Eigen::VectorXd& dp) const {
  const auto n = static_cast<Eigen::Index>(n_);
  const auto m = static_cast<Eigen::Index>(m_);
  Eigen::VectorXd row = Eigen::VectorXd::Zero(n + 2 * m);
  if (!active_[k]) return row;
  Eigen::VectorXd x, u;
  if (!locate(xi_rel, v, x, u)) return std::nullopt;

  std::vector<double> in(x.data(), x.data() + n);
  in.insert(in.end(), u.data(), u.data() + m);
  in.insert(in.end(), dp.data(), dp.data() + dp.size());
  std::vector<double> out(tapes_[k].num_outputs());
  std::vector<double> scratch;
  tapes_[k].eval(in, out, scratch);
  const Eigen::Map<const Eigen::VectorXd> dwdx(out.data() + 1, n);
  const Eigen::Map<const Eigen::VectorXd> dwdu(out.data() + 1 + n, m);

  Eigen::VectorXd total = dwdx;
  Eigen::VectorXd grad_v = Eigen::VectorXd::Zero(m);
  if (input_dependent_[k]) {
    Eigen::VectorXd fstar;
    Eigen::MatrixXd gstar, dfstar;
    std::vector<Eigen::MatrixXd> dgstar;
    law_->terms(x, fstar, gstar);
    law_->term_jacobians(x, dfstar, dgstar);
    Eigen::PartialPivLU<Eigen::MatrixXd> glu(gstar);
    if (!(glu.rcond() > 1e-13)) return std::nullopt;
    // u = g*^-1 (v - f*): du/dx_i = -g*^-1 (df*/dx_i + dg*/dx_i u), du/dv = g*^-1.
    Eigen::MatrixXd dudx(m, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      dudx.col(i) = -glu.solve(dfstar.col(i) + dgstar[static_cast<std::size_t>(i)] * u);
    }
    total += dudx.transpose() * dwdu;
    grad_v = glu.transpose().solve(dwdu);
  }
  const Eigen::MatrixXd J = diffeo_->jacobian(x);
  Eigen::PartialPivLU<Eigen::MatrixXd> jlu(J);
  if (!(jlu.rcond() > 1e-14)) return std::nullopt;
  const Eigen::VectorXd grad_xi = jlu.transpose().solve(total);

  Eigen::VectorXd full = Eigen::VectorXd::Zero(n + 2 * m);
  for (std::size_t j = 0; j < n_; ++j) {
    full[static_cast<Eigen::Index>(diffeo_->chi_index_of_xi(j))] = grad_xi[static_cast<Eigen::Index>(j)];
  }
  full.tail(m) = grad_v;
  return full;
}

double gradient_norm(const Eigen::VectorXd& g, GradientNorm norm) {
  if (g.size() == 0) return 0.0;
  return norm == GradientNorm::Inf ? g.lpNorm<Eigen::Infinity>() : g.norm();
}

double pairing_norm(const Eigen::VectorXd& z, GradientNorm norm) {
  return norm == GradientNorm::Inf ? z.lpNorm<1>() : z.norm();
}

MaxResult maximize_over_box(const std::function<std::optional<double>(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const BoundConfig& cfg,
                            std::uint64_t seed) {
  std::vector<Eigen::Index> free_axes;
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo[i] < hi[i]) free_axes.push_back(i);
  }
  const double grid_size =
      std::pow(static_cast<double>(cfg.grid_per_axis), static_cast<double>(free_axes.size()));

  MaxResult res;
  std::vector<Eigen::VectorXd> points;
  if (grid_size <= static_cast<double>(cfg.grid_cap)) {
    points = sample_hyperrect(lo, hi, {SampleScheme::Grid, cfg.grid_per_axis, 0, 0});
  } else {
    res.used_grid = false;
    points = sample_hyperrect(lo, hi, {SampleScheme::LatinHypercube, 0, cfg.lhs_samples, seed});
    if (static_cast<int>(free_axes.size()) <= cfg.corner_dim_limit) {
      auto corners = sample_hyperrect(lo, hi, {SampleScheme::CornersCenter, 0, 0, 0});
      points.insert(points.end(), std::make_move_iterator(corners.begin()), std::make_move_iterator(corners.end()));
    }
  }

  std::vector<std::optional<double>> values(points.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) values[s] = f(points[s]);
  };
  const unsigned threads = std::max(1U, std::min<unsigned>(cfg.threads, static_cast<unsigned>(points.size())));
  if (threads == 1) {
    work(0, points.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (points.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk;
      const std::size_t e = std::min(points.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  std::vector<std::size_t> ok;
  for (std::size_t s = 0; s < points.size(); ++s) {
    if (!values[s]) {
      ++res.skipped;
      continue;
    }
    if (!std::isfinite(*values[s])) {
      throw BoundError("non-finite gradient at sample point " + format_point(points[s]) +
                       " (singularity inside the operating box)");
    }
    ok.push_back(s);
  }
  res.samples = points.size();
  if (static_cast<double>(res.skipped) > cfg.max_skip_fraction * static_cast<double>(points.size())) {
    throw BoundError(std::to_string(res.skipped) + " of " + std::to_string(points.size()) +
                     " samples could not be mapped back to plant coordinates (limit " +
                     std::to_string(static_cast<int>(cfg.max_skip_fraction * 100)) + "%); shrink the operating box");
  }
  if (ok.empty()) throw BoundError("no valid samples in the operating box");

  // Ties resolve to the lowest sample index, so the result does not depend on
  // how the evaluations were scheduled.
  std::stable_sort(ok.begin(), ok.end(), [&](std::size_t a, std::size_t b) { return *values[a] > *values[b]; });
  res.value = *values[ok.front()];
  res.argmax = points[ok.front()];

  if (!free_axes.empty() && cfg.polish_starts > 0) {
    const auto d = static_cast<Eigen::Index>(free_axes.size());
    Eigen::VectorXd flo(d), fhi(d), step(d);
    for (Eigen::Index a = 0; a < d; ++a) {
      flo[a] = lo[free_axes[static_cast<std::size_t>(a)]];
      fhi[a] = hi[free_axes[static_cast<std::size_t>(a)]];
      step[a] = 0.05 * (fhi[a] - flo[a]);
    }
    auto embed = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& base) {
      Eigen::VectorXd p = base;
      for (Eigen::Index a = 0; a < d; ++a) p[free_axes[static_cast<std::size_t>(a)]] = z[a];
      return p;
    };
    const std::size_t starts = std::min<std::size_t>(static_cast<std::size_t>(cfg.polish_starts), ok.size());
    for (std::size_t s = 0; s < starts; ++s) {
      const Eigen::VectorXd& base = points[ok[s]];
      Eigen::VectorXd z0(d);
      for (Eigen::Index a = 0; a < d; ++a) z0[a] = base[free_axes[static_cast<std::size_t>(a)]];
      NelderMeadOptions opt;
      opt.max_evals = cfg.polish_evals;
      opt.ftol = 1e-12;
      const auto r = nelder_mead(
          [&](const Eigen::VectorXd& z) {
            const auto v = f(embed(z, base));
            return v && std::isfinite(*v) ? -*v : std::numeric_limits<double>::infinity();
          },
          z0, step, opt, &flo, &fhi);
      res.samples += static_cast<std::size_t>(r.evals);
      if (-r.f > res.value) {
        res.value = -r.f;
        res.argmax = embed(r.x, base);
      }
    }
  }
  return res;
}

StructuredBounds bound_rho(const ChannelModel& model, const OperatingBox& box, const std::vector<ParameterSpec>& theta,
                           const BoundConfig& cfg) {
  const std::size_t n = model.n();
  const std::size_t m = model.m();
  const std::size_t q = theta.size();
  const std::size_t nbar = model.nbar();
  if (static_cast<std::size_t>(box.chi_lower.size()) != nbar || static_cast<std::size_t>(box.v_lower.size()) != m) {
    throw BoundError("operating box has " + std::to_string(box.chi_lower.size()) + " chi and " +
                     std::to_string(box.v_lower.size()) + " v ranges; expected " + std::to_string(nbar) + " and " +
                     std::to_string(m));
  }
  if (q != model.num_dp()) throw BoundError("parameter set does not match the uncertainty layout");
  box.validate();
  const Eigen::Index d = static_cast<Eigen::Index>(n + m + q);
  const Diffeomorphism& diffeo = model.diffeomorphism();

  StructuredBounds out;
  out.rho = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nbar));
  out.safety = cfg.safety;
  out.norm = cfg.norm;

  // Anchor: every realization must vanish at the commanded trim.
  {
    const Eigen::VectorXd zero_xi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    const Eigen::VectorXd zero_v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    Eigen::VectorXd lo(static_cast<Eigen::Index>(q)), hi(static_cast<Eigen::Index>(q));
    for (std::size_t s = 0; s < q; ++s) {
      lo[static_cast<Eigen::Index>(s)] = -theta[s].half_width;
      hi[static_cast<Eigen::Index>(s)] = theta[s].half_width;
    }
    std::vector<Eigen::VectorXd> dps;
    if (q <= 10) {
      dps = sample_hyperrect(lo, hi, {SampleScheme::CornersCenter, 0, 0, 0});
    } else {
      dps = sample_hyperrect(lo, hi, {SampleScheme::UniformRandom, 0, 64, cfg.seed});
    }
    for (std::size_t k = 0; k < nbar; ++k) {
      if (!model.active(k)) continue;
      for (const auto& dp : dps) {
        const auto w = model.value(k, zero_xi, zero_v, dp);
        if (!w) throw BoundError("cannot evaluate the trim point (singular diffeomorphism or decoupling matrix)");
        if (!(std::abs(*w) <= 1e-6)) {
          std::ostringstream os;
          os << "uncertainty anchor violated on chi row " << k + 1 << ": w(0, 0, p) = " << *w
             << " at parameter offset " << format_point(dp)
             << "; write uncertain terms so that they vanish at the trim";
          throw BoundError(os.str());
        }
      }
    }
  }

  for (std::size_t k = 0; k < nbar; ++k) {
    if (!model.active(k)) continue;
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(d), hi = Eigen::VectorXd::Zero(d);
    for (std::size_t j = 0; j < n; ++j) {
      const auto c = static_cast<Eigen::Index>(diffeo.chi_index_of_xi(j));
      lo[static_cast<Eigen::Index>(j)] = box.chi_lower[c];
      hi[static_cast<Eigen::Index>(j)] = box.chi_upper[c];
    }
    if (model.input_dependent(k)) {
      lo.segment(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = box.v_lower;
      hi.segment(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = box.v_upper;
    }
    for (std::size_t s = 0; s < q; ++s) {
      lo[static_cast<Eigen::Index>(n + m + s)] = -theta[s].half_width;
      hi[static_cast<Eigen::Index>(n + m + s)] = theta[s].half_width;
    }
    const auto split = [&](const Eigen::VectorXd& z, Eigen::VectorXd& xi, Eigen::VectorXd& v, Eigen::VectorXd& dp) {
      xi = z.head(static_cast<Eigen::Index>(n));
      v = z.segment(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
      dp = z.tail(static_cast<Eigen::Index>(q));
    };
    const auto objective = [&](const Eigen::VectorXd& z) -> std::optional<double> {
      Eigen::VectorXd xi, v, dp;
      split(z, xi, v, dp);
      const auto g = model.gradient(k, xi, v, dp);
      if (!g) return std::nullopt;
      return gradient_norm(*g, cfg.norm);
    };
    const MaxResult mr = maximize_over_box(objective, lo, hi, cfg, mix_seed(cfg.seed, k));

    ChannelBound cb;
    cb.channel = k;
    cb.raw_max = mr.value;
    cb.rho = cfg.safety * mr.value;
    Eigen::VectorXd xi, v, dp;
    split(mr.argmax, xi, v, dp);
    cb.arg_chi = diffeo.chi(xi, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)));
    cb.arg_v = v;
    cb.arg_p = dp;
    for (std::size_t s = 0; s < q; ++s) cb.arg_p[static_cast<Eigen::Index>(s)] += theta[s].nominal;
    cb.samples = mr.samples;
    cb.skipped = mr.skipped;
    cb.input_dependent = model.input_dependent(k);
    out.rho[static_cast<Eigen::Index>(k)] = cb.rho;
    out.channels.push_back(std::move(cb));
  }
  return out;
}

std::vector<std::size_t> LinearizedUncertainModel::active() const {
  std::vector<std::size_t> out;
  for (Eigen::Index k = 0; k < rho.size(); ++k) {
    if (rho[k] > 0.0) out.push_back(static_cast<std::size_t>(k));
  }
  return out;
}

LinearizedUncertainModel assemble_structured_model(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                                   const std::vector<int>& r, const Eigen::VectorXd& rho,
                                                   const std::vector<bool>& input_dependent, KConvention convention) {
  const Eigen::Index nbar = A.rows();
  const Eigen::Index m = B.cols();
  LinearizedUncertainModel out;
  out.A = A;
  out.B = B;
  out.r = r;
  out.rho = rho;
  out.convention = convention;
  out.Ct = Eigen::MatrixXd::Zero(nbar, nbar);
  out.Kt = Eigen::MatrixXd::Zero(nbar, nbar);
  out.Gt = Eigen::MatrixXd::Zero(nbar, m);
  for (Eigen::Index k = 0; k < nbar; ++k) {
    if (!(rho[k] > 0.0)) continue;
    out.Ct(k, k) = 1.0;
    if (convention == KConvention::Dense) {
      out.Kt.row(k).setConstant(rho[k]);
    } else {
      out.Kt(k, k) = rho[k];
    }
    if (input_dependent[static_cast<std::size_t>(k)]) out.Gt.row(k).setConstant(rho[k]);
  }
  return out;
}

}  // namespace rfl
