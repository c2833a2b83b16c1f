#include "rfl/sim.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "rfl/errors.hpp"
#include "rfl/format.hpp"

namespace rfl {

double ReferenceSchedule::at(double t) const {
  double value = initial;
  for (const auto& s : steps) {
    if (t >= s.time) value = s.value;
  }
  return value;
}

namespace {

// x' = f(x, p) + g(x, p) u over inputs [x, p].
class PlantField {
 public:
  explicit PlantField(const UncertainSystem& sys) : n_(sys.n()), m_(sys.m()) {
    std::vector<Expr> out = sys.drift;
    for (const auto& g : sys.input_fields) out.insert(out.end(), g.begin(), g.end());
    std::vector<Symbol> in = sys.state_symbols();
    const auto ps = sys.parameter_symbols();
    in.insert(in.end(), ps.begin(), ps.end());
    tape_ = Tape(out, in);
    in_.resize(in.size());
    out_.resize(out.size());
  }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& p) {
    std::copy(x.data(), x.data() + x.size(), in_.begin());
    std::copy(p.data(), p.data() + p.size(), in_.begin() + x.size());
    tape_.eval(in_, out_, scratch_);
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::VectorXd xdot = Eigen::Map<const Eigen::VectorXd>(out_.data(), n);
    for (std::size_t k = 0; k < m_; ++k) {
      xdot += Eigen::Map<const Eigen::VectorXd>(out_.data() + n * static_cast<Eigen::Index>(k + 1), n) *
              u[static_cast<Eigen::Index>(k)];
    }
    return xdot;
  }

 private:
  std::size_t n_, m_;
  Tape tape_;
  std::vector<double> in_, out_, scratch_;
};

std::string format_vector(const Eigen::VectorXd& x) {
  std::ostringstream os;
  os << "[";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << format_double(x[i]);
  os << "]";
  return os.str();
}

}  // namespace

Trajectory simulate(const ClosedLoop& loop, const Scenario& sc) {
  if (!loop.sys || !loop.law || !loop.diffeo) throw SimError("closed loop is incomplete");
  const UncertainSystem& sys = *loop.sys;
  const Diffeomorphism& diffeo = *loop.diffeo;
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  const auto ni = static_cast<Eigen::Index>(n);
  const auto mi = static_cast<Eigen::Index>(m);
  const auto nbar = static_cast<Eigen::Index>(diffeo.nbar());
  if (!(sc.step > 0.0) || !(sc.horizon >= 0.0)) throw SimError("step size must be positive and horizon non-negative");
  if (sc.references.size() != m) throw SimError("scenario needs one reference schedule per output");
  if (static_cast<std::size_t>(sc.p_true.size()) != sys.parameters.size()) throw SimError("scenario parameter vector has wrong length");
  if (!sc.out_of_set) {
    for (std::size_t s = 0; s < sys.parameters.size(); ++s) {
      if (!sys.parameters[s].contains(sc.p_true[static_cast<Eigen::Index>(s)])) {
        throw SimError("parameter '" + sys.parameters[s].name + "' lies outside its admissible interval; flag the scenario as out-of-set");
      }
    }
  }
  if (!loop.open_loop_v && (loop.gain.rows() != mi || loop.gain.cols() != nbar)) {
    throw SimError("gain must be " + std::to_string(m) + "x" + std::to_string(nbar));
  }
  const Eigen::MatrixXd Q = loop.Q.size() ? loop.Q : Eigen::MatrixXd::Zero(nbar, nbar);
  const Eigen::MatrixXd R = loop.R.size() ? loop.R : Eigen::MatrixXd::Zero(mi, mi);

  Trajectory tr;
  const double h = sc.step;
  const auto steps = static_cast<std::size_t>(std::llround(sc.horizon / h));
  if (!loop.open_loop_v) {
    const auto [A, B] = brunovsky(diffeo.r());
    Eigen::EigenSolver<Eigen::MatrixXd> es(A - B * loop.gain, false);
    const double fastest = es.eigenvalues().cwiseAbs().maxCoeff();
    if (fastest * h > 0.1) {
      std::ostringstream os;
      os << "step " << h << " is coarse for the fastest closed-loop mode (|lambda| = " << fastest << ")";
      tr.warnings.push_back(os.str());
    }
  }

  PlantField plant(sys);
  PlantField nominal(sys);
  const Eigen::VectorXd p0 = sys.nominal_parameters();

  struct Signals {
    Eigen::VectorXd chi, v, u;
  };
  // Control signals at augmented state s with commands yc held.
  auto signals = [&](const Eigen::VectorXd& s, const Eigen::VectorXd& yc, const Eigen::VectorXd& v_hold) {
    Signals sg;
    const Eigen::VectorXd x = s.head(ni);
    sg.chi = diffeo.chi(diffeo.xi(x, yc), s.segment(ni, mi));
    sg.v = loop.open_loop_v ? v_hold : Eigen::VectorXd(-loop.gain * sg.chi);
    sg.u = loop.law->control(x, sg.v);
    return sg;
  };
  auto rhs = [&](const Eigen::VectorXd& s, const Eigen::VectorXd& yc, const Eigen::VectorXd& v_hold) {
    const Signals sg = signals(s, yc, v_hold);
    Eigen::VectorXd ds(s.size());
    const Eigen::VectorXd x = s.head(ni);
    ds.head(ni) = plant(x, sg.u, sc.p_true);
    for (std::size_t i = 0; i < m; ++i) {
      ds[ni + static_cast<Eigen::Index>(i)] = sg.chi[static_cast<Eigen::Index>(diffeo.block_offset(i) + 1)];
    }
    ds[ni + mi] = sg.chi.dot(Q * sg.chi) + sg.v.dot(R * sg.v);
    return ds;
  };
  auto commands = [&](double t) {
    Eigen::VectorXd yc(mi);
    for (std::size_t i = 0; i < m; ++i) yc[static_cast<Eigen::Index>(i)] = sc.references[i].at(t);
    return yc;
  };
  auto outputs = [&](const Eigen::VectorXd& x) {
    Binding b;
    const auto xs = sys.state_symbols();
    for (std::size_t i = 0; i < n; ++i) b[xs[i]] = x[static_cast<Eigen::Index>(i)];
    Eigen::VectorXd y(mi);
    for (std::size_t i = 0; i < m; ++i) y[static_cast<Eigen::Index>(i)] = eval(sys.outputs[i], b);
    return y;
  };

  Eigen::VectorXd s = Eigen::VectorXd::Zero(ni + mi + 1);
  s.head(ni) = sc.x0.size() ? sc.x0 : sys.x_trim;
  if (s.head(ni).size() != ni) throw SimError("initial state has wrong length");

  auto record = [&](double t, const Eigen::VectorXd& state, const Eigen::VectorXd& yc, const Eigen::VectorXd& v_hold) {
    const Signals sg = signals(state, yc, v_hold);
    const Eigen::VectorXd x = state.head(ni);
    const Eigen::VectorXd mismatch = diffeo.jacobian(x) * (plant(x, sg.u, sc.p_true) - nominal(x, sg.u, p0));
    Eigen::VectorXd zeta = Eigen::VectorXd::Zero(nbar);
    for (std::size_t j = 0; j < n; ++j) {
      zeta[static_cast<Eigen::Index>(diffeo.chi_index_of_xi(j))] = mismatch[static_cast<Eigen::Index>(j)];
    }
    tr.t.push_back(t);
    tr.x.push_back(x);
    tr.chi.push_back(sg.chi);
    tr.u.push_back(sg.u);
    tr.v.push_back(sg.v);
    tr.y.push_back(outputs(x));
    tr.yc.push_back(yc);
    tr.zeta.push_back(std::move(zeta));
    tr.cost.push_back(state[ni + mi]);
  };

  const Eigen::VectorXd no_v = Eigen::VectorXd::Zero(mi);
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * h;
    const Eigen::VectorXd yc = commands(t);
    const Eigen::VectorXd v_hold = loop.open_loop_v ? loop.open_loop_v(t) : no_v;
    try {
      if (!s.allFinite()) {
        tr.truncated = true;
        tr.diagnostic = "state became non-finite before t = " + format_double(t);
        break;
      }
      record(t, s, yc, v_hold);
      if (k == steps) break;
      const Eigen::VectorXd k1 = rhs(s, yc, v_hold);
      const Eigen::VectorXd k2 = rhs(s + 0.5 * h * k1, yc, v_hold);
      const Eigen::VectorXd k3 = rhs(s + 0.5 * h * k2, yc, v_hold);
      const Eigen::VectorXd k4 = rhs(s + h * k3, yc, v_hold);
      s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } catch (const SimError& e) {
      tr.truncated = true;
      tr.diagnostic = "t = " + format_double(t) + ": " + e.what() + " (state " + format_vector(s.head(ni)) + ")";
      break;
    } catch (const EvalError& e) {
      tr.truncated = true;
      tr.diagnostic = "t = " + format_double(t) + ": " + e.what();
      break;
    }
  }
  if (!tr.truncated && tr.size() != steps + 1) {
    tr.truncated = true;
    tr.diagnostic = "trajectory ended early";
  }
  return tr;
}

IqcReport iqc_monitor(const Trajectory& traj, const LinearizedUncertainModel& model, const MinimaxDesign& design,
                      const OperatingBox& box, const Diffeomorphism& diffeo, const Eigen::VectorXd& xi_trim,
                      const Eigen::VectorXd& y_trim, GradientNorm norm) {
  IqcReport rep;
  if (traj.size() == 0) return rep;
  const Eigen::VectorXd& chi0 = traj.chi.front();
  for (std::size_t j = 0; j < design.channels.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(design.channels[j]);
    ChannelIqc c;
    c.channel = design.channels[j];
    c.initial_term = chi0.dot(design.D[j] * chi0);
    double acc = 0.0;
    double prev = 0.0;
    for (std::size_t s = 0; s < traj.size(); ++s) {
      const double z = model.Kt.row(k).dot(traj.chi[s]) + model.Gt.row(k).dot(traj.v[s]);
      const double zeta = traj.zeta[s][k];
      const double cur = z * z - zeta * zeta;
      if (s > 0) acc += 0.5 * (traj.t[s] - traj.t[s - 1]) * (prev + cur);
      prev = cur;
      c.running.push_back(acc);
    }
    c.holds = acc >= -c.initial_term;
    rep.holds = rep.holds && c.holds;
    rep.channels.push_back(std::move(c));
  }

  // Block-first xi entries hold y - yc; re-anchor them at the trim output.
  const std::size_t n = diffeo.n();
  std::vector<std::ptrdiff_t> output_of_xi(n, -1);
  for (std::size_t i = 0; i < diffeo.m(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (diffeo.chi_index_of_xi(j) == diffeo.block_offset(i) + 1) output_of_xi[j] = static_cast<std::ptrdiff_t>(i);
    }
  }
  for (std::size_t s = 0; s < traj.size(); ++s) {
    Eigen::VectorXd xi = diffeo.xi_of_chi(traj.chi[s]);
    for (std::size_t j = 0; j < n; ++j) {
      if (output_of_xi[j] >= 0) xi[static_cast<Eigen::Index>(j)] += traj.yc[s][output_of_xi[j]] - y_trim[output_of_xi[j]];
    }
    xi -= xi_trim;
    bool inside = (traj.v[s].array() >= box.v_lower.array()).all() && (traj.v[s].array() <= box.v_upper.array()).all();
    for (std::size_t j = 0; j < n && inside; ++j) {
      const auto c = static_cast<Eigen::Index>(diffeo.chi_index_of_xi(j));
      const double val = xi[static_cast<Eigen::Index>(j)];
      inside = val >= box.chi_lower[c] && val <= box.chi_upper[c];
    }
    if (!inside) {
      if (!rep.box_exit_time) rep.box_exit_time = traj.t[s];
      continue;
    }
    Eigen::VectorXd zv(static_cast<Eigen::Index>(n) + traj.v[s].size());
    zv << xi, traj.v[s];
    const double scale = pairing_norm(zv, norm);
    for (std::size_t k : design.channels) {
      const double w = std::abs(traj.zeta[s][static_cast<Eigen::Index>(k)]);
      const double cap = model.rho[static_cast<Eigen::Index>(k)] * scale;
      ++rep.coverage_checked;
      if (w > cap + 1e-12 * (1.0 + w)) ++rep.coverage_violations;
      if (cap > 0.0) rep.worst_coverage_ratio = std::max(rep.worst_coverage_ratio, w / cap);
    }
  }
  return rep;
}

std::vector<CaseResult> run_cases(const ClosedLoop& loop, const Scenario& base, const std::vector<int>& cases) {
  std::vector<CaseResult> out;
  const UncertainSystem& sys = *loop.sys;
  for (int c : cases) {
    if (c < 1 || c > 3) throw SimError("cases are numbered 1 to 3");
    const double factor = c == 1 ? 1.0 : (c == 2 ? 0.8 : 1.2);
    Scenario sc = base;
    sc.name = "case" + std::to_string(c);
    sc.p_true = sys.nominal_parameters();
    sc.out_of_set = false;
    for (std::size_t s = 0; s < sys.parameters.size(); ++s) {
      const auto& spec = sys.parameters[s];
      if (!spec.uncertain()) continue;
      const double p = factor * spec.nominal;
      sc.p_true[static_cast<Eigen::Index>(s)] = p;
      if (!spec.contains(p)) sc.out_of_set = true;
    }
    out.push_back({sc, simulate(loop, sc)});
  }
  return out;
}

void write_csv(std::ostream& os, const Trajectory& traj) {
  if (traj.size() == 0) return;
  auto header = [&](const char* name, Eigen::Index count) {
    for (Eigen::Index i = 1; i <= count; ++i) os << ',' << name << i;
  };
  os << 't';
  header("x", traj.x[0].size());
  header("chi", traj.chi[0].size());
  header("u", traj.u[0].size());
  header("v", traj.v[0].size());
  header("y", traj.y[0].size());
  header("yc", traj.yc[0].size());
  os << ",cost\n";
  auto row = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_double(v[i]);
  };
  for (std::size_t s = 0; s < traj.size(); ++s) {
    os << format_double(traj.t[s]);
    row(traj.x[s]);
    row(traj.chi[s]);
    row(traj.u[s]);
    row(traj.v[s]);
    row(traj.y[s]);
    row(traj.yc[s]);
    os << ',' << format_double(traj.cost[s]) << '\n';
  }
}

}  // namespace rfl
