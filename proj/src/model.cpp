#include "rfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rfl/errors.hpp"
#include "rfl/random.hpp"

namespace rfl {

namespace {

std::vector<Symbol> make_symbols(const std::vector<std::string>& names, Symbol (*make)(std::string)) {
  std::vector<Symbol> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(make(n));
  return out;
}

}  // namespace

std::vector<Symbol> UncertainSystem::state_symbols() const { return make_symbols(state_names, &state); }

std::vector<Symbol> UncertainSystem::input_symbols() const { return make_symbols(input_names, &input); }

std::vector<Symbol> UncertainSystem::parameter_symbols() const {
  std::vector<Symbol> out;
  for (const auto& p : parameters) out.push_back(parameter(p.name));
  return out;
}

std::vector<Symbol> UncertainSystem::uncertainty_symbols() const {
  std::vector<Symbol> out;
  for (const auto& p : parameters) {
    if (p.uncertain()) out.push_back(uncertainty(p.name));
  }
  return out;
}

std::vector<std::size_t> UncertainSystem::uncertain_parameter_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < parameters.size(); ++s) {
    if (parameters[s].uncertain()) out.push_back(s);
  }
  return out;
}

Eigen::VectorXd UncertainSystem::nominal_parameters() const {
  Eigen::VectorXd p(parameters.size());
  for (std::size_t s = 0; s < parameters.size(); ++s) p[static_cast<Eigen::Index>(s)] = parameters[s].nominal;
  return p;
}

UncertainSystem UncertainSystem::from_rhs(std::vector<std::string> states, std::vector<std::string> inputs,
                                          std::vector<ParameterSpec> params, std::span<const Expr> rhs,
                                          std::vector<std::string> output_names, std::vector<Expr> outputs,
                                          Eigen::VectorXd x_trim, Eigen::VectorXd u_trim) {
  UncertainSystem sys;
  sys.state_names = std::move(states);
  sys.input_names = std::move(inputs);
  sys.parameters = std::move(params);
  sys.output_names = std::move(output_names);
  sys.outputs = std::move(outputs);
  sys.x_trim = std::move(x_trim);
  sys.u_trim = std::move(u_trim);
  if (rhs.size() != sys.state_names.size()) {
    throw ModelError("expected " + std::to_string(sys.state_names.size()) + " dynamics rows, got " +
                     std::to_string(rhs.size()));
  }
  std::map<Symbol, Expr> zero_inputs;
  for (const auto& name : sys.input_names) zero_inputs.emplace(input(name), Expr(0.0));

  sys.drift.reserve(rhs.size());
  for (const auto& F : rhs) sys.drift.push_back(simplify(substitute(F, zero_inputs)));
  sys.input_fields.assign(sys.input_names.size(), {});
  for (std::size_t k = 0; k < sys.input_names.size(); ++k) {
    const Symbol uk = input(sys.input_names[k]);
    for (std::size_t i = 0; i < rhs.size(); ++i) {
      Expr gik = simplify(diff(rhs[i], uk));
      if (depends_on(gik, SymbolClass::Input)) {
        throw ModelError("dynamics of state '" + sys.state_names[i] + "' are not affine in input '" +
                         sys.input_names[k] + "'");
      }
      sys.input_fields[k].push_back(std::move(gik));
    }
  }
  sys.validate();
  return sys;
}

void UncertainSystem::validate() const {
  const std::size_t nn = n();
  const std::size_t mm = m();
  if (nn == 0) throw ModelError("model declares no states");
  if (mm == 0) throw ModelError("model declares no inputs");
  if (outputs.size() != mm || output_names.size() != outputs.size()) {
    throw ModelError("system not square: " + std::to_string(outputs.size()) + " outputs, " + std::to_string(mm) +
                     " inputs");
  }
  if (drift.size() != nn) throw ModelError("drift has wrong length");
  if (input_fields.size() != mm) throw ModelError("input fields have wrong count");
  for (const auto& g : input_fields) {
    if (g.size() != nn) throw ModelError("input field has wrong length");
  }
  if (static_cast<std::size_t>(x_trim.size()) != nn) throw ModelError("state trim has wrong length");
  if (static_cast<std::size_t>(u_trim.size()) != mm) throw ModelError("input trim has wrong length");

  std::set<std::string> names;
  auto declare = [&](const std::string& name) {
    if (!names.insert(name).second) throw ModelError("duplicate symbol name '" + name + "'");
  };
  for (const auto& s : state_names) declare(s);
  for (const auto& s : input_names) declare(s);
  for (const auto& p : parameters) {
    declare(p.name);
    if (!(p.half_width >= 0.0) || !std::isfinite(p.nominal) || !std::isfinite(p.half_width)) {
      throw ModelError("parameter '" + p.name + "' needs a finite nominal value and a half-width >= 0");
    }
  }

  std::set<Symbol> allowed;
  for (const auto& s : state_symbols()) allowed.insert(s);
  for (const auto& s : parameter_symbols()) allowed.insert(s);
  auto check_fields = [&](const Expr& e, const std::string& where) {
    for (const auto& s : symbols_of(e)) {
      if (!allowed.contains(s)) {
        throw ModelError(where + " references undeclared " + std::string(to_string(s.cls)) + " '" + s.name + "'");
      }
    }
  };
  for (std::size_t i = 0; i < nn; ++i) {
    check_fields(drift[i], "dynamics of '" + state_names[i] + "'");
    for (std::size_t k = 0; k < mm; ++k) check_fields(input_fields[k][i], "dynamics of '" + state_names[i] + "'");
  }
  for (std::size_t i = 0; i < mm; ++i) {
    for (const auto& s : symbols_of(outputs[i])) {
      if (s.cls != SymbolClass::State) {
        throw ModelError("output '" + output_names[i] + "' must depend on states only, found " +
                         std::string(to_string(s.cls)) + " '" + s.name + "'");
      }
      if (!allowed.contains(s)) throw ModelError("output '" + output_names[i] + "' references undeclared state '" + s.name + "'");
    }
  }
}

double UncertainSystem::trim_residual() const {
  Binding b;
  for (std::size_t i = 0; i < n(); ++i) b[state(state_names[i])] = x_trim[static_cast<Eigen::Index>(i)];
  for (const auto& p : parameters) b[parameter(p.name)] = p.nominal;
  double worst = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    double xdot = eval(drift[i], b);
    for (std::size_t k = 0; k < m(); ++k) xdot += eval(input_fields[k][i], b) * u_trim[static_cast<Eigen::Index>(k)];
    worst = std::max(worst, std::abs(xdot));
  }
  return worst;
}

NominalSplit split_nominal_uncertain(const UncertainSystem& sys) {
  std::map<Symbol, Expr> nominal;
  std::map<Symbol, Expr> perturbed;
  for (const auto& p : sys.parameters) {
    nominal.emplace(parameter(p.name), Expr(p.nominal));
    if (p.uncertain()) {
      perturbed.emplace(parameter(p.name), Expr(p.nominal) + Expr::symbol(uncertainty(p.name)));
    } else {
      perturbed.emplace(parameter(p.name), Expr(p.nominal));
    }
  }
  auto check = [&](const Expr& e) {
    for (const auto& s : symbols_of(e)) {
      if (s.cls == SymbolClass::Parameter && !nominal.contains(s)) {
        throw ModelError("undeclared parameter '" + s.name + "' in a field expression");
      }
    }
  };
  auto split = [&](const Expr& e, Expr& nom, Expr& delta) {
    check(e);
    nom = simplify(substitute(e, nominal));
    Expr pert = simplify(substitute(e, perturbed));
    delta = depends_on(pert, SymbolClass::Uncertainty) ? simplify(pert - nom) : Expr(0.0);
  };

  NominalSplit out;
  const std::size_t n = sys.n();
  out.f0.resize(n);
  out.df.resize(n);
  for (std::size_t i = 0; i < n; ++i) split(sys.drift[i], out.f0[i], out.df[i]);
  out.g0.assign(sys.m(), std::vector<Expr>(n));
  out.dg.assign(sys.m(), std::vector<Expr>(n));
  for (std::size_t k = 0; k < sys.m(); ++k) {
    for (std::size_t i = 0; i < n; ++i) split(sys.input_fields[k][i], out.g0[k][i], out.dg[k][i]);
  }
  return out;
}

void OperatingBox::validate() const {
  if (chi_lower.size() != chi_upper.size() || v_lower.size() != v_upper.size()) {
    throw ModelError("operating box bounds have mismatched lengths");
  }
  for (Eigen::Index i = 0; i < chi_lower.size(); ++i) {
    if (!(chi_lower[i] <= chi_upper[i])) throw ModelError("box: chi" + std::to_string(i + 1) + " lower bound exceeds upper bound");
    if (!(chi_lower[i] <= 0.0 && 0.0 <= chi_upper[i])) throw ModelError("box: chi" + std::to_string(i + 1) + " range must contain 0");
  }
  for (Eigen::Index i = 0; i < v_lower.size(); ++i) {
    if (!(v_lower[i] <= v_upper[i])) throw ModelError("box: v" + std::to_string(i + 1) + " lower bound exceeds upper bound");
    if (!(v_lower[i] <= 0.0 && 0.0 <= v_upper[i])) throw ModelError("box: v" + std::to_string(i + 1) + " range must contain 0");
  }
}

bool OperatingBox::contains(const Eigen::VectorXd& chi, const Eigen::VectorXd& v) const {
  return (chi.array() >= chi_lower.array()).all() && (chi.array() <= chi_upper.array()).all() &&
         (v.array() >= v_lower.array()).all() && (v.array() <= v_upper.array()).all();
}

std::vector<Eigen::VectorXd> sample_hyperrect(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                              const SampleSpec& spec) {
  const Eigen::Index d = lo.size();
  if (hi.size() != d) throw BoundError("sample box bounds have mismatched lengths");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(lo[i] <= hi[i])) throw BoundError("sample box is empty along axis " + std::to_string(i + 1));
  }
  std::vector<Eigen::Index> free_axes;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (lo[i] < hi[i]) free_axes.push_back(i);
  }
  std::vector<Eigen::VectorXd> out;

  switch (spec.scheme) {
    case SampleScheme::Grid: {
      if (spec.per_axis < 1) throw BoundError("grid needs at least one point per axis");
      const int k = spec.per_axis;
      double total = std::pow(static_cast<double>(k), static_cast<double>(free_axes.size()));
      if (total > 5e7) throw BoundError("grid of " + std::to_string(k) + "^" + std::to_string(free_axes.size()) + " points is too large");
      std::vector<int> idx(free_axes.size(), 0);
      for (;;) {
        Eigen::VectorXd p = lo;
        for (std::size_t a = 0; a < free_axes.size(); ++a) {
          const Eigen::Index ax = free_axes[a];
          p[ax] = k == 1 ? 0.5 * (lo[ax] + hi[ax]) : lo[ax] + (hi[ax] - lo[ax]) * idx[a] / (k - 1);
        }
        out.push_back(std::move(p));
        std::size_t a = 0;
        while (a < idx.size() && ++idx[a] == k) idx[a++] = 0;
        if (a == idx.size()) break;
      }
      break;
    }
    case SampleScheme::UniformRandom: {
      Rng rng(spec.seed);
      out.reserve(spec.count);
      for (std::size_t s = 0; s < spec.count; ++s) {
        Eigen::VectorXd p = lo;
        for (Eigen::Index ax : free_axes) p[ax] = rng.uniform(lo[ax], hi[ax]);
        out.push_back(std::move(p));
      }
      break;
    }
    case SampleScheme::CornersCenter: {
      if (free_axes.size() > 20) {
        throw BoundError("corners+center needs 2^" + std::to_string(free_axes.size()) +
                         " vertices; exhaustive corners are limited to 20 dimensions");
      }
      const std::uint64_t corners = std::uint64_t{1} << free_axes.size();
      out.reserve(corners + 1);
      for (std::uint64_t c = 0; c < corners; ++c) {
        Eigen::VectorXd p = lo;
        for (std::size_t a = 0; a < free_axes.size(); ++a) {
          const Eigen::Index ax = free_axes[a];
          p[ax] = (c >> a) & 1U ? hi[ax] : lo[ax];
        }
        out.push_back(std::move(p));
      }
      out.push_back(0.5 * (lo + hi));
      break;
    }
    case SampleScheme::LatinHypercube: {
      Rng rng(spec.seed);
      const std::size_t N = spec.count;
      out.assign(N, lo);
      std::vector<std::size_t> perm(N);
      for (Eigen::Index ax : free_axes) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        // Fisher-Yates with the explicit engine keeps the stream portable.
        for (std::size_t i = N; i > 1; --i) {
          const std::size_t j = static_cast<std::size_t>(rng.next() % i);
          std::swap(perm[i - 1], perm[j]);
        }
        for (std::size_t s = 0; s < N; ++s) {
          const double u = (static_cast<double>(perm[s]) + rng.uniform()) / static_cast<double>(N);
          out[s][ax] = lo[ax] + (hi[ax] - lo[ax]) * u;
        }
      }
      break;
    }
  }
  return out;
}

std::vector<BoxSample> sample_box(const OperatingBox& box, std::span<const ParameterSpec> theta,
                                  const SampleSpec& spec) {
  const Eigen::Index nc = box.chi_lower.size();
  const Eigen::Index nv = box.v_lower.size();
  const auto np = static_cast<Eigen::Index>(theta.size());
  Eigen::VectorXd lo(nc + nv + np), hi(nc + nv + np);
  lo << box.chi_lower, box.v_lower, Eigen::VectorXd::Zero(np);
  hi << box.chi_upper, box.v_upper, Eigen::VectorXd::Zero(np);
  for (Eigen::Index s = 0; s < np; ++s) {
    lo[nc + nv + s] = theta[static_cast<std::size_t>(s)].lower();
    hi[nc + nv + s] = theta[static_cast<std::size_t>(s)].upper();
  }
  std::vector<BoxSample> out;
  for (auto& p : sample_hyperrect(lo, hi, spec)) {
    out.push_back({p.head(nc), p.segment(nc, nv), p.tail(np)});
  }
  return out;
}

}  // namespace rfl
