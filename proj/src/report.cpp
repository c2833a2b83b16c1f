#include "rfl/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "rfl/errors.hpp"
#include "rfl/format.hpp"

namespace rfl {

namespace {

using nlohmann::json;

constexpr std::size_t kPrintNodeLimit = 400;

std::string expr_text(const Expr& e) {
  const std::size_t nodes = node_count(e);
  if (nodes > kPrintNodeLimit) return "<expression with " + std::to_string(nodes) + " nodes>";
  return to_string(e);
}

std::string vec_text(const Eigen::VectorXd& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s + "]";
}

template <typename T>
std::string list_text(const std::vector<T>& v, int offset = 0) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i] + offset);
  return s + "]";
}

void matrix_text(std::ostringstream& os, const char* name, const Eigen::MatrixXd& M) {
  os << name << " (" << M.rows() << "x" << M.cols() << ")\n";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    os << "  ";
    for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? " " : "") << format_double(M(i, j));
    os << "\n";
  }
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Eigen::MatrixXd& M) {
  json a = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) a.push_back(vec_json(M.row(i).transpose()));
  return a;
}

Eigen::VectorXd vec_of(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd mat_of(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(i)].size()) != cols) throw ModelError("ragged matrix in artifact");
    for (Eigen::Index c = 0; c < cols; ++c) M(i, c) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
  }
  return M;
}

const char* norm_name(GradientNorm n) { return n == GradientNorm::Inf ? "inf" : "2"; }

json header(const char* format, const ModelFile& mf) {
  return json{{"format", format},
              {"version", kArtifactVersion},
              {"model", fingerprint_hex(mf.fingerprint())},
              {"seed", mf.solver.seed}};
}

json parse_artifact(const std::string& text, const char* format, const ModelFile& mf) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string(format) + " artifact is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != format) throw ModelError(std::string("not a ") + format + " artifact");
  if (j.value("version", -1) != kArtifactVersion) throw ModelError(std::string(format) + " artifact has an unsupported version");
  if (j.value("model", "") != fingerprint_hex(mf.fingerprint()) || j.value("seed", std::uint64_t{0}) != mf.solver.seed) {
    throw ModelError(std::string(format) + " artifact was produced from a different model file or seed; rerun the stage");
  }
  return j;
}

}  // namespace

std::string fingerprint_hex(std::uint64_t f) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f));
  return buf;
}

std::string linearize_report(const ModelFile& mf, const Linearization& lin) {
  const UncertainSystem& sys = mf.system;
  const Diffeomorphism& d = lin.diffeo;
  std::ostringstream os;
  os << "# rfl-linearize " << kArtifactVersion << "\n";
  os << "model " << fingerprint_hex(mf.fingerprint()) << "\n";
  os << "n = " << d.n() << ", m = " << d.m() << ", nbar = " << d.nbar() << "\n";
  os << "relative degree r = " << list_text(lin.chain.r) << " (sum " << lin.chain.total_degree() << ")\n";
  os << "trim residual = " << format_double(sys.trim_residual()) << "\n";
  os << "decoupling condition number = " << format_double(lin.gstar.condition) << "\n";
  matrix_text(os, "g*(x0)", lin.gstar.at_trim);
  os << "control law: u = g*(x)^-1 (v - f*(x)), nominal parameters\n";
  const auto fstar = lin.chain.fstar();
  for (std::size_t i = 0; i < lin.chain.m(); ++i) {
    os << "output " << sys.output_names[i] << ": y = " << expr_text(sys.outputs[i]) << "\n";
    for (std::size_t j = 1; j < lin.chain.chains[i].size(); ++j) {
      os << "  L^" << j << " = " << expr_text(lin.chain.chains[i][j]) << "\n";
    }
    for (std::size_t k = 0; k < lin.chain.m(); ++k) {
      os << "  g*[" << i + 1 << "," << k + 1 << "] = " << expr_text(lin.chain.decoupling[i][k]) << "\n";
    }
    os << "  f*[" << i + 1 << "] = " << expr_text(fstar[i]) << "\n";
  }
  os << "chi layout:";
  for (std::size_t i = 0; i < d.m(); ++i) {
    os << " [int e" << i + 1;
    for (int j = 0; j < d.r()[i]; ++j) os << ", e" << i + 1 << (j ? "^(" + std::to_string(j) + ")" : "");
    os << "]";
  }
  os << "\n";
  std::vector<std::size_t> rows, input_rows;
  for (std::size_t k = 0; k < d.nbar(); ++k) {
    if (lin.channels->active(k)) rows.push_back(k);
    if (lin.channels->input_dependent(k)) input_rows.push_back(k);
  }
  os << "uncertainty channels (1-based) = " << list_text(rows, 1) << "\n";
  os << "input-dependent channels (1-based) = " << list_text(input_rows, 1) << "\n";
  os << "controllability rank = " << lin.controllability_rank << " of " << d.nbar() << "\n";
  return os.str();
}

std::string bounds_text(const ModelFile& mf, const StructuredBounds& b) {
  std::ostringstream os;
  os << "# rfl-bounds " << kArtifactVersion << "\n";
  os << "model " << fingerprint_hex(mf.fingerprint()) << "\n";
  os << "seed " << mf.solver.seed << "\n";
  os << "safety " << format_double(b.safety) << ", gradient norm " << norm_name(b.norm) << "\n";
  os << "rho = " << vec_text(b.rho) << "\n";
  for (const auto& c : b.channels) {
    os << "channel " << c.channel + 1 << ": rho = " << format_double(c.rho) << ", raw max = " << format_double(c.raw_max)
       << ", samples = " << c.samples << ", skipped = " << c.skipped
       << (c.input_dependent ? ", input dependent" : "") << "\n";
    os << "  argmax chi = " << vec_text(c.arg_chi) << "\n";
    os << "  argmax v = " << vec_text(c.arg_v) << "\n";
    os << "  argmax p = " << vec_text(c.arg_p) << "\n";
  }
  return os.str();
}

std::string bounds_json(const ModelFile& mf, const StructuredBounds& b) {
  json j = header("rfl-bounds", mf);
  j["safety"] = b.safety;
  j["norm"] = norm_name(b.norm);
  j["rho"] = vec_json(b.rho);
  json ch = json::array();
  for (const auto& c : b.channels) {
    ch.push_back(json{{"channel", c.channel + 1},
                      {"rho", c.rho},
                      {"raw_max", c.raw_max},
                      {"samples", c.samples},
                      {"skipped", c.skipped},
                      {"input_dependent", c.input_dependent},
                      {"arg_chi", vec_json(c.arg_chi)},
                      {"arg_v", vec_json(c.arg_v)},
                      {"arg_p", vec_json(c.arg_p)}});
  }
  j["channels"] = ch;
  return j.dump(2) + "\n";
}

StructuredBounds load_bounds_json(const std::string& text, const ModelFile& mf) {
  const json j = parse_artifact(text, "rfl-bounds", mf);
  StructuredBounds b;
  try {
    b.safety = j.at("safety").get<double>();
    b.norm = j.at("norm").get<std::string>() == "inf" ? GradientNorm::Inf : GradientNorm::Two;
    b.rho = vec_of(j.at("rho"));
    for (const auto& c : j.at("channels")) {
      ChannelBound cb;
      cb.channel = c.at("channel").get<std::size_t>() - 1;
      cb.rho = c.at("rho").get<double>();
      cb.raw_max = c.at("raw_max").get<double>();
      cb.samples = c.at("samples").get<std::size_t>();
      cb.skipped = c.at("skipped").get<std::size_t>();
      cb.input_dependent = c.at("input_dependent").get<bool>();
      cb.arg_chi = vec_of(c.at("arg_chi"));
      cb.arg_v = vec_of(c.at("arg_v"));
      cb.arg_p = vec_of(c.at("arg_p"));
      b.channels.push_back(std::move(cb));
    }
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed rfl-bounds artifact: ") + e.what());
  }
  return b;
}

std::string design_text(const ModelFile& mf, const LinearizedUncertainModel& model, const MinimaxDesign& d) {
  std::ostringstream os;
  os << "# rfl-design " << kArtifactVersion << "\n";
  os << "model " << fingerprint_hex(mf.fingerprint()) << "\n";
  os << "seed " << mf.solver.seed << "\n";
  if (d.standard_lqr) os << "no active uncertainty channel: design reduces to standard LQR\n";
  std::vector<std::size_t> ch = d.channels;
  os << "active channels (1-based) = " << list_text(ch, 1) << "\n";
  os << "rho = " << vec_text(model.rho) << "\n";
  os << "tau = " << vec_text(d.tau) << "\n";
  os << "cost bound = " << format_double(d.bound) << "\n";
  os << "riccati residual = " << format_double(d.residual) << "\n";
  matrix_text(os, "Q", d.Q);
  matrix_text(os, "R", d.R);
  matrix_text(os, "gain", d.gain);
  matrix_text(os, "X", d.X);
  os << "closed-loop eigenvalues\n";
  for (Eigen::Index i = 0; i < d.closed_loop_eigenvalues.size(); ++i) {
    const auto& e = d.closed_loop_eigenvalues[i];
    os << "  " << format_double(e.real()) << (e.imag() < 0 ? " - " : " + ") << format_double(std::abs(e.imag())) << "i\n";
  }
  return os.str();
}

std::string design_json(const ModelFile& mf, const LinearizedUncertainModel& model, const MinimaxDesign& d) {
  json j = header("rfl-design", mf);
  json ch = json::array();
  for (std::size_t c : d.channels) ch.push_back(c + 1);
  j["channels"] = ch;
  j["standard_lqr"] = d.standard_lqr;
  j["rho"] = vec_json(model.rho);
  j["tau"] = vec_json(d.tau);
  j["bound"] = d.bound;
  j["residual"] = d.residual;
  j["Q"] = mat_json(d.Q);
  j["R"] = mat_json(d.R);
  json D = json::array();
  for (const auto& m : d.D) D.push_back(mat_json(m));
  j["D"] = D;
  j["gain"] = mat_json(d.gain);
  j["X"] = mat_json(d.X);
  json eig = json::array();
  for (Eigen::Index i = 0; i < d.closed_loop_eigenvalues.size(); ++i) {
    eig.push_back(json::array({d.closed_loop_eigenvalues[i].real(), d.closed_loop_eigenvalues[i].imag()}));
  }
  j["eigenvalues"] = eig;
  return j.dump(2) + "\n";
}

StoredDesign load_design_json(const std::string& text, const ModelFile& mf) {
  const json j = parse_artifact(text, "rfl-design", mf);
  StoredDesign s;
  MinimaxDesign& d = s.design;
  try {
    for (const auto& c : j.at("channels")) d.channels.push_back(c.get<std::size_t>() - 1);
    d.standard_lqr = j.at("standard_lqr").get<bool>();
    s.rho = vec_of(j.at("rho"));
    d.tau = vec_of(j.at("tau"));
    d.bound = j.at("bound").get<double>();
    d.residual = j.at("residual").get<double>();
    d.Q = mat_of(j.at("Q"));
    d.R = mat_of(j.at("R"));
    for (const auto& m : j.at("D")) d.D.push_back(mat_of(m));
    d.gain = mat_of(j.at("gain"));
    d.X = mat_of(j.at("X"));
    const auto& eig = j.at("eigenvalues");
    d.closed_loop_eigenvalues.resize(static_cast<Eigen::Index>(eig.size()));
    for (std::size_t i = 0; i < eig.size(); ++i) {
      d.closed_loop_eigenvalues[static_cast<Eigen::Index>(i)] = {eig[i].at(0).get<double>(), eig[i].at(1).get<double>()};
    }
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed rfl-design artifact: ") + e.what());
  }
  return s;
}

CaseSummary summarize_case(const CaseResult& c, double parameter_scale, const LinearizedUncertainModel& model,
                           const MinimaxDesign& design, const OperatingBox& box, const Linearization& lin,
                           GradientNorm norm) {
  CaseSummary s;
  const Trajectory& tr = c.trajectory;
  s.name = c.scenario.name;
  s.parameter_scale = parameter_scale;
  s.truncated = tr.truncated;
  s.diagnostic = tr.diagnostic;
  if (tr.size() == 0) return s;
  const Eigen::VectorXd e = (tr.y.back() - tr.yc.back()).cwiseAbs();
  s.terminal_error.assign(e.data(), e.data() + e.size());
  s.realized_cost = tr.cost.back();
  s.cost_bound = cost_bound(design.X, design.tau, design.D, tr.chi.front());
  const ChannelModel& cm = *lin.channels;
  Eigen::VectorXd y_trim = cm.y_commanded();
  s.iqc = iqc_monitor(tr, model, design, box, lin.diffeo, cm.xi_trim(), y_trim, norm);
  return s;
}

std::string sim_summary(const ModelFile& mf, const std::vector<CaseSummary>& cases) {
  std::ostringstream os;
  os << "# rfl-sim " << kArtifactVersion << "\n";
  os << "model " << fingerprint_hex(mf.fingerprint()) << "\n";
  os << "horizon " << format_double(mf.solver.horizon) << ", step " << format_double(mf.solver.step) << "\n";
  os << "case | p scale | terminal |y - yc|";
  os << " | realized cost | cost bound | IQC | box exit | coverage violations\n";
  for (const auto& c : cases) {
    os << c.name << " | " << format_double(c.parameter_scale) << " | [";
    for (std::size_t i = 0; i < c.terminal_error.size(); ++i) os << (i ? ", " : "") << format_double(c.terminal_error[i]);
    os << "] | " << format_double(c.realized_cost) << " | " << format_double(c.cost_bound) << " | "
       << (c.iqc.holds ? "holds" : "violated") << " | "
       << (c.iqc.box_exit_time ? "bound region exited at t=" + format_double(*c.iqc.box_exit_time) : std::string("none"))
       << " | " << c.iqc.coverage_violations << "/" << c.iqc.coverage_checked << "\n";
    if (c.truncated) os << "  truncated: " << c.diagnostic << "\n";
  }
  return os.str();
}

}  // namespace rfl
