// Command-line driver: each subcommand runs one pipeline stage and leaves
// its artifact in the output directory for the next stage.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rfl/errors.hpp"
#include "rfl/format.hpp"
#include "rfl/model_file.hpp"
#include "rfl/pipeline.hpp"
#include "rfl/report.hpp"
#include "rfl/svg.hpp"

namespace fs = std::filesystem;
using namespace rfl;

namespace {

struct Globals {
  std::string model;
  std::string out = "rfl_out";
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write '" + p.string() + "'");
  f << text;
}

ModelFile load(const Globals& g) {
  if (g.model.empty()) throw ModelError("no model file given (use --model)");
  ModelFile mf = load_model_file(g.model);
  if (g.seed) mf.solver.seed = *g.seed;
  for (const auto& w : mf.warnings) std::cerr << "warning: " << w << "\n";
  return mf;
}

fs::path out_dir(const Globals& g) {
  fs::create_directories(g.out);
  return g.out;
}

std::string prior(const Globals& g, const char* file, const char* stage) {
  const fs::path p = fs::path(g.out) / file;
  if (!fs::exists(p)) throw Error(std::string("missing ") + p.string() + "; run '" + stage + "' first");
  return read_file(p);
}

std::vector<double> number_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error("expected a comma-separated list of numbers, found '" + s + "'");
    }
  }
  return out;
}

int cmd_check(const Globals& g) {
  const ModelFile mf = load(g);
  const UncertainSystem& sys = mf.system;
  std::cout << "model " << mf.source_name << ": n = " << sys.n() << ", m = " << sys.m() << ", parameters = "
            << sys.parameters.size() << " (" << sys.uncertain_parameter_indices().size() << " uncertain)\n";
  std::cout << "trim residual = " << format_double(sys.trim_residual()) << " (tolerance "
            << format_double(sys.trim_tolerance()) << ")\n";
  if (sys.trim_residual() > sys.trim_tolerance()) throw ModelError("trim point is not an equilibrium");
  // Full relative degree is required, so the box has n + m chi entries.
  mf.box(sys.n() + sys.m(), sys.m());
  mf.q_matrix(sys.n() + sys.m());
  mf.r_matrix(sys.m());
  std::cout << "check passed\n";
  return 0;
}

int cmd_linearize(const Globals& g) {
  const ModelFile mf = load(g);
  const auto lin = linearize_model(mf);
  const std::string report = linearize_report(mf, *lin);
  write_file(out_dir(g) / "linearize.txt", report);
  std::cout << (g.verbose ? report : "");
  std::cout << "r = [";
  for (std::size_t i = 0; i < lin->chain.r.size(); ++i) std::cout << (i ? ", " : "") << lin->chain.r[i];
  std::cout << "], n = " << lin->diffeo.n() << ", nbar = " << lin->diffeo.nbar() << "\n";
  std::cout << "uncertainty channels:";
  for (std::size_t k = 0; k < lin->diffeo.nbar(); ++k) {
    if (lin->channels->active(k)) std::cout << " " << k + 1 << (lin->channels->input_dependent(k) ? "(u)" : "");
  }
  std::cout << "\nwrote " << (fs::path(g.out) / "linearize.txt").string() << "\n";
  return 0;
}

int cmd_bound(const Globals& g) {
  const ModelFile mf = load(g);
  const auto lin = linearize_model(mf);
  const StructuredBounds b = bound_model(mf, *lin);
  const fs::path dir = out_dir(g);
  write_file(dir / "bounds.txt", bounds_text(mf, b));
  write_file(dir / "bounds.json", bounds_json(mf, b));
  for (const auto& c : b.channels) {
    std::cout << "channel " << c.channel + 1 << ": rho = " << format_double(c.rho) << " (raw " << format_double(c.raw_max)
              << ", " << c.samples << " samples)\n";
  }
  if (b.channels.empty()) std::cout << "no uncertainty channels: rho = 0\n";
  std::cout << "wrote " << (dir / "bounds.txt").string() << " and bounds.json\n";
  return 0;
}

int cmd_synth(const Globals& g, const std::string& tau_fixed) {
  const ModelFile mf = load(g);
  const auto lin = linearize_model(mf);
  const StructuredBounds b = load_bounds_json(prior(g, "bounds.json", "bound"), mf);
  const LinearizedUncertainModel model = structured_model(mf, *lin, b.rho);
  std::optional<Eigen::VectorXd> fixed;
  if (!tau_fixed.empty()) {
    const auto t = number_list(tau_fixed);
    fixed = Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
  }
  const MinimaxDesign d = synthesize_model(mf, model, fixed);
  const fs::path dir = out_dir(g);
  write_file(dir / "design.txt", design_text(mf, model, d));
  write_file(dir / "design.json", design_json(mf, model, d));
  if (d.standard_lqr) std::cout << "rho = 0 on every channel: design reduces to standard LQR\n";
  std::cout << "tau = [";
  for (Eigen::Index i = 0; i < d.tau.size(); ++i) std::cout << (i ? ", " : "") << format_double(d.tau[i]);
  std::cout << "]\ncost bound = " << format_double(d.bound) << ", residual = " << format_double(d.residual) << "\n";
  std::cout << "closed-loop spectral abscissa = " << format_double(d.closed_loop_eigenvalues.real().maxCoeff()) << "\n";
  std::cout << "wrote " << (dir / "design.txt").string() << " and design.json\n";
  return 0;
}

int cmd_sim(const Globals& g, const std::string& cases_arg) {
  const ModelFile mf = load(g);
  const auto lin = linearize_model(mf);
  const StoredDesign stored = load_design_json(prior(g, "design.json", "synth"), mf);
  const LinearizedUncertainModel model = structured_model(mf, *lin, stored.rho);
  std::vector<int> cases;
  for (double c : number_list(cases_arg)) {
    if (c != 1.0 && c != 2.0 && c != 3.0) throw Error("cases are 1, 2 and 3");
    cases.push_back(static_cast<int>(c));
  }
  const ClosedLoop loop = closed_loop(mf, *lin, stored.design);
  const auto results = run_cases(loop, base_scenario(mf), cases);
  const OperatingBox box = mf.box(lin->diffeo.nbar(), lin->diffeo.m());
  const fs::path dir = out_dir(g);
  std::vector<CaseSummary> summaries;
  bool truncated = false;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const int c = cases[i];
    std::ofstream f(dir / ("case" + std::to_string(c) + ".csv"), std::ios::binary);
    write_csv(f, results[i].trajectory);
    const double scale = c == 1 ? 1.0 : (c == 2 ? 0.8 : 1.2);
    summaries.push_back(summarize_case(results[i], scale, model, stored.design, box, *lin, mf.solver.norm));
    truncated = truncated || results[i].trajectory.truncated;
    if (g.verbose) {
      for (const auto& w : results[i].trajectory.warnings) std::cerr << "warning: " << w << "\n";
    }
  }
  const std::string summary = sim_summary(mf, summaries);
  write_file(dir / "sim_summary.txt", summary);
  std::cout << summary;
  if (truncated) throw SimError("at least one trajectory was truncated");
  return 0;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return columns[i];
    }
    throw Error("trajectory CSV has no column '" + name + "'; was it written for this model?");
  }
};

Csv read_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw Error("empty CSV file '" + p.string() + "'");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) csv.header.push_back(cell);
  csv.columns.resize(csv.header.size());
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::size_t i = 0;
    for (std::string cell; std::getline(ls, cell, ',') && i < csv.columns.size(); ++i) csv.columns[i].push_back(std::stod(cell));
  }
  return csv;
}

int cmd_plot(const Globals& g) {
  const ModelFile mf = load(g);
  const UncertainSystem& sys = mf.system;
  const fs::path dir = out_dir(g);
  int written = 0;
  for (int c = 1; c <= 3; ++c) {
    const fs::path p = dir / ("case" + std::to_string(c) + ".csv");
    if (!fs::exists(p)) continue;
    const Csv csv = read_csv(p);
    const auto& t = csv.column("t");
    const std::string tag = "case " + std::to_string(c);
    std::vector<PlotPanel> outputs, inputs, states;
    for (std::size_t i = 0; i < sys.m(); ++i) {
      const auto idx = std::to_string(i + 1);
      outputs.push_back({sys.output_names[i], {{sys.output_names[i], csv.column("y" + idx), false},
                                               {"command", csv.column("yc" + idx), true}}});
      inputs.push_back({sys.input_names[i], {{sys.input_names[i], csv.column("u" + idx), false}}});
    }
    for (std::size_t i = 0; i < sys.n(); ++i) {
      states.push_back({sys.state_names[i], {{sys.state_names[i], csv.column("x" + std::to_string(i + 1)), false}}});
    }
    const std::string stem = "case" + std::to_string(c);
    write_file(dir / (stem + "_outputs.svg"), svg_figure(tag + ": outputs and commands", t, outputs));
    write_file(dir / (stem + "_inputs.svg"), svg_figure(tag + ": control inputs", t, inputs));
    write_file(dir / (stem + "_states.svg"), svg_figure(tag + ": states", t, states));
    written += 3;
  }
  if (written == 0) throw Error("no case CSV files in " + dir.string() + "; run 'sim' first");
  std::cout << "wrote " << written << " SVG files to " << dir.string() << "\n";
  return 0;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ModelError*>(&e)) return 2;
  if (dynamic_cast<const DegreeError*>(&e)) return 3;
  if (dynamic_cast<const BoundError*>(&e)) return 4;
  if (dynamic_cast<const RiccatiError*>(&e)) return 5;
  if (dynamic_cast<const SimError*>(&e)) return 6;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust feedback linearization with minimax LQR synthesis"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--model", g.model, "Model file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Artifact directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Override the model file's solver seed");
  app.add_flag("--verbose,-v", g.verbose, "Print full reports");

  std::string tau_fixed;
  std::string cases = "1,2,3";
  auto* check = app.add_subcommand("check", "Validate a model file");
  auto* linearize = app.add_subcommand("linearize", "Relative degrees, control law and uncertainty channels");
  auto* bound = app.add_subcommand("bound", "Gradient bounds rho for each uncertainty channel");
  auto* synth = app.add_subcommand("synth", "Minimax LQR design from stored bounds");
  synth->add_option("--tau-fixed", tau_fixed, "Comma-separated multipliers; skips the tau search");
  auto* sim = app.add_subcommand("sim", "Closed-loop simulation from the stored design");
  sim->add_option("--cases", cases, "Comma-separated subset of cases 1,2,3")->capture_default_str();
  auto* plot = app.add_subcommand("plot", "SVG figures from stored trajectories");

  CLI11_PARSE(app, argc, argv);
  try {
    if (check->parsed()) return cmd_check(g);
    if (linearize->parsed()) return cmd_linearize(g);
    if (bound->parsed()) return cmd_bound(g);
    if (synth->parsed()) return cmd_synth(g, tau_fixed);
    if (sim->parsed()) return cmd_sim(g, cases);
    if (plot->parsed()) return cmd_plot(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 1;
}
