#include "rfl/model_file.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "rfl/errors.hpp"

namespace rfl {

namespace {

struct Line {
  int number = 0;
  std::string text;   // comment stripped
  int value_col = 1;  // 1-based column where the value starts
  std::string key;
  std::string value;
};

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

std::string trim(std::string_view s, int* leading = nullptr) {
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  std::size_t e = s.size();
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  if (leading) *leading = static_cast<int>(b);
  return std::string(s.substr(b, e - b));
}

// Whitespace-separated tokens with their 1-based columns.
std::vector<std::pair<std::string, int>> tokens(const std::string& s, int first_col) {
  std::vector<std::pair<std::string, int>> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    out.emplace_back(s.substr(b, i - b), first_col + static_cast<int>(b));
  }
  return out;
}

double to_number(const std::string& s, int line, int col) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s[0] == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty()) throw ParseError("expected a number, found '" + s + "'", line, col);
  return v;
}

std::uint64_t to_unsigned(const std::string& s, int line, int col) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("expected a non-negative integer, found '" + s + "'", line, col);
  }
  return v;
}

const std::set<std::string> kSections = {"states",  "inputs", "parameters", "definitions", "dynamics",
                                         "outputs", "box",    "weights",    "references",  "solver"};

}  // namespace

Eigen::MatrixXd WeightSpec::matrix(std::size_t dim, const char* name) const {
  const auto d = static_cast<Eigen::Index>(dim);
  if (!given) return Eigen::MatrixXd::Identity(d, d);
  if (full) {
    if (values.size() != dim * dim) {
      throw ModelError(std::string(name) + " needs " + std::to_string(dim * dim) + " entries for a full " +
                       std::to_string(dim) + "x" + std::to_string(dim) + " matrix, got " + std::to_string(values.size()));
    }
    Eigen::MatrixXd M(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) M(i, j) = values[static_cast<std::size_t>(i * d + j)];
    }
    return M;
  }
  if (values.size() == 1) return values[0] * Eigen::MatrixXd::Identity(d, d);
  if (values.size() != dim) {
    throw ModelError(std::string(name) + " needs " + std::to_string(dim) + " diagonal entries, got " +
                     std::to_string(values.size()));
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), d).asDiagonal();
}

OperatingBox ModelFile::box(std::size_t nbar, std::size_t m) const {
  OperatingBox b;
  b.chi_lower.resize(static_cast<Eigen::Index>(nbar));
  b.chi_upper.resize(static_cast<Eigen::Index>(nbar));
  b.v_lower.resize(static_cast<Eigen::Index>(m));
  b.v_upper.resize(static_cast<Eigen::Index>(m));
  auto fill = [](const std::map<std::size_t, std::pair<double, double>>& ranges,
                 const std::optional<std::pair<double, double>>& fallback, std::size_t count, Eigen::VectorXd& lo,
                 Eigen::VectorXd& hi, const char* prefix) {
    for (const auto& [idx, range] : ranges) {
      if (idx >= count) {
        throw ModelError(std::string("box entry ") + prefix + std::to_string(idx + 1) + " exceeds the dimension " +
                         std::to_string(count));
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      auto it = ranges.find(i);
      if (it == ranges.end() && !fallback) {
        throw ModelError(std::string("box has no range for ") + prefix + std::to_string(i + 1));
      }
      const auto r = it != ranges.end() ? it->second : *fallback;
      lo[static_cast<Eigen::Index>(i)] = r.first;
      hi[static_cast<Eigen::Index>(i)] = r.second;
    }
  };
  fill(chi_box, chi_default, nbar, b.chi_lower, b.chi_upper, "chi");
  fill(v_box, v_default, m, b.v_lower, b.v_upper, "v");
  b.validate();
  return b;
}

Eigen::MatrixXd ModelFile::q_matrix(std::size_t nbar) const { return Q.matrix(nbar, "Q"); }
Eigen::MatrixXd ModelFile::r_matrix(std::size_t m) const { return R.matrix(m, "R"); }

std::uint64_t ModelFile::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ModelFile parse_model_file(const std::string& text, const std::string& source_name) {
  ModelFile mf;
  mf.source_name = source_name;
  mf.text = text;

  std::map<std::string, std::vector<Line>> sections;
  std::map<std::string, int> section_line;
  std::string current;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const auto hash = raw.find('#');
    const std::string body = hash == std::string::npos ? raw : raw.substr(0, hash);
    int lead = 0;
    const std::string t = trim(body, &lead);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError("unterminated section header", number, lead + 1);
      current = trim(t.substr(1, t.size() - 2));
      if (!kSections.contains(current)) throw ParseError("unknown section '" + current + "'", number, lead + 2);
      if (section_line.contains(current)) throw ParseError("section '" + current + "' appears twice", number, lead + 1);
      section_line[current] = number;
      sections[current];
      continue;
    }
    if (current.empty()) throw ParseError("entry outside of any section", number, lead + 1);
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'name = value'", number, lead + 1);
    Line l;
    l.number = number;
    l.text = body;
    l.key = trim(body.substr(0, eq));
    int vlead = 0;
    l.value = trim(body.substr(eq + 1), &vlead);
    l.value_col = static_cast<int>(eq) + 2 + vlead;
    if (l.key.empty()) throw ParseError("missing name before '='", number, lead + 1);
    if (l.value.empty()) throw ParseError("missing value after '='", number, static_cast<int>(eq) + 2);
    sections[current].push_back(std::move(l));
  }
  for (const char* required : {"states", "inputs", "dynamics", "outputs"}) {
    if (!sections.contains(required)) throw ModelError(std::string("model file has no [") + required + "] section");
  }

  Scope scope;
  std::set<std::string> names;
  auto declare = [&](const Line& l) {
    const int col = static_cast<int>(l.text.find(l.key)) + 1;
    if (!is_identifier(l.key)) throw ParseError("'" + l.key + "' is not a valid name", l.number, col);
    if (l.key == "sin" || l.key == "cos" || l.key == "tan" || l.key == "exp" || l.key == "ln" || l.key == "sqrt") {
      throw ParseError("'" + l.key + "' is a function name", l.number, col);
    }
    if (!names.insert(l.key).second) throw ParseError("'" + l.key + "' is declared twice", l.number, col);
  };
  auto single_number = [&](const Line& l) {
    const auto toks = tokens(l.value, l.value_col);
    if (toks.size() != 1) throw ParseError("expected a single number", l.number, l.value_col);
    return to_number(toks[0].first, l.number, toks[0].second);
  };

  std::vector<std::string> states, inputs, output_names;
  std::vector<double> x_trim, u_trim;
  for (const auto& l : sections["states"]) {
    declare(l);
    states.push_back(l.key);
    x_trim.push_back(single_number(l));
    scope.emplace(l.key, Expr::symbol(state(l.key)));
  }
  for (const auto& l : sections["inputs"]) {
    declare(l);
    inputs.push_back(l.key);
    u_trim.push_back(single_number(l));
    scope.emplace(l.key, Expr::symbol(input(l.key)));
  }

  std::vector<ParameterSpec> params;
  for (const auto& l : sections["parameters"]) {
    declare(l);
    const auto toks = tokens(l.value, l.value_col);
    if (toks[0].first == "?") throw ParseError("parameter value missing: " + l.key, l.number, toks[0].second);
    ParameterSpec p;
    p.name = l.key;
    p.nominal = to_number(toks[0].first, l.number, toks[0].second);
    if (toks.size() == 3 && toks[1].first == "+-") {
      std::string hw = toks[2].first;
      const bool percent = !hw.empty() && hw.back() == '%';
      if (percent) hw.pop_back();
      p.half_width = to_number(hw, l.number, toks[2].second);
      if (percent) p.half_width = std::abs(p.nominal) * p.half_width / 100.0;
      if (p.half_width < 0.0) throw ParseError("half-width must be non-negative", l.number, toks[2].second);
    } else if (toks.size() != 1) {
      throw ParseError("expected 'nominal' or 'nominal +- half_width'", l.number, l.value_col);
    }
    params.push_back(p);
    scope.emplace(l.key, Expr::symbol(parameter(l.key)));
  }

  for (const auto& l : sections["definitions"]) {
    declare(l);
    scope.emplace(l.key, parse(l.value, scope, l.number, l.value_col));
  }

  std::vector<std::optional<Expr>> rhs(states.size());
  for (const auto& l : sections["dynamics"]) {
    const int col = static_cast<int>(l.text.find(l.key)) + 1;
    if (l.key.size() < 2 || l.key.back() != '\'') throw ParseError("dynamics entries read \"state' = expression\"", l.number, col);
    const std::string name = trim(l.key.substr(0, l.key.size() - 1));
    const auto it = std::find(states.begin(), states.end(), name);
    if (it == states.end()) throw ParseError("'" + name + "' is not a declared state", l.number, col);
    auto& slot = rhs[static_cast<std::size_t>(it - states.begin())];
    if (slot) throw ParseError("dynamics of '" + name + "' given twice", l.number, col);
    slot = parse(l.value, scope, l.number, l.value_col);
  }
  std::vector<Expr> fields;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!rhs[i]) throw ModelError("no dynamics given for state '" + states[i] + "'");
    fields.push_back(*rhs[i]);
  }

  std::vector<Expr> outputs;
  for (const auto& l : sections["outputs"]) {
    declare(l);
    output_names.push_back(l.key);
    outputs.push_back(parse(l.value, scope, l.number, l.value_col));
  }

  if (outputs.size() != inputs.size()) {
    throw ModelError("system not square: " + std::to_string(outputs.size()) + " outputs, " +
                     std::to_string(inputs.size()) + " inputs");
  }
  mf.system = UncertainSystem::from_rhs(
      states, inputs, params, fields, output_names, outputs,
      Eigen::Map<const Eigen::VectorXd>(x_trim.data(), static_cast<Eigen::Index>(x_trim.size())),
      Eigen::Map<const Eigen::VectorXd>(u_trim.data(), static_cast<Eigen::Index>(u_trim.size())));

  for (const auto& l : sections["box"]) {
    const auto toks = tokens(l.value, l.value_col);
    if (toks.size() != 2) throw ParseError("box entries read 'name = lower upper'", l.number, l.value_col);
    const double lo = to_number(toks[0].first, l.number, toks[0].second);
    const double hi = to_number(toks[1].first, l.number, toks[1].second);
    const int col = static_cast<int>(l.text.find(l.key)) + 1;
    if (!(lo <= hi)) throw ParseError("lower bound exceeds upper bound", l.number, l.value_col);
    auto indexed = [&](const std::string& prefix, std::map<std::size_t, std::pair<double, double>>& ranges,
                       std::optional<std::pair<double, double>>& fallback) {
      if (l.key == prefix) {
        fallback = std::make_pair(lo, hi);
        return true;
      }
      if (l.key.rfind(prefix, 0) != 0) return false;
      const std::string digits = l.key.substr(prefix.size());
      if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        return false;
      }
      const auto idx = to_unsigned(digits, l.number, col);
      if (idx == 0) throw ParseError("box indices start at 1", l.number, col);
      ranges[static_cast<std::size_t>(idx - 1)] = {lo, hi};
      return true;
    };
    if (!indexed("chi", mf.chi_box, mf.chi_default) && !indexed("v", mf.v_box, mf.v_default)) {
      throw ParseError("box entries are named chi, chi<k>, v or v<k>", l.number, col);
    }
  }

  for (const auto& l : sections["weights"]) {
    const int col = static_cast<int>(l.text.find(l.key)) + 1;
    WeightSpec* w = l.key == "Q" ? &mf.Q : (l.key == "R" ? &mf.R : nullptr);
    if (!w) throw ParseError("weights are Q and R", l.number, col);
    auto toks = tokens(l.value, l.value_col);
    w->given = true;
    std::size_t first = 0;
    if (toks[0].first == "diag" || toks[0].first == "full") {
      w->full = toks[0].first == "full";
      first = 1;
    }
    for (std::size_t i = first; i < toks.size(); ++i) w->values.push_back(to_number(toks[i].first, l.number, toks[i].second));
    if (w->values.empty()) throw ParseError("weight matrix has no entries", l.number, l.value_col);
  }

  {
    Binding b;
    for (std::size_t i = 0; i < states.size(); ++i) b[state(states[i])] = x_trim[i];
    mf.references.resize(output_names.size());
    for (std::size_t i = 0; i < output_names.size(); ++i) mf.references[i].initial = eval(outputs[i], b);
  }
  for (const auto& l : sections["references"]) {
    const int col = static_cast<int>(l.text.find(l.key)) + 1;
    const auto it = std::find(output_names.begin(), output_names.end(), l.key);
    if (it == output_names.end()) throw ParseError("'" + l.key + "' is not a declared output", l.number, col);
    auto& sched = mf.references[static_cast<std::size_t>(it - output_names.begin())];
    for (const auto& [tok, tcol] : tokens(l.value, l.value_col)) {
      const auto at = tok.find('@');
      if (at == std::string::npos) {
        sched.steps.push_back({0.0, to_number(tok, l.number, tcol)});
      } else {
        sched.steps.push_back({to_number(tok.substr(at + 1), l.number, tcol + static_cast<int>(at) + 1),
                               to_number(tok.substr(0, at), l.number, tcol)});
      }
    }
    std::stable_sort(sched.steps.begin(), sched.steps.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  }

  SolverSettings& s = mf.solver;
  for (const auto& l : sections["solver"]) {
    const auto toks = tokens(l.value, l.value_col);
    const int col = static_cast<int>(l.text.find(l.key)) + 1;
    auto num = [&] { return single_number(l); };
    auto count = [&] {
      if (toks.size() != 1) throw ParseError("expected a single integer", l.number, l.value_col);
      return to_unsigned(toks[0].first, l.number, toks[0].second);
    };
    auto list = [&] {
      std::vector<double> v;
      for (const auto& [tok, tcol] : toks) v.push_back(to_number(tok, l.number, tcol));
      return v;
    };
    if (l.key == "seed") s.seed = count();
    else if (l.key == "grid_points") s.grid_points = static_cast<int>(count());
    else if (l.key == "grid_cap") s.grid_cap = count();
    else if (l.key == "lhs_samples") s.lhs_samples = count();
    else if (l.key == "corner_dim_limit") s.corner_dim_limit = static_cast<int>(count());
    else if (l.key == "polish_starts") s.polish_starts = static_cast<int>(count());
    else if (l.key == "safety") s.safety = num();
    else if (l.key == "degree_tol") s.degree_tol = num();
    else if (l.key == "h" || l.key == "step") s.step = num();
    else if (l.key == "horizon") s.horizon = num();
    else if (l.key == "d_scale") s.d_scale = num();
    else if (l.key == "threads") s.threads = static_cast<unsigned>(std::max<std::uint64_t>(1, count()));
    else if (l.key == "tau_init") s.tau_init = list();
    else if (l.key == "chi0") {
      if (l.value != "average") s.chi0 = list();
    } else if (l.key == "norm") {
      if (l.value == "inf") s.norm = GradientNorm::Inf;
      else if (l.value == "2") s.norm = GradientNorm::Two;
      else throw ParseError("norm is 'inf' or '2'", l.number, l.value_col);
    } else if (l.key == "k_convention") {
      if (l.value == "dense") s.k_convention = KConvention::Dense;
      else if (l.value == "sparse") s.k_convention = KConvention::Sparse;
      else throw ParseError("k_convention is 'dense' or 'sparse'", l.number, l.value_col);
    } else {
      throw ParseError("unknown solver setting '" + l.key + "'", l.number, col);
    }
  }
  if (!(s.step > 0.0)) throw ModelError("solver step h must be positive");
  if (!(s.safety >= 1.0)) throw ModelError("solver safety factor must be at least 1");
  if (!(s.d_scale > 0.0)) throw ModelError("solver d_scale must be positive");

  const double residual = mf.system.trim_residual();
  if (residual > mf.system.trim_tolerance()) {
    std::ostringstream os;
    os << "trim residual |f(x0,p0) + g(x0,p0) u0|_inf = " << residual << " exceeds " << mf.system.trim_tolerance();
    mf.warnings.push_back(os.str());
  }
  return mf;
}

ModelFile load_model_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelError("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_model_file(ss.str(), path);
}

}  // namespace rfl
