#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cquant/dimension.hpp"
#include "cquant/errors.hpp"
#include "cquant/geometry.hpp"
#include "cquant/io.hpp"
#include "cquant/measures.hpp"
#include "cquant/quantizer.hpp"

namespace cquant::cli {

/// Flat `[section]` + `key = value` document. `#` starts a comment. Keys are unique per section.
class KeyValueDoc {
 public:
  using Section = std::map<std::string, std::string>;

  static KeyValueDoc parse(const std::string& text, const std::string& origin = "<config>") {
    KeyValueDoc doc;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto where = origin + ":" + std::to_string(lineno) + ": ";
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + "unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(where + "empty section name");
        if (doc.sections_.count(section)) throw ConfigError(where + "duplicate section [" + section + "]");
        doc.sections_[section];
        doc.order_.push_back(section);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
      if (section.empty()) throw ConfigError(where + "key outside of any section");
      const auto key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(where + "empty key");
      auto& sec = doc.sections_[section];
      if (sec.count(key)) throw ConfigError(where + "duplicate key " + key);
      sec[key] = trim(line.substr(eq + 1));
    }
    return doc;
  }

  static KeyValueDoc load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  bool has(const std::string& section) const { return sections_.count(section) != 0; }

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
  }

  const Section& section(const std::string& name) const {
    static const Section empty;
    const auto s = sections_.find(name);
    return s == sections_.end() ? empty : s->second;
  }

  const std::vector<std::string>& order() const { return order_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, Section> sections_;
  std::vector<std::string> order_;
};

namespace detail {

inline double parse_number(const std::string& tok, const std::string& what) {
  if (tok == "inf" || tok == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(what + ": not a number: '" + tok + "'");
  }
}

/// Whitespace- or comma-separated numbers.
inline std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_number(tok, what));
  return out;
}

/// Points separated by ';', coordinates by whitespace or commas.
inline std::vector<std::vector<double>> parse_points(const std::string& text, const std::string& what) {
  std::vector<std::vector<double>> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    auto p = parse_numbers(item, what);
    if (!p.empty()) out.push_back(std::move(p));
  }
  return out;
}

inline long parse_int(const std::string& text, const std::string& what) {
  const double v = parse_number(text, what);
  if (!std::isfinite(v) || v != std::floor(v)) throw ConfigError(what + ": expected an integer");
  return static_cast<long>(v);
}

inline std::vector<std::string> parse_words(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + io::fmt12(v[i]);
  return s;
}

inline std::string join_points(const std::vector<std::vector<double>>& pts) {
  std::string s;
  for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? "; " : "") + join_numbers(pts[i]);
  return s;
}

}  // namespace detail

struct MeasureSpec {
  /// uniform_circle | cantor | dirac | polyline | file
  std::string type{};
  std::vector<double> center{};
  double radius = 1.0;
  int nodes = 4096;
  std::vector<double> a{}, b{};
  int depth = 10;
  std::vector<double> point{};
  std::vector<std::vector<double>> vertices{};
  std::string path{};
};

struct ShapeSpec {
  /// ball | sphere | segment | polyline | cantor | points | union
  std::string type{};
  std::string name{};
  std::vector<double> center{};
  double radius = 1.0;
  std::vector<double> a{}, b{};
  int depth = 0;
  std::vector<std::vector<double>> vertices{};
  std::vector<std::vector<double>> points{};
  std::vector<ShapeSpec> members{};
  double proj_tol = 0.0;
};

struct AnalysisSpec {
  std::string excess = "hat";
  double window = 0.5;
  /// Empty: diam * 2^-k for k = 3..8 of the projected atoms.
  std::vector<double> box_scales;
  /// 0: use u3_s, then the box-dimension estimate.
  double ahlfors_d = 0.0;
  std::vector<double> ahlfors_radii;
  int ahlfors_centers = 32;
  double ahlfors_bound = 1e3;
  /// Empty: diam * {0.2, 0.1, 0.05, 0.02} of the projected atoms.
  std::vector<double> eps;
  int probes = 64;
  /// 0: box-dimension estimate of pi_S(K), labelled as such.
  double u3_s = 0.0;
  double u3_stability = 10.0;
  /// 0: 1e-3 * max(diam, 1).
  double lambda = 0.0;
};

struct Scenario {
  std::string name = "custom";
  int dim = 2;
  MeasureSpec measure;
  ShapeSpec constraint;
  double r = 2.0;
  std::size_t n = 4;
  std::vector<std::size_t> n_list;
  SolverOptions solver;
  AnalysisSpec analysis;
  std::string out_dir = "out";
  std::vector<std::vector<double>> project_points;
  /// Directory relative file paths are resolved against.
  std::string base_dir = ".";
};

namespace detail {

inline std::vector<double> req_numbers(const KeyValueDoc::Section& s, const std::string& sec,
                                       const std::string& key) {
  const auto it = s.find(key);
  if (it == s.end()) throw ConfigError("[" + sec + "] missing key " + key);
  return parse_numbers(it->second, "[" + sec + "] " + key);
}

inline double req_number(const KeyValueDoc::Section& s, const std::string& sec, const std::string& key) {
  const auto v = req_numbers(s, sec, key);
  if (v.size() != 1) throw ConfigError("[" + sec + "] " + key + " expects one number");
  return v[0];
}

inline void check_keys(const KeyValueDoc::Section& s, const std::string& sec,
                       std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : s) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("[" + sec + "] unknown key " + k);
  }
}

inline ShapeSpec parse_shape(const KeyValueDoc& doc, const std::string& sec, int nesting) {
  if (!doc.has(sec)) throw ConfigError("missing section [" + sec + "]");
  if (nesting > 8) throw ConfigError("union nesting too deep at [" + sec + "]");
  const auto& s = doc.section(sec);
  check_keys(s, sec, {"type", "center", "radius", "a", "b", "depth", "vertices", "points", "members", "proj_tol"});
  ShapeSpec out;
  out.name = sec;
  const auto type = doc.get(sec, "type");
  if (!type) throw ConfigError("[" + sec + "] missing key type");
  out.type = *type;
  if (auto v = doc.get(sec, "proj_tol")) out.proj_tol = parse_number(*v, "[" + sec + "] proj_tol");
  const auto& t = out.type;
  if (t == "ball" || t == "sphere" || t == "circle") {
    out.type = t == "circle" ? "sphere" : t;
    out.center = req_numbers(s, sec, "center");
    out.radius = req_number(s, sec, "radius");
  } else if (t == "segment" || t == "cantor") {
    out.a = req_numbers(s, sec, "a");
    out.b = req_numbers(s, sec, "b");
    if (t == "cantor") {
      const auto it = s.find("depth");
      if (it == s.end()) throw ConfigError("[" + sec + "] missing key depth");
      out.depth = static_cast<int>(parse_int(it->second, "[" + sec + "] depth"));
    }
  } else if (t == "polyline") {
    const auto it = s.find("vertices");
    if (it == s.end()) throw ConfigError("[" + sec + "] missing key vertices");
    out.vertices = parse_points(it->second, "[" + sec + "] vertices");
  } else if (t == "points") {
    const auto it = s.find("points");
    if (it == s.end()) throw ConfigError("[" + sec + "] missing key points");
    out.points = parse_points(it->second, "[" + sec + "] points");
  } else if (t == "union") {
    const auto it = s.find("members");
    if (it == s.end()) throw ConfigError("[" + sec + "] missing key members");
    for (const auto& m : parse_words(it->second))
      out.members.push_back(parse_shape(doc, "constraint." + m, nesting + 1));
    if (out.members.empty()) throw ConfigError("[" + sec + "] union has no members");
  } else {
    throw ConfigError("[" + sec + "] unknown constraint type " + t);
  }
  return out;
}

inline MeasureSpec parse_measure(const KeyValueDoc& doc) {
  const std::string sec = "measure";
  if (!doc.has(sec)) throw ConfigError("missing section [measure]");
  const auto& s = doc.section(sec);
  check_keys(s, sec, {"type", "center", "radius", "nodes", "a", "b", "depth", "point", "vertices", "path"});
  MeasureSpec out;
  const auto type = doc.get(sec, "type");
  if (!type) throw ConfigError("[measure] missing key type");
  out.type = *type;
  if (auto v = doc.get(sec, "nodes")) out.nodes = static_cast<int>(parse_int(*v, "[measure] nodes"));
  if (auto v = doc.get(sec, "depth")) out.depth = static_cast<int>(parse_int(*v, "[measure] depth"));
  if (out.type == "uniform_circle") {
    out.center = req_numbers(s, sec, "center");
    out.radius = req_number(s, sec, "radius");
  } else if (out.type == "cantor") {
    out.a = req_numbers(s, sec, "a");
    out.b = req_numbers(s, sec, "b");
  } else if (out.type == "dirac") {
    out.point = req_numbers(s, sec, "point");
  } else if (out.type == "polyline") {
    const auto it = s.find("vertices");
    if (it == s.end()) throw ConfigError("[measure] missing key vertices");
    out.vertices = parse_points(it->second, "[measure] vertices");
  } else if (out.type == "file") {
    const auto it = s.find("path");
    if (it == s.end()) throw ConfigError("[measure] missing key path");
    out.path = it->second;
  } else {
    throw ConfigError("[measure] unknown measure type " + out.type);
  }
  return out;
}

inline std::vector<std::size_t> to_sizes(const std::vector<double>& v, const std::string& what) {
  std::vector<std::size_t> out;
  for (double x : v) {
    if (!(x >= 1.0) || x != std::floor(x) || !std::isfinite(x))
      throw ConfigError(what + ": expected positive integers");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

}  // namespace detail

/// Builds a scenario from a parsed document. Sections: [scenario], [measure], [constraint]
/// (+ [constraint.<member>] for unions), [solver], [analysis], [output], [project].
inline Scenario parse_scenario(const KeyValueDoc& doc, const std::string& base_dir = ".") {
  using namespace detail;
  for (const auto& sec : doc.order()) {
    const bool known = sec == "scenario" || sec == "measure" || sec == "constraint" || sec == "solver" ||
                       sec == "analysis" || sec == "output" || sec == "project" ||
                       sec.rfind("constraint.", 0) == 0;
    if (!known) throw ConfigError("unknown section [" + sec + "]");
  }
  Scenario sc;
  sc.base_dir = base_dir;
  const auto& head = doc.section("scenario");
  check_keys(head, "scenario", {"name", "dim", "seed"});
  if (auto v = doc.get("scenario", "name")) sc.name = *v;
  if (auto v = doc.get("scenario", "dim")) sc.dim = static_cast<int>(parse_int(*v, "[scenario] dim"));
  if (sc.dim < 1 || sc.dim > 3) throw ConfigError("[scenario] dim must be 1, 2 or 3");
  if (auto v = doc.get("scenario", "seed"))
    sc.solver.seed = static_cast<std::uint64_t>(parse_int(*v, "[scenario] seed"));

  sc.measure = parse_measure(doc);
  sc.constraint = parse_shape(doc, "constraint", 0);

  const auto& sol = doc.section("solver");
  check_keys(sol, "solver", {"r", "n", "n_list", "restarts", "max_iters", "tol", "inner_iters", "threads"});
  if (auto v = doc.get("solver", "r")) sc.r = parse_number(*v, "[solver] r");
  if (auto v = doc.get("solver", "n")) sc.n = to_sizes({parse_number(*v, "[solver] n")}, "[solver] n")[0];
  if (auto v = doc.get("solver", "n_list")) {
    sc.n_list = to_sizes(parse_numbers(*v, "[solver] n_list"), "[solver] n_list");
    for (std::size_t i = 1; i < sc.n_list.size(); ++i)
      if (sc.n_list[i] <= sc.n_list[i - 1]) throw ConfigError("[solver] n_list must be strictly increasing");
  }
  if (auto v = doc.get("solver", "restarts"))
    sc.solver.restarts = static_cast<int>(parse_int(*v, "[solver] restarts"));
  if (auto v = doc.get("solver", "max_iters"))
    sc.solver.max_iters = static_cast<int>(parse_int(*v, "[solver] max_iters"));
  if (auto v = doc.get("solver", "tol")) sc.solver.tol = parse_number(*v, "[solver] tol");
  if (auto v = doc.get("solver", "inner_iters"))
    sc.solver.inner_iters = static_cast<int>(parse_int(*v, "[solver] inner_iters"));
  if (auto v = doc.get("solver", "threads"))
    sc.solver.threads = static_cast<int>(parse_int(*v, "[solver] threads"));
  if (sc.solver.restarts < 1) throw ConfigError("[solver] restarts must be >= 1");
  if (!(sc.r >= 1.0)) throw ConfigError("[solver] r must be >= 1 or inf");

  const auto& an = doc.section("analysis");
  check_keys(an, "analysis",
             {"excess", "window", "box_scales", "ahlfors_d", "ahlfors_radii", "ahlfors_centers", "ahlfors_bound",
              "eps", "probes", "u3_s", "u3_stability", "lambda"});
  auto& a = sc.analysis;
  if (auto v = doc.get("analysis", "excess")) {
    a.excess = *v;
    if (a.excess != "hat" && a.excess != "tilde") throw ConfigError("[analysis] excess must be hat or tilde");
  }
  if (auto v = doc.get("analysis", "window")) a.window = parse_number(*v, "[analysis] window");
  if (auto v = doc.get("analysis", "box_scales")) a.box_scales = parse_numbers(*v, "[analysis] box_scales");
  if (auto v = doc.get("analysis", "ahlfors_d")) a.ahlfors_d = parse_number(*v, "[analysis] ahlfors_d");
  if (auto v = doc.get("analysis", "ahlfors_radii"))
    a.ahlfors_radii = parse_numbers(*v, "[analysis] ahlfors_radii");
  if (auto v = doc.get("analysis", "ahlfors_centers"))
    a.ahlfors_centers = static_cast<int>(parse_int(*v, "[analysis] ahlfors_centers"));
  if (auto v = doc.get("analysis", "ahlfors_bound")) a.ahlfors_bound = parse_number(*v, "[analysis] ahlfors_bound");
  if (auto v = doc.get("analysis", "eps")) a.eps = parse_numbers(*v, "[analysis] eps");
  if (auto v = doc.get("analysis", "probes")) a.probes = static_cast<int>(parse_int(*v, "[analysis] probes"));
  if (auto v = doc.get("analysis", "u3_s")) a.u3_s = parse_number(*v, "[analysis] u3_s");
  if (auto v = doc.get("analysis", "u3_stability")) a.u3_stability = parse_number(*v, "[analysis] u3_stability");
  if (auto v = doc.get("analysis", "lambda")) a.lambda = parse_number(*v, "[analysis] lambda");

  check_keys(doc.section("output"), "output", {"dir"});
  if (auto v = doc.get("output", "dir")) sc.out_dir = *v;
  check_keys(doc.section("project"), "project", {"points"});
  if (auto v = doc.get("project", "points")) sc.project_points = parse_points(*v, "[project] points");
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  const auto doc = KeyValueDoc::load(path);
  auto base = path.parent_path();
  return parse_scenario(doc, base.empty() ? "." : base.string());
}

namespace detail {

inline void emit_shape(std::ostringstream& os, const ShapeSpec& s, const std::string& sec) {
  os << "[" << sec << "]\n";
  os << "type = " << s.type << "\n";
  if (s.type == "ball" || s.type == "sphere") {
    os << "center = " << join_numbers(s.center) << "\nradius = " << io::fmt12(s.radius) << "\n";
  } else if (s.type == "segment" || s.type == "cantor") {
    os << "a = " << join_numbers(s.a) << "\nb = " << join_numbers(s.b) << "\n";
    if (s.type == "cantor") os << "depth = " << s.depth << "\n";
  } else if (s.type == "polyline") {
    os << "vertices = " << join_points(s.vertices) << "\n";
  } else if (s.type == "points") {
    os << "points = " << join_points(s.points) << "\n";
  } else if (s.type == "union") {
    os << "members =";
    for (const auto& m : s.members) os << " " << m.name.substr(m.name.rfind('.') + 1);
    os << "\n";
  }
  if (s.proj_tol > 0.0) os << "proj_tol = " << io::fmt12(s.proj_tol) << "\n";
  os << "\n";
  for (const auto& m : s.members) emit_shape(os, m, m.name);
}

}  // namespace detail

/// Serializes a scenario into the document format; parse_scenario inverts it.
inline std::string to_config_text(const Scenario& sc) {
  using detail::join_numbers;
  using detail::join_points;
  std::ostringstream os;
  os << "[scenario]\nname = " << sc.name << "\ndim = " << sc.dim << "\nseed = " << sc.solver.seed << "\n\n";
  const auto& m = sc.measure;
  os << "[measure]\ntype = " << m.type << "\n";
  if (m.type == "uniform_circle")
    os << "center = " << join_numbers(m.center) << "\nradius = " << io::fmt12(m.radius) << "\nnodes = " << m.nodes
       << "\n";
  else if (m.type == "cantor")
    os << "a = " << join_numbers(m.a) << "\nb = " << join_numbers(m.b) << "\ndepth = " << m.depth << "\n";
  else if (m.type == "dirac")
    os << "point = " << join_numbers(m.point) << "\n";
  else if (m.type == "polyline")
    os << "vertices = " << join_points(m.vertices) << "\nnodes = " << m.nodes << "\n";
  else if (m.type == "file")
    os << "path = " << m.path << "\n";
  os << "\n";
  detail::emit_shape(os, sc.constraint, "constraint");
  os << "[solver]\nr = " << io::fmt12(sc.r) << "\nn = " << sc.n << "\n";
  if (!sc.n_list.empty()) {
    os << "n_list =";
    for (auto n : sc.n_list) os << " " << n;
    os << "\n";
  }
  os << "restarts = " << sc.solver.restarts << "\nmax_iters = " << sc.solver.max_iters
     << "\ntol = " << io::fmt12(sc.solver.tol) << "\ninner_iters = " << sc.solver.inner_iters << "\n\n";
  const auto& a = sc.analysis;
  os << "[analysis]\nexcess = " << a.excess << "\nwindow = " << io::fmt12(a.window) << "\n";
  if (!a.box_scales.empty()) os << "box_scales = " << join_numbers(a.box_scales) << "\n";
  if (a.ahlfors_d > 0.0) os << "ahlfors_d = " << io::fmt12(a.ahlfors_d) << "\n";
  if (!a.ahlfors_radii.empty()) os << "ahlfors_radii = " << join_numbers(a.ahlfors_radii) << "\n";
  os << "ahlfors_centers = " << a.ahlfors_centers << "\nahlfors_bound = " << io::fmt12(a.ahlfors_bound) << "\n";
  if (!a.eps.empty()) os << "eps = " << join_numbers(a.eps) << "\n";
  os << "probes = " << a.probes << "\n";
  if (a.u3_s > 0.0) os << "u3_s = " << io::fmt12(a.u3_s) << "\n";
  os << "u3_stability = " << io::fmt12(a.u3_stability) << "\n";
  if (a.lambda > 0.0) os << "lambda = " << io::fmt12(a.lambda) << "\n";
  os << "\n[output]\ndir = " << sc.out_dir << "\n";
  if (!sc.project_points.empty()) os << "\n[project]\npoints = " << join_points(sc.project_points) << "\n";
  return os.str();
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"circle-disc", "cantor-line", "dirac-circle", "vshape",
                                              "circle-ball-half"};
  return names;
}

/// Built-in scenes. Lines are long segments; the V-shape constraint is three truncated
/// polylines around the apex of K.
inline Scenario preset(const std::string& name) {
  Scenario sc;
  sc.name = name;
  sc.dim = 2;
  sc.out_dir = "out/" + name;
  const std::vector<std::size_t> curve{2, 3, 4, 8, 16, 32, 64};
  if (name == "circle-disc") {
    sc.measure = {.type = "uniform_circle", .center = {0, 0}, .radius = 1.0, .nodes = 4096};
    sc.constraint = {.type = "ball", .name = "constraint", .center = {0, 0}, .radius = 1.0};
    sc.n = 4;
    sc.n_list = curve;
    sc.analysis.u3_s = 1.0;
    sc.analysis.ahlfors_d = 1.0;
  } else if (name == "circle-ball-half") {
    sc.measure = {.type = "uniform_circle", .center = {0, 0}, .radius = 1.0, .nodes = 4096};
    sc.constraint = {.type = "ball", .name = "constraint", .center = {0, 0}, .radius = 0.5};
    sc.n = 4;
    sc.n_list = curve;
    sc.analysis.u3_s = 1.0;
    sc.analysis.ahlfors_d = 1.0;
  } else if (name == "cantor-line") {
    sc.measure = {.type = "cantor", .a = {0, 0}, .b = {1, 0}, .depth = 10};
    sc.constraint = {.type = "segment", .name = "constraint", .a = {-1, 1}, .b = {2, 1}};
    sc.n = 2;
    sc.n_list = {2, 4, 8, 16, 32};
    sc.analysis.window = 1.0;
    sc.analysis.u3_s = std::log(2.0) / std::log(3.0);
    sc.analysis.ahlfors_d = std::log(2.0) / std::log(3.0);
    sc.analysis.box_scales = {1.0 / 27, 1.0 / 81, 1.0 / 243, 1.0 / 729};
    sc.analysis.ahlfors_radii = {1.0 / 9, 1.0 / 27, 1.0 / 81, 1.0 / 243};
    sc.analysis.eps = {1.0 / 9, 1.0 / 27, 1.0 / 81};
  } else if (name == "dirac-circle") {
    sc.measure = {.type = "dirac", .point = {0, 0}};
    sc.constraint = {.type = "sphere", .name = "constraint", .center = {0, 0}, .radius = 1.0};
    sc.n = 4;
    sc.n_list = {2, 4, 8, 16};
    sc.analysis.u3_s = 1.0;
  } else if (name == "vshape") {
    sc.measure = {.type = "polyline", .nodes = 4097, .vertices = {{-1, -1}, {0, 0}, {1, -1}}};
    ShapeSpec right{.type = "polyline", .name = "constraint.right", .vertices = {{3, 2}, {1, 0}, {3, -2}}};
    ShapeSpec left{.type = "polyline", .name = "constraint.left", .vertices = {{-3, 2}, {-1, 0}, {-3, -2}}};
    ShapeSpec top{.type = "polyline", .name = "constraint.top", .vertices = {{-2, 3}, {0, 1}, {2, 3}}};
    sc.constraint = {.type = "union", .name = "constraint", .members = {left, right, top}};
    sc.n = 4;
    sc.n_list = {2, 4, 8, 16, 32};
    sc.analysis.u3_s = 1.0;
    sc.analysis.ahlfors_d = 1.0;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += " " + n;
    throw ConfigError("unknown preset '" + name + "' (known:" + known + ")");
  }
  return sc;
}

// ---------------------------------------------------------------------------------------
// Builders

namespace detail {

template <std::size_t D>
Point<D> to_point(const std::vector<double>& v, const std::string& what) {
  if (v.size() != D)
    throw ConfigError(what + ": expected " + std::to_string(D) + " coordinates, got " + std::to_string(v.size()));
  Point<D> p;
  for (std::size_t i = 0; i < D; ++i) p[i] = v[i];
  return p;
}

template <std::size_t D>
PointList<D> to_points(const std::vector<std::vector<double>>& v, const std::string& what) {
  PointList<D> out;
  for (const auto& p : v) out.push_back(to_point<D>(p, what));
  return out;
}

}  // namespace detail

template <std::size_t D>
ConstraintSet<D> build_constraint(const ShapeSpec& s) {
  using detail::to_point;
  const auto& w = s.name;
  Shape<D> shape;
  if (s.type == "ball") {
    shape = ClosedBall<D>{to_point<D>(s.center, w + " center"), s.radius};
  } else if (s.type == "sphere") {
    shape = Sphere<D>{to_point<D>(s.center, w + " center"), s.radius};
  } else if (s.type == "segment") {
    shape = Segment<D>{to_point<D>(s.a, w + " a"), to_point<D>(s.b, w + " b")};
  } else if (s.type == "cantor") {
    shape = CantorSegment<D>{to_point<D>(s.a, w + " a"), to_point<D>(s.b, w + " b"), s.depth};
  } else if (s.type == "polyline") {
    shape = Polyline<D>{detail::to_points<D>(s.vertices, w + " vertices")};
  } else if (s.type == "points") {
    shape = FinitePointSet<D>{detail::to_points<D>(s.points, w + " points")};
  } else if (s.type == "union") {
    Union<D> u;
    for (const auto& m : s.members) u.members.push_back(build_constraint<D>(m));
    shape = std::move(u);
  } else {
    throw ConfigError("unknown constraint type " + s.type);
  }
  return ConstraintSet<D>(std::move(shape), s.proj_tol);
}

template <std::size_t D>
DiscreteMeasure<D> build_measure(const MeasureSpec& m, const std::string& base_dir = ".") {
  using detail::to_point;
  if (m.type == "uniform_circle") {
    if constexpr (D < 2) {
      throw ConfigError("uniform_circle needs dim >= 2");
    } else {
      return uniform_circle<D>(to_point<D>(m.center, "measure center"), m.radius, m.nodes);
    }
  }
  if (m.type == "cantor") return cantor_measure<D>(to_point<D>(m.a, "measure a"), to_point<D>(m.b, "measure b"), m.depth);
  if (m.type == "dirac") return dirac<D>(to_point<D>(m.point, "measure point"));
  if (m.type == "polyline") return uniform_polyline<D>(detail::to_points<D>(m.vertices, "measure vertices"), m.nodes);
  if (m.type == "file") {
    std::filesystem::path p(m.path);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    return load_samples<D>(p.string());
  }
  throw ConfigError("unknown measure type " + m.type);
}

// ---------------------------------------------------------------------------------------
// Runners

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitResource = 3,
  kExitNumerical = 4,
  kExitUsage = 5,
};

struct RunOutcome {
  io::OutputBundle files;
  int exit_code = kExitOk;
  std::string message;
};

namespace detail {

template <std::size_t D>
struct Scene {
  DiscreteMeasure<D> measure;
  ConstraintSet<D> constraint;
};

template <std::size_t D>
Scene<D> build_scene(const Scenario& sc) {
  return {build_measure<D>(sc.measure, sc.base_dir), build_constraint<D>(sc.constraint)};
}

inline std::vector<double> default_grid(double diam, std::initializer_list<double> factors) {
  std::vector<double> out;
  for (double f : factors) out.push_back(diam * f);
  return out;
}

template <std::size_t D>
std::string summary_csv(const ErrorRow<D>& row) {
  return std::string(io::kCurveHeader) + "\n" + io::curve_row_csv(row);
}

template <std::size_t D>
ErrorRow<D> quantize_row(const Scene<D>& scene, const Scenario& sc) {
  const auto curve = error_curve<D>(scene.measure, scene.constraint, sc.r, {sc.n}, sc.solver);
  return curve.rows.front();
}

}  // namespace detail

/// Solves at sc.n: codebook.txt (`x y [z]` rows) and summary.csv (one row, curve schema).
template <std::size_t D>
RunOutcome run_quantize(const Scenario& sc) {
  const auto scene = detail::build_scene<D>(sc);
  const auto row = detail::quantize_row(scene, sc);
  RunOutcome out;
  out.files.add("codebook.txt", io::points_text<D>(row.codebook.points));
  out.files.add("summary.csv", detail::summary_csv(row));
  return out;
}

template <std::size_t D>
RunOutcome run_curve(const Scenario& sc) {
  if (sc.n_list.empty()) throw ConfigError("[solver] n_list is required");
  const auto scene = detail::build_scene<D>(sc);
  const auto curve = error_curve<D>(scene.measure, scene.constraint, sc.r, sc.n_list, sc.solver);
  RunOutcome out;
  out.files.add("curve.csv", io::curve_csv(curve));
  return out;
}

namespace detail {

template <std::size_t D>
struct ConditionPair {
  ConditionReport u1;
  std::optional<ConditionReport> u3;
};

template <std::size_t D>
ConditionPair<D> run_conditions(const Scene<D>& scene, const Scenario& sc, double image_diam, double box_dim) {
  const auto& a = sc.analysis;
  const double diam = std::max(image_diam, 1e-12);
  const auto eps = a.eps.empty() ? default_grid(diam, {0.2, 0.1, 0.05, 0.02}) : a.eps;
  const double res = std::max(scene.constraint.diameter(), 1.0) / 1024.0;
  const auto probes = condition_probes<D>(scene.measure, scene.constraint,
                                          static_cast<std::size_t>(std::max(a.probes, 1)), res);
  ConditionPair<D> out;
  out.u1 = check_condition_U1<D>(scene.measure, scene.constraint, eps, probes);
  const double s = a.u3_s > 0.0 ? a.u3_s : box_dim;
  if (s > 0.0) {
    out.u3 = check_condition_U3<D>(scene.measure, scene.constraint, s, eps, probes, a.u3_stability);
    if (!(a.u3_s > 0.0)) out.u3->s_source = "box-dimension estimate of the projection image";
  }
  return out;
}

template <std::size_t D>
BoxDimension image_box_dimension(const DiscreteMeasure<D>& image, const AnalysisSpec& a, double diam) {
  const auto pts = image.support();
  if (pts.size() < 2 || !(diam > 0.0)) {
    BoxDimension b;
    b.table.push_back({0.0, pts.size()});
    return b;
  }
  const auto scales = a.box_scales.empty()
                          ? default_grid(diam, {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256})
                          : a.box_scales;
  return box_dimension<D>(pts, scales);
}

}  // namespace detail

/// U1 / U3 tables: conditions_U1.csv, conditions_U3.csv, conditions.json.
template <std::size_t D>
RunOutcome run_check(const Scenario& sc) {
  const auto scene = detail::build_scene<D>(sc);
  const auto image = pushforward<D>(scene.measure, scene.constraint);
  const auto box_pts = image.support();
  const double diam = bounding_box<D>(box_pts).diameter();
  const auto box = detail::image_box_dimension(image, sc.analysis, diam);
  const auto cond = detail::run_conditions(scene, sc, diam, box.dimension);
  RunOutcome out;
  io::Json j;
  j["U1"] = io::condition_json(cond.u1);
  out.files.add("conditions_U1.csv", io::condition_csv(cond.u1));
  if (cond.u3) {
    j["U3"] = io::condition_json(*cond.u3);
    out.files.add("conditions_U3.csv", io::condition_csv(*cond.u3));
  } else {
    j["U3"] = nullptr;
  }
  out.files.add("conditions.json", j.dump(2) + "\n");
  return out;
}

/// ErrorCurve CSV, DimensionReport JSON and condition tables.
template <std::size_t D>
RunOutcome run_analyze(const Scenario& sc) {
  if (sc.n_list.size() < 4) throw ConfigError("[solver] n_list needs at least 4 entries for a dimension fit");
  const auto scene = detail::build_scene<D>(sc);
  const auto& a = sc.analysis;
  const auto curve = error_curve<D>(scene.measure, scene.constraint, sc.r, sc.n_list, sc.solver);

  DimensionReport rep;
  rep.quant_source = a.excess;
  rep.quant = fit_quant_dimension(curve, a.excess == "tilde" ? ExcessKind::Tilde : ExcessKind::Hat, a.window);

  const auto image = pushforward<D>(scene.measure, scene.constraint);
  const auto pts = image.support();
  const double diam = bounding_box<D>(pts).diameter();
  rep.box = detail::image_box_dimension(image, a, diam);

  const double ad = a.ahlfors_d > 0.0 ? a.ahlfors_d : (a.u3_s > 0.0 ? a.u3_s : rep.box.dimension);
  if (ad > 0.0 && pts.size() > 1 && diam > 0.0) {
    const auto radii = a.ahlfors_radii.empty() ? detail::default_grid(diam, {0.25, 0.1, 0.05, 0.025, 0.01})
                                               : a.ahlfors_radii;
    rep.ahlfors = ahlfors_check<D>(image, ad, radii, static_cast<std::size_t>(std::max(a.ahlfors_centers, 1)),
                                   a.ahlfors_bound);
    rep.has_ahlfors = true;
  }
  const auto cond = detail::run_conditions(scene, sc, diam, rep.box.dimension);
  rep.conditions["U1"] = cond.u1;
  if (cond.u3) rep.conditions["U3"] = *cond.u3;

  auto report = io::report_json(rep);
  const auto& last = curve.rows.back();
  const double lambda = a.lambda > 0.0 ? a.lambda : 1e-3 * std::max(scene.constraint.diameter(), 1.0);
  const auto wd = weight_decompose<D>(scene.measure, scene.constraint, last.codebook.points, lambda);
  report["details"]["weight_decomposition"] = {{"n", last.n},
                                               {"lambda", io::num12(wd.lambda)},
                                               {"term_weighted", io::num12(wd.term_weighted)},
                                               {"term_lambda", io::num12(wd.term_lambda)},
                                               {"e_hat1", io::num12(wd.e_hat1)},
                                               {"residual", io::num12(wd.residual)},
                                               {"max_abs_weight", io::num12(wd.max_abs_weight)}};
  report["details"]["scenario"] = sc.name;
  report["details"]["seed"] = sc.solver.seed;

  RunOutcome out;
  out.files.add("curve.csv", io::curve_csv(curve));
  out.files.add("report.json", report.dump(2) + "\n");
  out.files.add("conditions_U1.csv", io::condition_csv(cond.u1));
  if (cond.u3) out.files.add("conditions_U3.csv", io::condition_csv(*cond.u3));
  if (rep.quant.degenerate) {
    out.exit_code = kExitNumerical;
    out.message = "dimension fit degenerate: " + rep.quant.verdict;
  }
  return out;
}

/// Projects [project] points (or the measure atoms when none are given): projection.csv.
template <std::size_t D>
RunOutcome run_project(const Scenario& sc) {
  const auto S = build_constraint<D>(sc.constraint);
  PointList<D> queries;
  if (sc.project_points.empty())
    queries = build_measure<D>(sc.measure, sc.base_dir).atoms();
  else
    queries = detail::to_points<D>(sc.project_points, "[project] points");
  std::ostringstream os;
  os << "query,representative,distance,tie_count,minimizers\n";
  auto coords = [](const Point<D>& p) {
    std::string s;
    for (std::size_t i = 0; i < D; ++i) s += (i ? " " : "") + io::fmt12(p[i]);
    return s;
  };
  for (const auto& q : queries) {
    const auto pr = S.project(q);
    os << coords(q) << ',' << coords(pr.representative) << ',' << io::fmt12(pr.distance) << ','
       << (pr.is_continuum() ? std::string("continuum") : std::to_string(pr.tie_count)) << ',';
    for (std::size_t i = 0; i < pr.all_minimizers.size(); ++i) os << (i ? ";" : "") << coords(pr.all_minimizers[i]);
    os << '\n';
  }
  RunOutcome out;
  out.files.add("projection.csv", os.str());
  return out;
}

/// Dispatches a runner over the scenario dimension.
template <template <std::size_t> class Runner>
RunOutcome dispatch(const Scenario& sc) {
  switch (sc.dim) {
    case 1: return Runner<1>::run(sc);
    case 2: return Runner<2>::run(sc);
    case 3: return Runner<3>::run(sc);
    default: throw ConfigError("dim must be 1, 2 or 3");
  }
}

template <std::size_t D>
struct QuantizeRunner {
  static RunOutcome run(const Scenario& sc) { return run_quantize<D>(sc); }
};
template <std::size_t D>
struct CurveRunner {
  static RunOutcome run(const Scenario& sc) { return run_curve<D>(sc); }
};
template <std::size_t D>
struct AnalyzeRunner {
  static RunOutcome run(const Scenario& sc) { return run_analyze<D>(sc); }
};
template <std::size_t D>
struct CheckRunner {
  static RunOutcome run(const Scenario& sc) { return run_check<D>(sc); }
};
template <std::size_t D>
struct ProjectRunner {
  static RunOutcome run(const Scenario& sc) { return run_project<D>(sc); }
};

/// Full bundle for a preset: scenario.ini, codebook.txt, summary.csv, curve.csv, report.json,
/// condition tables.
inline RunOutcome run_reproduce(const Scenario& sc) {
  auto out = dispatch<AnalyzeRunner>(sc);
  auto q = dispatch<QuantizeRunner>(sc);
  RunOutcome all;
  all.files.add("scenario.ini", to_config_text(sc));
  for (const auto& [name, content] : q.files.files()) all.files.add(name, content);
  for (const auto& [name, content] : out.files.files()) all.files.add(name, content);
  all.exit_code = out.exit_code;
  all.message = out.message;
  return all;
}

}  // namespace cquant::cli
