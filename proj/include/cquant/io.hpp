#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cquant/dimension.hpp"
#include "cquant/errors.hpp"
#include "cquant/point.hpp"
#include "cquant/quantizer.hpp"

namespace cquant::io {

using Json = nlohmann::ordered_json;

/// 12 significant digits; "inf" / "-inf" / "nan" for non-finite values.
inline std::string fmt12(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// JSON number rounded to 12 significant digits, or a string for non-finite values.
inline Json num12(double v) {
  if (!std::isfinite(v)) return fmt12(v);
  return std::stod(fmt12(v));
}

inline const char* kCurveHeader = "n,r,e,e_inf,e_hat,e_tilde,iters,restarts,best_seed,clamped";

template <std::size_t D>
std::string curve_row_csv(const ErrorRow<D>& row) {
  std::ostringstream os;
  os << row.n << ',' << fmt12(row.r) << ',' << fmt12(row.e) << ',' << fmt12(row.e_inf) << ','
     << fmt12(row.e_hat) << ',' << fmt12(row.e_tilde) << ',' << row.iters << ',' << row.restarts << ','
     << row.best_seed << ',' << (row.clamped ? 1 : 0) << '\n';
  return os.str();
}

template <std::size_t D>
std::string curve_csv(const ErrorCurve<D>& curve) {
  std::string s = std::string(kCurveHeader) + "\n";
  for (const auto& row : curve.rows) s += curve_row_csv(row);
  return s;
}

/// One `x y [z]` row per point.
template <std::size_t D>
std::string points_text(std::span<const Point<D>> pts) {
  std::string s;
  for (const auto& p : pts) {
    for (std::size_t i = 0; i < D; ++i) {
      if (i) s += ' ';
      s += fmt12(p[i]);
    }
    s += '\n';
  }
  return s;
}

inline Json point_json(std::span<const double> coords) {
  Json a = Json::array();
  for (double c : coords) a.push_back(num12(c));
  return a;
}

inline Json fit_json(const QuantDimensionFit& fit) {
  Json slopes = Json::array();
  for (const auto& s : fit.local_slopes)
    slopes.push_back({{"n0", s.n0}, {"n1", s.n1}, {"slope", num12(s.slope)}});
  return {{"verdict", fit.verdict}, {"degenerate", fit.degenerate}, {"local_slopes", slopes}};
}

inline Json box_json(const BoxDimension& box) {
  Json t = Json::array();
  for (const auto& b : box.table) t.push_back({{"delta", num12(b.delta)}, {"count", b.count}});
  return {{"dimension", num12(box.dimension)}, {"table", t}};
}

inline Json ahlfors_json(const AhlforsCheck& a) {
  Json t = Json::array();
  for (const auto& row : a.table)
    t.push_back({{"radius", num12(row[0])}, {"min_ratio", num12(row[1])}, {"max_ratio", num12(row[2])}});
  return {{"d", num12(a.d)},         {"c_lower", num12(a.c_lower)}, {"c_upper", num12(a.c_upper)},
          {"bound", num12(a.bound)}, {"pass", a.pass},              {"table", t}};
}

inline Json condition_json(const ConditionReport& c) {
  Json mins = Json::array();
  for (const auto& [eps, m] : c.min_by_eps) mins.push_back({{"eps", num12(eps)}, {"min", num12(m)}});
  Json j = {{"verdict", c.verdict}, {"pass", c.pass}, {"probe_count", c.probes.size()}, {"min_by_eps", mins}};
  if (c.name == "U3") {
    j["s"] = num12(c.s);
    j["s_source"] = c.s_source;
    j["inf_ratio"] = num12(c.inf_ratio);
    j["stability"] = num12(c.stability);
  }
  return j;
}

/// Fixed top-level keys: quant_dim_upper, quant_dim_lower, global_slope_dim, box_dim, ahlfors,
/// conditions; supporting tables follow under `details`.
inline Json report_json(const DimensionReport& r) {
  Json out;
  out["quant_dim_upper"] = num12(r.quant.upper);
  out["quant_dim_lower"] = num12(r.quant.lower);
  out["global_slope_dim"] = num12(r.quant.global);
  out["box_dim"] = num12(r.box.dimension);
  out["ahlfors"] = r.has_ahlfors ? ahlfors_json(r.ahlfors) : Json(nullptr);
  Json cond = Json::object();
  for (const auto& [name, c] : r.conditions) cond[name] = condition_json(c);
  out["conditions"] = cond;
  out["details"] = {{"quant_source", r.quant_source}, {"fit", fit_json(r.quant)}, {"box", box_json(r.box)}};
  return out;
}

/// Per-(probe, eps) masses as CSV.
inline std::string condition_csv(const ConditionReport& c) {
  std::ostringstream os;
  os << "probe,coords,eps,mass\n";
  for (const auto& row : c.table) {
    os << row.probe << ',';
    const auto& p = c.probes[row.probe];
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? " " : "") << fmt12(p[i]);
    os << ',' << fmt12(row.eps) << ',' << fmt12(row.mass) << '\n';
  }
  return os.str();
}

/// Collects output files and writes them together.
class OutputBundle {
 public:
  void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }
  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

  std::vector<std::string> write(const std::filesystem::path& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ResourceError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::vector<std::string> written;
    for (const auto& [name, content] : files_) {
      const auto path = dir / name;
      std::ofstream out(path, std::ios::binary);
      if (!out) throw ResourceError("cannot write " + path.string());
      out << content;
      written.push_back(path.string());
    }
    return written;
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace cquant::io
