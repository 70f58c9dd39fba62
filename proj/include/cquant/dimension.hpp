#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cquant/errors.hpp"
#include "cquant/geometry.hpp"
#include "cquant/measures.hpp"
#include "cquant/point.hpp"
#include "cquant/quantizer.hpp"

namespace cquant {

/// Excess errors below this are treated as zero before taking logarithms.
inline constexpr double kExcessNoiseFloor = 1e-9;

enum class ExcessKind { Hat, Tilde };

struct LocalSlope {
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  double slope = 0.0;
};

struct QuantDimensionFit {
  bool degenerate = false;
  std::string verdict;
  double upper = 0.0;
  double lower = 0.0;
  double global = 0.0;
  std::vector<LocalSlope> local_slopes;
};

namespace detail {

/// Least-squares slope of y against x.
inline double ls_slope(std::span<const double> x, std::span<const double> y) {
  const auto m = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace detail

/// Dimension estimates from (n, excess error) pairs.
///
/// Local slopes d_k = log(n_{k+1}/n_k) / (log e_k - log e_{k+1}) over consecutive rows of
/// the tail window; upper/lower are their max/min, global is -1 / (least-squares slope of
/// log e against log n) over the same tail.
inline QuantDimensionFit fit_quant_dimension(std::span<const std::size_t> ns,
                                             std::span<const double> excess, double window = 0.5) {
  if (ns.size() != excess.size()) throw UsageError("n and error columns differ in length");
  if (!(window > 0.0 && window <= 1.0)) throw UsageError("window must lie in (0, 1]");
  QuantDimensionFit fit;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ns.size(); ++i)
    if (excess[i] > kExcessNoiseFloor && ns[i] > 0) keep.push_back(i);
  if (keep.empty()) {
    fit.degenerate = true;
    fit.verdict = "degenerate: ê ≡ 0";
    return fit;
  }
  if (keep.size() < 4) throw UsageError("dimension fit needs at least 4 rows above the noise floor");
  const auto tail = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(window * static_cast<double>(keep.size()) - 1e-12)));
  const std::size_t first = keep.size() - std::min(tail, keep.size());

  // Logs of error ratios: a common scale factor cancels before rounding.
  std::vector<double> lx, ly;
  const double ref = excess[keep[first]];
  fit.upper = -std::numeric_limits<double>::infinity();
  fit.lower = std::numeric_limits<double>::infinity();
  for (std::size_t k = first; k < keep.size(); ++k) {
    const std::size_t i = keep[k];
    lx.push_back(std::log(static_cast<double>(ns[i])));
    ly.push_back(std::log(excess[i] / ref));
    if (k + 1 < keep.size()) {
      const std::size_t j = keep[k + 1];
      LocalSlope s;
      s.n0 = ns[i];
      s.n1 = ns[j];
      s.slope = std::log(static_cast<double>(ns[j]) / static_cast<double>(ns[i])) /
                std::log(excess[i] / excess[j]);
      fit.local_slopes.push_back(s);
      fit.upper = std::max(fit.upper, s.slope);
      fit.lower = std::min(fit.lower, s.slope);
    }
  }
  fit.global = -1.0 / detail::ls_slope(lx, ly);
  fit.verdict = "ok";
  return fit;
}

template <std::size_t D>
QuantDimensionFit fit_quant_dimension(const ErrorCurve<D>& curve, ExcessKind which,
                                      double window = 0.5) {
  std::vector<std::size_t> ns;
  std::vector<double> ex;
  for (const auto& row : curve.rows) {
    ns.push_back(row.n);
    ex.push_back(which == ExcessKind::Hat ? row.e_hat : row.e_tilde);
  }
  return fit_quant_dimension(ns, ex, window);
}

struct BoxCount {
  double delta = 0.0;
  std::size_t count = 0;
};

struct BoxDimension {
  double dimension = 0.0;
  std::vector<BoxCount> table;
};

/// Box-counting estimate on the origin-anchored grid of side delta.
template <std::size_t D>
BoxDimension box_dimension(std::span<const Point<D>> pts, std::span<const double> scales) {
  if (pts.empty()) throw UsageError("box_dimension needs points");
  if (scales.size() < 2) throw UsageError("box_dimension needs at least 2 scales");
  BoxDimension out;
  std::vector<double> lx, ly;
  for (double delta : scales) {
    if (!(delta > 0.0)) throw UsageError("box scales must be positive");
    std::vector<std::array<std::int64_t, D>> keys;
    keys.reserve(pts.size());
    for (const auto& p : pts) {
      std::array<std::int64_t, D> k{};
      for (std::size_t i = 0; i < D; ++i) k[i] = static_cast<std::int64_t>(std::floor(p[i] / delta));
      keys.push_back(k);
    }
    std::sort(keys.begin(), keys.end());
    const auto count = static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
    out.table.push_back({delta, count});
    lx.push_back(-std::log(delta));
    ly.push_back(std::log(static_cast<double>(count)));
  }
  std::sort(out.table.begin(), out.table.end(),
            [](const BoxCount& a, const BoxCount& b) { return a.delta < b.delta; });
  const bool single = std::all_of(out.table.begin(), out.table.end(),
                                  [](const BoxCount& b) { return b.count == 1; });
  out.dimension = single ? 0.0 : detail::ls_slope(lx, ly);
  return out;
}

struct AhlforsCheck {
  double d = 0.0;
  double c_lower = 0.0;
  double c_upper = 0.0;
  double bound = 1e3;
  bool pass = false;
  /// (radius, min ratio, max ratio) over the sampled centers.
  std::vector<std::array<double, 3>> table;
};

/// Samples mu(B(a, r)) / r^d over stride-chosen support centers and all radii.
template <std::size_t D>
AhlforsCheck ahlfors_check(const DiscreteMeasure<D>& mu, double d, std::span<const double> radii,
                           std::size_t centers, double bound = 1e3) {
  if (!(d > 0.0)) throw UsageError("Ahlfors dimension must be positive");
  if (radii.empty()) throw UsageError("ahlfors_check needs radii");
  const auto support = mu.support();
  centers = std::clamp<std::size_t>(centers, 1, support.size());
  AhlforsCheck out;
  out.d = d;
  out.bound = bound;
  out.c_lower = std::numeric_limits<double>::infinity();
  out.c_upper = 0.0;
  for (double rad : radii) {
    if (!(rad > 0.0)) throw UsageError("Ahlfors radii must be positive");
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t c = 0; c < centers; ++c) {
      const auto& a = support[c * support.size() / centers];
      double mass = 0.0;
      for (std::size_t j = 0; j < mu.size(); ++j)
        if (dist(mu.atoms()[j], a) < rad) mass += mu.weights()[j];
      const double ratio = mass / std::pow(rad, d);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    out.table.push_back({rad, lo, hi});
    out.c_lower = std::min(out.c_lower, lo);
    out.c_upper = std::max(out.c_upper, hi);
  }
  out.pass = out.c_lower > 0.0 && out.c_upper / out.c_lower <= bound;
  return out;
}

struct ProbeMass {
  std::size_t probe = 0;
  double eps = 0.0;
  double mass = 0.0;
};

struct ConditionReport {
  std::string name;
  bool pass = false;
  std::string verdict;
  std::vector<std::vector<double>> probes;
  std::vector<ProbeMass> table;
  /// Per eps: min over probes of mass (U1) or of mass / eps^s (U3).
  std::vector<std::pair<double, double>> min_by_eps;
  /// U3 only.
  double s = 0.0;
  std::string s_source;
  double inf_ratio = 0.0;
  double stability = 0.0;
};

/// Deterministic probe set on the image pi_S(K): a stride sample of the full image sample
/// plus every minimizer of a discrete projection tie (those are where the selector drops mass).
template <std::size_t D>
PointList<D> condition_probes(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S,
                              std::size_t probe_count, double resolution) {
  const auto image = projection_image_sample<D>(S, P.support(), resolution);
  PointList<D> probes;
  const std::size_t count = std::clamp<std::size_t>(probe_count, 1, image.size());
  for (std::size_t k = 0; k < count; ++k) probes.push_back(image[k * image.size() / count]);
  for (const auto& x : P.support()) {
    const auto pr = S.project(x);
    if (pr.tie_count > 1)
      for (const auto& m : pr.all_minimizers) probes.push_back(m);
  }
  detail::dedupe_points(probes, S.proj_tol());
  return probes;
}

namespace detail {

/// mass[p][e] = P({x : |T(x) - probe_p| < eps_e}) through the selector T.
template <std::size_t D>
std::vector<ProbeMass> probe_masses(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S,
                                    const PointList<D>& probes, std::span<const double> eps_list) {
  const auto [images, ignored] = project_set<D>(S, P.atoms());
  std::vector<ProbeMass> out;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    for (double eps : eps_list) {
      if (!(eps > 0.0)) throw UsageError("eps values must be positive");
      double m = 0.0;
      for (std::size_t j = 0; j < images.size(); ++j)
        if (dist(images[j], probes[p]) < eps) m += P.weights()[j];
      out.push_back({p, eps, m});
    }
  }
  return out;
}

template <std::size_t D>
std::vector<std::vector<double>> probe_coords(const PointList<D>& probes) {
  std::vector<std::vector<double>> out;
  for (const auto& p : probes) out.emplace_back(p.x.begin(), p.x.end());
  return out;
}

}  // namespace detail

/// Positive-mass condition: every probe of pi_S(K) must receive mass through the selector
/// at every eps of the grid.
template <std::size_t D>
ConditionReport check_condition_U1(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S,
                                   std::span<const double> eps_list, const PointList<D>& probes) {
  if (eps_list.empty()) throw UsageError("eps_list is empty");
  ConditionReport rep;
  rep.name = "U1";
  rep.probes = detail::probe_coords(probes);
  rep.table = detail::probe_masses(P, S, probes, eps_list);
  for (double eps : eps_list) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& row : rep.table)
      if (row.eps == eps) m = std::min(m, row.mass);
    rep.min_by_eps.emplace_back(eps, m);
  }
  rep.pass = std::all_of(rep.min_by_eps.begin(), rep.min_by_eps.end(),
                         [](const auto& e) { return e.second > 0.0; });
  rep.verdict = rep.pass ? "pass" : "fail: some probe receives zero mass";
  return rep;
}

template <std::size_t D>
ConditionReport check_condition_U1(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S,
                                   std::span<const double> eps_list, std::size_t probe_count) {
  const double res = std::max(S.diameter(), 1.0) / 1024.0;
  return check_condition_U1(P, S, eps_list, condition_probes(P, S, probe_count, res));
}

/// Lower-regularity condition: inf over probes of mass / eps^s must stay bounded away from 0
/// across the eps grid (finest-to-coarsest spread at most `stability_bound`).
template <std::size_t D>
ConditionReport check_condition_U3(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, double s,
                                   std::span<const double> eps_list, const PointList<D>& probes,
                                   double stability_bound = 10.0) {
  if (!(s > 0.0)) throw UsageError("U3 exponent s must be positive");
  if (eps_list.empty()) throw UsageError("eps_list is empty");
  ConditionReport rep;
  rep.name = "U3";
  rep.s = s;
  rep.s_source = "given";
  rep.probes = detail::probe_coords(probes);
  rep.table = detail::probe_masses(P, S, probes, eps_list);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double eps : eps_list) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& row : rep.table)
      if (row.eps == eps) m = std::min(m, row.mass / std::pow(eps, s));
    rep.min_by_eps.emplace_back(eps, m);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  rep.inf_ratio = lo;
  rep.stability = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  rep.pass = lo > 0.0 && rep.stability <= stability_bound;
  if (rep.pass) {
    rep.verdict = "pass";
  } else if (!(lo > 0.0)) {
    rep.verdict = "fail: inf ratio is 0";
  } else {
    rep.verdict = "fail: ratio unstable across eps";
  }
  return rep;
}

template <std::size_t D>
ConditionReport check_condition_U3(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, double s,
                                   std::span<const double> eps_list, std::size_t probe_count) {
  const double res = std::max(S.diameter(), 1.0) / 1024.0;
  return check_condition_U3(P, S, s, eps_list, condition_probes(P, S, probe_count, res));
}

struct DimensionReport {
  QuantDimensionFit quant;
  std::string quant_source = "hat";
  BoxDimension box;
  AhlforsCheck ahlfors;
  bool has_ahlfors = false;
  std::map<std::string, ConditionReport> conditions;
};

}  // namespace cquant
