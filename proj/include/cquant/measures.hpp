#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cquant/errors.hpp"
#include "cquant/geometry.hpp"
#include "cquant/point.hpp"

namespace cquant {

enum class MeasureKind { AnalyticQuadrature, Ifs, Dirac, File };

inline const char* to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::AnalyticQuadrature: return "analytic-quadrature";
    case MeasureKind::Ifs: return "ifs";
    case MeasureKind::Dirac: return "dirac";
    case MeasureKind::File: return "file";
  }
  return "unknown";
}

/// Finitely supported probability measure sum_j w_j delta_{x_j}.
template <std::size_t D>
class DiscreteMeasure {
 public:
  DiscreteMeasure(PointList<D> atoms, std::vector<double> weights, MeasureKind kind)
      : atoms_(std::move(atoms)), weights_(std::move(weights)), kind_(kind) {
    if (atoms_.empty()) throw ConfigError("measure has no atoms");
    if (atoms_.size() != weights_.size()) throw ConfigError("atom and weight counts differ");
    double total = 0.0;
    for (std::size_t j = 0; j < atoms_.size(); ++j) {
      if (!is_finite(atoms_[j])) throw NumericalError("measure atom has non-finite coordinates");
      if (!std::isfinite(weights_[j]) || weights_[j] < 0.0)
        throw ConfigError("measure weights must be finite and nonnegative");
      total += weights_[j];
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("measure weights must sum to 1");
  }

  const PointList<D>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  MeasureKind kind() const { return kind_; }
  std::size_t size() const { return atoms_.size(); }

  double integrate(const std::function<double(const Point<D>&)>& f) const {
    double s = 0.0;
    for (std::size_t j = 0; j < atoms_.size(); ++j) s += weights_[j] * f(atoms_[j]);
    return s;
  }

  Point<D> mean() const {
    Point<D> m;
    for (std::size_t j = 0; j < atoms_.size(); ++j) m += atoms_[j] * weights_[j];
    return m;
  }

  /// Atoms carrying positive mass, i.e. the support sample.
  PointList<D> support() const {
    PointList<D> s;
    for (std::size_t j = 0; j < atoms_.size(); ++j)
      if (weights_[j] > 0.0) s.push_back(atoms_[j]);
    return s;
  }

 private:
  PointList<D> atoms_;
  std::vector<double> weights_;
  MeasureKind kind_;
};

/// Equal-weight nodes at angles 2*pi*k/nodes on a circle in the first two coordinates.
template <std::size_t D>
DiscreteMeasure<D> uniform_circle(const Point<D>& center, double radius, int nodes) {
  static_assert(D >= 2, "uniform_circle needs D >= 2");
  if (nodes < 3) throw ConfigError("uniform_circle needs at least 3 nodes");
  if (!(radius > 0.0)) throw ConfigError("uniform_circle radius must be positive");
  PointList<D> atoms;
  atoms.reserve(static_cast<std::size_t>(nodes));
  for (int k = 0; k < nodes; ++k) {
    const double th = 2.0 * std::numbers::pi * k / nodes;
    Point<D> p = center;
    p[0] += radius * std::cos(th);
    p[1] += radius * std::sin(th);
    atoms.push_back(p);
  }
  return {std::move(atoms), std::vector<double>(static_cast<std::size_t>(nodes), 1.0 / nodes),
          MeasureKind::AnalyticQuadrature};
}

/// Left endpoints (in [0,1]) of the 2^level intervals of the Cantor construction, ascending.
inline std::vector<double> cantor_left_endpoints(int level) {
  std::vector<double> left{0.0};
  double scale = 1.0;
  for (int k = 0; k < level; ++k) {
    scale /= 3.0;
    std::vector<double> next;
    next.reserve(left.size() * 2);
    for (double l : left) next.push_back(l);
    for (double l : left) next.push_back(l + 2.0 * scale);
    std::sort(next.begin(), next.end());
    left = std::move(next);
  }
  return left;
}

/// 2^depth atoms of mass 2^-depth at the midpoints of the depth-level ternary intervals of [a,b].
template <std::size_t D>
DiscreteMeasure<D> cantor_measure(const Point<D>& a, const Point<D>& b, int depth) {
  if (depth < 1) throw ConfigError("cantor depth must be at least 1");
  if (depth > 24) throw ResourceError("cantor depth above 24 exceeds the atom budget");
  const double half = 0.5 * std::pow(3.0, -depth);
  const auto lefts = cantor_left_endpoints(depth);
  PointList<D> atoms;
  atoms.reserve(lefts.size());
  for (double l : lefts) atoms.push_back(a + (b - a) * (l + half));
  return {std::move(atoms), std::vector<double>(lefts.size(), std::ldexp(1.0, -depth)),
          MeasureKind::Ifs};
}

template <std::size_t D>
DiscreteMeasure<D> dirac(const Point<D>& p) {
  return {PointList<D>{p}, std::vector<double>{1.0}, MeasureKind::Dirac};
}

/// Arc-length quadrature of the uniform measure on a polyline: `nodes` equally spaced
/// stations, trapezoidal weights (endpoints carry half weight).
template <std::size_t D>
DiscreteMeasure<D> uniform_polyline(const PointList<D>& vertices, int nodes) {
  if (vertices.size() < 2) throw ConfigError("polyline needs at least 2 vertices");
  if (nodes < 2) throw ConfigError("polyline quadrature needs at least 2 nodes");
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < vertices.size(); ++i)
    cum.push_back(cum.back() + dist(vertices[i - 1], vertices[i]));
  const double total = cum.back();
  if (!(total > 0.0)) throw ConfigError("polyline has zero length");
  PointList<D> atoms;
  std::vector<double> w;
  std::size_t seg = 0;
  for (int k = 0; k < nodes; ++k) {
    const double s = total * k / (nodes - 1);
    while (seg + 2 < vertices.size() && s > cum[seg + 1]) ++seg;
    const double seglen = cum[seg + 1] - cum[seg];
    const double t = std::clamp((s - cum[seg]) / seglen, 0.0, 1.0);
    atoms.push_back(vertices[seg] + (vertices[seg + 1] - vertices[seg]) * t);
    w.push_back((k == 0 || k == nodes - 1) ? 0.5 : 1.0);
  }
  const double ws = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= ws;
  return {std::move(atoms), std::move(w), MeasureKind::AnalyticQuadrature};
}

/// Builds a measure from raw samples, normalizing weights.
template <std::size_t D>
DiscreteMeasure<D> from_samples(PointList<D> atoms, std::vector<double> weights) {
  if (atoms.empty()) throw ConfigError("sample set is empty");
  if (atoms.size() != weights.size()) throw ConfigError("atom and weight counts differ");
  double total = 0.0;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    if (!is_finite(atoms[j])) throw ConfigError("sample coordinates must be finite");
    if (!std::isfinite(weights[j]) || weights[j] < 0.0)
      throw ConfigError("sample weights must be finite and nonnegative");
    total += weights[j];
  }
  if (!(total > 0.0)) throw ConfigError("sample weights sum to zero");
  for (auto& w : weights) w /= total;
  // Renormalize once more so the sum is 1 to rounding.
  const double again = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (auto& w : weights) w /= again;
  return {std::move(atoms), std::move(weights), MeasureKind::File};
}

/// Reads rows `x [y [z]] weight`; blank lines and `#` comments are skipped.
template <std::size_t D>
DiscreteMeasure<D> load_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sample file: " + path);
  PointList<D> atoms;
  std::vector<double> weights;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::vector<double> vals;
    std::string tok;
    while (row >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number: " + tok);
      }
    }
    if (vals.empty()) continue;
    if (vals.size() != D + 1)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(D + 1) +
                        " columns");
    Point<D> p;
    for (std::size_t i = 0; i < D; ++i) p[i] = vals[i];
    atoms.push_back(p);
    weights.push_back(vals[D]);
  }
  return from_samples(std::move(atoms), std::move(weights));
}

/// Push-forward T_*P under the projection selector; coincident images are merged.
template <std::size_t D>
DiscreteMeasure<D> pushforward(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S) {
  const auto [images, ignored] = project_set<D>(S, P.atoms());
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return lex_less(images[i], images[j]); });
  PointList<D> atoms;
  std::vector<double> weights;
  for (std::size_t i : order) {
    if (!atoms.empty() && dist(atoms.back(), images[i]) <= S.proj_tol()) {
      weights.back() += P.weights()[i];
    } else {
      atoms.push_back(images[i]);
      weights.push_back(P.weights()[i]);
    }
  }
  return {std::move(atoms), std::move(weights), P.kind()};
}

}  // namespace cquant
