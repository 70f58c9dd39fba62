#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cquant/errors.hpp"
#include "cquant/point.hpp"

namespace cquant {

template <std::size_t D>
class ConstraintSet;

template <std::size_t D>
struct ClosedBall {
  Point<D> center;
  double radius = 1.0;
};

/// Circle in 2D, sphere in 3D, the two-point set {c - r, c + r} in 1D.
template <std::size_t D>
struct Sphere {
  Point<D> center;
  double radius = 1.0;
};

template <std::size_t D>
struct Segment {
  Point<D> a;
  Point<D> b;
};

template <std::size_t D>
struct Polyline {
  PointList<D> vertices;
};

/// Depth-k stage of the middle-third Cantor construction laid along [a, b]:
/// the union of 2^depth closed subintervals.
template <std::size_t D>
struct CantorSegment {
  Point<D> a;
  Point<D> b;
  int depth = 0;
};

template <std::size_t D>
struct FinitePointSet {
  PointList<D> points;
};

template <std::size_t D>
struct Union {
  std::vector<ConstraintSet<D>> members;
};

template <std::size_t D>
using Shape = std::variant<ClosedBall<D>, Sphere<D>, Segment<D>, Polyline<D>, CantorSegment<D>,
                           FinitePointSet<D>, Union<D>>;

/// Marker stored in ProjectionResult::tie_count when the minimizer set is a continuum.
inline constexpr int kContinuumTies = -1;
inline constexpr std::size_t kMaxListedMinimizers = 16;

template <std::size_t D>
struct ProjectionResult {
  Point<D> representative;
  double distance = 0.0;
  /// Number of distinct minimizers found, or kContinuumTies.
  int tie_count = 1;
  /// Lexicographically sorted, capped at kMaxListedMinimizers.
  PointList<D> all_minimizers;
  /// Spheres whose whole surface attains the minimum (query at the center).
  std::vector<Sphere<D>> continuum;

  bool is_continuum() const { return tie_count == kContinuumTies; }
};

namespace detail {

template <std::size_t D>
struct Candidate {
  Point<D> point;
  double distance;
  std::optional<Sphere<D>> continuum;
};

/// Nearest parameters in the depth-k Cantor stage of [0,1] to t (one, or two on a gap-center tie).
inline std::vector<double> nearest_cantor_params(double t, int depth, double tie_tol) {
  if (t <= 0.0) return {0.0};
  if (t >= 1.0) return {1.0};
  double lo = 0.0;
  double len = 1.0;
  for (int k = 0; k < depth; ++k) {
    const double third = len / 3.0;
    const double left = lo + third;
    const double right = lo + 2.0 * third;
    if (t <= left) {
      len = third;
    } else if (t >= right) {
      lo = right;
      len = third;
    } else {
      const double dl = t - left;
      const double dr = right - t;
      if (std::abs(dl - dr) <= tie_tol) return {left, right};
      return {dl < dr ? left : right};
    }
  }
  return {t};
}

inline void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive and finite");
}

template <std::size_t D>
void check_finite(const Point<D>& p, const char* what) {
  if (!is_finite(p)) throw ConfigError(std::string(what) + " has non-finite coordinates");
}

template <std::size_t D>
void dedupe_points(PointList<D>& pts, double tol) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return lex_less(a, b); });
  PointList<D> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    bool dup = false;
    // Near-duplicates can be separated by a few entries in lexicographic order.
    for (auto it = out.rbegin(); it != out.rend() && it - out.rbegin() < 8; ++it) {
      if (dist(*it, p) <= tol) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(p);
  }
  pts = std::move(out);
}

inline constexpr std::size_t kMaxSamples = 20'000'000;

inline void check_sample_budget(double count) {
  if (!(count <= static_cast<double>(kMaxSamples)))
    throw ResourceError("sampling would produce more than 2e7 points; increase resolution");
}

template <std::size_t D>
void sample_segment(const Point<D>& a, const Point<D>& b, double h, PointList<D>& out) {
  const double len = dist(a, b);
  const double steps = std::max(1.0, std::ceil(len / h - 1e-9));
  check_sample_budget(steps + static_cast<double>(out.size()));
  const auto n = static_cast<std::size_t>(steps);
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n);
    out.push_back(a + (b - a) * t);
  }
}

template <std::size_t D>
void sample_sphere(const Sphere<D>& s, double h, PointList<D>& out) {
  const double pi = std::numbers::pi;
  if constexpr (D == 1) {
    out.push_back(s.center - unit_axis<1>(0) * s.radius);
    out.push_back(s.center + unit_axis<1>(0) * s.radius);
  } else if constexpr (D == 2) {
    const double steps = std::max(3.0, std::ceil(2.0 * pi * s.radius / h - 1e-9));
    check_sample_budget(steps + static_cast<double>(out.size()));
    const auto n = static_cast<std::size_t>(steps);
    for (std::size_t k = 0; k < n; ++k) {
      const double th = 2.0 * pi * static_cast<double>(k) / static_cast<double>(n);
      out.push_back(s.center + Point<2>{{std::cos(th), std::sin(th)}} * s.radius);
    }
  } else {
    const double rings = std::max(2.0, std::ceil(pi * s.radius / h - 1e-9));
    check_sample_budget(rings * rings * 4.0 + static_cast<double>(out.size()));
    const auto nlat = static_cast<std::size_t>(rings);
    for (std::size_t i = 0; i <= nlat; ++i) {
      const double th = pi * static_cast<double>(i) / static_cast<double>(nlat);
      const double ring_r = s.radius * std::sin(th);
      const auto nlon =
          static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * pi * ring_r / h - 1e-9)));
      for (std::size_t k = 0; k < nlon; ++k) {
        const double ph = 2.0 * pi * static_cast<double>(k) / static_cast<double>(nlon);
        out.push_back(s.center + Point<3>{{std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph),
                                           std::cos(th)}} *
                                     s.radius);
      }
    }
  }
}

}  // namespace detail

/// A closed constraint set S with an exact nearest-point oracle.
///
/// Instances are immutable after construction and safe to share across threads.
/// Ties between equidistant minimizers are resolved by lexicographic order; a
/// continuum of minimizers (query at the center of a circle or sphere) reports
/// the angle-0 point and tie_count == kContinuumTies.
template <std::size_t D>
class ConstraintSet {
 public:
  /// `proj_tol <= 0` selects the default 1e-12 * max(diameter, 1).
  explicit ConstraintSet(Shape<D> shape, double proj_tol = 0.0) : shape_(std::move(shape)) {
    validate();
    box_ = compute_box();
    const double diam = box_.diameter();
    proj_tol_ = proj_tol > 0.0 ? proj_tol : 1e-12 * std::max(diam, 1.0);
  }

  const Shape<D>& shape() const { return shape_; }
  double proj_tol() const { return proj_tol_; }
  const Box<D>& bbox() const { return box_; }
  double diameter() const { return box_.diameter(); }

  ProjectionResult<D> project(const Point<D>& p) const {
    if (!is_finite(p)) throw NumericalError("projection query has non-finite coordinates");
    std::vector<detail::Candidate<D>> cands;
    collect(p, cands);
    return finalize(cands);
  }

  /// Distance from p to S.
  double distance(const Point<D>& p) const { return project(p).distance; }

  bool contains(const Point<D>& p) const { return distance(p) <= proj_tol_; }

  /// Conservative: true only for balls, segments, two-vertex polylines and single points.
  bool convex() const {
    if (std::holds_alternative<ClosedBall<D>>(shape_) || std::holds_alternative<Segment<D>>(shape_)) return true;
    if (const auto* pl = std::get_if<Polyline<D>>(&shape_)) return pl->vertices.size() <= 2;
    if (const auto* fp = std::get_if<FinitePointSet<D>>(&shape_)) return fp->points.size() == 1;
    return false;
  }

  /// Finite subset of S within Hausdorff distance `resolution` of S.
  PointList<D> sample(double resolution) const {
    if (!(resolution > 0.0)) throw UsageError("sample resolution must be positive");
    PointList<D> out;
    sample_into(resolution, out);
    detail::dedupe_points(out, proj_tol_);
    return out;
  }

 private:
  Shape<D> shape_;
  Box<D> box_;
  double proj_tol_ = 1e-12;

  void validate() const {
    std::visit(
        [](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, ClosedBall<D>> || std::is_same_v<T, Sphere<D>>) {
            detail::check_finite(s.center, "center");
            detail::check_positive(s.radius, "radius");
          } else if constexpr (std::is_same_v<T, Segment<D>>) {
            detail::check_finite(s.a, "segment endpoint");
            detail::check_finite(s.b, "segment endpoint");
            if (dist(s.a, s.b) == 0.0) throw ConfigError("segment endpoints coincide");
          } else if constexpr (std::is_same_v<T, Polyline<D>>) {
            if (s.vertices.size() < 2) throw ConfigError("polyline needs at least 2 vertices");
            for (std::size_t i = 0; i < s.vertices.size(); ++i) {
              detail::check_finite(s.vertices[i], "polyline vertex");
              if (i > 0 && dist(s.vertices[i - 1], s.vertices[i]) == 0.0)
                throw ConfigError("polyline has repeated consecutive vertices");
            }
          } else if constexpr (std::is_same_v<T, CantorSegment<D>>) {
            detail::check_finite(s.a, "cantor endpoint");
            detail::check_finite(s.b, "cantor endpoint");
            if (dist(s.a, s.b) == 0.0) throw ConfigError("cantor segment endpoints coincide");
            if (s.depth < 0 || s.depth > 40) throw ConfigError("cantor depth must lie in [0, 40]");
          } else if constexpr (std::is_same_v<T, FinitePointSet<D>>) {
            if (s.points.empty()) throw ConfigError("finite point set is empty");
            for (const auto& p : s.points) detail::check_finite(p, "point");
          } else {
            if (s.members.empty()) throw ConfigError("union has no members");
          }
        },
        shape_);
  }

  Box<D> compute_box() const {
    auto b = Box<D>::empty();
    std::visit(
        [&b](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, ClosedBall<D>> || std::is_same_v<T, Sphere<D>>) {
            Point<D> r;
            for (std::size_t i = 0; i < D; ++i) r[i] = s.radius;
            b.expand(s.center - r);
            b.expand(s.center + r);
          } else if constexpr (std::is_same_v<T, Segment<D>> || std::is_same_v<T, CantorSegment<D>>) {
            b.expand(s.a);
            b.expand(s.b);
          } else if constexpr (std::is_same_v<T, Polyline<D>>) {
            for (const auto& v : s.vertices) b.expand(v);
          } else if constexpr (std::is_same_v<T, FinitePointSet<D>>) {
            for (const auto& v : s.points) b.expand(v);
          } else {
            for (const auto& m : s.members) b.expand(m.bbox());
          }
        },
        shape_);
    return b;
  }

  static void add_segment_candidate(const Point<D>& p, const Point<D>& a, const Point<D>& b,
                                    std::vector<detail::Candidate<D>>& out) {
    const Point<D> ab = b - a;
    const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
    const Point<D> q = a + ab * t;
    out.push_back({q, dist(p, q), std::nullopt});
  }

  void collect(const Point<D>& p, std::vector<detail::Candidate<D>>& out) const {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, ClosedBall<D>>) {
            const double r = dist(p, s.center);
            if (r <= s.radius) {
              out.push_back({p, 0.0, std::nullopt});
            } else {
              const Point<D> q = s.center + (p - s.center) * (s.radius / r);
              out.push_back({q, dist(p, q), std::nullopt});
            }
          } else if constexpr (std::is_same_v<T, Sphere<D>>) {
            const double r = dist(p, s.center);
            if constexpr (D == 1) {
              const Point<D> lo = s.center - unit_axis<1>(0) * s.radius;
              const Point<D> hi = s.center + unit_axis<1>(0) * s.radius;
              out.push_back({lo, dist(p, lo), std::nullopt});
              out.push_back({hi, dist(p, hi), std::nullopt});
            } else if (r <= proj_tol_) {
              out.push_back({s.center + unit_axis<D>(0) * s.radius, s.radius, s});
            } else {
              const Point<D> q = s.center + (p - s.center) * (s.radius / r);
              out.push_back({q, dist(p, q), std::nullopt});
            }
          } else if constexpr (std::is_same_v<T, Segment<D>>) {
            add_segment_candidate(p, s.a, s.b, out);
          } else if constexpr (std::is_same_v<T, Polyline<D>>) {
            for (std::size_t i = 0; i + 1 < s.vertices.size(); ++i)
              add_segment_candidate(p, s.vertices[i], s.vertices[i + 1], out);
          } else if constexpr (std::is_same_v<T, CantorSegment<D>>) {
            const Point<D> ab = s.b - s.a;
            const double len2 = dot(ab, ab);
            const double len = std::sqrt(len2);
            const double t0 = dot(p - s.a, ab) / len2;
            for (double t : detail::nearest_cantor_params(t0, s.depth, proj_tol_ / len)) {
              const Point<D> q = s.a + ab * t;
              out.push_back({q, dist(p, q), std::nullopt});
            }
          } else if constexpr (std::is_same_v<T, FinitePointSet<D>>) {
            for (const auto& q : s.points) out.push_back({q, dist(p, q), std::nullopt});
          } else {
            for (const auto& m : s.members) {
              const auto r = m.project(p);
              for (const auto& q : r.all_minimizers) out.push_back({q, r.distance, std::nullopt});
              for (const auto& sph : r.continuum) out.push_back({r.representative, r.distance, sph});
            }
          }
        },
        shape_);
  }

  ProjectionResult<D> finalize(const std::vector<detail::Candidate<D>>& cands) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cands) best = std::min(best, c.distance);
    ProjectionResult<D> res;
    res.distance = best;
    PointList<D> mins;
    for (const auto& c : cands) {
      if (c.distance > best + proj_tol_) continue;
      mins.push_back(c.point);
      if (c.continuum) res.continuum.push_back(*c.continuum);
    }
    detail::dedupe_points(mins, proj_tol_);
    res.representative = mins.front();
    if (!res.continuum.empty()) {
      res.tie_count = kContinuumTies;
    } else {
      res.tie_count = static_cast<int>(mins.size());
    }
    if (mins.size() > kMaxListedMinimizers) mins.resize(kMaxListedMinimizers);
    res.all_minimizers = std::move(mins);
    return res;
  }

  void sample_into(double h, PointList<D>& out) const {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, ClosedBall<D>>) {
            // Grid at spacing h/sqrt(D) keeps every ball point within h/2 of a grid node or,
            // near the rim, of the boundary samples taken at h/2.
            const double g = h / std::sqrt(static_cast<double>(D));
            const double cells = std::ceil(s.radius / g);
            check_grid(cells);
            const auto m = static_cast<long>(cells);
            Point<D> q;
            std::array<long, D> idx{};
            idx.fill(-m);
            while (true) {
              for (std::size_t i = 0; i < D; ++i) q[i] = s.center[i] + g * static_cast<double>(idx[i]);
              if (dist(q, s.center) <= s.radius) out.push_back(q);
              std::size_t i = 0;
              while (i < D && ++idx[i] > m) idx[i++] = -m;
              if (i == D) break;
            }
            detail::sample_sphere(Sphere<D>{s.center, s.radius}, h / 2.0, out);
          } else if constexpr (std::is_same_v<T, Sphere<D>>) {
            detail::sample_sphere(s, h, out);
          } else if constexpr (std::is_same_v<T, Segment<D>>) {
            detail::sample_segment(s.a, s.b, h, out);
          } else if constexpr (std::is_same_v<T, Polyline<D>>) {
            for (std::size_t i = 0; i + 1 < s.vertices.size(); ++i)
              detail::sample_segment(s.vertices[i], s.vertices[i + 1], h, out);
          } else if constexpr (std::is_same_v<T, CantorSegment<D>>) {
            const double len = dist(s.a, s.b);
            int level = 0;
            while (level < s.depth && len * std::pow(3.0, -level) > h) ++level;
            detail::check_sample_budget(std::ldexp(1.0, level));
            const double ilen = std::pow(3.0, -level);
            const std::size_t count = std::size_t{1} << level;
            for (std::size_t k = 0; k < count; ++k) {
              // Left endpoint of the k-th interval: ternary digits 0/2 from the bits of k.
              double left = 0.0;
              for (int j = 0; j < level; ++j)
                if ((k >> (level - 1 - j)) & 1U) left += 2.0 * std::pow(3.0, -(j + 1));
              const Point<D> lo = s.a + (s.b - s.a) * left;
              const Point<D> hi = s.a + (s.b - s.a) * (left + ilen);
              if (len * ilen <= h) {
                out.push_back(lo);
              } else {
                detail::sample_segment(lo, hi, h, out);
              }
            }
          } else if constexpr (std::is_same_v<T, FinitePointSet<D>>) {
            out.insert(out.end(), s.points.begin(), s.points.end());
          } else {
            for (const auto& m : s.members) m.sample_into(h, out);
          }
        },
        shape_);
  }

  static void check_grid(double cells) {
    detail::check_sample_budget(std::pow(2.0 * cells + 1.0, static_cast<double>(D)));
  }

  template <std::size_t E>
  friend class ConstraintSet;
};

/// Pointwise projection through the deterministic selector.
template <std::size_t D>
std::pair<PointList<D>, std::vector<double>> project_set(const ConstraintSet<D>& S,
                                                         std::span<const Point<D>> pts) {
  if (pts.empty()) throw UsageError("project_set needs at least one point");
  std::pair<PointList<D>, std::vector<double>> out;
  out.first.reserve(pts.size());
  out.second.reserve(pts.size());
  for (const auto& p : pts) {
    const auto r = S.project(p);
    out.first.push_back(r.representative);
    out.second.push_back(r.distance);
  }
  return out;
}

/// Finite sample of the full (multivalued) image pi_S(pts): every listed minimizer,
/// with continuum minimizer sets expanded at `resolution`.
template <std::size_t D>
PointList<D> projection_image_sample(const ConstraintSet<D>& S, std::span<const Point<D>> pts,
                                     double resolution) {
  PointList<D> out;
  for (const auto& p : pts) {
    const auto r = S.project(p);
    out.insert(out.end(), r.all_minimizers.begin(), r.all_minimizers.end());
    for (const auto& sph : r.continuum) detail::sample_sphere(sph, resolution, out);
  }
  detail::dedupe_points(out, S.proj_tol());
  return out;
}

}  // namespace cquant
