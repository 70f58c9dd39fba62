#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace cquant {

/// Fixed-dimension Euclidean point. Supported dimensions are 1, 2 and 3.
template <std::size_t D>
struct Point {
  static_assert(D >= 1 && D <= 3, "cquant supports D in {1,2,3}");
  std::array<double, D> x{};

  constexpr double& operator[](std::size_t i) { return x[i]; }
  constexpr double operator[](std::size_t i) const { return x[i]; }

  Point& operator+=(const Point& o) {
    for (std::size_t i = 0; i < D; ++i) x[i] += o.x[i];
    return *this;
  }
  Point& operator-=(const Point& o) {
    for (std::size_t i = 0; i < D; ++i) x[i] -= o.x[i];
    return *this;
  }
  Point& operator*=(double s) {
    for (auto& v : x) v *= s;
    return *this;
  }

  friend Point operator+(Point a, const Point& b) { return a += b; }
  friend Point operator-(Point a, const Point& b) { return a -= b; }
  friend Point operator*(Point a, double s) { return a *= s; }
  friend Point operator*(double s, Point a) { return a *= s; }
  friend bool operator==(const Point&, const Point&) = default;
};

template <std::size_t D>
using PointList = std::vector<Point<D>>;

template <std::size_t D>
double dot(const Point<D>& a, const Point<D>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < D; ++i) s += a[i] * b[i];
  return s;
}

template <std::size_t D>
double norm(const Point<D>& a) {
  return std::sqrt(dot(a, a));
}

template <std::size_t D>
double dist2(const Point<D>& a, const Point<D>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

template <std::size_t D>
double dist(const Point<D>& a, const Point<D>& b) {
  return std::sqrt(dist2(a, b));
}

/// Strict lexicographic order on coordinates; drives every tie-break.
template <std::size_t D>
bool lex_less(const Point<D>& a, const Point<D>& b) {
  for (std::size_t i = 0; i < D; ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

template <std::size_t D>
bool is_finite(const Point<D>& a) {
  for (double v : a.x)
    if (!std::isfinite(v)) return false;
  return true;
}

template <std::size_t D>
Point<D> unit_axis(std::size_t axis) {
  Point<D> p;
  p[axis] = 1.0;
  return p;
}

/// Axis-aligned bounding box.
template <std::size_t D>
struct Box {
  Point<D> lo;
  Point<D> hi;

  static Box empty() {
    Box b;
    for (std::size_t i = 0; i < D; ++i) {
      b.lo[i] = std::numeric_limits<double>::infinity();
      b.hi[i] = -std::numeric_limits<double>::infinity();
    }
    return b;
  }
  void expand(const Point<D>& p) {
    for (std::size_t i = 0; i < D; ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  }
  void expand(const Box& o) {
    expand(o.lo);
    expand(o.hi);
  }
  double diameter() const {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      const double e = hi[i] - lo[i];
      if (e > 0) s += e * e;
    }
    return std::sqrt(s);
  }
};

template <std::size_t D>
Box<D> bounding_box(std::span<const Point<D>> pts) {
  auto b = Box<D>::empty();
  for (const auto& p : pts) b.expand(p);
  return b;
}

/// Minimum distance from `p` to a finite set; +inf for an empty set.
template <std::size_t D>
double distance_to_set(const Point<D>& p, std::span<const Point<D>> set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : set) best = std::min(best, dist2(p, q));
  return std::sqrt(best);
}

/// Hausdorff distance between two finite nonempty sets.
template <std::size_t D>
double hausdorff(std::span<const Point<D>> a, std::span<const Point<D>> b) {
  double h = 0.0;
  for (const auto& p : a) h = std::max(h, distance_to_set<D>(p, b));
  for (const auto& q : b) h = std::max(h, distance_to_set<D>(q, a));
  return h;
}

}  // namespace cquant
