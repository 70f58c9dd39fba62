#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "cquant/point.hpp"

namespace oracle {

using cquant::Point;

/// Minimum distance from p to a polyline, by dense parametric sampling (step <= h per edge).
template <std::size_t D>
double polyline_distance_dense(const Point<D>& p, const std::vector<Point<D>>& verts, double h) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < verts.size(); ++i) {
    const double len = cquant::dist(verts[i], verts[i + 1]);
    const int steps = std::max(1, static_cast<int>(std::ceil(len / h)));
    for (int k = 0; k <= steps; ++k) {
      const auto q = verts[i] + (verts[i + 1] - verts[i]) * (static_cast<double>(k) / steps);
      best = std::min(best, cquant::dist(p, q));
    }
  }
  return best;
}

/// Minimum distance from p to a circle by angular sampling.
inline double circle_distance_dense(const Point<2>& p, const Point<2>& c, double radius, int samples) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples; ++k) {
    const double th = 2.0 * std::numbers::pi * k / samples;
    best = std::min(best, cquant::dist(p, Point<2>{{c[0] + radius * std::cos(th), c[1] + radius * std::sin(th)}}));
  }
  return best;
}

/// Minimum distance from p to a closed disc by a polar grid (radial and angular).
inline double disc_distance_dense(const Point<2>& p, const Point<2>& c, double radius, int rings, int samples) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= rings; ++i) {
    const double rr = radius * i / rings;
    for (int k = 0; k < samples; ++k) {
      const double th = 2.0 * std::numbers::pi * k / samples;
      best = std::min(best, cquant::dist(p, Point<2>{{c[0] + rr * std::cos(th), c[1] + rr * std::sin(th)}}));
    }
  }
  return best;
}

/// Exact optimal weighted 1D k-means (squared error) by dynamic programming over sorted data:
/// optimal cells are contiguous runs. Returns the minimal sum of w (x - c)^2.
inline double kmeans_1d_exact(std::vector<double> xs, std::vector<double> ws, std::size_t k) {
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  const std::size_t m = xs.size();
  std::vector<double> W(m + 1, 0.0), S1(m + 1, 0.0), S2(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double x = xs[order[i]], w = ws[order[i]];
    W[i + 1] = W[i] + w;
    S1[i + 1] = S1[i] + w * x;
    S2[i + 1] = S2[i] + w * x * x;
  }
  // cost of run [i, j)
  auto cost = [&](std::size_t i, std::size_t j) {
    const double w = W[j] - W[i];
    if (w <= 0.0) return 0.0;
    const double s = S1[j] - S1[i];
    return std::max(0.0, (S2[j] - S2[i]) - s * s / w);
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = cost(0, j);
  for (std::size_t c = 2; c <= k; ++c) {
    for (std::size_t j = 0; j <= m; ++j) {
      double best = prev[j];
      for (std::size_t i = 0; i < j; ++i) best = std::min(best, prev[i] + cost(i, j));
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

/// Deterministic uniform draws for property tests.
class Rng {
 public:
  explicit Rng(unsigned seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  template <std::size_t D>
  Point<D> point(double lo, double hi) {
    Point<D> p;
    for (std::size_t i = 0; i < D; ++i) p[i] = uniform(lo, hi);
    return p;
  }

 private:
  std::mt19937 gen_;
};

}  // namespace oracle
