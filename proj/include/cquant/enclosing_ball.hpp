#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cquant/point.hpp"

namespace cquant {

template <std::size_t D>
struct EnclosingBall {
  Point<D> center;
  double radius2 = -1.0;

  bool valid() const { return radius2 >= 0.0; }
  double radius() const { return valid() ? std::sqrt(radius2) : 0.0; }
  bool contains(const Point<D>& p) const {
    return valid() && dist2(p, center) <= radius2 * (1.0 + 1e-10) + 1e-24;
  }
};

namespace detail {

/// Smallest ball with every point of R on its boundary (center in the affine hull of R).
/// Falls back to the farthest pair when R is affinely degenerate.
template <std::size_t D>
EnclosingBall<D> boundary_ball(const std::vector<Point<D>>& R) {
  EnclosingBall<D> b;
  if (R.empty()) return b;
  if (R.size() == 1) {
    b.center = R[0];
    b.radius2 = 0.0;
    return b;
  }
  const std::size_t k = R.size() - 1;
  std::vector<Point<D>> v(k);
  for (std::size_t i = 0; i < k; ++i) v[i] = R[i + 1] - R[0];
  // Gram system G lambda = diag(G) / 2, solved with partial pivoting.
  std::vector<std::vector<double>> G(k, std::vector<double>(k + 1));
  double scale = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) G[i][j] = dot(v[i], v[j]);
    G[i][k] = 0.5 * G[i][i];
    scale = std::max(scale, G[i][i]);
  }
  bool singular = false;
  for (std::size_t c = 0; c < k && !singular; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::abs(G[r][c]) > std::abs(G[piv][c])) piv = r;
    if (std::abs(G[piv][c]) <= 1e-12 * scale) {
      singular = true;
      break;
    }
    std::swap(G[piv], G[c]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const double f = G[r][c] / G[c][c];
      for (std::size_t j = c; j <= k; ++j) G[r][j] -= f * G[c][j];
    }
  }
  if (singular) {
    std::size_t bi = 0, bj = 1;
    double best = -1.0;
    for (std::size_t i = 0; i < R.size(); ++i)
      for (std::size_t j = i + 1; j < R.size(); ++j)
        if (dist2(R[i], R[j]) > best) {
          best = dist2(R[i], R[j]);
          bi = i;
          bj = j;
        }
    b.center = (R[bi] + R[bj]) * 0.5;
    b.radius2 = 0.0;
    for (const auto& p : R) b.radius2 = std::max(b.radius2, dist2(p, b.center));
    return b;
  }
  b.center = R[0];
  for (std::size_t i = 0; i < k; ++i) b.center += v[i] * (G[i][k] / G[i][i]);
  b.radius2 = 0.0;
  for (const auto& p : R) b.radius2 = std::max(b.radius2, dist2(p, b.center));
  return b;
}

/// Move-to-front recursion; R never exceeds D + 1 points.
template <std::size_t D>
EnclosingBall<D> mtf_ball(std::vector<Point<D>>& pts, std::size_t end, std::vector<Point<D>>& R) {
  auto b = boundary_ball<D>(R);
  if (R.size() == D + 1) return b;
  for (std::size_t i = 0; i < end; ++i) {
    if (b.contains(pts[i])) continue;
    R.push_back(pts[i]);
    b = mtf_ball<D>(pts, i, R);
    R.pop_back();
    std::rotate(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(i),
                pts.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  }
  return b;
}

}  // namespace detail

/// Minimum enclosing ball (Welzl, move-to-front). The input order is shuffled with a fixed
/// seed, so the result is deterministic.
template <std::size_t D>
EnclosingBall<D> min_enclosing_ball(std::span<const Point<D>> points) {
  std::vector<Point<D>> pts(points.begin(), points.end());
  if (pts.empty()) return {};
  std::mt19937_64 rng(0x5eedULL);
  std::shuffle(pts.begin(), pts.end(), rng);
  std::vector<Point<D>> R;
  auto b = detail::mtf_ball<D>(pts, pts.size(), R);
  // Cover points admitted by the containment slack.
  for (const auto& p : points) b.radius2 = std::max(b.radius2, dist2(p, b.center));
  return b;
}

}  // namespace cquant
