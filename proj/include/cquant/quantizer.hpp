#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cquant/enclosing_ball.hpp"
#include "cquant/errors.hpp"
#include "cquant/geometry.hpp"
#include "cquant/measures.hpp"
#include "cquant/point.hpp"

namespace cquant {

inline constexpr double kInfinityOrder = std::numeric_limits<double>::infinity();

inline bool is_infinite_order(double r) { return std::isinf(r) && r > 0; }

inline void check_order(double r) {
  if (std::isnan(r) || r < 1.0) throw UsageError("quantization order r must be >= 1 or inf");
}

template <std::size_t D>
struct Codebook {
  PointList<D> points;
  double r = 2.0;
  std::uint64_t seed = 0;
  bool converged = false;
};

struct Assignment {
  std::vector<std::size_t> owner;
  std::vector<double> dist;
};

/// Nearest codepoint per atom; ties go to the lowest index.
template <std::size_t D>
Assignment assign(const DiscreteMeasure<D>& P, std::span<const Point<D>> codebook) {
  if (codebook.empty()) throw UsageError("assign needs a nonempty codebook");
  Assignment a;
  a.owner.resize(P.size());
  a.dist.resize(P.size());
  for (std::size_t j = 0; j < P.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < codebook.size(); ++i) {
      const double d = dist2(P.atoms()[j], codebook[i]);
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    a.owner[j] = arg;
    a.dist[j] = std::sqrt(best);
  }
  return a;
}

/// (sum_j w_j d_j^r)^(1/r), or the max over the support for r = inf.
inline double lr_norm(std::span<const double> weights, std::span<const double> d, double r) {
  check_order(r);
  if (is_infinite_order(r)) {
    double m = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j)
      if (weights[j] > 0.0) m = std::max(m, d[j]);
    return m;
  }
  double s = 0.0;
  if (r == 1.0) {
    for (std::size_t j = 0; j < d.size(); ++j) s += weights[j] * d[j];
    return s;
  }
  if (r == 2.0) {
    for (std::size_t j = 0; j < d.size(); ++j) s += weights[j] * d[j] * d[j];
    return std::sqrt(s);
  }
  for (std::size_t j = 0; j < d.size(); ++j) s += weights[j] * std::pow(d[j], r);
  return std::pow(s, 1.0 / r);
}

template <std::size_t D>
double error(const DiscreteMeasure<D>& P, std::span<const Point<D>> codebook, double r) {
  const auto a = assign(P, codebook);
  return lr_norm(P.weights(), a.dist, r);
}

/// Limit error as n -> inf, evaluated directly from projection distances.
template <std::size_t D>
double e_infinity(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, double r) {
  const auto [images, d] = project_set<D>(S, P.atoms());
  return lr_norm(P.weights(), d, r);
}

struct SolverOptions {
  int restarts = 16;
  int max_iters = 500;
  double tol = 1e-10;
  std::uint64_t seed = 0;
  /// 0 = hardware concurrency.
  int threads = 1;
  /// Projected-descent iterations per cell for finite r != 2.
  int inner_iters = 100;
};

template <std::size_t D>
struct SolveResult {
  Codebook<D> codebook;
  double error = 0.0;
  int iters = 0;
  int restarts = 0;
  std::uint64_t best_seed = 0;
  /// Set when n exceeds the atom count, so fewer than n distinct points may be returned.
  bool n_exceeds_atoms = false;
};

namespace detail {

template <std::size_t D>
void check_measure_finite(const DiscreteMeasure<D>& P) {
  for (const auto& x : P.atoms())
    if (!is_finite(x)) throw NumericalError("measure has non-finite atoms");
}

/// Drops duplicate codepoints (within tol), keeping first occurrences in order.
template <std::size_t D>
PointList<D> unique_in_order(const PointList<D>& pts, double tol) {
  PointList<D> out;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : out)
      if (dist(p, q) <= tol) {
        dup = true;
        break;
      }
    if (!dup) out.push_back(p);
  }
  return out;
}

/// Reseeds codepoints owning no mass at the projections of the currently worst-served atoms.
template <std::size_t D>
void repair_empty_cells(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S,
                        PointList<D>& cb, const std::vector<double>& cell_mass, Assignment& asg) {
  for (std::size_t i = 0; i < cb.size(); ++i) {
    if (cell_mass[i] > 0.0) continue;
    std::size_t worst = 0;
    double wd = -1.0;
    for (std::size_t j = 0; j < P.size(); ++j) {
      if (P.weights()[j] > 0.0 && asg.dist[j] > wd) {
        wd = asg.dist[j];
        worst = j;
      }
    }
    const auto pr = S.project(P.atoms()[worst]);
    cb[i] = pr.representative;
    asg.dist[worst] = pr.distance;
    asg.owner[worst] = i;
  }
}

template <std::size_t D>
std::vector<double> cell_masses(const DiscreteMeasure<D>& P, const Assignment& a, std::size_t n) {
  std::vector<double> m(n, 0.0);
  for (std::size_t j = 0; j < P.size(); ++j) m[a.owner[j]] += P.weights()[j];
  return m;
}

/// Systematic init: atoms at mass quantiles (i + 1/2)/n in storage order, projected to S.
template <std::size_t D>
PointList<D> quantile_init(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, std::size_t n) {
  PointList<D> cb;
  double cum = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    while (j + 1 < P.size() && cum + P.weights()[j] < target) cum += P.weights()[j++];
    cb.push_back(S.project(P.atoms()[j]).representative);
  }
  return cb;
}

/// D^2 seeding over the projected atoms T(x_j).
template <std::size_t D>
PointList<D> seeded_init(const DiscreteMeasure<D>& P, const PointList<D>& images, std::size_t n,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(P.weights().begin(), P.weights().end());
  PointList<D> cb{images[pick(rng)]};
  std::vector<double> d2(images.size());
  for (std::size_t j = 0; j < images.size(); ++j) d2[j] = dist2(images[j], cb[0]);
  while (cb.size() < n) {
    std::vector<double> score(images.size());
    double total = 0.0;
    for (std::size_t j = 0; j < images.size(); ++j) {
      score[j] = P.weights()[j] * d2[j];
      total += score[j];
    }
    std::size_t next;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> by_score(score.begin(), score.end());
      next = by_score(rng);
    } else {
      next = pick(rng);
    }
    cb.push_back(images[next]);
    for (std::size_t j = 0; j < images.size(); ++j) d2[j] = std::min(d2[j], dist2(images[j], cb.back()));
  }
  return cb;
}

/// Objective of one cell, sum_j w_j ||x_j - a||^r.
template <std::size_t D>
double cell_objective(const DiscreteMeasure<D>& P, std::span<const std::size_t> members,
                      const Point<D>& a, double r) {
  double s = 0.0;
  for (std::size_t j : members) s += P.weights()[j] * std::pow(dist(P.atoms()[j], a), r);
  return s;
}

/// Projected gradient with Armijo backtracking on one cell's objective.
template <std::size_t D>
Point<D> descend_cell(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S,
                      std::span<const std::size_t> members, Point<D> a, double r, int iters,
                      double tol) {
  constexpr double kArmijo = 1e-4;
  double f = cell_objective(P, members, a, r);
  for (int it = 0; it < iters; ++it) {
    Point<D> g;
    double wsum = 0.0;
    double dmean = 0.0;
    for (std::size_t j : members) {
      const double d = dist(P.atoms()[j], a);
      const double w = P.weights()[j];
      wsum += w;
      dmean += w * d;
      if (d > 0.0) g += (a - P.atoms()[j]) * (w * r * std::pow(d, r - 2.0));
    }
    if (!(wsum > 0.0) || norm(g) == 0.0) break;
    dmean /= wsum;
    const double scale = dmean > 0.0 ? std::pow(dmean, r - 2.0) : 1.0;
    double t = 1.0 / (r * wsum * scale);
    bool accepted = false;
    for (int h = 0; h < 50; ++h, t *= 0.5) {
      const Point<D> cand = S.project(a - g * t).representative;
      if (dist(cand, a) == 0.0) break;
      const double fc = cell_objective(P, members, cand, r);
      if (fc <= f + kArmijo * dot(g, cand - a)) {
        const double prev = f;
        a = cand;
        f = fc;
        accepted = true;
        if (prev - f <= tol * std::max(prev, 1e-300)) return a;
        break;
      }
    }
    if (!accepted) break;
  }
  return a;
}

struct RunStats {
  int iters = 0;
  bool converged = false;
};

/// Alternating minimization for finite r from a given start; returns the best iterate.
template <std::size_t D>
PointList<D> run_alternating(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S,
                             PointList<D> cb, double r, const SolverOptions& opts, RunStats& stats,
                             double& best_err) {
  auto asg = assign<D>(P, cb);
  double err = lr_norm(P.weights(), asg.dist, r);
  PointList<D> best = cb;
  best_err = err;
  for (int it = 1; it <= opts.max_iters; ++it) {
    stats.iters = it;
    auto mass = cell_masses(P, asg, cb.size());
    repair_empty_cells(P, S, cb, mass, asg);
    mass = cell_masses(P, asg, cb.size());
    if (r == 2.0) {
      std::vector<Point<D>> centroid(cb.size());
      for (std::size_t j = 0; j < P.size(); ++j)
        centroid[asg.owner[j]] += P.atoms()[j] * P.weights()[j];
      for (std::size_t i = 0; i < cb.size(); ++i)
        if (mass[i] > 0.0) cb[i] = S.project(centroid[i] * (1.0 / mass[i])).representative;
    } else {
      std::vector<std::vector<std::size_t>> members(cb.size());
      for (std::size_t j = 0; j < P.size(); ++j)
        if (P.weights()[j] > 0.0) members[asg.owner[j]].push_back(j);
      for (std::size_t i = 0; i < cb.size(); ++i)
        if (!members[i].empty())
          cb[i] = descend_cell<D>(P, S, members[i], cb[i], r, opts.inner_iters, opts.tol);
    }
    asg = assign<D>(P, cb);
    const double next = lr_norm(P.weights(), asg.dist, r);
    if (next < best_err) {
      best_err = next;
      best = cb;
    }
    const double change = err - next;
    err = next;
    if (std::abs(change) <= opts.tol * std::max(std::abs(err), 1e-300)) {
      stats.converged = true;
      break;
    }
  }
  return best;
}

/// Moves each codepoint to the candidate with the lowest cell objective when that beats the
/// current point, then descends from there. Needed on nonconvex S, where projected descent
/// cannot leave the component it starts on.
template <std::size_t D>
bool candidate_jumps(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, PointList<D>& cb,
                     const PointList<D>& candidates, double r, const SolverOptions& opts) {
  const auto asg = assign<D>(P, cb);
  std::vector<std::vector<std::size_t>> members(cb.size());
  for (std::size_t j = 0; j < P.size(); ++j)
    if (P.weights()[j] > 0.0) members[asg.owner[j]].push_back(j);
  bool moved = false;
  for (std::size_t i = 0; i < cb.size(); ++i) {
    if (members[i].empty()) continue;
    const double f0 = cell_objective(P, members[i], cb[i], r);
    double best = f0;
    std::optional<std::size_t> arg;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const double f = cell_objective(P, members[i], candidates[k], r);
      if (f < best) {
        best = f;
        arg = k;
      }
    }
    if (!arg || !(best < f0 * (1.0 - 1e-12))) continue;
    auto a = descend_cell<D>(P, S, members[i], candidates[*arg], r, opts.inner_iters, opts.tol);
    cb[i] = cell_objective(P, members[i], a, r) <= best ? a : candidates[*arg];
    moved = true;
  }
  return moved;
}

/// Worst-served atom under a codebook, with per-atom best and second-best distances.
template <std::size_t D>
struct CoverState {
  std::vector<double> best;
  std::vector<double> second;
  std::vector<std::size_t> owner;
};

template <std::size_t D>
CoverState<D> cover_state(const DiscreteMeasure<D>& P, const PointList<D>& cb) {
  CoverState<D> s;
  const auto n = P.size();
  s.best.assign(n, std::numeric_limits<double>::infinity());
  s.second.assign(n, std::numeric_limits<double>::infinity());
  s.owner.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < cb.size(); ++i) {
      const double d = dist(P.atoms()[j], cb[i]);
      if (d < s.best[j]) {
        s.second[j] = s.best[j];
        s.best[j] = d;
        s.owner[j] = i;
      } else if (d < s.second[j]) {
        s.second[j] = d;
      }
    }
  }
  return s;
}

template <std::size_t D>
double cover_radius(const DiscreteMeasure<D>& P, const CoverState<D>& s) {
  double m = 0.0;
  for (std::size_t j = 0; j < P.size(); ++j)
    if (P.weights()[j] > 0.0) m = std::max(m, s.best[j]);
  return m;
}

template <std::size_t D>
std::size_t nearest_index(const PointList<D>& pts, const Point<D>& q) {
  std::size_t arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double d = dist2(pts[k], q);
    if (d < best) {
      best = d;
      arg = k;
    }
  }
  return arg;
}

/// 1-swap local search for the max-min objective. Only candidates closer to the bottleneck
/// atom than its current server can lower the maximum, so the search is restricted to the
/// nearest 64 of those.
template <std::size_t D>
PointList<D> swap_search(const DiscreteMeasure<D>& P, const PointList<D>& candidates,
                         PointList<D> cb, int max_passes, int& passes) {
  constexpr std::size_t kNearest = 64;
  auto state = cover_state(P, cb);
  double radius = cover_radius(P, state);
  for (passes = 0; passes < max_passes; ++passes) {
    std::size_t bottleneck = 0;
    for (std::size_t j = 0; j < P.size(); ++j)
      if (P.weights()[j] > 0.0 && state.best[j] >= state.best[bottleneck]) {
        if (state.best[j] > state.best[bottleneck] || P.weights()[bottleneck] == 0.0) bottleneck = j;
      }
    const auto& xb = P.atoms()[bottleneck];
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const double d = dist(candidates[k], xb);
      if (d < state.best[bottleneck]) near.emplace_back(d, k);
    }
    std::sort(near.begin(), near.end());
    if (near.size() > kNearest) near.resize(kNearest);
    bool improved = false;
    for (const auto& [dc, k] : near) {
      const auto& c = candidates[k];
      for (std::size_t i = 0; i < cb.size() && !improved; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < P.size() && m < radius; ++j) {
          if (P.weights()[j] == 0.0) continue;
          const double keep = state.owner[j] == i ? state.second[j] : state.best[j];
          m = std::max(m, std::min(keep, dist(P.atoms()[j], c)));
        }
        if (m < radius * (1.0 - 1e-14)) {
          cb[i] = c;
          state = cover_state(P, cb);
          radius = cover_radius(P, state);
          improved = true;
        }
      }
      if (improved) break;
    }
    if (!improved) break;
  }
  return cb;
}

/// Farthest-point seeding over a candidate set, then 1-swap local search.
template <std::size_t D>
PointList<D> run_covering(const DiscreteMeasure<D>& P, const PointList<D>& candidates,
                          std::size_t n, std::uint64_t seed, bool first_restart, int max_passes,
                          int& passes) {
  PointList<D> cb;
  if (first_restart) {
    // Best single center among the candidates.
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      double m = 0.0;
      for (std::size_t j = 0; j < P.size() && m < best; ++j)
        if (P.weights()[j] > 0.0) m = std::max(m, dist(P.atoms()[j], candidates[k]));
      if (m < best) {
        best = m;
        arg = k;
      }
    }
    cb.push_back(candidates[arg]);
  } else {
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(P.weights().begin(), P.weights().end());
    cb.push_back(candidates[nearest_index(candidates, P.atoms()[pick(rng)])]);
  }
  std::vector<double> d(P.size());
  for (std::size_t j = 0; j < P.size(); ++j) d[j] = dist(P.atoms()[j], cb[0]);
  while (cb.size() < n) {
    std::size_t far = 0;
    double fd = -1.0;
    for (std::size_t j = 0; j < P.size(); ++j)
      if (P.weights()[j] > 0.0 && d[j] > fd) {
        fd = d[j];
        far = j;
      }
    cb.push_back(candidates[nearest_index(candidates, P.atoms()[far])]);
    for (std::size_t j = 0; j < P.size(); ++j) d[j] = std::min(d[j], dist(P.atoms()[j], cb.back()));
  }
  return swap_search(P, candidates, std::move(cb), max_passes, passes);
}

/// Unit directions for the pattern search: +-axis in 1D, 16 angles in 2D, 26 cube
/// neighbours in 3D.
template <std::size_t D>
PointList<D> pattern_directions() {
  PointList<D> dirs;
  if constexpr (D == 1) {
    dirs = {Point<1>{{1.0}}, Point<1>{{-1.0}}};
  } else if constexpr (D == 2) {
    for (int k = 0; k < 16; ++k) {
      const double th = 2.0 * std::numbers::pi * k / 16.0;
      dirs.push_back(Point<2>{{std::cos(th), std::sin(th)}});
    }
  } else {
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j)
        for (int k = -1; k <= 1; ++k) {
          if (i == 0 && j == 0 && k == 0) continue;
          Point<D> u;
          u[0] = i;
          u[1] = j;
          u[2] = k;
          dirs.push_back(u * (1.0 / norm(u)));
        }
  }
  return dirs;
}

template <std::size_t D>
double cell_max(const PointList<D>& members, const Point<D>& a) {
  double m = 0.0;
  for (const auto& x : members) m = std::max(m, dist(x, a));
  return m;
}

/// Constrained 1-center of a cell: the projected minimum-enclosing-ball center as a
/// candidate, then a projected pattern search with step halving.
template <std::size_t D>
Point<D> cell_center_inf(const ConstraintSet<D>& S, const PointList<D>& members, Point<D> a, double scale) {
  constexpr int kBudget = 800;
  double f = cell_max(members, a);
  const auto ball = min_enclosing_ball<D>(members);
  const Point<D> c = S.project(ball.center).representative;
  if (const double fc = cell_max(members, c); fc < f) {
    a = c;
    f = fc;
  }
  static const auto dirs = pattern_directions<D>();
  double t = std::max(ball.radius(), 1e-3 * scale) / 4.0;
  const double t_min = 1e-9 * std::max(scale, 1e-300);
  int evals = 0;
  while (t > t_min && evals < kBudget) {
    bool improved = false;
    for (const auto& u : dirs) {
      const Point<D> q = S.project(a + u * t).representative;
      const double fq = cell_max(members, q);
      ++evals;
      if (fq < f * (1.0 - 1e-15)) {
        a = q;
        f = fq;
        improved = true;
        break;
      }
    }
    if (!improved) t *= 0.5;
  }
  return a;
}

/// Alternates nearest-codepoint cells with per-cell 1-center updates; the max-min error is
/// nonincreasing and the best iterate is returned.
template <std::size_t D>
PointList<D> minimax_refine(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, PointList<D> cb,
                            int max_iters, double tol, int& iters) {
  const double scale = std::max(S.diameter(), bounding_box<D>(P.atoms()).diameter());
  double err = error<D>(P, cb, kInfinityOrder);
  PointList<D> best = cb;
  double best_err = err;
  for (iters = 0; iters < max_iters; ++iters) {
    const auto asg = assign<D>(P, cb);
    std::vector<PointList<D>> cells(cb.size());
    for (std::size_t j = 0; j < P.size(); ++j)
      if (P.weights()[j] > 0.0) cells[asg.owner[j]].push_back(P.atoms()[j]);
    for (std::size_t i = 0; i < cb.size(); ++i)
      if (!cells[i].empty()) cb[i] = cell_center_inf(S, cells[i], cb[i], scale);
    err = error<D>(P, cb, kInfinityOrder);
    const bool progress = err < best_err * (1.0 - tol);
    if (err < best_err) {
      best_err = err;
      best = cb;
    }
    if (!progress) break;
  }
  return best;
}

template <typename F>
void parallel_for(int count, int threads, F&& body) {
  int workers = threads <= 0 ? static_cast<int>(std::max(1U, std::thread::hardware_concurrency()))
                             : threads;
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int k = next++; k < count; k = next++) body(k);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// One Lloyd update for r = 2: every codepoint moves to the nearest point of S to its
/// cell's weighted centroid, which minimizes the cell objective over S exactly.
template <std::size_t D>
Codebook<D> lloyd_step_r2(const DiscreteMeasure<D>& P, const Codebook<D>& cb,
                          const ConstraintSet<D>& S) {
  if (cb.points.empty()) throw UsageError("lloyd_step_r2 needs a nonempty codebook");
  auto asg = assign<D>(P, cb.points);
  auto mass = detail::cell_masses(P, asg, cb.points.size());
  if (std::none_of(mass.begin(), mass.end(), [](double m) { return m > 0.0; }))
    throw UsageError("every cell is empty");
  Codebook<D> next = cb;
  detail::repair_empty_cells(P, S, next.points, mass, asg);
  mass = detail::cell_masses(P, asg, next.points.size());
  std::vector<Point<D>> centroid(next.points.size());
  for (std::size_t j = 0; j < P.size(); ++j) centroid[asg.owner[j]] += P.atoms()[j] * P.weights()[j];
  for (std::size_t i = 0; i < next.points.size(); ++i)
    if (mass[i] > 0.0) next.points[i] = S.project(centroid[i] * (1.0 / mass[i])).representative;
  next.r = 2.0;
  next.converged = false;
  return next;
}

/// Approximates an optimal constrained n-quantizer by multi-start local search.
///
/// r = 2 runs Lloyd iterations with projected centroids, other finite r use per-cell
/// projected gradient descent, and r = inf uses farthest-point seeding on a sample of S
/// followed by 1-swap search. Restart k uses seed opts.seed + k; restart 0 is the
/// deterministic quantile (r finite) or best-single-center (r = inf) start. `warm_start`,
/// when given, is run as one extra start. Ties between restarts go to the lowest seed.
template <std::size_t D>
SolveResult<D> solve(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, std::size_t n, double r,
                     const SolverOptions& opts = {},
                     std::optional<PointList<D>> warm_start = std::nullopt) {
  if (n < 1) throw UsageError("solve needs n >= 1");
  check_order(r);
  if (opts.restarts < 1) throw UsageError("restarts must be >= 1");
  detail::check_measure_finite(P);

  const auto [images, proj_dist] = project_set<D>(S, P.atoms());
  const int starts = opts.restarts + (warm_start ? 1 : 0);

  struct Run {
    PointList<D> cb;
    double err = std::numeric_limits<double>::infinity();
    int iters = 0;
    bool converged = false;
  };
  std::vector<Run> runs(static_cast<std::size_t>(starts));

  PointList<D> candidates;
  if (is_infinite_order(r)) {
    const auto box = bounding_box<D>(images);
    const double span = std::max(box.diameter(), S.proj_tol());
    candidates = images;
    if (box.diameter() > 0.0) {
      auto extra = S.sample(span / 64.0);
      candidates.insert(candidates.end(), extra.begin(), extra.end());
    }
    detail::dedupe_points(candidates, S.proj_tol());
  }
  // The projected centroid is the exact cell optimum at r = 2 whatever the shape of S.
  PointList<D> jump_candidates;
  if (!is_infinite_order(r) && r != 2.0 && !S.convex()) {
    const double span = std::max(bounding_box<D>(images).diameter(), S.diameter());
    if (span > 0.0) jump_candidates = S.sample(span / 64.0);
  }

  detail::parallel_for(starts, opts.threads, [&](int k) {
    auto& run = runs[static_cast<std::size_t>(k)];
    const bool warm = warm_start && k == opts.restarts;
    const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(k);
    if (is_infinite_order(r)) {
      PointList<D> start;
      int passes = 0;
      if (warm) {
        start = detail::swap_search(P, candidates, *warm_start, opts.max_iters, passes);
      } else {
        start = detail::run_covering(P, candidates, n, seed, k == 0, opts.max_iters, passes);
      }
      // Per-cell 1-center moves leave the candidate grid; a second swap pass can then
      // escape plateaus where several atoms share the bottleneck distance.
      int refine_iters = 0, more = 0;
      start = detail::minimax_refine(P, S, std::move(start), opts.max_iters, opts.tol, refine_iters);
      start = detail::swap_search(P, candidates, std::move(start), opts.max_iters, more);
      passes += refine_iters + more;
      start = detail::minimax_refine(P, S, std::move(start), opts.max_iters, opts.tol, refine_iters);
      passes += refine_iters;
      run.cb = std::move(start);
      run.err = error<D>(P, run.cb, r);
      run.iters = passes;
      run.converged = passes < opts.max_iters;
    } else {
      PointList<D> start;
      if (warm) {
        start = *warm_start;
      } else if (k == 0) {
        start = detail::quantile_init(P, S, n);
      } else {
        start = detail::seeded_init(P, images, n, seed);
      }
      detail::RunStats stats;
      run.cb = detail::run_alternating(P, S, std::move(start), r, opts, stats, run.err);
      run.iters = stats.iters;
      run.converged = stats.converged;
      // Each accepted jump lowers the objective strictly, so the loop terminates.
      for (int round = 0; !jump_candidates.empty() && round < opts.max_iters; ++round) {
        auto cb = run.cb;
        if (!detail::candidate_jumps<D>(P, S, cb, jump_candidates, r, opts)) break;
        detail::RunStats more;
        double e = 0.0;
        cb = detail::run_alternating(P, S, std::move(cb), r, opts, more, e);
        run.iters += more.iters;
        if (!(e < run.err)) break;
        run.cb = std::move(cb);
        run.err = e;
      }
    }
  });

  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k)
    if (runs[k].err < runs[best].err) best = k;

  if (is_infinite_order(r)) {
    // Refine candidates around the incumbent radius and polish the winner.
    const double h = runs[best].err / 8.0;
    if (h > S.proj_tol()) {
      try {
        auto fine = S.sample(h);
        fine.insert(fine.end(), candidates.begin(), candidates.end());
        detail::dedupe_points(fine, S.proj_tol());
        int passes = 0;
        auto polished = detail::swap_search(P, fine, runs[best].cb, opts.max_iters, passes);
        const double e = error<D>(P, polished, r);
        if (e < runs[best].err) {
          runs[best].cb = std::move(polished);
          runs[best].err = e;
          runs[best].iters += passes;
        }
      } catch (const ResourceError&) {
        // Too fine to enumerate; keep the coarse-candidate result.
      }
    }
  }

  SolveResult<D> res;
  res.codebook.points = detail::unique_in_order(runs[best].cb, S.proj_tol());
  res.codebook.r = r;
  res.codebook.seed = opts.seed + best;
  res.codebook.converged = runs[best].converged;
  res.error = error<D>(P, res.codebook.points, r);
  res.iters = runs[best].iters;
  res.restarts = starts;
  res.best_seed = opts.seed + best;
  res.n_exceeds_atoms = n > P.size();
  return res;
}

/// Exact minimum of the error over all n-subsets of `candidates`.
template <std::size_t D>
SolveResult<D> brute_force_solve(const DiscreteMeasure<D>& P, const PointList<D>& candidates,
                                 std::size_t n, double r) {
  check_order(r);
  if (n < 1) throw UsageError("brute_force_solve needs n >= 1");
  if (candidates.empty()) throw UsageError("brute_force_solve needs candidates");
  const std::size_t c = candidates.size();
  const std::size_t k = std::min(n, c);
  double subsets = 1.0;
  for (std::size_t i = 0; i < k; ++i) subsets = subsets * static_cast<double>(c - i) / static_cast<double>(i + 1);
  if (subsets > 2e6) throw ResourceError("brute force enumeration exceeds 2e6 subsets");
  const std::size_t m = P.size();
  const bool inf = is_infinite_order(r);

  // cost[k][j] = d(x_j, candidate_k)^r, or the plain distance for r = inf.
  std::vector<double> cost(c * m);
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = dist(P.atoms()[j], candidates[a]);
      cost[a * m + j] = inf ? d : (r == 1.0 ? d : (r == 2.0 ? d * d : std::pow(d, r)));
    }

  std::vector<std::vector<double>> level(k + 1, std::vector<double>(m, std::numeric_limits<double>::infinity()));
  std::vector<std::size_t> idx(k);
  std::vector<std::size_t> best_idx;
  double best = std::numeric_limits<double>::infinity();

  auto evaluate = [&](const std::vector<double>& mins) {
    double v = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (P.weights()[j] == 0.0) continue;
      v = inf ? std::max(v, mins[j]) : v + P.weights()[j] * mins[j];
    }
    return v;
  };

  // Depth-first enumeration of increasing index tuples with running per-atom minima.
  auto recurse = [&](auto&& self, std::size_t depth, std::size_t start) -> void {
    for (std::size_t a = start; a + (k - depth) <= c; ++a) {
      idx[depth] = a;
      auto& cur = level[depth + 1];
      const auto& prev = level[depth];
      for (std::size_t j = 0; j < m; ++j) cur[j] = std::min(prev[j], cost[a * m + j]);
      if (depth + 1 == k) {
        const double v = evaluate(cur);
        if (v < best) {
          best = v;
          best_idx = idx;
        }
      } else {
        self(self, depth + 1, a + 1);
      }
    }
  };
  recurse(recurse, 0, 0);

  SolveResult<D> res;
  for (std::size_t a : best_idx) res.codebook.points.push_back(candidates[a]);
  res.codebook.r = r;
  res.codebook.converged = true;
  res.error = inf ? best : (r == 1.0 ? best : (r == 2.0 ? std::sqrt(best) : std::pow(best, 1.0 / r)));
  res.restarts = 1;
  return res;
}

template <std::size_t D>
struct ErrorRow {
  std::size_t n = 0;
  double r = 2.0;
  double e = 0.0;
  double e_inf = 0.0;
  double e_hat = 0.0;
  double e_tilde = 0.0;
  int iters = 0;
  int restarts = 0;
  std::uint64_t best_seed = 0;
  /// e^r - e_inf^r was negative (roundoff) and was clamped to 0.
  bool clamped = false;
  /// Codepoints lying on the sampled pi_S(K).
  std::size_t on_projection = 0;
  Codebook<D> codebook;
};

template <std::size_t D>
struct ErrorCurve {
  std::vector<ErrorRow<D>> rows;
};

/// Fills the excess-error fields of a row from e and e_inf.
template <std::size_t D>
void fill_excess(ErrorRow<D>& row) {
  row.e_tilde = row.e - row.e_inf;
  if (is_infinite_order(row.r)) {
    // The power-difference form degenerates at r = inf; both fields use the plain difference.
    row.clamped = row.e_tilde < 0.0;
    row.e_hat = std::max(row.e_tilde, 0.0);
    return;
  }
  const double radicand = std::pow(row.e, row.r) - std::pow(row.e_inf, row.r);
  row.clamped = radicand < 0.0;
  row.e_hat = radicand <= 0.0 ? 0.0 : std::pow(radicand, 1.0 / row.r);
}

namespace detail {

/// Extends a codebook to `target` points, each time adding the projection of the atom
/// currently worst served.
template <std::size_t D>
PointList<D> grow_codebook(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, PointList<D> cb,
                           std::size_t target) {
  auto asg = assign<D>(P, cb);
  while (cb.size() < target) {
    std::size_t worst = 0;
    double wd = -1.0;
    for (std::size_t j = 0; j < P.size(); ++j)
      if (P.weights()[j] > 0.0 && asg.dist[j] > wd) {
        wd = asg.dist[j];
        worst = j;
      }
    cb.push_back(S.project(P.atoms()[worst]).representative);
    for (std::size_t j = 0; j < P.size(); ++j) {
      const double d = dist(P.atoms()[j], cb.back());
      if (d < asg.dist[j]) {
        asg.dist[j] = d;
        asg.owner[j] = cb.size() - 1;
      }
    }
  }
  return cb;
}

}  // namespace detail

/// Per-n solves with e_inf from projections. Row k also warm-starts from row k-1's codebook
/// grown by farthest-point insertion, so e_n is nonincreasing along the curve.
template <std::size_t D>
ErrorCurve<D> error_curve(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S, double r,
                          const std::vector<std::size_t>& n_list, const SolverOptions& opts = {}) {
  if (n_list.empty()) throw UsageError("n_list is empty");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1]) throw UsageError("n_list must be strictly increasing");
  check_order(r);
  const double e_inf = e_infinity(P, S, r);
  const auto image = projection_image_sample<D>(S, P.atoms(), std::max(S.diameter(), 1.0) / 4096.0);
  ErrorCurve<D> curve;
  std::optional<PointList<D>> warm;
  for (std::size_t k = 0; k < n_list.size(); ++k) {
    const std::size_t n = n_list[k];
    auto sol = solve(P, S, n, r, opts, warm);
    ErrorRow<D> row;
    row.n = n;
    row.r = r;
    row.e = sol.error;
    row.e_inf = e_inf;
    row.iters = sol.iters;
    row.restarts = sol.restarts;
    row.best_seed = sol.best_seed;
    fill_excess(row);
    for (const auto& a : sol.codebook.points)
      if (distance_to_set<D>(a, image) <= S.proj_tol()) ++row.on_projection;
    row.codebook = sol.codebook;
    curve.rows.push_back(std::move(row));
    if (k + 1 < n_list.size()) warm = detail::grow_codebook(P, S, sol.codebook.points, n_list[k + 1]);
  }
  return curve;
}

template <std::size_t D>
struct LevelMass {
  double delta = 0.0;
  /// P({x : w(x, a_owner(x)) >= delta})
  double owner_mass = 0.0;
  /// P(F_delta) with S' = the codebook: P({x : w(x, a) >= delta for every codepoint a})
  double all_codepoints_mass = 0.0;
};

template <std::size_t D>
struct WeightDiagnostics {
  double lambda = 0.0;
  double term_weighted = 0.0;
  double term_lambda = 0.0;
  /// e_{n,1} - e_{inf,1} for the given codebook, computed directly.
  double e_hat1 = 0.0;
  double residual = 0.0;
  double max_abs_weight = 0.0;
  double min_weight = 0.0;
  std::vector<double> weights;
  std::vector<LevelMass<D>> level_masses;
};

/// Relative excess w(x, y) = (rho(x,y) - rho(x, pi(x))) / (lambda + rho(y, pi(x))).
template <std::size_t D>
double relative_excess(const Point<D>& x, const Point<D>& y, const Point<D>& px, double dx,
                       double lambda) {
  return (dist(x, y) - dx) / (lambda + dist(y, px));
}

/// Splits e_{n,1} - e_{inf,1} for codebook `cb` into the weighted-distance and lambda terms.
template <std::size_t D>
WeightDiagnostics<D> weight_decompose(const DiscreteMeasure<D>& P, const ConstraintSet<D>& S,
                                      std::span<const Point<D>> cb, double lambda,
                                      std::span<const double> delta_grid = {}) {
  if (!(lambda > 0.0)) throw UsageError("lambda must be positive");
  const auto asg = assign<D>(P, cb);
  const auto [images, pd] = project_set<D>(S, P.atoms());
  WeightDiagnostics<D> out;
  out.lambda = lambda;
  out.weights.resize(P.size());
  out.min_weight = std::numeric_limits<double>::infinity();
  double e1 = 0.0;
  double einf1 = 0.0;
  for (std::size_t j = 0; j < P.size(); ++j) {
    const auto& a = cb[asg.owner[j]];
    const double w = relative_excess(P.atoms()[j], a, images[j], pd[j], lambda);
    out.weights[j] = w;
    const double pw = P.weights()[j];
    out.term_weighted += pw * w * dist(a, images[j]);
    out.term_lambda += pw * w;
    e1 += pw * asg.dist[j];
    einf1 += pw * pd[j];
    out.max_abs_weight = std::max(out.max_abs_weight, std::abs(w));
    out.min_weight = std::min(out.min_weight, w);
  }
  out.term_lambda *= lambda;
  out.e_hat1 = e1 - einf1;
  out.residual = std::abs(out.term_weighted + out.term_lambda - out.e_hat1);
  for (double delta : delta_grid) {
    LevelMass<D> lm;
    lm.delta = delta;
    for (std::size_t j = 0; j < P.size(); ++j) {
      if (out.weights[j] >= delta) lm.owner_mass += P.weights()[j];
      bool all = true;
      for (const auto& y : cb)
        if (relative_excess(P.atoms()[j], y, images[j], pd[j], lambda) < delta) {
          all = false;
          break;
        }
      if (all) lm.all_codepoints_mass += P.weights()[j];
    }
    out.level_masses.push_back(lm);
  }
  return out;
}

template <std::size_t D>
struct PerturbResult {
  Codebook<D> codebook;
  double radius = 0.0;
  std::size_t on_projection = 0;
  std::size_t moved = 0;
  std::size_t failed = 0;
  double max_displacement = 0.0;
};

namespace detail {

template <std::size_t D>
PointList<D> direction_set(const Point<D>& preferred, std::size_t count) {
  PointList<D> dirs;
  if (norm(preferred) > 0.0) dirs.push_back(preferred * (1.0 / norm(preferred)));
  if constexpr (D == 1) {
    dirs.push_back(Point<1>{{1.0}});
    dirs.push_back(Point<1>{{-1.0}});
  } else if constexpr (D == 2) {
    const double base = norm(preferred) > 0.0 ? std::atan2(preferred[1], preferred[0]) : 0.0;
    for (std::size_t k = 1; dirs.size() < count; ++k) {
      const double th = base + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
      dirs.push_back(Point<2>{{std::cos(th), std::sin(th)}});
    }
  } else {
    // Fibonacci sphere.
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::size_t k = 0; dirs.size() < count; ++k) {
      const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(count);
      const double rr = std::sqrt(1.0 - z * z);
      const double ph = golden * static_cast<double>(k);
      dirs.push_back(Point<3>{{rr * std::cos(ph), rr * std::sin(ph), z}});
    }
  }
  if (dirs.size() > count) dirs.resize(count);
  return dirs;
}

/// min_j (rho(x_j, q) - rho(x_j, S)); positive iff q is strictly worse than the projection
/// for every atom, i.e. q avoids the image of the support.
template <std::size_t D>
double clearance(const DiscreteMeasure<D>& P, const std::vector<double>& proj_dist, const Point<D>& q) {
  double c = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < P.size(); ++j)
    if (P.weights()[j] > 0.0) c = std::min(c, dist(P.atoms()[j], q) - proj_dist[j]);
  return c;
}

}  // namespace detail

/// Moves every codepoint lying on the sampled image pi_S(K) by at most eps * n^(-1/d) to a
/// point of S off that image. `match_tol` decides membership of a codepoint in the sample
/// (defaults to S.proj_tol()).
///
/// Up to 64 directions are tried (the direction from the nearest source atom through the
/// codepoint first); each trial point a + t*u, t in {radius, radius/2, radius/4}, is mapped
/// back to S, and the first trial off the image with positive clearance is kept.
template <std::size_t D>
PerturbResult<D> perturb_codebook(const Codebook<D>& cb, const ConstraintSet<D>& S,
                                  const DiscreteMeasure<D>& P, std::span<const Point<D>> image_sample,
                                  double eps, std::size_t n, double d, double match_tol = 0.0) {
  if (!(eps > 0.0)) throw UsageError("eps must be positive");
  if (!(d > 0.0)) throw UsageError("dimension d must be positive");
  if (n < 1) throw UsageError("n must be >= 1");
  if (image_sample.empty()) throw UsageError("image sample is empty");
  const double tol = match_tol > 0.0 ? match_tol : S.proj_tol();
  const auto [images, pd] = project_set<D>(S, P.atoms());

  PerturbResult<D> out;
  out.codebook = cb;
  out.radius = eps * std::pow(static_cast<double>(n), -1.0 / d);
  for (auto& a : out.codebook.points) {
    if (distance_to_set<D>(a, image_sample) > tol) continue;
    ++out.on_projection;
    const std::size_t src = detail::nearest_index(images, a);
    const auto dirs = detail::direction_set<D>(a - P.atoms()[src], 64);
    std::optional<Point<D>> best;
    for (const auto& u : dirs) {
      for (double t : {out.radius, out.radius / 2.0, out.radius / 4.0}) {
        const Point<D> q = S.project(a + u * t).representative;
        if (dist(q, a) > out.radius || dist(q, a) == 0.0) continue;
        if (distance_to_set<D>(q, image_sample) <= S.proj_tol()) continue;
        if (detail::clearance(P, pd, q) <= S.proj_tol()) continue;
        best = q;
        break;
      }
      if (best) break;
    }
    if (best) {
      out.max_displacement = std::max(out.max_displacement, dist(*best, a));
      a = *best;
      ++out.moved;
    } else {
      ++out.failed;
    }
  }
  return out;
}

}  // namespace cquant
