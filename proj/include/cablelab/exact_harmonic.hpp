#pragma once

// Harmonic functions on Vicsek and Sierpinski skeletons in exact rational arithmetic.
//
// On a cable system a harmonic function is linear on every cable, so it is fixed by
// its vertex values.  On a gasket cell with corner values (a1, a2, a3) the midpoint
// values are given by the 2/5-2/5-1/5 rule; on a Vicsek cell the function is linear
// along the corner-to-center diagonals and constant on every side branch.

#include <algorithm>
#include <array>
#include <memory>
#include <optional>
#include <queue>
#include <vector>

#include "errors.hpp"
#include "fractal_graph.hpp"
#include "rational.hpp"

namespace cablelab {

/// Harmonic function on one skeleton, with values at every skeleton vertex.
struct SkeletonHarmonic {
  std::shared_ptr<const CableGraph> graph;
  Skeleton skeleton;
  std::vector<Rational> boundary_values;  ///< Aligned with skeleton.boundary.
  std::vector<Rational> values;           ///< Aligned with skeleton.members.

  std::optional<Rational> value_at(int vertex) const {
    const auto& m = skeleton.members;
    const auto it = std::lower_bound(m.begin(), m.end(), vertex);
    if (it == m.end() || *it != vertex) return std::nullopt;
    return values[static_cast<std::size_t>(it - m.begin())];
  }

  const Rational& at(int vertex) const {
    const auto& m = skeleton.members;
    const auto it = std::lower_bound(m.begin(), m.end(), vertex);
    if (it == m.end() || *it != vertex) throw InputError("vertex is not in the skeleton");
    return values[static_cast<std::size_t>(it - m.begin())];
  }

  const Rational& at(const LatticePoint& p) const { return at(graph->id_of(p)); }
};

namespace detail {

inline std::array<Rational, 3> sg_midpoints(const Rational& a1, const Rational& a2, const Rational& a3) {
  static const Rational two_fifths(2, 5);
  static const Rational one_fifth(1, 5);
  return {two_fifths * a1 + two_fifths * a2 + one_fifth * a3,   // q4, between q1 and q2
          one_fifth * a1 + two_fifths * a2 + two_fifths * a3,   // q5, between q2 and q3
          two_fifths * a1 + one_fifth * a2 + two_fifths * a3};  // q6, between q1 and q3
}

inline void sg_fill(const CableGraph& g, const LatticePoint& offset, std::int64_t side, const Rational& a1,
                    const Rational& a2, const Rational& a3, const std::vector<int>& members,
                    std::vector<Rational>& values) {
  auto set = [&](const LatticePoint& p, const Rational& v) {
    const int id = g.id_of(p);
    const auto it = std::lower_bound(members.begin(), members.end(), id);
    values[static_cast<std::size_t>(it - members.begin())] = v;
  };
  set(offset, a1);
  set(add(offset, {side, 0}), a2);
  set(add(offset, {0, side}), a3);
  if (side == 1) return;
  const std::int64_t half = side / 2;
  const auto [q4, q5, q6] = sg_midpoints(a1, a2, a3);
  sg_fill(g, offset, half, a1, q4, q6, members, values);
  sg_fill(g, add(offset, {half, 0}), half, q4, a2, q5, members, values);
  sg_fill(g, add(offset, {0, half}), half, q6, q5, a3, members, values);
}

}  // namespace detail

/// Harmonic extension of corner data (q1, q2, q3) to a Sierpinski skeleton of g.
inline SkeletonHarmonic sg_extend(std::shared_ptr<const CableGraph> g, const Skeleton& s, const Rational& a1,
                                  const Rational& a2, const Rational& a3) {
  if (g->family != Family::sierpinski) throw InputError("sg_extend: graph is not a Sierpinski system");
  SkeletonHarmonic h;
  h.graph = std::move(g);
  h.skeleton = s;
  h.boundary_values = {a1, a2, a3};
  h.values.assign(s.members.size(), Rational(0));
  detail::sg_fill(*h.graph, s.offset, cell_side(Family::sierpinski, s.level), a1, a2, a3, s.members, h.values);
  return h;
}

/// Harmonic extension on the generation-`depth` gasket cell.
inline SkeletonHarmonic sg_extend(const Rational& a1, const Rational& a2, const Rational& a3, int depth) {
  if (depth < 0) throw InputError("sg_extend: depth must be >= 0");
  auto g = std::make_shared<const CableGraph>(build_sierpinski(depth));
  const auto sk = enumerate_skeletons(*g, depth);
  return sg_extend(g, sk.front(), a1, a2, a3);
}

/// Harmonic extension of corner data to a Vicsek skeleton (corners in skeleton.boundary order).
inline SkeletonHarmonic vicsek_extend(std::shared_ptr<const CableGraph> g, const Skeleton& s,
                                      const std::vector<Rational>& corners) {
  if (g->family != Family::vicsek) throw InputError("vicsek_extend: graph is not a Vicsek system");
  if (corners.size() != s.boundary.size()) throw InputError("vicsek_extend: need one value per corner");
  SkeletonHarmonic h;
  h.graph = g;
  h.skeleton = s;
  h.boundary_values = corners;
  h.values.assign(s.members.size(), Rational(0));
  std::vector<char> set(s.members.size(), 0);
  auto local = [&](int v) {
    const auto it = std::lower_bound(s.members.begin(), s.members.end(), v);
    return (it != s.members.end() && *it == v) ? static_cast<std::ptrdiff_t>(it - s.members.begin()) : -1;
  };

  Rational center(0);
  for (const auto& c : corners) center += c;
  center /= Rational(static_cast<long>(corners.size()));

  const std::int64_t half = cell_side(Family::vicsek, s.level) / 2;
  const auto& center_pt = g->vertices[static_cast<std::size_t>(*s.center)];
  std::queue<int> frontier;
  for (std::size_t i = 0; i < s.boundary.size(); ++i) {
    const auto& corner = g->vertices[static_cast<std::size_t>(s.boundary[i])];
    LatticePoint dir(corner.size());
    for (std::size_t j = 0; j < corner.size(); ++j) dir[j] = center_pt[j] > corner[j] ? 1 : -1;
    LatticePoint p = corner;
    for (std::int64_t step = 0; step <= half; ++step) {
      const auto li = static_cast<std::size_t>(local(g->id_of(p)));
      if (!set[li]) {
        h.values[li] = corners[i] + (center - corners[i]) * Rational(static_cast<long>(step), static_cast<long>(half));
        set[li] = 1;
        frontier.push(s.members[li]);
      }
      p = detail::add(p, dir);
    }
  }
  // Side branches hang off the diagonals at a single point and carry its value.
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    const auto lv = static_cast<std::size_t>(local(v));
    for (int w : g->adjacency[static_cast<std::size_t>(v)]) {
      const auto lw = local(w);
      if (lw < 0 || set[static_cast<std::size_t>(lw)]) continue;
      h.values[static_cast<std::size_t>(lw)] = h.values[lv];
      set[static_cast<std::size_t>(lw)] = 1;
      frontier.push(w);
    }
  }
  return h;
}

/// Convenience: Vicsek(N) generation-`depth` cell.
inline SkeletonHarmonic vicsek_extend(const std::vector<Rational>& corners, int N, int depth) {
  auto g = std::make_shared<const CableGraph>(build_vicsek(N, depth));
  const auto sk = enumerate_skeletons(*g, depth);
  return vicsek_extend(g, sk.front(), corners);
}

/// max - min of h over the vertices of `cell` (which must lie inside h's skeleton).
inline Rational oscillation(const SkeletonHarmonic& h, const Skeleton& cell) {
  std::optional<Rational> lo, hi;
  for (int v : cell.members) {
    const auto val = h.value_at(v);
    if (!val) throw InputError("oscillation: cell is not contained in the skeleton");
    if (!lo || *val < *lo) lo = *val;
    if (!hi || *val > *hi) hi = *val;
  }
  return *hi - *lo;
}

/// Kirchhoff residual sum_w (u(w) - u(v)) at a skeleton vertex, over neighbors inside the skeleton.
inline Rational kirchhoff_residual(const SkeletonHarmonic& h, int v) {
  Rational sum(0);
  const Rational& uv = h.at(v);
  for (int w : h.graph->adjacency[static_cast<std::size_t>(v)]) {
    const auto uw = h.value_at(w);
    if (uw) sum += *uw - uv;
  }
  return sum;
}

/// Skeleton vertices other than its boundary points.
inline std::vector<int> interior_vertices(const Skeleton& s) {
  std::vector<int> out;
  for (int v : s.members)
    if (std::find(s.boundary.begin(), s.boundary.end(), v) == s.boundary.end()) out.push_back(v);
  return out;
}

/// Exact integral of |u| over a unit cable on which u is linear from a to b.
inline Rational cable_abs_integral(const Rational& a, const Rational& b) {
  if (a.sign() * b.sign() >= 0) return (abs(a) + abs(b)) / Rational(2);
  // Split at the zero s* = |a| / (|a| + |b|): the two triangles have area (a^2 + b^2) / (2 (|a| + |b|)).
  return (a * a + b * b) / (Rational(2) * (abs(a) + abs(b)));
}

/// Exact integral of |u| over every cable of a harmonic function on a skeleton.
inline Rational abs_integral(const SkeletonHarmonic& h) {
  Rational total(0);
  const auto& m = h.skeleton.members;
  for (const auto& [a, b] : h.graph->edges) {
    if (!std::binary_search(m.begin(), m.end(), a) || !std::binary_search(m.begin(), m.end(), b)) continue;
    total += cable_abs_integral(h.at(a), h.at(b));
  }
  return total;
}

struct RhCounterexample {
  int n = 0;
  Rational gradient;   ///< |grad u| on the cables at the center of 2B.
  Rational abs_mean;   ///< Average of |u| over the two cells; the metric ball 2B is a proper subset of them.
  Rational rh_ratio;   ///< gradient * 2^n / abs_mean.
  long cables = 0;     ///< Number of cables in the two cells.
};

namespace detail {

// Integral of |u| over a gasket cell from its corner values, recursing to unit cells.
inline Rational sg_cell_abs_integral(const Rational& a1, const Rational& a2, const Rational& a3, int level) {
  if (level == 0) return cable_abs_integral(a1, a2) + cable_abs_integral(a2, a3) + cable_abs_integral(a1, a3);
  const auto [q4, q5, q6] = sg_midpoints(a1, a2, a3);
  return sg_cell_abs_integral(a1, q4, q6, level - 1) + sg_cell_abs_integral(q4, a2, q5, level - 1) +
         sg_cell_abs_integral(q6, q5, a3, level - 1);
}

// Value one unit from corner q1 toward q2 in a gasket cell of the given level.
inline Rational sg_corner_neighbor(Rational a1, Rational a2, Rational a3, int level) {
  for (; level > 0; --level) {
    const auto [q4, q5, q6] = sg_midpoints(a1, a2, a3);
    (void)q5;
    a2 = q4;
    a3 = q6;
  }
  return a2;
}

}  // namespace detail

/// The gasket function harmonic on the two level-(n+1) cells meeting at 2^{n+1} p2 (hence in
/// 2B = B(2^{n+1} p2, 2^{n+1})), with values -1, -1 on the left cell's far corners, 1, 1 on the
/// right cell's, and u = 0 at the junction.
inline RhCounterexample rh_counterexample(int n, std::size_t budget = kDefaultVertexBudget) {
  if (n < 0) throw InputError("rh_counterexample: n must be >= 0");
  const std::int64_t cells = 2 * detail::ipow(3, n + 1);
  if (n > 30 || static_cast<std::size_t>(cells) > budget)
    throw CapacityError("rh_counterexample: too many cells", n > 30 ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(cells), budget);
  const Rational zero(0), one(1), minus_one(-1);
  RhCounterexample out;
  out.n = n;
  // Left cell: corners (center, p1, 2^{n+1} p3); right cell: (center, 2^{n+2} p2, 2^{n+1}(p2 + p3)).
  out.gradient = abs(detail::sg_corner_neighbor(zero, one, one, n + 1) - zero);
  const Rational integral = detail::sg_cell_abs_integral(zero, minus_one, minus_one, n + 1) +
                            detail::sg_cell_abs_integral(zero, one, one, n + 1);
  out.cables = 2 * detail::ipow(3, n + 2);
  out.abs_mean = integral / Rational(out.cables);
  out.rh_ratio = out.gradient * Rational(detail::ipow(2, n)) / out.abs_mean;
  return out;
}

/// The same function realized on the skeletons of a gasket graph (generation >= n + 2),
/// as two harmonic pieces: the left and right level-(n+1) cells.
inline std::pair<SkeletonHarmonic, SkeletonHarmonic> rh_counterexample_skeletons(std::shared_ptr<const CableGraph> g,
                                                                                 int n) {
  if (g->family != Family::sierpinski || g->generation < n + 2)
    throw InputError("rh_counterexample_skeletons: need a gasket of generation >= n + 2");
  const std::int64_t side = detail::ipow(2, n + 1);
  const auto cells = enumerate_skeletons(*g, n + 1);
  const Skeleton* left = nullptr;
  const Skeleton* right = nullptr;
  for (const auto& s : cells) {
    if (s.offset == LatticePoint{0, 0}) left = &s;
    if (s.offset == LatticePoint{side, 0}) right = &s;
  }
  const Rational zero(0), one(1), minus_one(-1);
  // Left cell corners in (q1, q2, q3) order are (0,0), (side,0), (0,side).
  auto L = sg_extend(g, *left, minus_one, zero, minus_one);
  auto R = sg_extend(g, *right, zero, one, one);
  return {std::move(L), std::move(R)};
}

}  // namespace cablelab
