#pragma once

// Vicsek and Sierpinski cable-system cores on exact integer lattices.
//
// Vicsek(N): coordinates are in units of 1/sqrt(N); the generation-0 cell is
// {0,2}^N plus the center (1,...,1), and every cable is a unit diagonal.
// Sierpinski: a point (a,b) means a*(1,0) + b*(1/2, sqrt(3)/2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace cablelab {

enum class Family { vicsek, sierpinski };

inline std::string to_string(Family f) { return f == Family::vicsek ? "vicsek" : "sierpinski"; }

inline Family parse_family(const std::string& s) {
  if (s == "vicsek") return Family::vicsek;
  if (s == "sierpinski") return Family::sierpinski;
  throw InputError("unknown family '" + s + "' (expected vicsek or sierpinski)");
}

using LatticePoint = std::vector<std::int64_t>;

inline constexpr std::size_t kDefaultVertexBudget = 4'000'000;

/// Unit-length, unit-measure cables on an integer lattice. Immutable after construction.
struct CableGraph {
  Family family = Family::sierpinski;
  int dim = 2;         ///< N for vicsek, 2 for sierpinski.
  int generation = 0;
  std::vector<LatticePoint> vertices;             ///< Lexicographically sorted.
  std::vector<std::pair<int, int>> edges;         ///< (a, b) with a < b; oriented a -> b.
  std::vector<std::vector<int>> adjacency;
  /// Vertices where the unbounded system continues past this core.
  std::vector<int> truncation_vertices;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_edges() const { return edges.size(); }

  std::optional<int> find(const LatticePoint& p) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), p);
    if (it == vertices.end() || *it != p) return std::nullopt;
    return static_cast<int>(it - vertices.begin());
  }

  int id_of(const LatticePoint& p) const {
    auto id = find(p);
    if (!id) throw InputError("lattice point is not a vertex of this graph");
    return *id;
  }

  /// Euclidean embedding, for output only.
  std::vector<double> position(int v) const {
    const auto& c = vertices.at(static_cast<std::size_t>(v));
    if (family == Family::sierpinski) {
      return {static_cast<double>(c[0]) + 0.5 * static_cast<double>(c[1]),
              0.5 * std::sqrt(3.0) * static_cast<double>(c[1])};
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    std::vector<double> out;
    for (auto x : c) out.push_back(s * static_cast<double>(x));
    return out;
  }
};

/// A translated copy of the generation-k cell, with its distinguished points.
struct Skeleton {
  int level = 0;
  LatticePoint offset;
  std::vector<int> members;   ///< Sorted vertex ids.
  std::vector<int> boundary;  ///< vicsek: 2^N corners in binary order; sierpinski: q1, q2, q3.
  std::optional<int> center;  ///< vicsek only.
  std::vector<int> midpoints; ///< sierpinski, level >= 1: q4, q5, q6.
};

namespace detail {

inline std::vector<LatticePoint> vicsek_cell_offsets(int dim, std::int64_t scale) {
  // Translations 2*3^k*p_i of the generation-k cell, with 3^k = scale.
  std::vector<LatticePoint> out;
  for (std::uint64_t bits = 0; bits < (1ULL << dim); ++bits) {
    LatticePoint o(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j) o[static_cast<std::size_t>(j)] = ((bits >> j) & 1ULL) ? 4 * scale : 0;
    out.push_back(std::move(o));
  }
  out.emplace_back(static_cast<std::size_t>(dim), 2 * scale);
  return out;
}

inline std::vector<LatticePoint> sierpinski_cell_offsets(std::int64_t scale) {
  return {{0, 0}, {scale, 0}, {0, scale}};
}

inline std::vector<LatticePoint> base_cell(Family family, int dim) {
  if (family == Family::sierpinski) return {{0, 0}, {1, 0}, {0, 1}};
  std::vector<LatticePoint> cell = vicsek_cell_offsets(dim, 1);
  for (auto& p : cell)
    for (auto& x : p) x /= 2;  // {0,2}^N corners and the (1,...,1) center
  return cell;
}

inline std::vector<LatticePoint> cell_offsets(Family family, int dim, std::int64_t scale) {
  return family == Family::sierpinski ? sierpinski_cell_offsets(scale) : vicsek_cell_offsets(dim, scale);
}

inline std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

/// Scale factor between consecutive generations (3 for vicsek, 2 for sierpinski).
inline std::int64_t generation_ratio(Family family) { return family == Family::vicsek ? 3 : 2; }

inline LatticePoint add(const LatticePoint& a, const LatticePoint& b) {
  LatticePoint r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

/// Vertex set of the generation-n cell at the origin, lexicographically sorted.
inline std::vector<LatticePoint> cell_points(Family family, int dim, int n) {
  std::vector<LatticePoint> pts = base_cell(family, dim);
  std::sort(pts.begin(), pts.end());
  const std::int64_t ratio = generation_ratio(family);
  for (int j = 0; j < n; ++j) {
    std::vector<LatticePoint> next;
    for (const auto& o : cell_offsets(family, dim, ipow(ratio, j)))
      for (const auto& p : pts) next.push_back(add(p, o));
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    pts = std::move(next);
  }
  return pts;
}

inline std::size_t predicted_vertices(Family family, int dim, int n) {
  // vicsek is a tree with 2^N (2^N+1)^n edges; sierpinski has (3^{n+1}+3)/2 vertices.
  long double count = 0;
  if (family == Family::vicsek) {
    count = std::pow(2.0L, dim) * std::pow(std::pow(2.0L, dim) + 1.0L, n) + 1.0L;
  } else {
    count = (std::pow(3.0L, n + 1) + 3.0L) / 2.0L;
  }
  if (count > 1e18L) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(count);
}

/// Offsets of all level-k cells inside the generation-n cell at the origin.
inline std::vector<LatticePoint> level_offsets(Family family, int dim, int n, int k) {
  std::vector<LatticePoint> offsets{LatticePoint(static_cast<std::size_t>(dim), 0)};
  const std::int64_t ratio = generation_ratio(family);
  for (int j = n - 1; j >= k; --j) {
    std::vector<LatticePoint> next;
    next.reserve(offsets.size() * (family == Family::vicsek ? (std::size_t{1} << dim) + 1 : 3));
    for (const auto& o : offsets)
      for (const auto& c : cell_offsets(family, dim, ipow(ratio, j))) next.push_back(add(o, c));
    offsets = std::move(next);
  }
  return offsets;
}

/// Cables of the generation-0 cell as pairs of points.
inline std::vector<std::pair<LatticePoint, LatticePoint>> base_edges(Family family, int dim) {
  const auto cell = base_cell(family, dim);
  if (family == Family::sierpinski) return {{cell[0], cell[1]}, {cell[0], cell[2]}, {cell[1], cell[2]}};
  std::vector<std::pair<LatticePoint, LatticePoint>> out;
  const LatticePoint& center = cell.back();
  for (std::size_t i = 0; i + 1 < cell.size(); ++i) out.emplace_back(cell[i], center);
  return out;
}

// Cables are the translates of the generation-0 cables.  Unit lattice distance alone
// is not enough on the gasket: points on the rim of a hole can be one unit apart
// without sharing a cable.
inline CableGraph assemble(Family family, int dim, int n, std::vector<LatticePoint> pts) {
  CableGraph g;
  g.family = family;
  g.dim = dim;
  g.generation = n;
  g.vertices = std::move(pts);
  g.adjacency.assign(g.vertices.size(), {});
  const auto cables = base_edges(family, dim);
  for (const auto& o : level_offsets(family, dim, n, 0)) {
    for (const auto& [p, q] : cables) {
      int a = g.id_of(add(p, o));
      int b = g.id_of(add(q, o));
      if (a > b) std::swap(a, b);
      g.edges.emplace_back(a, b);
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  for (const auto& [a, b] : g.edges) {
    g.adjacency[static_cast<std::size_t>(a)].push_back(b);
    g.adjacency[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& adj : g.adjacency) std::sort(adj.begin(), adj.end());

  const std::int64_t side = detail::ipow(generation_ratio(family), n);
  if (family == Family::vicsek) {
    g.truncation_vertices.push_back(g.id_of(LatticePoint(static_cast<std::size_t>(dim), 2 * side)));
  } else {
    g.truncation_vertices.push_back(g.id_of({side, 0}));
    g.truncation_vertices.push_back(g.id_of({0, side}));
  }
  std::sort(g.truncation_vertices.begin(), g.truncation_vertices.end());
  return g;
}

}  // namespace detail

/// Generation-n core of the N-dimensional Vicsek cable system.
inline CableGraph build_vicsek(int N, int n, std::size_t vertex_budget = kDefaultVertexBudget) {
  if (N < 2 || N > 16) throw InputError("vicsek: N must be in [2, 16]");
  if (n < 0) throw InputError("vicsek: generation must be >= 0");
  const std::size_t need = detail::predicted_vertices(Family::vicsek, N, n);
  if (need > vertex_budget) throw CapacityError("vicsek core too large", need, vertex_budget);
  return detail::assemble(Family::vicsek, N, n, detail::cell_points(Family::vicsek, N, n));
}

/// Generation-n core of the Sierpinski cable system.
inline CableGraph build_sierpinski(int n, std::size_t vertex_budget = kDefaultVertexBudget) {
  if (n < 0) throw InputError("sierpinski: generation must be >= 0");
  if (n > 38) throw CapacityError("sierpinski core too large", static_cast<std::size_t>(-1), vertex_budget);
  const std::size_t need = detail::predicted_vertices(Family::sierpinski, 2, n);
  if (need > vertex_budget) throw CapacityError("sierpinski core too large", need, vertex_budget);
  return detail::assemble(Family::sierpinski, 2, n, detail::cell_points(Family::sierpinski, 2, n));
}

inline CableGraph build_graph(Family family, int N, int n, std::size_t vertex_budget = kDefaultVertexBudget) {
  return family == Family::vicsek ? build_vicsek(N, n, vertex_budget) : build_sierpinski(n, vertex_budget);
}

/// Predicted vertex count without building (for capacity checks).
inline std::size_t predicted_vertex_count(Family family, int N, int n) {
  return detail::predicted_vertices(family, family == Family::vicsek ? N : 2, n);
}

/// Closed-form edge count of a level-k cell: 2^N (2^N+1)^k or 3^{k+1}.
inline std::int64_t cell_edge_count(Family family, int N, int k) {
  if (family == Family::vicsek) return detail::ipow(2, N) * detail::ipow(detail::ipow(2, N) + 1, k);
  return detail::ipow(3, k + 1);
}

/// Side length (lattice units) of a level-k cell.
inline std::int64_t cell_side(Family family, int k) {
  return family == Family::vicsek ? 2 * detail::ipow(3, k) : detail::ipow(2, k);
}

namespace detail {

inline Skeleton make_skeleton(const CableGraph& g, int k, const LatticePoint& offset,
                              const std::vector<LatticePoint>& cell) {
  Skeleton s;
  s.level = k;
  s.offset = offset;
  for (const auto& p : cell) s.members.push_back(g.id_of(add(p, offset)));
  std::sort(s.members.begin(), s.members.end());
  const std::int64_t side = cell_side(g.family, k);
  if (g.family == Family::vicsek) {
    for (std::uint64_t bits = 0; bits < (1ULL << g.dim); ++bits) {
      LatticePoint c = offset;
      for (int j = 0; j < g.dim; ++j)
        if ((bits >> j) & 1ULL) c[static_cast<std::size_t>(j)] += side;
      s.boundary.push_back(g.id_of(c));
    }
    s.center = g.id_of(add(offset, LatticePoint(static_cast<std::size_t>(g.dim), side / 2)));
  } else {
    s.boundary = {g.id_of(offset), g.id_of(add(offset, {side, 0})), g.id_of(add(offset, {0, side}))};
    if (k >= 1) {
      const std::int64_t half = side / 2;
      s.midpoints = {g.id_of(add(offset, {half, 0})), g.id_of(add(offset, {half, half})),
                     g.id_of(add(offset, {0, half}))};
    }
  }
  return s;
}

}  // namespace detail

/// All level-k skeletons of g, in recursive-decomposition order.
inline std::vector<Skeleton> enumerate_skeletons(const CableGraph& g, int k) {
  if (k < 0) throw InputError("enumerate_skeletons: level must be >= 0");
  if (k > g.generation) return {};
  const auto offsets = detail::level_offsets(g.family, g.dim, g.generation, k);
  const auto cell = detail::cell_points(g.family, g.dim, k);
  std::vector<Skeleton> out;
  out.reserve(offsets.size());
  for (const auto& o : offsets) out.push_back(detail::make_skeleton(g, k, o, cell));
  return out;
}

/// Number of edges with both endpoints in a sorted vertex-id set.
inline std::size_t induced_edge_count(const CableGraph& g, const std::vector<int>& sorted_ids) {
  std::size_t count = 0;
  for (const auto& [a, b] : g.edges)
    if (std::binary_search(sorted_ids.begin(), sorted_ids.end(), a) &&
        std::binary_search(sorted_ids.begin(), sorted_ids.end(), b))
      ++count;
  return count;
}

/// Combinatorial distances (number of cables) from a vertex.
inline std::vector<int> hop_distances(const CableGraph& g, int source) {
  std::vector<int> dist(g.num_vertices(), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int w : g.adjacency[static_cast<std::size_t>(v)]) {
      if (dist[static_cast<std::size_t>(w)] < 0) {
        dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
        q.push(w);
      }
    }
  }
  return dist;
}

inline bool is_connected(const CableGraph& g) {
  if (g.vertices.empty()) return true;
  const auto d = hop_distances(g, 0);
  return std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
}

}  // namespace cablelab
