#pragma once

// Piecewise-linear refinement of a cable graph: every unit cable is cut into
// k segments of length h = 1/k.  The discrete Dirichlet form is
//   E(u,u) = sum over segments (du)^2 / h = u^T S u,
// with lumped mass m_x = h * (#incident segments) / 2.

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "fractal_graph.hpp"

namespace cablelab {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kDefaultNodeBudget = 8'000'000;

struct Segment {
  int a = 0;     ///< Node closer to the edge's source vertex.
  int b = 0;
  int edge = 0;  ///< Owning cable.
};

/// Refined mesh of a cable graph. Immutable after refine().
class Mesh {
 public:
  const CableGraph& graph() const { return *graph_; }
  std::shared_ptr<const CableGraph> graph_ptr() const { return graph_; }
  int k() const { return k_; }
  double h() const { return 1.0 / static_cast<double>(k_); }

  std::size_t num_nodes() const { return mass_.size(); }
  std::size_t num_segments() const { return segments_.size(); }
  std::size_t num_vertices() const { return graph_->num_vertices(); }

  const std::vector<Segment>& segments() const { return segments_; }
  const SparseMatrix& stiffness() const { return stiffness_; }
  const Vector& mass() const { return mass_; }
  double total_mass() const { return mass_.sum(); }

  /// Node id of position `index` (0..k) along cable `edge`, measured from its source vertex.
  int node_on_edge(int edge, int index) const {
    const auto& [a, b] = graph_->edges[static_cast<std::size_t>(edge)];
    if (index == 0) return a;
    if (index == k_) return b;
    return static_cast<int>(num_vertices()) + edge * (k_ - 1) + (index - 1);
  }

  /// (edge, index) of an interior node; graph vertices return edge = -1.
  std::pair<int, int> locate(int node) const {
    const int nv = static_cast<int>(num_vertices());
    if (node < nv) return {-1, 0};
    const int off = node - nv;
    return {off / (k_ - 1), off % (k_ - 1) + 1};
  }

  bool is_vertex(int node) const { return node < static_cast<int>(num_vertices()); }

  /// Incident segment ids of a node.
  std::span<const int> incident(int node) const {
    const auto s = static_cast<std::size_t>(node);
    return {incident_.data() + incident_offsets_[s], incident_offsets_[s + 1] - incident_offsets_[s]};
  }

  int other_end(int segment, int node) const {
    const auto& s = segments_[static_cast<std::size_t>(segment)];
    return s.a == node ? s.b : s.a;
  }

  /// Distance (cable metric) from every node to the truncation set of the core.
  const std::vector<double>& truncation_distance() const { return trunc_dist_; }

  /// Per-segment slopes (u_b - u_a)/h, oriented from the cable's source vertex.
  Vector gradient(const Vector& u) const {
    Vector g(static_cast<Eigen::Index>(segments_.size()));
    const double inv_h = static_cast<double>(k_);
    for (std::size_t s = 0; s < segments_.size(); ++s)
      g[static_cast<Eigen::Index>(s)] = (u[segments_[s].b] - u[segments_[s].a]) * inv_h;
    return g;
  }

  /// Dirichlet energy u^T S u.
  double energy(const Vector& u) const { return u.dot(stiffness_ * u); }

  /// Generator applied to u: mass^{-1} S u.
  Vector generator(const Vector& u) const { return (stiffness_ * u).cwiseQuotient(mass_); }

  /// Nodal Euclidean position (output only).
  std::vector<double> position(int node) const {
    if (is_vertex(node)) return graph_->position(node);
    const auto [e, i] = locate(node);
    const auto& [a, b] = graph_->edges[static_cast<std::size_t>(e)];
    auto pa = graph_->position(a);
    const auto pb = graph_->position(b);
    const double f = static_cast<double>(i) / static_cast<double>(k_);
    for (std::size_t j = 0; j < pa.size(); ++j) pa[j] += f * (pb[j] - pa[j]);
    return pa;
  }

  friend Mesh refine(std::shared_ptr<const CableGraph> g, int k, std::size_t node_budget);

 private:
  std::shared_ptr<const CableGraph> graph_;
  int k_ = 1;
  std::vector<Segment> segments_;
  std::vector<std::size_t> incident_offsets_;
  std::vector<int> incident_;
  SparseMatrix stiffness_;
  Vector mass_;
  std::vector<double> trunc_dist_;
};

/// Geodesic distances in segment hops from a set of sources; -1 means unreachable.
/// Stops expanding past `max_hops` when it is non-negative.
inline std::vector<std::int64_t> hop_distances(const Mesh& mesh, std::span<const int> sources,
                                               std::int64_t max_hops = -1) {
  // Uniform segment lengths: Dijkstra degenerates to a breadth-first sweep.
  std::vector<std::int64_t> dist(mesh.num_nodes(), -1);
  std::queue<int> q;
  for (int s : sources) {
    if (dist[static_cast<std::size_t>(s)] != 0) {
      dist[static_cast<std::size_t>(s)] = 0;
      q.push(s);
    }
  }
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    const std::int64_t dv = dist[static_cast<std::size_t>(v)];
    if (max_hops >= 0 && dv >= max_hops) continue;
    for (int seg : mesh.incident(v)) {
      const int w = mesh.other_end(seg, v);
      if (dist[static_cast<std::size_t>(w)] < 0) {
        dist[static_cast<std::size_t>(w)] = dv + 1;
        q.push(w);
      }
    }
  }
  return dist;
}

inline Mesh refine(std::shared_ptr<const CableGraph> g, int k, std::size_t node_budget = kDefaultNodeBudget) {
  if (!g) throw InputError("refine: null graph");
  if (k < 1) throw InputError("refine: k must be >= 1");
  const std::size_t nv = g->num_vertices();
  const std::size_t ne = g->num_edges();
  const std::size_t nodes = nv + static_cast<std::size_t>(k - 1) * ne;
  if (nodes > node_budget) throw CapacityError("mesh too large", nodes, node_budget);

  Mesh m;
  m.graph_ = std::move(g);
  m.k_ = k;
  m.segments_.reserve(ne * static_cast<std::size_t>(k));
  for (std::size_t e = 0; e < ne; ++e)
    for (int i = 0; i < k; ++i)
      m.segments_.push_back({m.node_on_edge(static_cast<int>(e), i), m.node_on_edge(static_cast<int>(e), i + 1),
                             static_cast<int>(e)});

  std::vector<std::size_t> deg(nodes, 0);
  for (const auto& s : m.segments_) {
    ++deg[static_cast<std::size_t>(s.a)];
    ++deg[static_cast<std::size_t>(s.b)];
  }
  m.incident_offsets_.assign(nodes + 1, 0);
  for (std::size_t i = 0; i < nodes; ++i) m.incident_offsets_[i + 1] = m.incident_offsets_[i] + deg[i];
  m.incident_.assign(m.incident_offsets_.back(), 0);
  std::vector<std::size_t> fill(m.incident_offsets_.begin(), m.incident_offsets_.end() - 1);
  for (std::size_t s = 0; s < m.segments_.size(); ++s) {
    m.incident_[fill[static_cast<std::size_t>(m.segments_[s].a)]++] = static_cast<int>(s);
    m.incident_[fill[static_cast<std::size_t>(m.segments_[s].b)]++] = static_cast<int>(s);
  }

  const double h = 1.0 / static_cast<double>(k);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(4 * m.segments_.size());
  m.mass_ = Vector::Zero(static_cast<Eigen::Index>(nodes));
  for (const auto& s : m.segments_) {
    trip.emplace_back(s.a, s.a, 1.0 / h);
    trip.emplace_back(s.b, s.b, 1.0 / h);
    trip.emplace_back(s.a, s.b, -1.0 / h);
    trip.emplace_back(s.b, s.a, -1.0 / h);
    m.mass_[s.a] += 0.5 * h;
    m.mass_[s.b] += 0.5 * h;
  }
  m.stiffness_.resize(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(nodes));
  m.stiffness_.setFromTriplets(trip.begin(), trip.end());
  m.stiffness_.makeCompressed();

  const auto hops = hop_distances(m, m.graph_->truncation_vertices);
  m.trunc_dist_.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i)
    m.trunc_dist_[i] = hops[i] < 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(hops[i]) * h;
  return m;
}

inline Mesh refine(const CableGraph& g, int k, std::size_t node_budget = kDefaultNodeBudget) {
  return refine(std::make_shared<const CableGraph>(g), k, node_budget);
}

/// Geodesic distances (cable metric) from a node to all nodes.
inline std::vector<double> geodesic_distances(const Mesh& mesh, int source) {
  const int src[1] = {source};
  const auto hops = hop_distances(mesh, src);
  std::vector<double> d(hops.size());
  const double h = mesh.h();
  for (std::size_t i = 0; i < hops.size(); ++i)
    d[i] = hops[i] < 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(hops[i]) * h;
  return d;
}

inline double geodesic_distance(const Mesh& mesh, int x, int y) {
  if (x == y) return 0.0;
  return geodesic_distances(mesh, x)[static_cast<std::size_t>(y)];
}

/// Strict d < r with a tolerance against rounding in hop*h.
inline bool inside_radius(double d, double r) { return d < r - 1e-9 * std::max(1.0, r); }

/// Open metric ball B(center, r) at nodal resolution.
struct Ball {
  int center = 0;
  double radius = 0.0;
  std::vector<int> nodes;  ///< Sorted node ids with d(center, .) < r.
  double volume = 0.0;     ///< Sum of lumped masses over `nodes`.
  /// d(center, truncation set) - 2r; downstream verifiers skip balls with margin <= 0.
  double margin = 0.0;
  bool margin_ok() const { return margin > 0.0; }
};

inline Ball ball_from_distances(const Mesh& mesh, int center, double r, const std::vector<double>& dist) {
  Ball b;
  b.center = center;
  b.radius = r;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (inside_radius(dist[i], r)) {
      b.nodes.push_back(static_cast<int>(i));
      b.volume += mesh.mass()[static_cast<Eigen::Index>(i)];
    }
  }
  b.margin = mesh.truncation_distance()[static_cast<std::size_t>(center)] - 2.0 * r;
  return b;
}

inline Ball ball(const Mesh& mesh, int center, double r) {
  if (!(r > 0.0)) throw InputError("ball: radius must be positive");
  const int src[1] = {center};
  const auto hops = hop_distances(mesh, src, static_cast<std::int64_t>(std::ceil(r * mesh.k())) + 1);
  std::vector<double> d(hops.size());
  for (std::size_t i = 0; i < hops.size(); ++i)
    d[i] = hops[i] < 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(hops[i]) * mesh.h();
  return ball_from_distances(mesh, center, r, d);
}

/// V(x, r) for many radii from one distance sweep.
class VolumeProfile {
 public:
  VolumeProfile(const Mesh& mesh, int center) : center_(center) {
    const auto d = geodesic_distances(mesh, center);
    std::vector<std::pair<double, double>> dm;
    dm.reserve(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
      if (std::isfinite(d[i])) dm.emplace_back(d[i], mesh.mass()[static_cast<Eigen::Index>(i)]);
    std::sort(dm.begin(), dm.end());
    dist_.reserve(dm.size());
    cum_.reserve(dm.size());
    double acc = 0.0;
    for (const auto& [di, mi] : dm) {
      acc += mi;
      dist_.push_back(di);
      cum_.push_back(acc);
    }
  }

  int center() const { return center_; }

  double volume(double r) const {
    const double cut = r - 1e-9 * std::max(1.0, r);
    const auto it = std::lower_bound(dist_.begin(), dist_.end(), cut);
    if (it == dist_.begin()) return 0.0;
    return cum_[static_cast<std::size_t>(it - dist_.begin()) - 1];
  }

 private:
  int center_;
  std::vector<double> dist_;
  std::vector<double> cum_;
};

/// Node of the mesh matching a graph vertex given by lattice coordinates.
inline int vertex_node(const Mesh& mesh, const LatticePoint& p) { return mesh.graph().id_of(p); }

}  // namespace cablelab
