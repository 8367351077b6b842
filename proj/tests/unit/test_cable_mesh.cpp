#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "cablelab/cable_mesh.hpp"
#include "cablelab/scaling_laws.hpp"
#include "test_graphs.hpp"

using namespace cablelab;

TEST(Mesh, NodeCountsAndMass) {
  const auto g = build_sierpinski(1);
  const auto m1 = refine(g, 1);
  EXPECT_EQ(m1.num_nodes(), 6u);
  const auto m4 = refine(g, 4);
  EXPECT_EQ(m4.num_nodes(), 33u);
  EXPECT_NEAR(m4.total_mass(), 9.0, 1e-12);
  const auto v = refine(build_vicsek(3, 2), 5);
  EXPECT_NEAR(v.total_mass(), static_cast<double>(v.graph().num_edges()), 1e-9);
}

TEST(Mesh, UnitMeshIsGraphLaplacian) {
  const auto g = build_sierpinski(1);
  const auto m = refine(g, 1);
  const Eigen::MatrixXd S = Eigen::MatrixXd(m.stiffness());
  for (std::size_t i = 0; i < g.num_vertices(); ++i) {
    EXPECT_DOUBLE_EQ(S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), static_cast<double>(g.adjacency[i].size()));
    for (std::size_t j = 0; j < g.num_vertices(); ++j) {
      if (i == j) continue;
      const bool adj = std::binary_search(g.adjacency[i].begin(), g.adjacency[i].end(), static_cast<int>(j));
      EXPECT_DOUBLE_EQ(S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), adj ? -1.0 : 0.0);
    }
  }
}

TEST(Mesh, StiffnessProperties) {
  const auto m = refine(build_sierpinski(3), 3);
  const Eigen::MatrixXd S = Eigen::MatrixXd(m.stiffness());
  EXPECT_LT((S - S.transpose()).norm(), 1e-12);
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(m.num_nodes()));
  EXPECT_LT((m.stiffness() * ones).norm(), 1e-12);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 1000; ++trial) {
    Vector u(static_cast<Eigen::Index>(m.num_nodes()));
    for (auto& x : u) x = nd(rng);
    const Vector Su = m.stiffness() * u;
    EXPECT_GE(u.dot(Su), 0.0);
    EXPECT_NEAR(ones.dot(Su), 0.0, 1e-9 * (1.0 + Su.norm()));
    const Vector grad = m.gradient(u);
    EXPECT_NEAR(u.dot(Su), grad.squaredNorm() * m.h(), 1e-9 * u.dot(Su));
  }
  EXPECT_NEAR(m.energy(3.5 * ones), 0.0, 1e-12);
}

TEST(Mesh, EnergyConvergesAtSecondOrder) {
  // sin(pi s) on one cable has energy pi^2/2; the interpolant's energy error is O(h^2).
  const auto g = testgraphs::single_cable();
  double prev = 0.0;
  for (int k : {8, 16, 32, 64}) {
    const auto m = refine(g, k);
    Vector u(static_cast<Eigen::Index>(m.num_nodes()));
    for (int i = 0; i <= k; ++i) u[m.node_on_edge(0, i)] = std::sin(std::numbers::pi * i / k);
    const double err = std::abs(m.energy(u) - std::numbers::pi * std::numbers::pi / 2.0);
    if (prev > 0.0) {
      EXPECT_NEAR(prev / err, 4.0, 0.1);
    }
    prev = err;
  }
}

TEST(Mesh, NodeLayout) {
  const auto g = build_sierpinski(2);
  const auto m = refine(g, 4);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    EXPECT_EQ(m.node_on_edge(static_cast<int>(e), 0), g.edges[e].first);
    EXPECT_EQ(m.node_on_edge(static_cast<int>(e), 4), g.edges[e].second);
    for (int i = 1; i < 4; ++i) {
      const int node = m.node_on_edge(static_cast<int>(e), i);
      EXPECT_EQ(m.locate(node), (std::pair<int, int>{static_cast<int>(e), i}));
      EXPECT_EQ(m.incident(node).size(), 2u);
    }
  }
}

TEST(Geodesic, Basics) {
  const auto g = build_sierpinski(2);
  const auto m = refine(g, 3);
  EXPECT_EQ(geodesic_distance(m, 5, 5), 0.0);
  const auto [a, b] = g.edges[4];
  EXPECT_NEAR(geodesic_distance(m, a, b), 1.0, 1e-12);
  EXPECT_NEAR(geodesic_distance(m, g.id_of({0, 0}), g.id_of({4, 0})), 4.0, 1e-12);
  EXPECT_NEAR(geodesic_distance(m, g.id_of({4, 0}), g.id_of({0, 4})), 4.0, 1e-12);
}

TEST(Geodesic, SymmetricAndTriangle) {
  const auto m = refine(build_vicsek(2, 2), 2);
  std::vector<std::vector<double>> d;
  for (int x : {0, 7, 33, 60, 150}) d.push_back(geodesic_distances(m, x));
  const int pts[] = {0, 7, 33, 60, 150};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_DOUBLE_EQ(d[i][static_cast<std::size_t>(pts[j])], d[j][static_cast<std::size_t>(pts[i])]);
      for (std::size_t l = 0; l < m.num_nodes(); ++l) EXPECT_LE(d[i][l], d[i][static_cast<std::size_t>(pts[j])] + d[j][l] + 1e-12);
    }
}

TEST(Geodesic, TruncationDistance) {
  const auto g = build_sierpinski(3);
  const auto m = refine(g, 2);
  EXPECT_EQ(m.truncation_distance()[static_cast<std::size_t>(g.id_of({8, 0}))], 0.0);
  EXPECT_NEAR(m.truncation_distance()[static_cast<std::size_t>(g.id_of({0, 0}))], 8.0, 1e-12);
}

TEST(Ball, SmallAndUnitBalls) {
  const auto g = build_sierpinski(3);
  const int k = 8;
  const auto m = refine(g, k);
  const int interior = m.node_on_edge(3, 4);
  const auto tiny = ball(m, interior, m.h());
  ASSERT_EQ(tiny.nodes.size(), 1u);
  EXPECT_NEAR(tiny.volume, m.h(), 1e-14);

  const int v = g.id_of({2, 2});
  ASSERT_EQ(g.adjacency[static_cast<std::size_t>(v)].size(), 4u);
  // Nodal balls overcount by the half-segments hanging off the four far vertices.
  for (int kk : {8, 32, 128}) {
    const auto mk = refine(g, kk);
    const auto b = ball(mk, v, 1.0 + 0.5 * mk.h());
    EXPECT_NEAR(b.volume, 4.0, 8.0 * mk.h() + 1e-12);
  }
  EXPECT_THROW(ball(m, v, 0.0), InputError);
}

TEST(Ball, MonotoneAndMargin) {
  const auto g = build_sierpinski(4);
  const auto m = refine(g, 2);
  const int c = g.id_of({4, 4});
  double prev = 0.0;
  for (double r = 0.5; r < 12.0; r *= std::sqrt(2.0)) {
    const auto b = ball(m, c, r);
    EXPECT_GE(b.volume, prev);
    prev = b.volume;
    EXPECT_NEAR(b.margin, m.truncation_distance()[static_cast<std::size_t>(c)] - 2.0 * r, 1e-12);
    EXPECT_EQ(b.margin_ok(), b.margin > 0.0);
  }
  VolumeProfile vp(m, c);
  for (double r : {0.3, 1.0, 2.5, 7.0}) EXPECT_NEAR(vp.volume(r), ball(m, c, r).volume, 1e-12);
}

TEST(Ball, VicsekVolumeExponent) {
  const int n = 5;
  const auto g = build_vicsek(2, n);
  const auto m = refine(g, 1);
  const std::int64_t side = 2 * detail::ipow(3, n);
  const int c = g.id_of({side / 2, side / 2});
  VolumeProfile vp(m, c);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (double r = 1.0; r <= std::pow(3.0, n - 1) + 1e-9; r *= std::sqrt(2.0)) {
    const double x = std::log(r), y = std::log(vp.volume(r + 1e-9));
    sx += x; sy += y; sxx += x * x; sxy += x * y; ++cnt;
  }
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  EXPECT_NEAR(slope, ScalingLaws::vicsek(2).alpha(), 0.1 * ScalingLaws::vicsek(2).alpha());
}
