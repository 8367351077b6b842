#include <gtest/gtest.h>

#include <random>

#include "cablelab/exact_harmonic.hpp"

using namespace cablelab;

namespace {

// Dense exact Gaussian elimination for the Kirchhoff system on a skeleton (k = 1).
std::vector<Rational> kirchhoff_solve(const CableGraph& g, const Skeleton& s, const std::vector<Rational>& bvals) {
  const auto& m = s.members;
  std::vector<int> unknown;  // local indices of interior vertices
  std::vector<int> pos(m.size(), -1);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto it = std::find(s.boundary.begin(), s.boundary.end(), m[i]);
    if (it == s.boundary.end()) {
      pos[i] = static_cast<int>(unknown.size());
      unknown.push_back(static_cast<int>(i));
    }
  }
  const std::size_t n = unknown.size();
  std::vector<std::vector<Rational>> A(n, std::vector<Rational>(n + 1, Rational(0)));
  auto local = [&](int v) {
    const auto it = std::lower_bound(m.begin(), m.end(), v);
    return (it != m.end() && *it == v) ? static_cast<int>(it - m.begin()) : -1;
  };
  for (std::size_t r = 0; r < n; ++r) {
    const int v = m[static_cast<std::size_t>(unknown[r])];
    for (int w : g.adjacency[static_cast<std::size_t>(v)]) {
      const int lw = local(w);
      if (lw < 0) continue;
      A[r][r] += Rational(1);
      if (pos[static_cast<std::size_t>(lw)] >= 0) {
        A[r][static_cast<std::size_t>(pos[static_cast<std::size_t>(lw)])] -= Rational(1);
      } else {
        const auto b = std::find(s.boundary.begin(), s.boundary.end(), w) - s.boundary.begin();
        A[r][n] += bvals[static_cast<std::size_t>(b)];
      }
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    while (A[piv][c].sign() == 0) ++piv;
    std::swap(A[piv], A[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || A[r][c].sign() == 0) continue;
      const Rational f = A[r][c] / A[c][c];
      for (std::size_t j = c; j <= n; ++j) A[r][j] -= f * A[c][j];
    }
  }
  std::vector<Rational> out(m.size(), Rational(0));
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (pos[i] >= 0) {
      const auto r = static_cast<std::size_t>(pos[i]);
      out[i] = A[r][n] / A[r][r];
    } else {
      const auto b = std::find(s.boundary.begin(), s.boundary.end(), m[i]) - s.boundary.begin();
      out[i] = bvals[static_cast<std::size_t>(b)];
    }
  }
  return out;
}

Rational random_rational(std::mt19937_64& rng) {
  std::uniform_int_distribution<long> num(-50, 50), den(1, 13);
  return Rational(num(rng), den(rng));
}

}  // namespace

TEST(Rational, Canonical) {
  const Rational a(6, -4);
  EXPECT_EQ(a.str(), "-3/2");
  EXPECT_EQ((a + Rational(3, 2)).str(), "0");
  EXPECT_EQ(Rational::parse("10/4"), Rational(5, 2));
  EXPECT_THROW(Rational(1, 0), std::domain_error);
  EXPECT_THROW(Rational(1) / Rational(0), std::domain_error);
  EXPECT_EQ(pow(Rational(3, 5), 3), Rational(27, 125));
  EXPECT_LT(Rational(1, 3), Rational(1, 2));
}

TEST(SgExtend, MidpointRule) {
  const auto h = sg_extend(Rational(1), Rational(0), Rational(0), 1);
  const auto& mid = h.skeleton.midpoints;
  ASSERT_EQ(mid.size(), 3u);
  EXPECT_EQ(h.at(mid[0]), Rational(2, 5));
  EXPECT_EQ(h.at(mid[1]), Rational(1, 5));
  EXPECT_EQ(h.at(mid[2]), Rational(2, 5));
}

TEST(SgExtend, Constants) {
  for (int depth = 0; depth <= 4; ++depth) {
    const auto h = sg_extend(Rational(7, 3), Rational(7, 3), Rational(7, 3), depth);
    for (const auto& v : h.values) EXPECT_EQ(v, Rational(7, 3));
  }
}

TEST(SgExtend, CornerWeightsAtDepthTwo) {
  const auto e1 = sg_extend(Rational(1), Rational(0), Rational(0), 2);
  const auto e2 = sg_extend(Rational(0), Rational(1), Rational(0), 2);
  const auto e3 = sg_extend(Rational(0), Rational(0), Rational(1), 2);
  const LatticePoint q7{1, 0};
  EXPECT_EQ(e1.at(q7), Rational(16, 25));
  EXPECT_EQ(e2.at(q7), Rational(5, 25));
  EXPECT_EQ(e3.at(q7), Rational(4, 25));
  const Rational a1(3, 7), a2(-2), a3(5, 11);
  const auto h = sg_extend(a1, a2, a3, 2);
  EXPECT_EQ(h.at(q7), Rational(16, 25) * a1 + Rational(5, 25) * a2 + Rational(4, 25) * a3);
  EXPECT_EQ(h.at(LatticePoint{0, 1}), Rational(16, 25) * a1 + Rational(4, 25) * a2 + Rational(5, 25) * a3);
}

TEST(SgExtend, MatchesExactKirchhoffSolve) {
  std::mt19937_64 rng(11);
  for (int depth = 1; depth <= 3; ++depth) {
    for (int trial = 0; trial < 5; ++trial) {
      const Rational a1 = random_rational(rng), a2 = random_rational(rng), a3 = random_rational(rng);
      const auto h = sg_extend(a1, a2, a3, depth);
      EXPECT_EQ(h.values, kirchhoff_solve(*h.graph, h.skeleton, {a1, a2, a3}));
    }
  }
}

TEST(SgExtend, SubSkeletonOfLargerGraph) {
  auto g = std::make_shared<const CableGraph>(build_sierpinski(4));
  const auto cells = enumerate_skeletons(*g, 2);
  const auto h = sg_extend(g, cells[4], Rational(1), Rational(-1, 2), Rational(3));
  for (int v : interior_vertices(h.skeleton)) EXPECT_EQ(kirchhoff_residual(h, v).sign(), 0);
  EXPECT_EQ(h.values, kirchhoff_solve(*g, cells[4], {Rational(1), Rational(-1, 2), Rational(3)}));
}

TEST(VicsekExtend, Constants) {
  const auto h = vicsek_extend({Rational(1), Rational(1), Rational(1), Rational(1)}, 2, 2);
  for (const auto& v : h.values) EXPECT_EQ(v, Rational(1));
}

TEST(VicsekExtend, SevenNinthsIdentity) {
  std::mt19937_64 rng(5);
  for (int n = 2; n <= 4; ++n) {
    const std::vector<Rational> c{random_rational(rng), random_rational(rng), random_rational(rng), random_rational(rng)};
    const auto h = vicsek_extend(c, 2, n);
    const std::int64_t s = 2 * detail::ipow(3, n - 2);
    const Rational q0 = h.at(LatticePoint{s, s});
    const Rational center = h.at(*h.skeleton.center);
    EXPECT_EQ(q0, Rational(7, 9) * c[0] + Rational(2, 9) * center);
    EXPECT_EQ(center, (c[0] + c[1] + c[2] + c[3]) / Rational(4));
  }
}

TEST(VicsekExtend, AlternatingCornersAndDiagonal) {
  const int n = 2;
  const auto h = vicsek_extend({Rational(1), Rational(-1), Rational(-1), Rational(1)}, 2, n);
  EXPECT_EQ(h.at(*h.skeleton.center), Rational(0));
  const std::int64_t half = detail::ipow(3, n);
  for (std::int64_t j = 0; j <= half; ++j) EXPECT_EQ(h.at(LatticePoint{j, j}), Rational(half - j, half));
  EXPECT_EQ(h.values, kirchhoff_solve(*h.graph, h.skeleton, h.boundary_values));
}

TEST(VicsekExtend, MatchesExactKirchhoffSolve) {
  std::mt19937_64 rng(3);
  for (int N : {2, 3}) {
    for (int n = 0; n <= 2; ++n) {
      if (N == 3 && n == 2) continue;
      std::vector<Rational> c;
      for (int i = 0; i < (1 << N); ++i) c.push_back(random_rational(rng));
      const auto h = vicsek_extend(c, N, n);
      EXPECT_EQ(h.values, kirchhoff_solve(*h.graph, h.skeleton, c));
      for (int v : interior_vertices(h.skeleton)) EXPECT_EQ(kirchhoff_residual(h, v).sign(), 0);
    }
  }
}

TEST(Oscillation, Examples) {
  const auto c = sg_extend(Rational(2), Rational(2), Rational(2), 3);
  for (const auto& cell : enumerate_skeletons(*c.graph, 1)) EXPECT_EQ(oscillation(c, cell), Rational(0));

  const auto h1 = sg_extend(Rational(1), Rational(0), Rational(0), 1);
  const auto cells = enumerate_skeletons(*h1.graph, 0);
  const Skeleton* bottom_left = nullptr;
  for (const auto& s : cells)
    if (s.offset == LatticePoint{0, 0}) bottom_left = &s;
  ASSERT_NE(bottom_left, nullptr);
  Rational lo(100), hi(-100);
  for (int v : bottom_left->boundary) {
    lo = std::min(lo, h1.at(v));
    hi = std::max(hi, h1.at(v));
  }
  EXPECT_EQ(oscillation(h1, *bottom_left), hi - lo);
  EXPECT_EQ(oscillation(h1, *bottom_left), Rational(3, 5));
}

TEST(Oscillation, ThreeFifthsDecay) {
  const int depth = 5;
  const auto h = sg_extend(Rational(1), Rational(0), Rational(0), depth);
  for (int n = 0; n <= depth; ++n)
    for (const auto& cell : enumerate_skeletons(*h.graph, depth - n))
      EXPECT_LE(oscillation(h, cell), pow(Rational(3, 5), static_cast<unsigned>(n)));
}

TEST(MaximumPrinciple, RandomRationalBoundaryData) {
  std::mt19937_64 rng(2024);
  auto sg = std::make_shared<const CableGraph>(build_sierpinski(3));
  const auto sg_cell = enumerate_skeletons(*sg, 3).front();
  auto vg = std::make_shared<const CableGraph>(build_vicsek(2, 2));
  const auto v_cell = enumerate_skeletons(*vg, 2).front();
  for (int trial = 0; trial < 5000; ++trial) {
    const std::vector<Rational> a{random_rational(rng), random_rational(rng), random_rational(rng)};
    const auto h = sg_extend(sg, sg_cell, a[0], a[1], a[2]);
    const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
    for (const auto& v : h.values) {
      ASSERT_LE(*lo, v);
      ASSERT_LE(v, *hi);
    }
  }
  for (int trial = 0; trial < 5000; ++trial) {
    const std::vector<Rational> a{random_rational(rng), random_rational(rng), random_rational(rng), random_rational(rng)};
    const auto h = vicsek_extend(vg, v_cell, a);
    const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
    for (const auto& v : h.values) {
      ASSERT_LE(*lo, v);
      ASSERT_LE(v, *hi);
    }
  }
}

TEST(Barrier, VicsekFiveNinths) {
  std::mt19937_64 rng(9);
  const int n = 3;
  auto g = std::make_shared<const CableGraph>(build_vicsek(2, n));
  const auto whole = enumerate_skeletons(*g, n).front();
  const Skeleton* corner = nullptr;
  const auto subs = enumerate_skeletons(*g, n - 2);
  for (const auto& s : subs)
    if (s.offset == LatticePoint{0, 0}) corner = &s;
  ASSERT_NE(corner, nullptr);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Rational> a{random_rational(rng), random_rational(rng), random_rational(rng), random_rational(rng)};
    // q1 carries the largest absolute value and is positive.
    Rational big(0);
    for (const auto& x : a) big = std::max(big, abs(x));
    if (big.sign() == 0) continue;
    a[0] = big;
    const auto h = vicsek_extend(g, whole, a);
    for (int v : corner->members) EXPECT_GE(h.at(v), Rational(5, 9) * a[0]);
  }
}

TEST(Barrier, SierpinskiSevenTwentyFifths) {
  std::mt19937_64 rng(10);
  const int n = 4;
  auto g = std::make_shared<const CableGraph>(build_sierpinski(n));
  const auto whole = enumerate_skeletons(*g, n).front();
  const Skeleton* corner = nullptr;
  const auto subs = enumerate_skeletons(*g, n - 2);
  for (const auto& s : subs)
    if (s.offset == LatticePoint{0, 0}) corner = &s;
  ASSERT_NE(corner, nullptr);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Rational> a{random_rational(rng), random_rational(rng), random_rational(rng)};
    Rational big(0);
    for (const auto& x : a) big = std::max(big, abs(x));
    if (big.sign() == 0) continue;
    a[0] = big;
    const auto h = sg_extend(g, whole, a[0], a[1], a[2]);
    for (int v : corner->members) EXPECT_GE(h.at(v), Rational(7, 25) * a[0]);
  }
}

TEST(RhCounterexample, GradientExact) {
  EXPECT_EQ(rh_counterexample(0).gradient, Rational(3, 5));
  EXPECT_EQ(rh_counterexample(2).gradient, Rational(27, 125));
  for (int n = 0; n <= 8; ++n) EXPECT_EQ(rh_counterexample(n).gradient, pow(Rational(3, 5), static_cast<unsigned>(n + 1)));
}

TEST(RhCounterexample, RatioGrows) {
  Rational prev(0);
  for (int n = 0; n <= 8; ++n) {
    const auto c = rh_counterexample(n);
    EXPECT_LE(c.abs_mean, Rational(1));
    EXPECT_GT(c.abs_mean, Rational(0));
    if (n > 0) {
      EXPECT_GT(c.rh_ratio / prev, Rational(1));
    }
    // The mean of |u| only helps: ratio >= (6/5)^{n+1} / 2.
    EXPECT_GE(c.rh_ratio, pow(Rational(6, 5), static_cast<unsigned>(n + 1)) / Rational(2));
    prev = c.rh_ratio;
  }
  EXPECT_THROW(rh_counterexample(12, 1000), CapacityError);
}

TEST(RhCounterexample, MatchesSkeletonIntegration) {
  for (int n = 0; n <= 3; ++n) {
    auto g = std::make_shared<const CableGraph>(build_sierpinski(n + 2));
    const auto [L, R] = rh_counterexample_skeletons(g, n);
    const std::int64_t side = detail::ipow(2, n + 1);
    const int c = g->id_of({side, 0});
    EXPECT_EQ(L.at(c), Rational(0));
    EXPECT_EQ(R.at(c), Rational(0));
    // Kirchhoff at the junction, summing over both cells.
    EXPECT_EQ((kirchhoff_residual(L, c) + kirchhoff_residual(R, c)).sign(), 0);
    const auto ref = rh_counterexample(n);
    EXPECT_EQ(R.at(LatticePoint{side + 1, 0}) - R.at(c), ref.gradient);
    EXPECT_EQ((abs_integral(L) + abs_integral(R)) / Rational(ref.cables), ref.abs_mean);
  }
}

TEST(CableIntegral, SignChange) {
  // u linear from -1 to 3: |u| integrates to (1/4)(1/2) + (3/4)(3/2) = 5/4.
  EXPECT_EQ(cable_abs_integral(Rational(-1), Rational(3)), Rational(5, 4));
  EXPECT_EQ(cable_abs_integral(Rational(1), Rational(3)), Rational(2));
  EXPECT_EQ(cable_abs_integral(Rational(0), Rational(-2)), Rational(1));
}
