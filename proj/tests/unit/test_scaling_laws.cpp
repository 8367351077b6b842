#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cablelab/scaling_laws.hpp"

using namespace cablelab;

namespace {

// Brute-force sup over a log grid in s; fine grid near the maximizer is not assumed.
double upsilon_grid(const ScalingLaws& L, double R, double t, int points = 10000) {
  double best = 0.0;
  const double lo = std::log(1e-6), hi = std::log(1e6);
  for (int i = 0; i < points; ++i) {
    const double s = std::exp(lo + (hi - lo) * i / (points - 1));
    best = std::max(best, R / s - t / L.psi(s));
  }
  best = std::max(best, R - t);
  return best;
}

// Golden-section refinement around the best grid point.
double upsilon_refined(const ScalingLaws& L, double R, double t) {
  const int points = 10000;
  const double lo = std::log(1e-6), hi = std::log(1e6);
  double best = -1e300;
  int arg = 0;
  for (int i = 0; i < points; ++i) {
    const double s = std::exp(lo + (hi - lo) * i / (points - 1));
    const double v = R / s - t / L.psi(s);
    if (v > best) { best = v; arg = i; }
  }
  const double step = (hi - lo) / (points - 1);
  double a = lo + (arg - 1) * step, b = lo + (arg + 1) * step;
  auto f = [&](double ls) { const double s = std::exp(ls); return R / s - t / L.psi(s); };
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double c = b - gr * (b - a), d = a + gr * (b - a);
    if (f(c) > f(d)) b = d; else a = c;
  }
  return std::max({best, f(0.5 * (a + b)), 0.0, R - t});
}

double ratio_gap_grid(const ScalingLaws& L, double A) {
  double best = -1e300;
  const int n = 600;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double t = std::pow(10.0, -3.0 + 6.0 * i / (n - 1));
      const double s = std::pow(10.0, -3.0 + 6.0 * j / (n - 1));
      best = std::max(best, L.lemma53_f(A, t, s));
    }
  return best;
}

}  // namespace

TEST(ScalingLaws, FamilyExponents) {
  const auto s = ScalingLaws::sierpinski();
  EXPECT_NEAR(s.alpha(), std::log2(3.0), 1e-15);
  EXPECT_NEAR(s.beta(), std::log2(5.0), 1e-15);
  EXPECT_NEAR(s.gradient_gap(), 0.3174, 1e-4);
  const auto v = ScalingLaws::vicsek(2);
  EXPECT_NEAR(v.alpha(), std::log(5.0) / std::log(3.0), 1e-15);
  EXPECT_NEAR(v.beta(), std::log(15.0) / std::log(3.0), 1e-14);
  EXPECT_NEAR(v.gradient_gap(), 1.0 - std::log(5.0) / std::log(15.0), 1e-14);
  EXPECT_THROW(ScalingLaws(1.0, 1.5), InputError);
  EXPECT_THROW(ScalingLaws(1.0, 2.5), InputError);
}

TEST(ScalingLaws, PhiPsi) {
  const auto s = ScalingLaws::sierpinski();
  EXPECT_DOUBLE_EQ(s.phi(1.0), 1.0);
  EXPECT_DOUBLE_EQ(s.psi(1.0), 1.0);
  EXPECT_NEAR(s.psi(2.0), 5.0, 1e-12);
  EXPECT_NEAR(s.phi(2.0), 3.0, 1e-12);
  EXPECT_NEAR(s.phi(1.0 - 1e-12), 1.0, 1e-11);
  EXPECT_NEAR(s.psi(1.0 - 1e-12), 1.0, 1e-11);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(std::log(0.01), std::log(100.0));
  for (int i = 0; i < 100; ++i) {
    const double r = std::exp(u(rng));
    EXPECT_NEAR(s.psi_inv(s.psi(r)), r, 1e-13 * r);
  }
  EXPECT_THROW(s.phi(0.0), InputError);
  EXPECT_THROW(s.psi_inv(-1.0), InputError);
}

TEST(Upsilon, Examples) {
  for (double beta : {2.0, 2.32, 2.465, 3.0}) {
    const ScalingLaws L(2.0, beta);
    EXPECT_EQ(L.upsilon(0.0, 3.0), 0.0);
    EXPECT_NEAR(L.upsilon(4.0, 1.0), 4.0, 1e-12);
  }
}

TEST(Upsilon, MatchesGridSearch) {
  for (const auto& L : {ScalingLaws::sierpinski(), ScalingLaws::vicsek(2), ScalingLaws(1.0, 2.0)}) {
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) {
        const double R = std::pow(10.0, -2.0 + 4.0 * i / 49.0);
        const double t = std::pow(10.0, -2.0 + 4.0 * j / 49.0);
        const double exact = L.upsilon(R, t);
        const double grid = upsilon_refined(L, R, t);
        EXPECT_NEAR(exact, grid, 1e-6 * std::max(1.0, std::abs(grid))) << R << " " << t;
        EXPECT_GE(exact + 1e-12, upsilon_grid(L, R, t, 2000));
      }
  }
}

TEST(Upsilon, AsymptoticEnvelope) {
  const auto L = ScalingLaws::sierpinski();
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j) {
      const double R = std::pow(10.0, -1.0 + 3.0 * i / 29.0);
      const double t = std::pow(10.0, -1.0 + 3.0 * j / 29.0);
      const double ratio = L.upsilon(R, t) / L.upsilon_asymptotic(R, t);
      // Away from R ~ t both expressions are large and comparable.
      if (L.upsilon_asymptotic(R, t) < 1.0) continue;
      EXPECT_GE(ratio, 1.0 / 8.0);
      EXPECT_LE(ratio, 8.0);
    }
}

TEST(Upsilon, Monotone) {
  const auto L = ScalingLaws::vicsek(2);
  for (double R = 0.1; R < 100; R *= 1.3)
    for (double t = 0.1; t < 100; t *= 1.3) {
      EXPECT_LE(L.upsilon(R, t), L.upsilon(R * 1.1, t) + 1e-12);
      EXPECT_GE(L.upsilon(R, t), L.upsilon(R, t * 1.1) - 1e-12);
    }
}

TEST(Upsilon, BetaMonotonicityOfSubGaussianTerm) {
  auto term = [](double d, double t, double beta) { return std::pow(d / std::pow(t, 1.0 / beta), beta / (beta - 1.0)); };
  for (double d = 0.2; d < 50; d *= 1.5)
    for (double t = 0.2; t < 50; t *= 1.5)
      for (double beta = 2.0; beta < 3.5; beta += 0.1) {
        const double a = term(d, t, beta), b = term(d, t, beta + 0.1);
        if (d > t) EXPECT_LE(b, a * (1 + 1e-12));
        else EXPECT_GE(b, a * (1 - 1e-12));
      }
}

TEST(RatioGapBound, ClosedFormAndGrid) {
  const ScalingLaws quad(1.5, 2.0);
  for (double A : {0.1, 0.5, 1.0, 2.0, 3.0}) EXPECT_NEAR(quad.lemma53_bound(A), A * A / 4.0, 1e-12);
  for (const auto& L : {ScalingLaws::sierpinski(), ScalingLaws::vicsek(2), ScalingLaws::vicsek(3)}) {
    for (double A : {0.5, 1.0, 2.0, 5.0}) EXPECT_LE(ratio_gap_grid(L, A), L.lemma53_bound(A) + 1e-12);
    EXPECT_LT(L.lemma53_bound(1e-4), 1e-4);
    EXPECT_GT(L.lemma53_bound(1e-4), 0.0);
  }
}

TEST(RatioGapBound, BoundIsTheSupremumOfTheOneVariableFunction) {
  for (const auto& L : {ScalingLaws::sierpinski(), ScalingLaws::vicsek(2)}) {
    for (double A : {0.5, 1.0, 2.0, 4.0}) {
      double best = 0.0;
      for (int i = 0; i < 200000; ++i) {
        const double x = std::pow(10.0, -6.0 + 10.0 * i / 199999.0);
        best = std::max(best, A * std::max(std::sqrt(x), std::pow(x, 1.0 / L.beta())) - x);
      }
      EXPECT_NEAR(best, L.lemma53_bound(A), 1e-6 * std::max(1.0, best));
    }
  }
}
