#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "cablelab/riesz.hpp"
#include "test_graphs.hpp"

using namespace cablelab;

namespace {

Vector random_mean_zero(const Mesh& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  Vector v(static_cast<Eigen::Index>(m.num_nodes()));
  for (auto& x : v) x = ud(rng);
  v.array() -= m.mass().dot(v) / m.mass().sum();
  return v;
}

// Dense functional calculus on the mass-symmetrized generator.
struct Dense {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd V;  // M-orthonormal eigenvectors
};

Dense dense(const Mesh& m) {
  const Eigen::MatrixXd S = Eigen::MatrixXd(m.stiffness());
  const Eigen::VectorXd isq = m.mass().cwiseSqrt().cwiseInverse();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(isq.asDiagonal() * S * isq.asDiagonal());
  return {es.eigenvalues(), isq.asDiagonal() * es.eigenvectors()};
}

Vector dense_apply(const Mesh& m, const Dense& d, const Vector& f, const std::function<double(double)>& g) {
  const Eigen::VectorXd c = d.V.transpose() * (m.mass().asDiagonal() * f);
  Eigen::VectorXd gc(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) gc[i] = d.lambda[i] < 1e-10 ? 0.0 : g(d.lambda[i]) * c[i];
  return d.V * gc;
}

double max_abs_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<Mesh> small_meshes() {
  std::vector<Mesh> out;
  out.push_back(refine(testgraphs::twelve_nodes(), 3));
  out.push_back(refine(build_sierpinski(3), 2));
  out.push_back(refine(build_vicsek(2, 2), 2));
  out.push_back(refine(build_sierpinski(2), 4));
  return out;
}

}  // namespace

TEST(Quadrature, GammaIntegral) {
  for (double a : {0.05, 0.1585, 0.5, 0.9, 1.0}) {
    const auto q = make_quadrature(a, 1.0, 1.0);
    EXPECT_NEAR(q.integrate([](double t) { return std::exp(-t); }), std::tgamma(a), 1e-8 * std::tgamma(a)) << a;
    EXPECT_LT(q.remainder, 1e-6);
  }
}

TEST(Quadrature, ScalarMultipliersMatchClosedForms) {
  for (double eps : {0.05, 0.15, 0.2}) {
    for (double theta : {1e-6, 1e-3, 0.1, 1.0, 7.0, 64.0}) {
      const auto q = make_quadrature(eps, theta, 64.0);
      const double v = q.integrate([&](double t) { return std::exp(-(1.0 + t) * theta); }) / std::tgamma(eps);
      const double exact = std::pow(theta, -eps) * std::exp(-theta);
      EXPECT_NEAR(v, exact, 1e-8 * exact) << eps << " " << theta;
    }
  }
  const auto q = make_quadrature(0.5, 1.0, 257.0);
  for (double theta : {0.0, 0.5, 10.0, 256.0}) {
    const double v = q.integrate([&](double t) { return std::exp(-t * (1.0 + theta)); }) / std::sqrt(std::numbers::pi);
    EXPECT_NEAR(v, 1.0 / std::sqrt(1.0 + theta), 1e-8) << theta;
  }
}

TEST(Quadrature, PanelDoublingConverged) {
  const auto q1 = make_quadrature(0.2, 1e-4, 64.0, 1e-10, 1);
  const auto q2 = make_quadrature(0.2, 1e-4, 64.0, 1e-10, 2);
  EXPECT_GT(q2.nodes.size(), q1.nodes.size());
  for (double theta : {1e-4, 0.01, 1.0, 30.0}) {
    auto g = [&](double t) { return std::exp(-(1.0 + t) * theta); };
    const double a = q1.integrate(g), b = q2.integrate(g);
    EXPECT_LT(std::abs(a - b), 1e-6 * std::abs(b)) << theta;
  }
}

TEST(Quadrature, RejectsBadParameters) {
  EXPECT_THROW(make_quadrature(0.0, 1.0, 1.0), InputError);
  EXPECT_THROW(make_quadrature(1.5, 1.0, 1.0), InputError);
  EXPECT_THROW(make_quadrature(0.5, 0.0, 1.0), InputError);
}

TEST(Riesz, DenseOracleAgreement) {
  for (const auto& m : small_meshes()) {
    ASSERT_LE(m.num_nodes(), 500u);
    const auto law = ScalingLaws::for_family(m.graph().family, 2);
    const double eps = 0.5 * law.gradient_gap();
    const auto d = dense(m);
    for (std::uint64_t seed : {1, 2}) {
      const Vector f = random_mean_zero(m, seed);
      const auto fields = riesz_fields(m, f, eps);
      const Vector loc = m.gradient(dense_apply(m, d, f, [](double l) { return 1.0 / std::sqrt(1.0 + l); }));
      const Vector qua = m.gradient(dense_apply(m, d, f, [&](double l) { return std::pow(l, -eps) * std::exp(-l); }));
      EXPECT_LT(max_abs_diff(fields.local, loc), 1e-6 * std::max(1.0, loc.cwiseAbs().maxCoeff())) << m.num_nodes();
      EXPECT_LT(max_abs_diff(fields.quasi, qua), 1e-6 * std::max(1.0, qua.cwiseAbs().maxCoeff())) << m.num_nodes();
    }
  }
}

TEST(Riesz, EigenvectorInput) {
  const auto m = refine(build_sierpinski(2), 2);
  const auto law = ScalingLaws::for_family(Family::sierpinski, 2);
  const auto d = dense(m);
  const double eps = 0.15;
  for (Eigen::Index i : {1, 5, 20}) {
    const double l = d.lambda[i];
    const Vector f = d.V.col(i);
    const Vector gf = m.gradient(f);
    const Vector q = quasi_riesz_apply(m, law, f, eps);
    const Vector r = local_riesz_apply(m, f);
    const double s = std::max(1.0, gf.cwiseAbs().maxCoeff());
    EXPECT_LT(max_abs_diff(q, std::pow(l, -eps) * std::exp(-l) * gf), 1e-6 * s) << i;
    EXPECT_LT(max_abs_diff(r, gf / std::sqrt(1.0 + l)), 1e-6 * s) << i;
  }
}

TEST(Riesz, TrivialInputs) {
  const auto m = refine(build_vicsek(2, 2), 2);
  const auto law = ScalingLaws::for_family(Family::vicsek, 2);
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(m.num_nodes()));
  EXPECT_EQ(quasi_riesz_apply(m, law, zero, 0.2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(local_riesz_apply(m, zero).cwiseAbs().maxCoeff(), 0.0);
  const Vector c = Vector::Constant(static_cast<Eigen::Index>(m.num_nodes()), 2.0);
  EXPECT_LT(local_riesz_apply(m, c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Riesz, LinearityAndScaling) {
  const auto m = refine(build_sierpinski(3), 2);
  const auto law = ScalingLaws::for_family(Family::sierpinski, 2);
  const Vector f = random_mean_zero(m, 4), g = random_mean_zero(m, 5);
  const Vector lhs = quasi_riesz_apply(m, law, 2.0 * f - 3.0 * g, 0.1);
  const Vector rhs = 2.0 * quasi_riesz_apply(m, law, f, 0.1) - 3.0 * quasi_riesz_apply(m, law, g, 0.1);
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-7 * rhs.cwiseAbs().maxCoeff());
  const Vector a = local_riesz_apply(m, 1e3 * f), b = 1e3 * local_riesz_apply(m, f);
  EXPECT_LT(max_abs_diff(a, b), 1e-8 * b.cwiseAbs().maxCoeff());
}

TEST(Riesz, PanelDoublingChangesLittle) {
  const auto m = refine(build_sierpinski(4), 2);
  const Vector f = random_mean_zero(m, 9);
  RieszOptions fine;
  fine.panels_per_octave = 2;
  const auto a = riesz_fields(m, f, 0.15), b = riesz_fields(m, f, 0.15, fine);
  EXPECT_LT(max_abs_diff(a.quasi, b.quasi), 1e-6 * b.quasi.cwiseAbs().maxCoeff());
  EXPECT_LT(max_abs_diff(a.local, b.local), 1e-6 * b.local.cwiseAbs().maxCoeff());
  EXPECT_LT(a.remainder, 1e-6);
}

TEST(Riesz, LocalTransformL2Contraction) {
  const auto m = refine(build_vicsek(2, 3), 2);
  for (const auto& f : riesz_battery(m, 20, 3))
    EXPECT_LE(segment_lp_norm(m, local_riesz_apply(m, f), 2.0), lp_norm(m, f, 2.0) * (1.0 + 1e-6));
}

TEST(Riesz, SegmentNormOfGradientMatchesEnergy) {
  // ||grad u||_2^2 = u^T S u
  const auto m = refine(build_sierpinski(2), 3);
  const Vector u = random_mean_zero(m, 2);
  const double e = u.dot(m.stiffness() * u);
  EXPECT_NEAR(std::pow(segment_lp_norm(m, m.gradient(u), 2.0), 2.0), e, 1e-10 * e);
}

TEST(Riesz, RejectsBadInput) {
  const auto m = refine(build_sierpinski(2), 2);
  const auto law = ScalingLaws::for_family(Family::sierpinski, 2);
  const Vector f = random_mean_zero(m, 1);
  EXPECT_THROW(quasi_riesz_apply(m, law, f, 0.0), InputError);
  EXPECT_THROW(quasi_riesz_apply(m, law, f, law.gradient_gap()), InputError);
  EXPECT_THROW(quasi_riesz_apply(m, law, (f.array() + 1.0).matrix(), 0.1), InputError);
  EXPECT_THROW(local_riesz_apply(m, Vector::Zero(4)), InputError);
}

TEST(Riesz, BatteryIsMeanZeroAndDeterministic) {
  const auto m = refine(build_vicsek(2, 2), 2);
  const auto a = riesz_battery(m, 12, 7), b = riesz_battery(m, 12, 7);
  ASSERT_EQ(a.size(), 12u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(m.mass().dot(a[i]), 0.0, 1e-10);
    EXPECT_EQ(a[i], b[i]);
  }
}

TEST(Riesz, SmallNormScan) {
  RieszScanOptions opt;
  opt.family = Family::sierpinski;
  opt.generations = {2, 3, 4};
  opt.samples = 20;
  const auto scan = lp_norm_scan(opt);
  EXPECT_NEAR(scan.eps, 0.5 * ScalingLaws::sierpinski().gradient_gap(), 1e-15);
  EXPECT_EQ(scan.trends.size(), 9u);
  for (double v : scan.get(RieszKind::local, 2.0).norms) EXPECT_LE(v, 1.0 + 1e-6);
  for (const auto& t : scan.trends) {
    EXPECT_EQ(t.norms.size(), 3u);
    for (double v : t.norms) EXPECT_TRUE(std::isfinite(v) && v > 0.0);
  }
  opt.workers = 3;
  const auto again = lp_norm_scan(opt);
  EXPECT_EQ(again.get(RieszKind::quasi_riesz, 4.0).norms, scan.get(RieszKind::quasi_riesz, 4.0).norms);
  opt.generations = {3};
  EXPECT_THROW(lp_norm_scan(opt), InputError);
}
