#pragma once

// The local Riesz transform grad (I + Delta)^{-1/2}, the quasi-Riesz part grad e^{-Delta} Delta^{-eps},
// and empirical L^p norm scans across generations.
//
// Both operators are time integrals of the semigroup,
//   (I + Delta)^{-1/2}       = Gamma(1/2)^{-1} int_0^inf t^{-1/2} e^{-t} e^{-t Delta} dt,
//   e^{-Delta} Delta^{-eps}  = Gamma(eps)^{-1}  int_0^inf t^{eps-1} e^{-(1+t) Delta} dt,
// discretized by one quadrature rule in t and applied through a Lanczos basis: the rule is evaluated
// on every Ritz value, which is the same as summing the weighted semigroup terms in the Krylov space.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cable_mesh.hpp"
#include "errors.hpp"
#include "fractal_graph.hpp"
#include "heat_semigroup.hpp"
#include "krylov.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "scaling_laws.hpp"
#include "stats.hpp"

namespace cablelab {

namespace detail {
inline constexpr std::array<double, 4> kGl8Nodes{0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                                 0.9602898564975363};
inline constexpr std::array<double, 4> kGl8Weights{0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                                   0.1012285362903763};

inline void gl8(double a, double b, const std::function<void(double, double)>& emit) {
  const double c = 0.5 * (a + b), r = 0.5 * (b - a);
  for (std::size_t i = 0; i < 4; ++i) {
    emit(c - r * kGl8Nodes[i], r * kGl8Weights[i]);
    emit(c + r * kGl8Nodes[i], r * kGl8Weights[i]);
  }
}
}  // namespace detail

/// Nodes and weights for int_0^T t^{a-1} g(t) dt with g(t) <= e^{-decay t}.
/// The first panel [0, t_first] is mapped by u = t^a, which absorbs the endpoint singularity; the rest of
/// [t_first, T] is cut into log-spaced Gauss-Legendre panels of order 8.
struct QuadratureScheme {
  double exponent = 0.5;   ///< a
  double decay = 1.0;
  double t_first = 0.0;
  double t_max = 0.0;      ///< T
  int panels_per_octave = 1;
  int panels = 0;
  std::vector<double> nodes;
  std::vector<double> weights;
  double remainder = 0.0;  ///< Bound on int_T^inf t^{a-1} e^{-decay t} dt relative to int_0^inf.

  double integrate(const std::function<double(double)>& g) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * g(nodes[i]);
    return s;
  }
};

/// `rate_max` bounds the fastest decay the integrand can have; it fixes the first panel so that g
/// changes by at most 1e-3 there.
inline QuadratureScheme make_quadrature(double a, double decay, double rate_max, double tol = 1e-10,
                                        int panels_per_octave = 1) {
  if (!(a > 0.0 && a <= 1.0)) throw InputError("make_quadrature: exponent must lie in (0, 1]");
  if (!(decay > 0.0) || !std::isfinite(decay)) throw InputError("make_quadrature: decay must be positive");
  if (panels_per_octave < 1) throw InputError("make_quadrature: need at least one panel per octave");
  QuadratureScheme q;
  q.exponent = a;
  q.decay = decay;
  q.panels_per_octave = panels_per_octave;
  q.t_first = 1e-3 / std::max({rate_max, decay, 1.0});
  // Tail: int_T^inf t^{a-1} e^{-ct} dt <= T^{a-1} e^{-cT} / c, against the full Gamma(a) c^{-a}.
  const double full = std::tgamma(a) * std::pow(decay, -a);
  auto tail = [&](double T) { return std::pow(T, a - 1.0) * std::exp(-decay * T) / decay / full; };
  q.t_max = std::max(1.0, 2.0 * q.t_first);
  while (tail(q.t_max) > tol) q.t_max *= 2.0;
  q.remainder = tail(q.t_max);

  const double u1 = std::pow(q.t_first, a);
  detail::gl8(0.0, u1, [&](double u, double w) {
    q.nodes.push_back(std::pow(u, 1.0 / a));
    q.weights.push_back(w / a);
  });
  q.panels = 1;
  const double ratio = std::pow(2.0, 1.0 / panels_per_octave);
  for (double lo = q.t_first; lo < q.t_max; lo *= ratio) {
    const double hi = std::min(lo * ratio, q.t_max);
    detail::gl8(lo, hi, [&](double t, double w) {
      q.nodes.push_back(t);
      q.weights.push_back(w * std::pow(t, a - 1.0));
    });
    ++q.panels;
  }
  return q;
}

enum class RieszKind { local, quasi_part, quasi_riesz };

inline std::string to_string(RieszKind k) {
  switch (k) {
    case RieszKind::local: return "local";
    case RieszKind::quasi_part: return "quasi_part";
    default: return "quasi_riesz";
  }
}

/// Range check for the quasi-Riesz order: 0 < eps < 1 - alpha/beta.
inline void check_epsilon(const ScalingLaws& law, double eps) {
  if (!(eps > 0.0 && eps < law.gradient_gap()))
    throw InputError("epsilon must lie in (0, 1 - alpha/beta) = (0, " + std::to_string(law.gradient_gap()) + ")");
}

struct RieszOptions {
  double tol = 1e-10;        ///< Relative change between Lanczos sizes at which the basis stops growing.
  int panels_per_octave = 1;
  int max_dimension = 800;
};

/// Gradient fields of the local and quasi parts for one input.
struct RieszFields {
  Vector local;       ///< grad (I + Delta)^{-1/2} f
  Vector quasi;       ///< grad e^{-Delta} Delta^{-eps} f (empty when eps <= 0)
  int dimension = 0;  ///< Lanczos basis size
  double remainder = 0.0;
  double theta_min = 0.0;  ///< Smallest eigenvalue estimate used by the quasi tail cutoff.
};

namespace detail {

inline double mean_of(const Mesh& mesh, const Vector& f) { return mesh.mass().dot(f) / mesh.mass().sum(); }

/// A multiplier built from the current Ritz values, with its quadrature remainder.
struct Multiplier {
  std::function<double(double)> g;
  double remainder = 0.0;
  double theta_min = 0.0;
};

struct KrylovOutput {
  Vector value;
  int dimension = 0;
  double remainder = 0.0;
  double theta_min = 0.0;
};

/// g(A) v with the multiplier rebuilt from each basis's Ritz values, grown until two sizes agree to tol.
inline KrylovOutput adaptive_apply(const Operator& A, const Vector& w, const Vector& v, const Vector& deflate,
                                   const std::function<Multiplier(double, double)>& make, const RieszOptions& opt) {
  LanczosBasis basis(A, w, v, {deflate});
  KrylovOutput out;
  out.value = Vector::Zero(v.size());
  if (basis.exhausted()) return out;
  const int m_max = std::min<int>(opt.max_dimension, static_cast<int>(v.size()));
  Vector prev;
  for (int m = 10;; m += 10) {
    basis.extend(std::min(m, m_max));
    const auto r = basis.ritz();
    const auto mult = make(r.values.minCoeff(), r.values.maxCoeff());
    Vector cur = basis.apply(r, mult.g);
    double change = std::numeric_limits<double>::infinity();
    if (prev.size() > 0) change = wnorm(w, cur - prev) / std::max(wnorm(w, cur), 1e-300);
    if (change <= opt.tol || basis.exhausted() || basis.size() >= m_max) {
      if (!(change <= opt.tol) && !basis.exhausted())
        throw ConvergenceError("riesz: Lanczos basis did not converge", change);
      out.value = std::move(cur);
      out.dimension = basis.size();
      out.remainder = mult.remainder;
      out.theta_min = mult.theta_min;
      return out;
    }
    prev = std::move(cur);
  }
}

}  // namespace detail

/// Per-mesh state shared by all inputs: the semigroup, and a sparse factorization of S + sigma M for the
/// shifted inverse used by Delta^{-eps}. sigma = 1/m(X)^2 sits below the spectral gap of a connected
/// metric graph of total length m(X), so the singularity of theta^{-eps} stays well outside the spectrum
/// of the inverse.
class RieszContext {
 public:
  explicit RieszContext(const Mesh& mesh) : mesh_(&mesh), heat_(mesh) {
    const Vector& w = mesh.mass();
    sigma_ = 1.0 / std::max(1.0, w.sum() * w.sum());
    Eigen::SparseMatrix<double> K = mesh.stiffness();
    for (Eigen::Index i = 0; i < K.rows(); ++i) K.coeffRef(i, i) += sigma_ * w[i];
    ldlt_.compute(K);
    if (ldlt_.info() != Eigen::Success) throw ConvergenceError("riesz: factorization of S + sigma M failed", 0.0);
    one_ = Vector::Constant(w.size(), 1.0 / std::sqrt(w.sum()));
  }

  const Mesh& mesh() const { return *mesh_; }
  double sigma() const { return sigma_; }

  /// Gradient fields of (I + Delta)^{-1/2} f and, for eps > 0, of e^{-Delta} Delta^{-eps} f, for the
  /// mean-zero part of f (the constant mode has zero gradient under the local transform and is
  /// excluded from Delta^{-eps}).
  RieszFields fields(const Vector& f, double eps, const RieszOptions& opt = {}) const {
    const Mesh& mesh = *mesh_;
    const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
    if (f.size() != n) throw InputError("riesz: wrong vector size");
    if (!f.allFinite()) throw InputError("riesz: input is not finite");
    const Vector& w = mesh.mass();
    const Vector f0 = f.array() - detail::mean_of(mesh, f);
    RieszFields out;

    // Local part: Lanczos on L = M^{-1} S; the multiplier is the t-quadrature of t^{-1/2} e^{-t(1+theta)}.
    Operator L = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = mesh.generator(x); };
    const auto loc = detail::adaptive_apply(L, w, f0, one_, [&](double, double th_max) {
      auto q = std::make_shared<QuadratureScheme>(make_quadrature(0.5, 1.0, 1.0 + std::max(th_max, 0.0), opt.tol,
                                                                  opt.panels_per_octave));
      return detail::Multiplier{[q](double th) {
                                  return q->integrate([&](double t) { return std::exp(-t * (1.0 + th)); }) /
                                         std::sqrt(std::numbers::pi);
                                },
                                q->remainder, 0.0};
    }, opt);
    out.local = mesh.gradient(loc.value);
    out.dimension = loc.dimension;
    out.remainder = loc.remainder;
    if (!(eps > 0.0)) return out;

    // Quasi part: e^{-(1+t) Delta} = e^{-t Delta} e^{-Delta}. Apply e^{-Delta} by the semigroup, then the
    // t-quadrature of t^{eps-1} e^{-t theta} on the Ritz values of the shifted inverse
    // R = (S + sigma M)^{-1} M, where theta = 1/mu - sigma.
    const Vector g0 = heat_.evolve(f0, 1.0);
    Operator R = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = ldlt_.solve(w.cwiseProduct(x)); };
    const double sig = sigma_;
    const auto qua = detail::adaptive_apply(R, w, g0, one_, [&](double mu_min, double mu_max) {
      const double th_min = std::max(1.0 / mu_max - sig, 1e-300);
      const double th_max = mu_min > 0.0 ? 1.0 / mu_min - sig : 4.0 * mesh.k() * mesh.k();
      auto q = std::make_shared<QuadratureScheme>(make_quadrature(eps, th_min, th_max, opt.tol, opt.panels_per_octave));
      const double ge = std::tgamma(eps);
      return detail::Multiplier{[q, sig, ge](double mu) {
                                  const double th = 1.0 / mu - sig;
                                  return q->integrate([&](double t) { return std::exp(-t * th); }) / ge;
                                },
                                q->remainder, th_min};
    }, opt);
    out.quasi = mesh.gradient(qua.value);
    out.dimension = std::max(out.dimension, qua.dimension);
    out.remainder = std::max(out.remainder, qua.remainder);
    out.theta_min = qua.theta_min;
    return out;
  }

 private:
  const Mesh* mesh_;
  HeatSemigroup heat_;
  double sigma_ = 0.0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  Vector one_;
};

inline RieszFields riesz_fields(const Mesh& mesh, const Vector& f, double eps, const RieszOptions& opt = {}) {
  return RieszContext(mesh).fields(f, eps, opt);
}

/// grad (I + Delta)^{-1/2} f as a per-segment field.
inline Vector local_riesz_apply(const Mesh& mesh, const Vector& f, const RieszOptions& opt = {}) {
  return riesz_fields(mesh, f, 0.0, opt).local;
}

/// grad e^{-Delta} Delta^{-eps} f; f must have mean zero.
inline Vector quasi_riesz_apply(const Mesh& mesh, const ScalingLaws& law, const Vector& f, double eps,
                                const RieszOptions& opt = {}) {
  check_epsilon(law, eps);
  if (f.size() == static_cast<Eigen::Index>(mesh.num_nodes()) &&
      std::abs(detail::mean_of(mesh, f)) > 1e-10 * std::max(1.0, f.cwiseAbs().maxCoeff()))
    throw InputError("quasi_riesz_apply: input must have mean zero (Delta^{-eps} is singular on constants)");
  return riesz_fields(mesh, f, eps, opt).quasi;
}

/// L^p norm of a per-segment field that is constant on each segment of length h.
inline double segment_lp_norm(const Mesh& mesh, const Vector& field, double p) {
  return std::pow(mesh.h() * field.cwiseAbs().array().pow(p).sum(), 1.0 / p);
}

/// Test battery for norm scans: the heat-module test functions projected to mean zero.
inline std::vector<Vector> riesz_battery(const Mesh& mesh, int count, std::uint64_t seed) {
  auto fs = test_functions(mesh, count, seed);
  for (auto& f : fs) f.array() -= detail::mean_of(mesh, f);
  return fs;
}

struct RieszScanOptions {
  Family family = Family::sierpinski;
  int N = 2;
  int k = 2;
  std::vector<int> generations;
  double eps = 0.0;  ///< 0 means (1 - alpha/beta) / 2
  std::vector<double> ps{1.5, 2.0, 4.0};
  int samples = 200;
  std::uint64_t seed = 1;
  int workers = 1;
  RieszOptions riesz;
};

struct RieszTrend {
  RieszKind kind = RieszKind::quasi_riesz;
  double p = 2.0;
  std::vector<double> norms;  ///< Aligned with the generations.
  LinearFit trend;            ///< log norm against generation
  bool bounded = false;       ///< trend slope <= 0.05
};

struct RieszScan {
  std::string family;
  int N = 2;
  int k = 2;
  double eps = 0.0;
  std::vector<int> generations;
  std::vector<RieszTrend> trends;
  std::vector<int> dimensions;  ///< Largest Lanczos size per generation.

  const RieszTrend& get(RieszKind kind, double p) const {
    for (const auto& t : trends)
      if (t.kind == kind && t.p == p) return t;
    throw InputError("RieszScan: no trend for " + to_string(kind) + " p=" + std::to_string(p));
  }
};

inline constexpr double kBoundedSlope = 0.05;

/// Empirical norms max_f ||T f||_p / ||f||_p over the battery, per generation, for the local
/// transform, the quasi part, and their sum.
inline RieszScan lp_norm_scan(const RieszScanOptions& opt) {
  if (opt.generations.size() < 2) throw InputError("lp_norm_scan: need at least two generations");
  for (double p : opt.ps)
    if (!(p > 1.0) || !std::isfinite(p)) throw InputError("lp_norm_scan: p must lie in (1, inf)");
  const auto law = ScalingLaws::for_family(opt.family, opt.N);
  RieszScan scan;
  scan.family = to_string(opt.family);
  scan.N = opt.N;
  scan.k = opt.k;
  scan.eps = opt.eps > 0.0 ? opt.eps : 0.5 * law.gradient_gap();
  check_epsilon(law, scan.eps);
  scan.generations = opt.generations;
  std::sort(scan.generations.begin(), scan.generations.end());
  const std::array kinds{RieszKind::local, RieszKind::quasi_part, RieszKind::quasi_riesz};
  for (auto kind : kinds)
    for (double p : opt.ps) scan.trends.push_back({kind, p, {}, {}, false});

  for (int gen : scan.generations) {
    const auto mesh = refine(build_graph(opt.family, opt.N, gen), opt.k);
    const auto fs = riesz_battery(mesh, opt.samples, opt.seed);
    const RieszContext ctx(mesh);
    struct Ratios {
      std::vector<double> r;
      int dim = 0;
    };
    auto per_f = parallel_map(fs.size(), opt.workers, [&](std::size_t i) {
      const auto fields = ctx.fields(fs[i], scan.eps, opt.riesz);
      Ratios out;
      out.dim = fields.dimension;
      const Vector sum = fields.local + fields.quasi;
      for (auto kind : kinds) {
        const Vector& g = kind == RieszKind::local ? fields.local : kind == RieszKind::quasi_part ? fields.quasi : sum;
        for (double p : opt.ps) out.r.push_back(segment_lp_norm(mesh, g, p) / lp_norm(mesh, fs[i], p));
      }
      return out;
    });
    int dim = 0;
    for (std::size_t j = 0; j < scan.trends.size(); ++j) {
      double best = 0.0;
      for (const auto& r : per_f) best = std::max(best, r.r[j]);
      scan.trends[j].norms.push_back(best);
    }
    for (const auto& r : per_f) dim = std::max(dim, r.dim);
    scan.dimensions.push_back(dim);
  }
  std::vector<double> gx(scan.generations.begin(), scan.generations.end());
  for (auto& t : scan.trends) {
    std::vector<double> ly;
    for (double v : t.norms) ly.push_back(std::log(v));
    t.trend = linear_fit(gx, ly);
    t.bounded = t.trend.slope <= kBoundedSlope;
  }
  return scan;
}

}  // namespace cablelab
