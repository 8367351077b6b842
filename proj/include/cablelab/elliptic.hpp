#pragma once

// Dirichlet/Poisson solves on node subsets, Dirichlet and Neumann eigenvalues,
// exit times, and sampled fits of the elliptic inequalities on metric balls.
//
// Sign convention: Delta is the nonnegative generator, so "Delta u = f in D"
// means (S u)_i = m_i f_i at every node i of D.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cable_mesh.hpp"
#include "errors.hpp"
#include "krylov.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "scaling_laws.hpp"
#include "stats.hpp"

namespace cablelab {

struct DirichletProblem {
  const Mesh* mesh = nullptr;
  std::vector<int> domain;
  Vector boundary;  ///< Full nodal vector; only entries on the outer boundary of `domain` are read. Empty means 0.
  Vector rhs;       ///< Full nodal f. Empty means 0.
};

struct SolveResult {
  Vector u;  ///< Full nodal vector: solution on D, boundary data elsewhere.
  int iterations = 0;
  double relative_residual = 0.0;
};

inline SolveResult solve(const DirichletProblem& p) {
  if (!p.mesh) throw InputError("solve: no mesh");
  const Mesh& mesh = *p.mesh;
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  if (p.boundary.size() != 0 && p.boundary.size() != n) throw InputError("solve: boundary vector has wrong size");
  if (p.rhs.size() != 0 && p.rhs.size() != n) throw InputError("solve: rhs vector has wrong size");
  if (p.boundary.size() != 0 && !p.boundary.allFinite()) throw InputError("solve: boundary data not finite");
  DomainOperator op(mesh, p.domain);
  op.check_connected_to_boundary();
  Vector b = Vector::Zero(static_cast<Eigen::Index>(op.size()));
  if (p.rhs.size() != 0) b += op.mass().cwiseProduct(op.restrict(p.rhs));
  if (p.boundary.size() != 0) b += op.coupling() * op.restrict_boundary(p.boundary);
  auto cg = pcg(op.matrix(), b);
  SolveResult out;
  out.u = p.boundary.size() != 0 ? p.boundary : Vector::Zero(n);
  op.scatter(cg.x, out.u);
  out.iterations = cg.iterations;
  out.relative_residual = cg.relative_residual;
  return out;
}

inline SolveResult solve_dirichlet(const DirichletProblem& p) {
  if (p.rhs.size() != 0 && p.rhs.squaredNorm() > 0.0) throw InputError("solve_dirichlet: use solve_poisson for f != 0");
  return solve(p);
}

inline SolveResult solve_poisson(const Mesh& mesh, std::vector<int> domain, const Vector& f) {
  return solve(DirichletProblem{&mesh, std::move(domain), Vector(), f});
}

struct ExitTime {
  double value = 0.0;
  double margin = 0.0;
  bool margin_ok = false;
};

/// E_x tau_{B(x,r)}: the solution of Delta u = 1 in the ball with zero boundary, at x.
inline ExitTime mean_exit_time(const Mesh& mesh, int x, double r) {
  const Ball b = ball(mesh, x, r);
  ExitTime out;
  out.margin = b.margin;
  out.margin_ok = b.margin_ok();
  const auto u = solve_poisson(mesh, b.nodes, Vector::Ones(static_cast<Eigen::Index>(mesh.num_nodes())));
  out.value = u.u[x];
  return out;
}

struct ExitTimeScan {
  std::vector<double> radii;
  std::vector<double> times;
  LinearFit fit;  ///< log E tau against log r; slope estimates beta.
  bool margin_ok = true;
};

inline ExitTimeScan exit_time_scan(const Mesh& mesh, int x, const std::vector<double>& radii) {
  ExitTimeScan s;
  for (double r : radii) {
    const auto e = mean_exit_time(mesh, x, r);
    s.radii.push_back(r);
    s.times.push_back(e.value);
    s.margin_ok = s.margin_ok && e.margin_ok;
  }
  s.fit = loglog_fit(s.radii, s.times);
  return s;
}

struct Eigen1 {
  double value = 0.0;
  Vector vector;  ///< Local to the node set, M-normalized.
  double residual = 0.0;
};

/// Smallest eigenvalue of A x = lambda M x on a domain, as the top eigenvalue of A^{-1} M.
inline Eigen1 dirichlet_eigenpair(const DomainOperator& op, double tol = 1e-8) {
  DomainFactorization fact(op);
  const Vector& w = op.mass();
  Operator inv = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = fact.solve(w.cwiseProduct(x)); };
  const auto ep = largest_eigenpair(inv, w, Vector::Ones(static_cast<Eigen::Index>(op.size())), tol);
  Eigen1 out;
  out.vector = ep.vector;
  const Vector Ax = op.matrix() * ep.vector;
  out.value = ep.vector.dot(Ax) / wdot(w, ep.vector, ep.vector);
  out.residual = (Ax - out.value * w.cwiseProduct(ep.vector)).norm() / std::max(out.value * w.cwiseProduct(ep.vector).norm(), 1e-300);
  return out;
}

inline double dirichlet_eigenvalue(const Mesh& mesh, std::vector<int> domain, double tol = 1e-8) {
  return dirichlet_eigenpair(DomainOperator(mesh, std::move(domain)), tol).value;
}

/// First nonzero Neumann eigenvalue of a connected node set, by shifted inverse Lanczos with
/// constants deflated.
inline double neumann_gap(const Mesh& mesh, std::vector<int> nodes, double tol = 1e-8) {
  const auto N = neumann_operator(mesh, std::move(nodes));
  const Vector& w = N.mass;
  const double vol = w.sum();
  if (N.nodes.size() < 2) throw InputError("neumann_gap: need at least two nodes");
  // lambda_2 is at least of order 1/vol^2 on a metric graph, so this shift keeps the pencil well scaled.
  const double shift = 1.0 / std::max(1.0, vol * vol);
  Eigen::SparseMatrix<double> K = N.stiffness;
  for (Eigen::Index i = 0; i < K.rows(); ++i) K.coeffRef(i, i) += shift * w[i];
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(K);
  if (ldlt.info() != Eigen::Success) throw ConvergenceError("neumann_gap: factorization failed", 0.0);
  Operator inv = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = ldlt.solve(w.cwiseProduct(x)); };
  const Vector c = Vector::Ones(w.size()) / std::sqrt(vol);
  Vector v0(w.size());
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (auto& x : v0) x = ud(rng);
  const auto ep = largest_eigenpair(inv, w, v0, tol, {c});
  const Vector Sx = N.stiffness * ep.vector;
  return ep.vector.dot(Sx) / wdot(w, ep.vector, ep.vector);
}

// ---------------------------------------------------------------------------
// Sampled inequality fits

struct FitSample {
  int center = 0;
  double r = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  std::string tag;
};

struct RadiusConstant {
  double r = 0.0;
  double constant = 0.0;
  std::size_t samples = 0;
};

struct InequalityFit {
  std::string name;
  std::map<std::string, double> exponents;
  std::vector<FitSample> samples;
  double fitted_constant = 0.0;  ///< sup lhs/rhs over samples with rhs > 0.
  double margin_min = std::numeric_limits<double>::infinity();
  std::size_t skipped_margin = 0;
  std::vector<RadiusConstant> per_radius;
  std::optional<LinearFit> trend;  ///< log per-radius constant against log r, radii >= 1.
  std::vector<std::string> notes;

  void add(FitSample s) {
    if (s.rhs > 0.0) {
      s.ratio = s.lhs / s.rhs;
    } else {
      // 0 <= 0 is a satisfied degenerate sample; lhs > 0 with rhs = 0 cannot be fitted.
      s.ratio = s.lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    samples.push_back(std::move(s));
  }

  void finalize() {
    fitted_constant = 0.0;
    std::map<double, RadiusConstant> by_r;
    for (const auto& s : samples) {
      fitted_constant = std::max(fitted_constant, s.ratio);
      auto& rc = by_r[s.r];
      rc.r = s.r;
      rc.constant = std::max(rc.constant, s.ratio);
      ++rc.samples;
    }
    per_radius.clear();
    std::vector<double> xs, ys;
    for (const auto& [r, rc] : by_r) {
      per_radius.push_back(rc);
      if (r >= 1.0 - 1e-12 && rc.constant > 0.0 && std::isfinite(rc.constant)) {
        xs.push_back(r);
        ys.push_back(rc.constant);
      }
    }
    trend.reset();
    if (xs.size() >= 2) trend = loglog_fit(xs, ys);
  }

  bool finite() const { return std::isfinite(fitted_constant); }
};

struct BallSpec {
  int center = 0;
  double r = 0.0;
};

/// Vertices whose lattice coordinates are all multiples of `step` (cell junctions at that scale).
inline std::vector<int> lattice_junctions(const CableGraph& g, std::int64_t step) {
  std::vector<int> out;
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    bool ok = true;
    for (auto c : g.vertices[i]) ok = ok && (c % step == 0);
    if (ok) out.push_back(static_cast<int>(i));
  }
  return out;
}

/// For each radius: up to `per_radius` centers with positive safety margin, half of them cell
/// junctions at the matching scale and the rest uniform random vertices.
inline std::vector<BallSpec> plan_balls(const Mesh& mesh, const std::vector<double>& radii, int per_radius,
                                        std::uint64_t seed) {
  const CableGraph& g = mesh.graph();
  std::mt19937_64 rng(seed);
  std::vector<BallSpec> out;
  const std::int64_t ratio = detail::generation_ratio(g.family);
  for (double r : radii) {
    auto ok = [&](int v) { return mesh.truncation_distance()[static_cast<std::size_t>(v)] - 2.0 * r > 0.0; };
    std::vector<int> pool;
    std::int64_t step = 1;
    while (static_cast<double>(step * ratio) <= r) step *= ratio;
    for (int v : lattice_junctions(g, step))
      if (ok(v)) pool.push_back(v);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<int> chosen(pool.begin(), pool.begin() + std::min<std::ptrdiff_t>(per_radius / 2 + per_radius % 2,
                                                                                  static_cast<std::ptrdiff_t>(pool.size())));
    std::vector<int> any;
    for (std::size_t v = 0; v < g.num_vertices(); ++v)
      if (ok(static_cast<int>(v))) any.push_back(static_cast<int>(v));
    std::shuffle(any.begin(), any.end(), rng);
    for (int v : any) {
      if (static_cast<int>(chosen.size()) >= per_radius) break;
      if (std::find(chosen.begin(), chosen.end(), v) == chosen.end()) chosen.push_back(v);
    }
    std::sort(chosen.begin(), chosen.end());
    for (int c : chosen) out.push_back({c, r});
  }
  return out;
}

/// A ball B = B(c, r) inside its double 2B, with 2B factored for repeated solves.
/// Local vectors are indexed as [nodes of 2B; outer boundary of 2B].
class BallPatch {
 public:
  BallPatch(const Mesh& mesh, int center, double r) : mesh_(&mesh), center_(center), r_(r) {
    if (!(r >= 2.0 * mesh.h() - 1e-12)) throw InputError("BallPatch: radius must be at least 2h");
    const int src[1] = {center};
    const auto hops = hop_distances(mesh, src, static_cast<std::int64_t>(std::ceil(2.0 * r * mesh.k())) + 1);
    dist_.resize(hops.size());
    for (std::size_t i = 0; i < hops.size(); ++i)
      dist_[i] = hops[i] < 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(hops[i]) * mesh.h();
    inner_ = ball_from_distances(mesh, center, r, dist_);
    outer_ = ball_from_distances(mesh, center, 2.0 * r, dist_);
    op_ = std::make_unique<DomainOperator>(mesh, outer_.nodes);
    fact_ = std::make_unique<DomainFactorization>(*op_);
    for (int v : inner_.nodes) inner_local_.push_back(op_->local_index(v));
    const std::size_t nd = op_->size();
    auto slot = [&](int v) {
      const int i = op_->local_index(v);
      if (i >= 0) return i;
      const auto& bd = op_->boundary();
      return static_cast<int>(nd) + static_cast<int>(std::lower_bound(bd.begin(), bd.end(), v) - bd.begin());
    };
    std::vector<int> segs;
    for (int v : inner_.nodes)
      for (int s : mesh.incident(v)) segs.push_back(s);
    std::sort(segs.begin(), segs.end());
    segs.erase(std::unique(segs.begin(), segs.end()), segs.end());
    for (int s : segs) {
      const auto& sg = mesh.segments()[static_cast<std::size_t>(s)];
      inner_segments_.push_back({slot(sg.a), slot(sg.b)});
      inner_segment_ids_.push_back(s);
    }
  }

  const Mesh& mesh() const { return *mesh_; }
  int center() const { return center_; }
  double radius() const { return r_; }
  const Ball& inner() const { return inner_; }
  const Ball& outer() const { return outer_; }
  const DomainOperator& op() const { return *op_; }
  const std::vector<double>& distances() const { return dist_; }
  std::size_t domain_size() const { return op_->size(); }
  std::size_t boundary_size() const { return op_->boundary().size(); }
  const std::vector<int>& inner_local() const { return inner_local_; }
  const std::vector<int>& inner_segment_ids() const { return inner_segment_ids_; }

  /// Harmonic extension of boundary data g into 2B.
  Vector harmonic(const Vector& g) const {
    Vector out(static_cast<Eigen::Index>(domain_size() + boundary_size()));
    out.head(static_cast<Eigen::Index>(domain_size())) = fact_->solve(op_->coupling() * g);
    out.tail(static_cast<Eigen::Index>(boundary_size())) = g;
    return out;
  }

  /// Delta u = f in 2B (f local to 2B) with zero boundary values.
  Vector poisson(const Vector& f) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(domain_size() + boundary_size()));
    out.head(static_cast<Eigen::Index>(domain_size())) = fact_->solve(op_->mass().cwiseProduct(f));
    return out;
  }

  double outer_abs_average(const Vector& u) const {
    const auto nd = static_cast<Eigen::Index>(domain_size());
    return op_->mass().dot(u.head(nd).cwiseAbs()) / outer_.volume;
  }

  double inner_sup(const Vector& u) const {
    double m = 0.0;
    for (int i : inner_local_) m = std::max(m, std::abs(u[i]));
    return m;
  }

  /// |grad u| on every segment touching B, in the order of inner_segment_ids().
  std::vector<double> inner_gradients(const Vector& u) const {
    std::vector<double> out;
    out.reserve(inner_segments_.size());
    const double k = static_cast<double>(mesh_->k());
    for (const auto& [a, b] : inner_segments_) out.push_back(std::abs(u[a] - u[b]) * k);
    return out;
  }

  double inner_gradient_sup(const Vector& u) const {
    const auto g = inner_gradients(u);
    return g.empty() ? 0.0 : *std::max_element(g.begin(), g.end());
  }

 private:
  const Mesh* mesh_;
  int center_;
  double r_;
  std::vector<double> dist_;
  Ball inner_;
  Ball outer_;
  std::unique_ptr<DomainOperator> op_;
  std::unique_ptr<DomainFactorization> fact_;
  std::vector<int> inner_local_;
  std::vector<std::array<int, 2>> inner_segments_;
  std::vector<int> inner_segment_ids_;
};

/// Boundary data for harmonic samples on 2B: i.i.d. uniform [-1, 1] vectors, the constant,
/// unit spikes, +-1 dipoles on random boundary pairs, and +-1 splits along each coordinate.
/// Balls with many boundary points (trees) need the spikes and dipoles: i.i.d. data averages out there.
inline std::vector<Vector> harmonic_boundary_data(const BallPatch& patch, int random_samples, std::uint64_t seed) {
  const auto& bd = patch.op().boundary();
  const auto nb = static_cast<Eigen::Index>(bd.size());
  std::vector<Vector> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int s = 0; s < random_samples; ++s) {
    Vector g(nb);
    for (auto& x : g) x = ud(rng);
    out.push_back(std::move(g));
  }
  out.push_back(Vector::Ones(nb));
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(nb));
  for (Eigen::Index j = 0; j < nb; ++j) idx[static_cast<std::size_t>(j)] = j;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t j = 0; j < std::min<std::size_t>(idx.size(), 64); ++j) out.push_back(Vector::Unit(nb, idx[j]));
  if (nb >= 2) {
    std::uniform_int_distribution<Eigen::Index> pick(0, nb - 1);
    for (int s = 0; s < random_samples; ++s) {
      const Eigen::Index a = pick(rng);
      Eigen::Index b = pick(rng);
      if (a == b) b = (b + 1) % nb;
      Vector g = Vector::Zero(nb);
      g[a] = 1.0;
      g[b] = -1.0;
      out.push_back(std::move(g));
    }
  }
  const auto& mesh = patch.mesh();
  const auto c = mesh.position(patch.center());
  for (std::size_t d = 0; d < c.size(); ++d) {
    Vector g(nb);
    for (Eigen::Index j = 0; j < nb; ++j) g[j] = mesh.position(bd[static_cast<std::size_t>(j)])[d] < c[d] ? -1.0 : 1.0;
    out.push_back(std::move(g));
  }
  return out;
}

struct HarmonicSummary {
  double sup_inner = 0.0;
  double avg_outer = 0.0;
  double grad_inner = 0.0;
};

inline std::vector<HarmonicSummary> harmonic_samples(const BallPatch& patch, int random_samples, std::uint64_t seed) {
  std::vector<HarmonicSummary> out;
  for (const auto& g : harmonic_boundary_data(patch, random_samples, seed)) {
    const Vector u = patch.harmonic(g);
    out.push_back({patch.inner_sup(u), patch.outer_abs_average(u), patch.inner_gradient_sup(u)});
  }
  return out;
}

struct VerifyOptions {
  int samples_per_ball = 100;  ///< Random boundary data or random test functions per ball.
  std::uint64_t seed = 1;
  int workers = 1;
};

namespace detail {

inline std::uint64_t ball_seed(std::uint64_t seed, std::size_t i) { return seed * 0x9E3779B97F4A7C15ull + i + 1; }

/// Runs fn(ball index, patch) for balls with positive margin; collects samples in ball order.
template <class Fn>
InequalityFit run_balls(const Mesh& mesh, std::span<const BallSpec> balls, const VerifyOptions& opt, std::string name,
                        Fn&& fn) {
  InequalityFit fit;
  fit.name = std::move(name);
  auto per_ball = parallel_map(balls.size(), opt.workers, [&](std::size_t i) -> std::optional<std::vector<FitSample>> {
    const auto& b = balls[i];
    const double margin = mesh.truncation_distance()[static_cast<std::size_t>(b.center)] - 2.0 * b.r;
    if (!(margin > 0.0)) return std::nullopt;
    return fn(i, b);
  });
  for (std::size_t i = 0; i < balls.size(); ++i) {
    if (!per_ball[i]) {
      ++fit.skipped_margin;
      continue;
    }
    fit.margin_min = std::min(fit.margin_min,
                              mesh.truncation_distance()[static_cast<std::size_t>(balls[i].center)] - 2.0 * balls[i].r);
    for (auto& s : *per_ball[i]) fit.add(std::move(s));
  }
  if (fit.samples.empty()) throw InputError(fit.name + ": no sampled ball respects the safety margin");
  fit.finalize();
  return fit;
}

inline FitSample make_sample(const BallSpec& b, double lhs, double rhs, std::string tag = {}) {
  return FitSample{b.center, b.r, lhs, rhs, 0.0, std::move(tag)};
}

}  // namespace detail

/// Volume regularity V(x, r) against Phi(r); the fitted constant is max(sup V/Phi, sup Phi/V).
inline InequalityFit verify_volume(const Mesh& mesh, const ScalingLaws& law, std::span<const BallSpec> balls,
                                   const VerifyOptions& opt = {}) {
  auto fit = detail::run_balls(mesh, balls, opt, "V(Phi)", [&](std::size_t, const BallSpec& b) {
    const double v = ball(mesh, b.center, b.r).volume;
    const double p = law.phi(b.r);
    return std::vector<FitSample>{detail::make_sample(b, v, p, "upper"), detail::make_sample(b, p, v, "lower")};
  });
  fit.exponents = {{"alpha", law.alpha()}};
  return fit;
}

/// Mean value inequality ||u||_{L^inf(B)} <= C avg_{2B}|u| for harmonic u on 2B.
inline InequalityFit verify_mean_value(const Mesh& mesh, std::span<const BallSpec> balls, const VerifyOptions& opt = {}) {
  return detail::run_balls(mesh, balls, opt, "mean value", [&](std::size_t i, const BallSpec& b) {
    BallPatch patch(mesh, b.center, b.r);
    std::vector<FitSample> out;
    for (const auto& s : harmonic_samples(patch, opt.samples_per_ball, detail::ball_seed(opt.seed, i)))
      out.push_back(detail::make_sample(b, s.sup_inner, s.avg_outer));
    return out;
  });
}

/// GRH: |grad u| on B times Psi(r)/Phi(r) against avg_{2B}|u|. With `rh` set, the factor is r instead (RH).
inline InequalityFit verify_grh(const Mesh& mesh, const ScalingLaws& law, std::span<const BallSpec> balls,
                                const VerifyOptions& opt = {}, bool rh = false) {
  auto fit = detail::run_balls(mesh, balls, opt, rh ? "RH" : "GRH(Phi,Psi)", [&](std::size_t i, const BallSpec& b) {
    BallPatch patch(mesh, b.center, b.r);
    const double factor = rh ? b.r : law.psi(b.r) / law.phi(b.r);
    std::vector<FitSample> out;
    for (const auto& s : harmonic_samples(patch, opt.samples_per_ball, detail::ball_seed(opt.seed, i)))
      out.push_back(detail::make_sample(b, s.grad_inner * factor, s.avg_outer));
    return out;
  });
  fit.exponents = {{"alpha", law.alpha()}, {"beta", law.beta()}};
  return fit;
}

inline InequalityFit verify_rh(const Mesh& mesh, const ScalingLaws& law, std::span<const BallSpec> balls,
                               const VerifyOptions& opt = {}) {
  return verify_grh(mesh, law, balls, opt, true);
}

struct FaberKrahnReport {
  std::vector<InequalityFit> fits;  ///< One per nu; fitted constant = sup (m(D)/m(B))^nu / (lambda_1(D) Psi(r)).
  std::size_t best = 0;             ///< Index of the nu with the largest C_F = 1 / fitted constant.
  double c_f(std::size_t i) const { return 1.0 / fits[i].fitted_constant; }
};

/// FK(Psi) over sub-balls D = B(y, rho) inside B, nu in {1 - 2/q : q in qs}.
inline FaberKrahnReport verify_faber_krahn(const Mesh& mesh, const ScalingLaws& law, std::span<const BallSpec> balls,
                                           const VerifyOptions& opt = {}, std::vector<double> qs = {4, 6, 8}) {
  struct Domain {
    double rel_volume;
    double lambda;
    std::string tag;
  };
  std::vector<std::vector<Domain>> per_ball(balls.size());
  auto probe = detail::run_balls(mesh, balls, opt, "FK probe", [&](std::size_t i, const BallSpec& b) {
    const Ball B = ball(mesh, b.center, b.r);
    std::vector<Domain> doms;
    std::mt19937_64 rng(detail::ball_seed(opt.seed, i));
    const auto d = geodesic_distances(mesh, b.center);
    for (double frac : {1.0, 0.5, 0.25}) {
      const double rho = frac * b.r;
      if (rho < 2.0 * mesh.h()) continue;
      std::vector<int> cands;
      for (int v : B.nodes)
        if (d[static_cast<std::size_t>(v)] + rho <= b.r + 1e-9) cands.push_back(v);
      std::shuffle(cands.begin(), cands.end(), rng);
      const std::size_t take = frac == 1.0 ? 1 : 4;
      for (std::size_t j = 0; j < std::min(take, cands.size()); ++j) {
        const int y = frac == 1.0 ? b.center : cands[j];
        const Ball D = ball(mesh, y, rho);
        doms.push_back({D.volume / B.volume, dirichlet_eigenvalue(mesh, D.nodes), "rho=" + std::to_string(rho)});
      }
    }
    per_ball[i] = doms;
    return std::vector<FitSample>{detail::make_sample(b, 0.0, 1.0)};
  });
  FaberKrahnReport rep;
  for (double q : qs) {
    const double nu = 1.0 - 2.0 / q;
    auto fit = detail::run_balls(mesh, balls, VerifyOptions{opt.samples_per_ball, opt.seed, 1},
                                 "FK(Psi)", [&](std::size_t i, const BallSpec& b) {
                                   std::vector<FitSample> out;
                                   for (const auto& dm : per_ball[i])
                                     out.push_back(detail::make_sample(b, std::pow(dm.rel_volume, nu),
                                                                       dm.lambda * law.psi(b.r), dm.tag));
                                   return out;
                                 });
    fit.exponents = {{"nu", nu}, {"q", q}, {"beta", law.beta()}};
    fit.notes.push_back("C_F = 1 / fitted_constant");
    rep.fits.push_back(std::move(fit));
  }
  for (std::size_t i = 1; i < rep.fits.size(); ++i)
    if (rep.c_f(i) > rep.c_f(rep.best)) rep.best = i;
  (void)probe;
  return rep;
}

/// LS(Psi, q): (avg_B|u|^q)^{1/q} <= C_L sqrt(Psi(r)) (E(u,u)/m(B))^{1/2} for u supported in B.
/// Test functions: the torsion function, the first Dirichlet eigenfunction, and random tents.
inline std::vector<InequalityFit> verify_sobolev(const Mesh& mesh, const ScalingLaws& law,
                                                 std::span<const BallSpec> balls, const VerifyOptions& opt = {},
                                                 std::vector<double> qs = {4, 6, 8}) {
  for (double q : qs)
    if (!(q > 2.0)) throw InputError("verify_sobolev: q must exceed 2");
  struct Fn {
    Vector u;
    double energy;
    std::string tag;
  };
  std::vector<std::vector<Fn>> fns(balls.size());
  std::vector<Vector> masses(balls.size());
  std::vector<double> vols(balls.size());
  detail::run_balls(mesh, balls, opt, "LS probe", [&](std::size_t i, const BallSpec& b) {
    const Ball B = ball(mesh, b.center, b.r);
    DomainOperator op(mesh, B.nodes);
    masses[i] = op.mass();
    vols[i] = B.volume;
    auto add = [&](Vector u, std::string tag) {
      const double e = u.dot(op.matrix() * u);
      fns[i].push_back({std::move(u), e, std::move(tag)});
    };
    add(pcg(op.matrix(), op.mass()).x, "torsion");
    add(dirichlet_eigenpair(op).vector, "eigenfunction");
    // Tents: hat functions of random height and width around random nodes of B, clipped to B.
    std::mt19937_64 rng(detail::ball_seed(opt.seed, i));
    const auto n = static_cast<Eigen::Index>(op.size());
    const int tents = std::max(1, opt.samples_per_ball / 10);
    for (int t = 0; t < tents; ++t) {
      const int y = B.nodes[std::uniform_int_distribution<std::size_t>(0, B.nodes.size() - 1)(rng)];
      const double width = std::uniform_real_distribution<double>(2.0 * mesh.h(), b.r)(rng);
      const double height = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
      const auto dy = geodesic_distances(mesh, y);
      Vector u(n);
      for (Eigen::Index j = 0; j < n; ++j)
        u[j] = height * std::max(0.0, 1.0 - dy[static_cast<std::size_t>(op.nodes()[static_cast<std::size_t>(j)])] / width);
      add(std::move(u), "tent");
    }
    return std::vector<FitSample>{detail::make_sample(b, 0.0, 1.0)};
  });
  std::vector<InequalityFit> out;
  for (double q : qs) {
    auto fit = detail::run_balls(mesh, balls, VerifyOptions{opt.samples_per_ball, opt.seed, 1}, "LS(Psi,q)",
                                 [&](std::size_t i, const BallSpec& b) {
                                   std::vector<FitSample> s;
                                   for (const auto& f : fns[i]) {
                                     const double lq =
                                         std::pow(masses[i].dot(f.u.cwiseAbs().array().pow(q).matrix()) / vols[i], 1.0 / q);
                                     const double rhs = std::sqrt(law.psi(b.r)) * std::sqrt(f.energy / vols[i]);
                                     s.push_back(detail::make_sample(b, lq, rhs, f.tag));
                                   }
                                   return s;
                                 });
    fit.exponents = {{"q", q}, {"beta", law.beta()}};
    out.push_back(std::move(fit));
  }
  return out;
}

/// PI(Psi), same-ball variant: int_B |u - u_B|^2 <= C Psi(r) int_B |grad u|^2, i.e. 1/(lambda_2^N(B) Psi(r)).
inline InequalityFit verify_poincare(const Mesh& mesh, const ScalingLaws& law, std::span<const BallSpec> balls,
                                     const VerifyOptions& opt = {}) {
  auto fit = detail::run_balls(mesh, balls, opt, "PI(Psi), same-ball variant", [&](std::size_t, const BallSpec& b) {
    const Ball B = ball(mesh, b.center, b.r);
    return std::vector<FitSample>{detail::make_sample(b, 1.0, neumann_gap(mesh, B.nodes) * law.psi(b.r))};
  });
  fit.exponents = {{"beta", law.beta()}};
  return fit;
}

namespace detail {

/// Dyadic radii 2^j for ceil(log2 h) <= j <= floor(log2 r).
inline std::vector<double> dyadic_radii(double h, double r) {
  std::vector<double> out;
  const int lo = static_cast<int>(std::ceil(std::log2(h) - 1e-12));
  const int hi = static_cast<int>(std::floor(std::log2(r) + 1e-12));
  for (int j = lo; j <= hi; ++j) out.push_back(std::ldexp(1.0, j));
  return out;
}

/// sum_j weight(2^j) (avg_{B(x,2^j)} |f|^p)^{1/p} with f a full nodal vector.
template <class W>
double dyadic_sum(const Mesh& mesh, int x, double r, const Vector& f, double p, W&& weight) {
  const auto radii = dyadic_radii(mesh.h(), r);
  if (radii.empty()) return 0.0;
  const int src[1] = {x};
  const auto hops = hop_distances(mesh, src, static_cast<std::int64_t>(std::ceil(radii.back() * mesh.k())) + 1);
  double total = 0.0;
  for (double rho : radii) {
    double vol = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < hops.size(); ++i) {
      if (hops[i] < 0 || !inside_radius(static_cast<double>(hops[i]) * mesh.h(), rho)) continue;
      const double m = mesh.mass()[static_cast<Eigen::Index>(i)];
      vol += m;
      acc += m * std::pow(std::abs(f[static_cast<Eigen::Index>(i)]), p);
    }
    if (vol > 0.0) total += weight(rho) * std::pow(acc / vol, 1.0 / p);
  }
  return total;
}

struct PoissonSample {
  Vector f_full;
  Vector u_local;
  std::string tag;
};

/// Right-hand sides on 2B (indicator of a sub-ball, random values, constant) each with a random harmonic part.
inline std::vector<PoissonSample> poisson_samples(const BallPatch& patch, int count, std::uint64_t seed) {
  const Mesh& mesh = patch.mesh();
  const auto& nodes = patch.op().nodes();
  const auto nd = static_cast<Eigen::Index>(nodes.size());
  const auto nb = static_cast<Eigen::Index>(patch.boundary_size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  std::vector<PoissonSample> out;
  for (int s = 0; s < count; ++s) {
    Vector f(nd);
    std::string tag;
    switch (s % 3) {
      case 0: {
        const int y = nodes[std::uniform_int_distribution<std::size_t>(0, nodes.size() - 1)(rng)];
        const Ball sub = ball(mesh, y, std::uniform_real_distribution<double>(2.0 * mesh.h(), patch.radius())(rng));
        for (Eigen::Index j = 0; j < nd; ++j)
          f[j] = std::binary_search(sub.nodes.begin(), sub.nodes.end(), nodes[static_cast<std::size_t>(j)]) ? 1.0 : 0.0;
        tag = "indicator";
        break;
      }
      case 1:
        for (auto& x : f) x = ud(rng);
        tag = "random";
        break;
      default:
        f.setOnes();
        tag = "constant";
    }
    Vector g(nb);
    const double scale = s % 2 ? 0.0 : ud(rng) * std::pow(patch.radius(), 2.0);
    for (auto& x : g) x = scale * ud(rng);
    Vector u = patch.poisson(f) + patch.harmonic(g);
    Vector f_full = Vector::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
    patch.op().scatter(f, f_full);
    out.push_back({std::move(f_full), std::move(u), std::move(tag)});
  }
  return out;
}

}  // namespace detail

/// Pointwise Poisson bound |u(x)| <= C (avg_{2B}|u| + F_1(x)) for Delta u = f in 2B.
inline InequalityFit verify_poisson_pointwise(const Mesh& mesh, const ScalingLaws& law, std::span<const BallSpec> balls,
                                              double p, const VerifyOptions& opt = {}, int points = 8) {
  auto fit = detail::run_balls(mesh, balls, opt, "Poisson pointwise", [&](std::size_t i, const BallSpec& b) {
    BallPatch patch(mesh, b.center, b.r);
    std::mt19937_64 rng(detail::ball_seed(opt.seed, i) ^ 0x5151);
    std::vector<int> xs = {b.center};
    std::vector<int> pool = patch.inner().nodes;
    std::shuffle(pool.begin(), pool.end(), rng);
    for (int v : pool) {
      if (static_cast<int>(xs.size()) >= points) break;
      if (v != b.center) xs.push_back(v);
    }
    std::vector<FitSample> out;
    const int count = std::max(3, opt.samples_per_ball / 10);
    for (const auto& s : detail::poisson_samples(patch, count, detail::ball_seed(opt.seed, i))) {
      const double avg = patch.outer_abs_average(s.u_local);
      for (int x : xs) {
        const double f1 = detail::dyadic_sum(mesh, x, b.r, s.f_full, p, [&](double rho) { return law.psi(rho); });
        out.push_back(detail::make_sample(b, std::abs(s.u_local[patch.op().local_index(x)]), avg + f1, s.tag));
      }
    }
    return out;
  });
  fit.exponents = {{"p", p}, {"alpha", law.alpha()}, {"beta", law.beta()}};
  fit.notes.push_back("dyadic sum truncated below the mesh scale h");
  return fit;
}

/// Gradient bound |grad u(x)| <= C (Phi(r)/Psi(r) avg_{2B}|u| + F_2(x)), sampled on segments touching B.
inline InequalityFit verify_poisson_gradient(const Mesh& mesh, const ScalingLaws& law, std::span<const BallSpec> balls,
                                             double p, const VerifyOptions& opt = {}, int segments = 8) {
  auto fit = detail::run_balls(mesh, balls, opt, "Poisson gradient", [&](std::size_t i, const BallSpec& b) {
    BallPatch patch(mesh, b.center, b.r);
    std::vector<FitSample> out;
    const int count = std::max(3, opt.samples_per_ball / 10);
    const double factor = law.phi(b.r) / law.psi(b.r);
    const auto& ids = patch.inner_segment_ids();
    for (const auto& s : detail::poisson_samples(patch, count, detail::ball_seed(opt.seed, i))) {
      const double avg = patch.outer_abs_average(s.u_local);
      const auto grads = patch.inner_gradients(s.u_local);
      // The steepest segments plus an even spread over the rest.
      std::vector<std::size_t> order(grads.size());
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return grads[a] > grads[c]; });
      std::vector<std::size_t> pick(order.begin(), order.begin() + std::min<std::size_t>(segments / 2, order.size()));
      const std::size_t stride = std::max<std::size_t>(1, order.size() / static_cast<std::size_t>(std::max(1, segments / 2)));
      for (std::size_t j = 0; j < order.size() && pick.size() < static_cast<std::size_t>(segments); j += stride) pick.push_back(j);
      for (std::size_t j : pick) {
        const int x = mesh.segments()[static_cast<std::size_t>(ids[j])].a;
        const double f2 = detail::dyadic_sum(mesh, x, b.r, s.f_full, p, [&](double rho) { return law.phi(rho); });
        out.push_back(detail::make_sample(b, grads[j], factor * avg + f2, s.tag));
      }
    }
    return out;
  });
  fit.exponents = {{"p", p}, {"alpha", law.alpha()}, {"beta", law.beta()}};
  fit.notes.push_back("dyadic sum truncated below the mesh scale h");
  return fit;
}

/// L^1 bound for the Poisson problem on B with zero boundary: avg_B|u| <= C Psi(r) (avg_B|f|^p)^{1/p}.
inline InequalityFit verify_poisson_l1(const Mesh& mesh, const ScalingLaws& law, std::span<const BallSpec> balls,
                                       double p, const VerifyOptions& opt = {}) {
  auto fit = detail::run_balls(mesh, balls, opt, "Poisson L1", [&](std::size_t i, const BallSpec& b) {
    const Ball B = ball(mesh, b.center, b.r);
    DomainOperator op(mesh, B.nodes);
    DomainFactorization fact(op);
    std::mt19937_64 rng(detail::ball_seed(opt.seed, i));
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    std::vector<FitSample> out;
    const auto n = static_cast<Eigen::Index>(op.size());
    for (int s = 0; s < std::max(3, opt.samples_per_ball / 10); ++s) {
      Vector f(n);
      if (s == 0) f.setOnes();
      else for (auto& x : f) x = ud(rng);
      const Vector u = fact.solve(op.mass().cwiseProduct(f));
      const double lhs = op.mass().dot(u.cwiseAbs()) / B.volume;
      const double fp = std::pow(op.mass().dot(f.cwiseAbs().array().pow(p).matrix()) / B.volume, 1.0 / p);
      out.push_back(detail::make_sample(b, lhs, law.psi(b.r) * fp, s == 0 ? "constant" : "random"));
    }
    return out;
  });
  fit.exponents = {{"p", p}, {"beta", law.beta()}};
  return fit;
}

}  // namespace cablelab
