#pragma once

// Heat semigroup e^{-t Delta} on a cable mesh, heat kernel columns, and the
// sampled fits of the heat kernel bounds (upper, near-diagonal lower, time
// derivative, gradient) and of the L^p norm of the gradient of the semigroup.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cable_mesh.hpp"
#include "elliptic.hpp"
#include "errors.hpp"
#include "krylov.hpp"
#include "parallel.hpp"
#include "scaling_laws.hpp"
#include "stats.hpp"

namespace cablelab {

/// e^{-tL} with L = M^{-1} S, by a Chebyshev series on the Gershgorin interval [0, 4/h^2].
/// The constant mode is split off and carried exactly, so mass is conserved to rounding.
class HeatSemigroup {
 public:
  explicit HeatSemigroup(const Mesh& mesh) : mesh_(&mesh), bound_(4.0 * mesh.k() * mesh.k()) {}

  const Mesh& mesh() const { return *mesh_; }
  double spectral_bound() const { return bound_; }

  Vector generator(const Vector& u) const { return mesh_->generator(u); }

  Vector evolve(const Vector& u0, double t) const {
    if (!(t >= 0.0)) throw InputError("evolve: t must be >= 0");
    if (u0.size() != static_cast<Eigen::Index>(mesh_->num_nodes())) throw InputError("evolve: wrong vector size");
    if (t == 0.0) return u0;
    const Vector& m = mesh_->mass();
    const double mean = m.dot(u0) / m.sum();
    const Vector rest = u0.array() - mean;
    Operator L = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = mesh_->generator(x); };
    Vector out = chebyshev_exp_apply(L, rest, t, bound_);
    out.array() += mean;
    return out;
  }

 private:
  const Mesh* mesh_;
  double bound_;
};

inline Vector evolve(const Mesh& mesh, const Vector& u0, double t) { return HeatSemigroup(mesh).evolve(u0, t); }

struct HeatKernelSlice {
  int source = 0;
  double t = 0.0;
  Vector p;        ///< p_t(x, .) as a density w.r.t. m.
  Vector gradient; ///< Signed slope per segment.
  Vector dpdt;     ///< -M^{-1} S p.
  double margin = 0.0;
  bool margin_ok = false;
  bool sub_mesh = false;  ///< t below (4h)^2: values resolve the mesh, not the cable system.
};

inline Vector point_mass(const Mesh& mesh, int x) {
  Vector d = Vector::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
  d[x] = 1.0 / mesh.mass()[x];
  return d;
}

/// Margin of a source for time t: distance to the truncation set minus `multiple` * Psi^{-1}(t).
inline double heat_margin(const Mesh& mesh, const ScalingLaws& law, int x, double t, double multiple) {
  return mesh.truncation_distance()[static_cast<std::size_t>(x)] - multiple * law.psi_inv(t);
}

inline constexpr double kDefaultHeatMarginMultiple = 4.0;

inline HeatKernelSlice heat_kernel_column(const Mesh& mesh, const ScalingLaws& law, int x, double t,
                                          double multiple = kDefaultHeatMarginMultiple) {
  if (!(t > 0.0)) throw InputError("heat_kernel_column: t must be positive");
  HeatSemigroup hs(mesh);
  HeatKernelSlice s;
  s.source = x;
  s.t = t;
  s.p = hs.evolve(point_mass(mesh, x), t);
  s.gradient = mesh.gradient(s.p);
  s.dpdt = -mesh.generator(s.p);
  s.margin = heat_margin(mesh, law, x, t, multiple);
  s.margin_ok = s.margin > 0.0;
  s.sub_mesh = t < 16.0 * mesh.h() * mesh.h();
  return s;
}

/// max_y |(p_{t+dt} - p_{t-dt}) / (2 dt) - dpdt| / max_y |dpdt|.
inline double time_derivative_discrepancy(const Mesh& mesh, int x, double t, double dt) {
  HeatSemigroup hs(mesh);
  const Vector d = point_mass(mesh, x);
  const Vector p = hs.evolve(d, t);
  const Vector fd = (hs.evolve(d, t + dt) - hs.evolve(d, t - dt)) / (2.0 * dt);
  const Vector dp = -mesh.generator(p);
  return (fd - dp).cwiseAbs().maxCoeff() / dp.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Heat scans

inline constexpr double kHeatNoiseFloor = 1e-10;

/// One sampled value of the kernel (node record) or of its gradient (segment record).
struct HeatRecord {
  int x = 0;
  int y = 0;        ///< Node, or segment id for gradient records.
  bool segment = false;
  double t = 0.0;
  double d = 0.0;   ///< d(x, y); segment midpoint distance for gradient records.
  double p = 0.0;
  double dpdt = 0.0;
  double grad = 0.0;
  double volume = 0.0;  ///< V(x, Psi^{-1}(t)).
};

struct HeatColumnSummary {
  int x = 0;
  double t = 0.0;
  double diagonal = 0.0;   ///< p_t(x, x)
  double grad_sup = 0.0;   ///< sup over all segments of |grad p_t(x, .)|
  double volume_beta = 0.0;  ///< V(x, t^{1/beta})
  double margin = 0.0;
  bool sub_mesh = false;
  double mass_error = 0.0;
};

struct HeatScan {
  std::string family;
  int generation = 0;
  int k = 1;
  std::vector<HeatRecord> records;
  std::vector<HeatColumnSummary> columns;
  std::size_t below_floor = 0;
  std::size_t skipped_margin = 0;
  std::size_t skipped_sub_mesh = 0;
};

struct HeatScanOptions {
  double margin_multiple = kDefaultHeatMarginMultiple;
  double near_radius = 2.0;  ///< Every node within this distance of x is sampled, plus all graph vertices.
  int workers = 1;
};

/// Sources with positive heat margin at t_max: random graph vertices, deterministic in the seed.
inline std::vector<int> plan_sources(const Mesh& mesh, const ScalingLaws& law, double t_max, int count,
                                     std::uint64_t seed, double multiple = kDefaultHeatMarginMultiple) {
  std::vector<int> pool;
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v)
    if (heat_margin(mesh, law, static_cast<int>(v), t_max, multiple) > 0.0) pool.push_back(static_cast<int>(v));
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  if (static_cast<int>(pool.size()) > count) pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline HeatScan scan_heat(const Mesh& mesh, const ScalingLaws& law, std::span<const int> sources,
                          std::vector<double> times, const HeatScanOptions& opt = {}) {
  std::sort(times.begin(), times.end());
  for (double t : times)
    if (!(t > 0.0)) throw InputError("scan_heat: times must be positive");
  HeatScan scan;
  scan.family = to_string(mesh.graph().family);
  scan.generation = mesh.graph().generation;
  scan.k = mesh.k();
  struct PerSource {
    std::vector<HeatRecord> records;
    std::vector<HeatColumnSummary> columns;
    std::size_t below_floor = 0, skipped_margin = 0, skipped_sub_mesh = 0;
  };
  const HeatSemigroup hs(mesh);
  auto results = parallel_map(sources.size(), opt.workers, [&](std::size_t si) {
    PerSource out;
    const int x = sources[si];
    const auto dist = geodesic_distances(mesh, x);
    const VolumeProfile vp(mesh, x);
    std::vector<int> Y;
    for (std::size_t v = 0; v < mesh.num_nodes(); ++v)
      if (mesh.is_vertex(static_cast<int>(v)) || dist[v] <= opt.near_radius) Y.push_back(static_cast<int>(v));
    std::vector<int> segs;
    for (int y : Y)
      for (int s : mesh.incident(y)) segs.push_back(s);
    std::sort(segs.begin(), segs.end());
    segs.erase(std::unique(segs.begin(), segs.end()), segs.end());
    // Times are increasing, so each column continues from the previous one.
    Vector p = point_mass(mesh, x);
    double t_prev = 0.0;
    for (double t : times) {
      p = hs.evolve(p, t - t_prev);
      t_prev = t;
      if (heat_margin(mesh, law, x, t, opt.margin_multiple) <= 0.0) {
        ++out.skipped_margin;
        continue;
      }
      HeatColumnSummary col;
      col.x = x;
      col.t = t;
      col.diagonal = p[x];
      col.margin = heat_margin(mesh, law, x, t, opt.margin_multiple);
      col.sub_mesh = t < 16.0 * mesh.h() * mesh.h();
      col.mass_error = std::abs(mesh.mass().dot(p) - 1.0);
      col.volume_beta = vp.volume(std::pow(t, 1.0 / law.beta()));
      const Vector grad = mesh.gradient(p);
      col.grad_sup = grad.cwiseAbs().maxCoeff();
      out.columns.push_back(col);
      if (col.sub_mesh) {
        ++out.skipped_sub_mesh;
        continue;
      }
      const Vector dp = -mesh.generator(p);
      const double pmax = p.maxCoeff();
      const double vol = vp.volume(law.psi_inv(t));
      for (int y : Y) {
        if (p[y] < kHeatNoiseFloor * pmax) {
          ++out.below_floor;
          continue;
        }
        HeatRecord r;
        r.x = x;
        r.y = y;
        r.t = t;
        r.d = dist[static_cast<std::size_t>(y)];
        r.p = p[y];
        r.dpdt = dp[y];
        r.volume = vol;
        out.records.push_back(r);
      }
      for (int s : segs) {
        const auto& sg = mesh.segments()[static_cast<std::size_t>(s)];
        if (std::max(p[sg.a], p[sg.b]) < kHeatNoiseFloor * pmax) {
          ++out.below_floor;
          continue;
        }
        HeatRecord r;
        r.x = x;
        r.y = s;
        r.segment = true;
        r.t = t;
        r.d = 0.5 * (dist[static_cast<std::size_t>(sg.a)] + dist[static_cast<std::size_t>(sg.b)]);
        r.p = 0.5 * (p[sg.a] + p[sg.b]);
        r.grad = std::abs(grad[s]);
        r.volume = vol;
        out.records.push_back(r);
      }
    }
    return out;
  });
  for (auto& r : results) {
    scan.records.insert(scan.records.end(), r.records.begin(), r.records.end());
    scan.columns.insert(scan.columns.end(), r.columns.begin(), r.columns.end());
    scan.below_floor += r.below_floor;
    scan.skipped_margin += r.skipped_margin;
    scan.skipped_sub_mesh += r.skipped_sub_mesh;
  }
  if (scan.columns.empty()) throw InputError("scan_heat: no source/time pair respects the safety margin");
  return scan;
}

// ---------------------------------------------------------------------------
// Envelope fits

/// A fitted bound base_i * exp(E(C2; i)) <= K with the rule: the largest C2 on the grid whose K(C2)
/// stays within twice K(0). After fitting, every ratio divided by K is <= 1.
struct EnvelopeFit {
  std::string name;
  double c1 = 1.0;
  double c2 = 0.0;
  double constant = 0.0;  ///< K(c2)
  double constant_at_zero = 0.0;
  double max_normalized_ratio = 0.0;  ///< max ratio / K after fitting (<= 1 by construction of K)
  std::size_t samples = 0;
  std::vector<double> ratios;  ///< Aligned with the input samples.
  bool finite() const { return std::isfinite(constant) && constant > 0.0; }
};

/// `exponent(c, i)` gives the exponential's argument for sample i at envelope constant c.
inline EnvelopeFit fit_envelope(std::string name, const std::vector<double>& base,
                                const std::function<double(double, std::size_t)>& exponent, double c_max = 4.0,
                                int grid = 200) {
  EnvelopeFit f;
  f.name = std::move(name);
  f.samples = base.size();
  if (base.empty()) throw InputError(f.name + ": no samples above the noise floor");
  auto K = [&](double c) {
    double k = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) k = std::max(k, base[i] * std::exp(exponent(c, i)));
    return k;
  };
  f.constant_at_zero = K(0.0);
  f.c2 = 0.0;
  for (int j = 1; j <= grid; ++j) {
    const double c = c_max * j / grid;
    if (K(c) <= 2.0 * f.constant_at_zero) f.c2 = c;
    else break;
  }
  f.constant = K(f.c2);
  f.ratios.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    f.ratios[i] = base[i] * std::exp(exponent(f.c2, i));
    f.max_normalized_ratio = std::max(f.max_normalized_ratio, f.ratios[i] / f.constant);
  }
  return f;
}

struct UhkReport {
  EnvelopeFit upper;    ///< p_t V(x, Psi^{-1}(t)) exp(Upsilon(C2 d, t)) <= K
  double lower_c = 0.0; ///< NLE: p_t(x, y) >= c / V(x, Psi^{-1}(t)) for d <= eps Psi^{-1}(t)
  double lower_eps = 0.5;
  std::size_t lower_samples = 0;
  LinearFit diagonal_decay;  ///< log p_t(x, x) against log t, t >= 1
};

/// Mean over sources of log(value) per time, then the log-log slope over t in [t_lo, t_hi].
inline LinearFit time_decay_fit(const HeatScan& scan, double t_lo, double t_hi,
                                const std::function<double(const HeatColumnSummary&)>& value) {
  std::map<double, std::pair<double, int>> acc;
  for (const auto& c : scan.columns) {
    if (c.t < t_lo - 1e-12 || c.t > t_hi + 1e-12 || c.sub_mesh) continue;
    const double v = value(c);
    if (!(v > 0.0)) continue;
    acc[c.t].first += std::log(v);
    acc[c.t].second += 1;
  }
  std::vector<double> lt, lv;
  for (const auto& [t, sv] : acc) {
    lt.push_back(std::log(t));
    lv.push_back(sv.first / sv.second);
  }
  return linear_fit(lt, lv);
}

inline UhkReport verify_uhk(const HeatScan& scan, const ScalingLaws& law, double lower_eps = 0.5) {
  std::vector<double> base;
  std::vector<const HeatRecord*> rec;
  UhkReport rep;
  rep.lower_eps = lower_eps;
  double lower = std::numeric_limits<double>::infinity();
  for (const auto& r : scan.records) {
    if (r.segment) continue;
    base.push_back(r.p * r.volume);
    rec.push_back(&r);
    if (r.d <= lower_eps * law.psi_inv(r.t)) {
      lower = std::min(lower, r.p * r.volume);
      ++rep.lower_samples;
    }
  }
  rep.upper = fit_envelope("UHK(Psi)", base, [&](double c, std::size_t i) { return law.upsilon(c * rec[i]->d, rec[i]->t); });
  rep.lower_c = rep.lower_samples ? lower : 0.0;
  double tmax = 0.0;
  for (const auto& c : scan.columns) tmax = std::max(tmax, c.t);
  rep.diagonal_decay = time_decay_fit(scan, 1.0, tmax, [](const HeatColumnSummary& c) { return c.diagonal; });
  return rep;
}

/// |d/dt p_t| t V(x, Psi^{-1}(t)) exp(Upsilon(C2 d, t)) <= K
inline EnvelopeFit verify_davies(const HeatScan& scan, const ScalingLaws& law) {
  std::vector<double> base;
  std::vector<const HeatRecord*> rec;
  for (const auto& r : scan.records) {
    if (r.segment) continue;
    base.push_back(std::abs(r.dpdt) * r.t * r.volume);
    rec.push_back(&r);
  }
  return fit_envelope("Davies", base, [&](double c, std::size_t i) { return law.upsilon(c * rec[i]->d, rec[i]->t); });
}

struct GhkReport {
  EnvelopeFit envelope;  ///< |grad p| t V(x, Psi^{-1}(t)) / Phi(Psi^{-1}(t)) exp(Upsilon(C2 d, t)) <= K
  EnvelopeFit short_time;  ///< t < 1: |grad p| sqrt(t) V(x, sqrt t) exp(C4 d^2 / t) <= C3
  EnvelopeFit long_time;   ///< t >= 1: |grad p| t^{1-alpha/beta} V(x, t^{1/beta}) exp(C4 (d/t^{1/beta})^{beta/(beta-1)}) <= C3
  std::optional<LinearFit> decay;  ///< log sup_y |grad p| V(x, t^{1/beta}) against log t on [4, 100]
};

inline GhkReport verify_ghk(const HeatScan& scan, const ScalingLaws& law, double decay_lo = 4.0, double decay_hi = 100.0) {
  GhkReport rep;
  std::vector<double> base, base_s, base_l;
  std::vector<const HeatRecord*> rec, rec_s, rec_l;
  for (const auto& r : scan.records) {
    if (!r.segment) continue;
    const double rho = law.psi_inv(r.t);
    base.push_back(r.grad * r.t * r.volume / law.phi(rho));
    rec.push_back(&r);
    // For t < 1 and t >= 1 the volume argument Psi^{-1}(t) is sqrt(t) and t^{1/beta} respectively.
    if (r.t < 1.0) {
      base_s.push_back(r.grad * std::sqrt(r.t) * r.volume);
      rec_s.push_back(&r);
    } else {
      base_l.push_back(r.grad * std::pow(r.t, law.gradient_gap()) * r.volume);
      rec_l.push_back(&r);
    }
  }
  rep.envelope = fit_envelope("GHK(Phi,Psi)", base, [&](double c, std::size_t i) { return law.upsilon(c * rec[i]->d, rec[i]->t); });
  if (!base_s.empty())
    rep.short_time = fit_envelope("GHK t<1", base_s, [&](double c, std::size_t i) {
      return c * rec_s[i]->d * rec_s[i]->d / rec_s[i]->t;
    });
  if (!base_l.empty())
    rep.long_time = fit_envelope("GHK t>=1", base_l, [&](double c, std::size_t i) {
      return c * std::pow(rec_l[i]->d / std::pow(rec_l[i]->t, 1.0 / law.beta()), law.subgaussian_exponent());
    });
  int in_range = 0;
  for (const auto& c : scan.columns)
    if (c.t >= decay_lo - 1e-12 && c.t <= decay_hi + 1e-12) ++in_range;
  if (in_range >= 2)
    rep.decay = time_decay_fit(scan, decay_lo, decay_hi, [](const HeatColumnSummary& c) { return c.grad_sup * c.volume_beta; });
  return rep;
}

// ---------------------------------------------------------------------------
// L^p norm of the gradient of the semigroup

inline double lp_norm(const Mesh& mesh, const Vector& f, double p) {
  return std::pow(mesh.mass().dot(f.cwiseAbs().array().pow(p).matrix()), 1.0 / p);
}

/// || |grad g| ||_p with the gradient constant on each segment of length h.
inline double gradient_lp_norm(const Mesh& mesh, const Vector& g, double p) {
  return std::pow(mesh.h() * mesh.gradient(g).cwiseAbs().array().pow(p).sum(), 1.0 / p);
}

/// Test inputs for operator-norm estimates: random +-1, uniform noise, bumps in random balls,
/// Haar-like differences of two nearby bumps, and a smooth distance profile. Mixed signs throughout.
inline std::vector<Vector> test_functions(const Mesh& mesh, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  std::uniform_int_distribution<std::size_t> pick(0, mesh.num_vertices() - 1);
  std::vector<Vector> out;
  for (int i = 0; i < count; ++i) {
    Vector f = Vector::Zero(n);
    switch (i % 5) {
      case 0:
        for (auto& x : f) x = ud(rng) < 0.0 ? -1.0 : 1.0;
        break;
      case 1:
        for (auto& x : f) x = ud(rng);
        break;
      case 2: {
        const int c = static_cast<int>(pick(rng));
        const double r = std::ldexp(1.0, static_cast<int>(std::uniform_int_distribution<int>(0, 4)(rng)));
        const auto d = geodesic_distances(mesh, c);
        const double sign = ud(rng) < 0.0 ? -1.0 : 1.0;
        for (Eigen::Index j = 0; j < n; ++j) f[j] = sign * std::max(0.0, 1.0 - d[static_cast<std::size_t>(j)] / r);
        break;
      }
      case 3: {
        const int c = static_cast<int>(pick(rng));
        const double r = std::ldexp(1.0, static_cast<int>(std::uniform_int_distribution<int>(0, 3)(rng)));
        const auto d = geodesic_distances(mesh, c);
        // The second bump sits at distance about r from the first.
        int c2 = c;
        for (std::size_t j = 0; j < d.size(); ++j)
          if (mesh.is_vertex(static_cast<int>(j)) && std::abs(d[j] - r) < 0.5 + 1e-9) {
            c2 = static_cast<int>(j);
            break;
          }
        const auto d2 = geodesic_distances(mesh, c2);
        for (Eigen::Index j = 0; j < n; ++j)
          f[j] = std::max(0.0, 1.0 - d[static_cast<std::size_t>(j)] / r) - std::max(0.0, 1.0 - d2[static_cast<std::size_t>(j)] / r);
        break;
      }
      default: {
        const int c = static_cast<int>(pick(rng));
        const auto d = geodesic_distances(mesh, c);
        const double w = std::uniform_real_distribution<double>(1.0, 16.0)(rng);
        for (Eigen::Index j = 0; j < n; ++j) f[j] = std::cos(d[static_cast<std::size_t>(j)] / w);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

struct GradNormReport {
  double p = 2.0;
  std::vector<double> times;
  std::vector<double> norms;  ///< Lower estimates of || |grad e^{-t Delta}| ||_{p -> p}
  std::optional<LinearFit> trend;  ///< log norm against log t for t >= 1
};

/// Max over test functions of || |grad e^{-t Delta} f| ||_p / ||f||_p for each t, continuing each f
/// through increasing times. For p = 2 the best input is refined by power iteration on e^{-tL} L e^{-tL}.
inline GradNormReport grad_semigroup_norm(const Mesh& mesh, double p, std::vector<double> times, int samples = 50,
                                          std::uint64_t seed = 1, int workers = 1, int power_steps = 30) {
  if (!(p > 1.0) || !std::isfinite(p)) throw InputError("grad_semigroup_norm: p must lie in (1, inf)");
  if (samples < 1) throw InputError("grad_semigroup_norm: need at least one sample");
  std::sort(times.begin(), times.end());
  const HeatSemigroup hs(mesh);
  const auto fs = test_functions(mesh, samples, seed);
  auto per_f = parallel_map(fs.size(), workers, [&](std::size_t i) {
    std::vector<double> ratios;
    const double nf = lp_norm(mesh, fs[i], p);
    Vector g = fs[i];
    double t_prev = 0.0;
    for (double t : times) {
      g = hs.evolve(g, t - t_prev);
      t_prev = t;
      ratios.push_back(gradient_lp_norm(mesh, g, p) / nf);
    }
    return ratios;
  });
  GradNormReport rep;
  rep.p = p;
  rep.times = times;
  rep.norms.assign(times.size(), 0.0);
  for (const auto& r : per_f)
    for (std::size_t j = 0; j < times.size(); ++j) rep.norms[j] = std::max(rep.norms[j], r[j]);
  if (p == 2.0 && power_steps > 0) {
    const Vector& w = mesh.mass();
    for (std::size_t j = 0; j < times.size(); ++j) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < fs.size(); ++i)
        if (per_f[i][j] > per_f[best][j]) best = i;
      Vector f = fs[best];
      for (int s = 0; s < power_steps; ++s) {
        const Vector g = hs.evolve(f, times[j]);
        rep.norms[j] = std::max(rep.norms[j], gradient_lp_norm(mesh, g, 2.0) / lp_norm(mesh, f, 2.0));
        f = hs.evolve(mesh.generator(g), times[j]);
        const double nrm = wnorm(w, f);
        if (!(nrm > 0.0)) break;
        f /= nrm;
      }
    }
  }
  std::vector<double> xs, ys;
  for (std::size_t j = 0; j < times.size(); ++j)
    if (times[j] >= 1.0 && rep.norms[j] > 0.0) {
      xs.push_back(times[j]);
      ys.push_back(rep.norms[j]);
    }
  if (xs.size() >= 2) rep.trend = loglog_fit(xs, ys);
  return rep;
}

}  // namespace cablelab
