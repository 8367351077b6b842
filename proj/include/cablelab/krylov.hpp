#pragma once

// Polynomial and Krylov functional calculus for operators that are symmetric
// in a diagonal weighted inner product <x, y> = sum_i w_i x_i y_i.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "errors.hpp"

namespace cablelab {

using Operator = std::function<void(const Eigen::VectorXd& in, Eigen::VectorXd& out)>;

inline double wdot(const Eigen::VectorXd& w, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return (w.array() * x.array() * y.array()).sum();
}

inline double wnorm(const Eigen::VectorXd& w, const Eigen::VectorXd& x) { return std::sqrt(wdot(w, x, x)); }

/// e^{-z} I_k(z) for k = 0..K, by Miller's backward recurrence normalized with
/// I_0 + 2 sum_k I_k = e^z.
inline std::vector<double> scaled_bessel_i(double z, int K) {
  std::vector<double> out(static_cast<std::size_t>(K) + 1, 0.0);
  if (z == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const int start = K + 30 + static_cast<int>(std::sqrt(40.0 * z));
  std::vector<double> vals(static_cast<std::size_t>(start) + 2, 0.0);
  vals[static_cast<std::size_t>(start) + 1] = 0.0;
  vals[static_cast<std::size_t>(start)] = 1e-300;
  for (int k = start; k >= 1; --k) {
    const auto ku = static_cast<std::size_t>(k);
    vals[ku - 1] = vals[ku + 1] + (2.0 * k / z) * vals[ku];
    if (vals[ku - 1] > 1e250) {
      for (std::size_t j = ku - 1; j <= static_cast<std::size_t>(start); ++j) vals[j] *= 1e-250;
    }
  }
  double norm = vals[0];
  for (int k = 1; k <= start; ++k) norm += 2.0 * vals[static_cast<std::size_t>(k)];
  for (int k = 0; k <= K; ++k) out[static_cast<std::size_t>(k)] = vals[static_cast<std::size_t>(k)] / norm;
  return out;
}

/// Chebyshev coefficients of e^{-t x} on [0, L] (in the variable y = 2x/L - 1),
/// truncated once the remaining tail is below tol.
inline std::vector<double> chebyshev_exp_coefficients(double t, double L, double tol = 1e-15) {
  const double z = 0.5 * t * L;
  // e^{-z} I_k(z) ~ exp(-k^2 / 2z), so sqrt(80 z) terms reach below 1e-17.
  const int K = 60 + static_cast<int>(std::ceil(std::sqrt(80.0 * z)));
  const auto I = scaled_bessel_i(z, K);
  std::vector<double> c;
  c.push_back(I[0]);
  for (int k = 1; k <= K; ++k) {
    const double ck = 2.0 * I[static_cast<std::size_t>(k)] * ((k % 2) ? -1.0 : 1.0);
    c.push_back(ck);
    // Bessel I_k(z) decreases in k, so 2 I_k bounds each remaining coefficient and the tail
    // is geometric once I_{k+1}/I_k < 1/2.
    if (k > 2 && std::abs(ck) < tol && I[static_cast<std::size_t>(k)] < 0.5 * I[static_cast<std::size_t>(k) - 1]) break;
  }
  return c;
}

/// Applies p(A) u with p the Chebyshev series of e^{-tx} on [0, L]; A's spectrum must lie in [0, L].
inline Eigen::VectorXd chebyshev_exp_apply(const Operator& A, const Eigen::VectorXd& u, double t, double L,
                                           double tol = 1e-15) {
  const auto c = chebyshev_exp_coefficients(t, L, tol);
  // Y = (2/L) A - I; three-term recurrence T_{k+1} = 2 Y T_k - T_{k-1}.
  Eigen::VectorXd Tprev = u;
  Eigen::VectorXd result = c[0] * u;
  if (c.size() == 1) return result;
  Eigen::VectorXd tmp(u.size());
  A(u, tmp);
  Eigen::VectorXd Tcur = (2.0 / L) * tmp - u;
  result += c[1] * Tcur;
  for (std::size_t k = 2; k < c.size(); ++k) {
    A(Tcur, tmp);
    Eigen::VectorXd Tnext = 2.0 * ((2.0 / L) * tmp - Tcur) - Tprev;
    result += c[k] * Tnext;
    Tprev.swap(Tcur);
    Tcur.swap(Tnext);
  }
  return result;
}

/// Lanczos basis with full reorthogonalization in the w-inner product.
class LanczosBasis {
 public:
  /// `deflate` holds w-orthonormal vectors kept out of the Krylov space (e.g. constants).
  LanczosBasis(Operator A, Eigen::VectorXd w, const Eigen::VectorXd& v0, std::vector<Eigen::VectorXd> deflate = {})
      : A_(std::move(A)), w_(std::move(w)), deflate_(std::move(deflate)) {
    Eigen::VectorXd v = v0;
    project(v);
    norm0_ = wnorm(w_, v);
    if (norm0_ > 0.0) basis_.push_back(v / norm0_);
    else exhausted_ = true;
  }

  double start_norm() const { return norm0_; }
  int size() const { return static_cast<int>(alpha_.size()); }
  bool exhausted() const { return exhausted_; }

  /// Runs until the basis has m vectors (or an invariant subspace is found).
  void extend(int m) {
    Eigen::VectorXd z(w_.size());
    while (!exhausted_ && size() < m) {
      const Eigen::VectorXd& q = basis_.back();
      A_(q, z);
      const double a = wdot(w_, q, z);
      alpha_.push_back(a);
      // Two passes of classical Gram-Schmidt against the whole basis.
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis_) z -= wdot(w_, b, z) * b;
        project(z);
      }
      const double nb = wnorm(w_, z);
      if (nb <= 1e-13 * std::max(1.0, std::abs(a))) {
        exhausted_ = true;
        break;
      }
      beta_.push_back(nb);
      basis_.push_back(z / nb);
    }
  }

  /// Ritz decomposition of the current tridiagonal matrix.
  struct Ritz {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
  };

  Ritz ritz() const {
    const int m = size();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      T(i, i) = alpha_[static_cast<std::size_t>(i)];
      if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta_[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    return {es.eigenvalues(), es.eigenvectors()};
  }

  /// Approximates g(A) v0 (after deflation) using the current basis.
  Eigen::VectorXd apply(const std::function<double(double)>& g) const { return apply(ritz(), g); }

  Eigen::VectorXd apply(const Ritz& r, const std::function<double(double)>& g) const {
    const int m = size();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(w_.size());
    if (m == 0) return out;
    Eigen::VectorXd coef(m);
    for (int i = 0; i < m; ++i) coef[i] = g(r.values[i]) * r.vectors(0, i);
    const Eigen::VectorXd y = norm0_ * (r.vectors * coef);
    for (int i = 0; i < m; ++i) out += y[i] * basis_[static_cast<std::size_t>(i)];
    return out;
  }

  const Eigen::VectorXd& vector(int i) const { return basis_[static_cast<std::size_t>(i)]; }
  /// Residual norm of the last Lanczos step (beta_m), 0 if the space is invariant.
  double last_beta() const { return (exhausted_ || beta_.size() < alpha_.size()) ? 0.0 : beta_.back(); }

 private:
  void project(Eigen::VectorXd& v) const {
    for (const auto& d : deflate_) v -= wdot(w_, d, v) * d;
  }

  Operator A_;
  Eigen::VectorXd w_;
  std::vector<Eigen::VectorXd> deflate_;
  std::vector<Eigen::VectorXd> basis_;
  std::vector<double> alpha_;
  std::vector<double> beta_;
  double norm0_ = 0.0;
  bool exhausted_ = false;
};

struct AdaptiveResult {
  Eigen::VectorXd value;
  int dimension = 0;
  double change = 0.0;  ///< w-norm difference between the last two approximations, relative.
};

/// g(A) v by Lanczos, growing the basis in chunks until successive results agree to tol.
inline AdaptiveResult lanczos_function(const Operator& A, const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                                       const std::function<double(double)>& g, double tol,
                                       std::vector<Eigen::VectorXd> deflate = {}, int m_max = 600, int chunk = 20) {
  LanczosBasis basis(A, w, v, std::move(deflate));
  AdaptiveResult res;
  if (basis.exhausted()) {
    res.value = Eigen::VectorXd::Zero(v.size());
    return res;
  }
  Eigen::VectorXd prev;
  for (int m = chunk;; m += chunk) {
    basis.extend(std::min(m, m_max));
    Eigen::VectorXd cur = basis.apply(g);
    if (prev.size() > 0) {
      const double scale = std::max(wnorm(w, cur), 1e-300);
      res.change = wnorm(w, cur - prev) / scale;
      if (res.change <= tol || basis.exhausted() || basis.size() >= m_max) {
        res.value = std::move(cur);
        res.dimension = basis.size();
        if (res.change > tol && !basis.exhausted())
          throw ConvergenceError("Lanczos functional calculus did not converge", res.change);
        return res;
      }
    } else if (basis.exhausted()) {
      res.value = std::move(cur);
      res.dimension = basis.size();
      return res;
    }
    prev = std::move(cur);
  }
}

struct EigenPair {
  double value = 0.0;
  Eigen::VectorXd vector;
  double residual = 0.0;  ///< ||A x - value x||_w / |value|
  int iterations = 0;
};

/// Largest eigenpair of an operator that is symmetric positive semidefinite in the w-inner product,
/// by explicitly restarted Lanczos.
inline EigenPair largest_eigenpair(const Operator& A, const Eigen::VectorXd& w, Eigen::VectorXd v0, double tol,
                                   std::vector<Eigen::VectorXd> deflate = {}, int m = 40, int max_restarts = 200) {
  EigenPair out;
  Eigen::VectorXd Ax(v0.size());
  for (int restart = 0; restart < max_restarts; ++restart) {
    LanczosBasis basis(A, w, v0, deflate);
    if (basis.exhausted()) throw InputError("largest_eigenpair: start vector vanishes after deflation");
    basis.extend(std::min<int>(m, static_cast<int>(v0.size())));
    const auto r = basis.ritz();
    const int top = basis.size() - 1;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(v0.size());
    for (int i = 0; i < basis.size(); ++i) x += r.vectors(i, top) * basis.vector(i);
    x /= wnorm(w, x);
    A(x, Ax);
    const double theta = wdot(w, x, Ax);
    out.value = theta;
    out.vector = x;
    out.residual = wnorm(w, Ax - theta * x) / std::max(std::abs(theta), 1e-300);
    out.iterations += basis.size();
    if (out.residual <= tol || basis.exhausted()) return out;
    v0 = x;
  }
  throw ConvergenceError("restarted Lanczos did not converge", out.residual);
}

}  // namespace cablelab
