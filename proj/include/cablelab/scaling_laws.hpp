#pragma once

// Volume and time scale functions of a cable system:
//   Phi(r) = r for r < 1, r^alpha for r >= 1
//   Psi(r) = r^2 for r < 1, r^beta for r >= 1
// and the heat-kernel rate function Upsilon(R, t) = sup_s (R/s - t/Psi(s)).

#include <algorithm>
#include <cmath>
#include <string>

#include "errors.hpp"
#include "fractal_graph.hpp"

namespace cablelab {

class ScalingLaws {
 public:
  ScalingLaws(double alpha, double beta) : alpha_(alpha), beta_(beta) {
    if (!(alpha > 0.0)) throw InputError("ScalingLaws: alpha must be positive");
    if (!(beta >= 2.0 - 1e-12) || beta > alpha + 1.0 + 1e-12)
      throw InputError("ScalingLaws: need 2 <= beta <= alpha + 1");
  }

  static ScalingLaws vicsek(int N) {
    if (N < 1) throw InputError("ScalingLaws::vicsek: N must be positive");
    const double a = std::log(std::pow(2.0, N) + 1.0) / std::log(3.0);
    return {a, a + 1.0};
  }

  static ScalingLaws sierpinski() { return {std::log(3.0) / std::log(2.0), std::log(5.0) / std::log(2.0)}; }

  static ScalingLaws for_family(Family f, int N) { return f == Family::vicsek ? vicsek(N) : sierpinski(); }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double alpha_over_beta() const { return alpha_ / beta_; }
  /// 1 - alpha/beta: the large-time gradient decay exponent.
  double gradient_gap() const { return 1.0 - alpha_ / beta_; }
  double subgaussian_exponent() const { return beta_ / (beta_ - 1.0); }

  double phi(double r) const {
    check_positive(r, "phi");
    return r < 1.0 ? r : std::pow(r, alpha_);
  }

  double psi(double r) const {
    check_positive(r, "psi");
    return r < 1.0 ? r * r : std::pow(r, beta_);
  }

  double psi_inv(double t) const {
    check_positive(t, "psi_inv");
    return t < 1.0 ? std::sqrt(t) : std::pow(t, 1.0 / beta_);
  }

  /// Closed-form supremum of R/s - t/Psi(s) over s > 0.
  double upsilon(double R, double t) const {
    if (R < 0.0) throw InputError("upsilon: R must be >= 0");
    check_positive(t, "upsilon");
    if (R == 0.0) return 0.0;
    double best = 0.0;  // the s -> infinity limit
    if (2.0 * t < R) best = std::max(best, R * R / (4.0 * t));
    if (beta_ * t >= R) {
      const double g = 1.0 / (beta_ - 1.0);
      best = std::max(best, (1.0 - 1.0 / beta_) * std::pow(R, beta_ * g) / std::pow(beta_ * t, g));
    }
    best = std::max(best, R - t);  // s = 1
    return best;
  }

  /// Two-regime asymptotic form of Upsilon: R^2/t when t < R, (R/t^{1/beta})^{beta/(beta-1)} otherwise.
  double upsilon_asymptotic(double R, double t) const {
    if (t < R) return R * R / t;
    return std::pow(R / std::pow(t, 1.0 / beta_), subgaussian_exponent());
  }

  /// sup_{x>0} (A max{x^{1/2}, x^{1/beta}} - x); dominates A Psi^{-1}(t)/Psi^{-1}(s) - t/s.
  double lemma53_bound(double A) const {
    check_positive(A, "lemma53_bound");
    // On (0,1) the max is x^{1/beta}, on [1,inf) it is x^{1/2}.
    double best = std::max(0.0, A - 1.0);
    const double x1 = std::pow(A / beta_, beta_ / (beta_ - 1.0));
    if (x1 < 1.0) best = std::max(best, (beta_ - 1.0) * x1);
    const double x2 = 0.25 * A * A;
    if (x2 >= 1.0) best = std::max(best, x2);
    return best;
  }

  /// The function bounded by lemma53_bound.
  double lemma53_f(double A, double t, double s) const { return A * psi_inv(t) / psi_inv(s) - t / s; }

  /// Phi(Psi^{-1}(t)) / t: the time factor of the gradient bound.
  double gradient_time_factor(double t) const { return phi(psi_inv(t)) / t; }

 private:
  static void check_positive(double x, const char* what) {
    if (!(x > 0.0)) throw InputError(std::string(what) + ": argument must be positive");
  }

  double alpha_;
  double beta_;
};

}  // namespace cablelab
