#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cablelab {

/// Input outside an operation's documented domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A construction would exceed the configured size budget.
class CapacityError : public std::runtime_error {
 public:
  CapacityError(const std::string& what, std::size_t requested, std::size_t budget)
      : std::runtime_error(what + " (requested " + std::to_string(requested) +
                           ", budget " + std::to_string(budget) + ")"),
        requested_(requested),
        budget_(budget) {}

  std::size_t requested() const noexcept { return requested_; }
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t requested_;
  std::size_t budget_;
};

/// An iterative method stopped before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A domain has a connected component that never meets its Dirichlet boundary.
class DisconnectedDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cablelab
