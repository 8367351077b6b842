#pragma once

// Stiffness operators restricted to a node subset, and the Jacobi-preconditioned
// conjugate gradient used for every Dirichlet and Poisson solve.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "cable_mesh.hpp"
#include "errors.hpp"

namespace cablelab {

struct CgResult {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
};

inline constexpr double kCgTolerance = 1e-10;

/// Jacobi-preconditioned CG for a symmetric positive definite A.
inline CgResult pcg(const SparseMatrix& A, const Vector& b, double tol = kCgTolerance, int max_iter = -1,
                    const Vector* x0 = nullptr) {
  const Eigen::Index n = A.rows();
  if (max_iter < 0) max_iter = static_cast<int>(std::max<Eigen::Index>(1000, 10 * n));
  CgResult res;
  res.x = x0 ? *x0 : Vector::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x.setZero();
    return res;
  }
  const Vector inv_diag = A.diagonal().cwiseInverse();
  Vector r = b - A * res.x;
  Vector z = inv_diag.cwiseProduct(r);
  Vector p = z;
  double rz = r.dot(z);
  Vector Ap(n);
  for (int it = 0; it < max_iter; ++it) {
    const double rn = r.norm();
    if (rn <= tol * bnorm) {
      res.iterations = it;
      res.relative_residual = rn / bnorm;
      return res;
    }
    Ap.noalias() = A * p;
    const double alpha = rz / p.dot(Ap);
    res.x += alpha * p;
    r -= alpha * Ap;
    z = inv_diag.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  // Recompute the true residual before giving up; recurrence drift can hide convergence.
  const double rn = (b - A * res.x).norm();
  res.iterations = max_iter;
  res.relative_residual = rn / bnorm;
  if (rn > tol * bnorm) throw ConvergenceError("pcg did not converge", rn / bnorm);
  return res;
}

/// S restricted to a node set D, with the coupling to the nodes just outside D.
class DomainOperator {
 public:
  DomainOperator(const Mesh& mesh, std::vector<int> nodes) : mesh_(&mesh), nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw InputError("DomainOperator: empty domain");
    std::sort(nodes_.begin(), nodes_.end());
    nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
    const double inv_h = static_cast<double>(mesh.k());
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<Eigen::Triplet<double>> coupling;
    mass_.resize(static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const int v = nodes_[i];
      mass_[static_cast<Eigen::Index>(i)] = mesh.mass()[v];
      double diag = 0.0;
      for (int seg : mesh.incident(v)) {
        const int w = mesh.other_end(seg, v);
        diag += inv_h;
        const int j = local_index(w);
        if (j >= 0) {
          trip.emplace_back(static_cast<int>(i), j, -inv_h);
        } else {
          const auto it = std::lower_bound(boundary_.begin(), boundary_.end(), w);
          if (it == boundary_.end() || *it != w) boundary_.insert(it, w);
          coupling.emplace_back(static_cast<int>(i), w, inv_h);
        }
      }
      trip.emplace_back(static_cast<int>(i), static_cast<int>(i), diag);
    }
    const auto n = static_cast<Eigen::Index>(nodes_.size());
    A_.resize(n, n);
    A_.setFromTriplets(trip.begin(), trip.end());
    A_.makeCompressed();
    for (auto& t : coupling) {
      const auto it = std::lower_bound(boundary_.begin(), boundary_.end(), t.col());
      t = Eigen::Triplet<double>(t.row(), static_cast<int>(it - boundary_.begin()), t.value());
    }
    coupling_.resize(n, static_cast<Eigen::Index>(boundary_.size()));
    coupling_.setFromTriplets(coupling.begin(), coupling.end());
    coupling_.makeCompressed();
  }

  const Mesh& mesh() const { return *mesh_; }
  const std::vector<int>& nodes() const { return nodes_; }
  /// Nodes outside D joined to D by a segment (the Dirichlet boundary).
  const std::vector<int>& boundary() const { return boundary_; }
  std::size_t size() const { return nodes_.size(); }
  const SparseMatrix& matrix() const { return A_; }
  /// coupling()(i, j) = 1/h when domain node i touches boundary node j.
  const SparseMatrix& coupling() const { return coupling_; }
  const Vector& mass() const { return mass_; }

  /// Position of a global node in nodes(), or -1.
  int local_index(int node) const {
    const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
    return (it != nodes_.end() && *it == node) ? static_cast<int>(it - nodes_.begin()) : -1;
  }

  Vector restrict(const Vector& full) const {
    Vector out(static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t i = 0; i < nodes_.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[nodes_[i]];
    return out;
  }

  Vector restrict_boundary(const Vector& full) const {
    Vector out(static_cast<Eigen::Index>(boundary_.size()));
    for (std::size_t i = 0; i < boundary_.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[boundary_[i]];
    return out;
  }

  /// Writes local values into a full nodal vector.
  void scatter(const Vector& local, Vector& full) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) full[nodes_[i]] = local[static_cast<Eigen::Index>(i)];
  }

  /// Every connected piece of D must touch the boundary, otherwise A is singular.
  void check_connected_to_boundary() const {
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<int> stack;
    for (Eigen::Index i = 0; i < coupling_.rows(); ++i) {
      if (coupling_.row(i).nonZeros() > 0) {
        seen[static_cast<std::size_t>(i)] = 1;
        stack.push_back(static_cast<int>(i));
      }
    }
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (SparseMatrix::InnerIterator it(A_, i); it; ++it) {
        const auto j = static_cast<std::size_t>(it.col());
        if (!seen[j]) {
          seen[j] = 1;
          stack.push_back(static_cast<int>(j));
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
      throw DisconnectedDomainError("domain has a component that does not reach its boundary");
  }

 private:
  const Mesh* mesh_;
  std::vector<int> nodes_;
  std::vector<int> boundary_;
  SparseMatrix A_;
  SparseMatrix coupling_;
  Vector mass_;
};

/// Sparse Cholesky (LDL^T) of a domain operator, for many right-hand sides on one domain.
class DomainFactorization {
 public:
  explicit DomainFactorization(const DomainOperator& op) : op_(&op) {
    op.check_connected_to_boundary();
    // Eigen's simplicial solver wants column-major storage.
    Eigen::SparseMatrix<double> A = op.matrix();
    ldlt_.compute(A);
    if (ldlt_.info() != Eigen::Success) throw ConvergenceError("LDLT factorization failed", 0.0);
  }
  Vector solve(const Vector& b) const { return ldlt_.solve(b); }
  const DomainOperator& op() const { return *op_; }

 private:
  const DomainOperator* op_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

/// Neumann (free boundary) form on a node set: only segments with both ends inside count.
struct NeumannOperator {
  std::vector<int> nodes;
  SparseMatrix stiffness;
  Vector mass;
};

inline NeumannOperator neumann_operator(const Mesh& mesh, std::vector<int> nodes) {
  NeumannOperator out;
  std::sort(nodes.begin(), nodes.end());
  out.nodes = std::move(nodes);
  const auto n = static_cast<Eigen::Index>(out.nodes.size());
  auto local = [&](int v) {
    const auto it = std::lower_bound(out.nodes.begin(), out.nodes.end(), v);
    return (it != out.nodes.end() && *it == v) ? static_cast<int>(it - out.nodes.begin()) : -1;
  };
  const double h = mesh.h();
  std::vector<Eigen::Triplet<double>> trip;
  out.mass = Vector::Zero(n);
  for (std::size_t i = 0; i < out.nodes.size(); ++i) {
    for (int seg : mesh.incident(out.nodes[i])) {
      const int j = local(mesh.other_end(seg, out.nodes[i]));
      if (j < 0) continue;
      trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0 / h);
      trip.emplace_back(static_cast<int>(i), j, -1.0 / h);
      out.mass[static_cast<Eigen::Index>(i)] += 0.5 * h;
    }
  }
  out.stiffness.resize(n, n);
  out.stiffness.setFromTriplets(trip.begin(), trip.end());
  out.stiffness.makeCompressed();
  return out;
}

}  // namespace cablelab
