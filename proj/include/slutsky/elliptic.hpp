#ifndef SLUTSKY_ELLIPTIC_HPP
#define SLUTSKY_ELLIPTIC_HPP

#include <functional>
#include <optional>

#include "slutsky/grid.hpp"

namespace slutsky {

/// Symmetric coefficient field A(x) = [[a11, a12], [a12, a22]], SPD per node.
struct CoeffField {
  ScalarGridField a11;
  ScalarGridField a12;
  ScalarGridField a22;

  static CoeffField identity(const Grid2D& grid);
  static CoeffField constant(const Grid2D& grid, double c11, double c12, double c22);
  bool is_diagonal() const { return a12.max_abs() == 0.0; }
};

/// Zero-conormal-flux problem  div(A grad u) = -f  with mean-zero solution.
struct EllipticProblem {
  Grid2D grid;
  CoeffField coeff;
  ScalarGridField rhs;

  EllipticProblem(const Grid2D& g, CoeffField a, ScalarGridField f);
  static EllipticProblem laplace(const Grid2D& g, ScalarGridField f);
};

struct SolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
  double rhs_mean_removed = 0.0;  // |mean f| projected away before the solve
};

/// Conjugate-gradient solve of the finite-volume discretization.
///
/// The operator is the gradient of the discrete Dirichlet energy on the node
/// lattice (edge fluxes; corner-coupled terms appear only when A has an
/// off-diagonal part), which is the ghost-node-reflection 5-point scheme in
/// flux form.  Boundary conditions are the natural zero-flux ones.  The
/// returned field has exact (twice-corrected) zero trapezoid mean.
///
/// Throws compatibility_error when |mean f| > 1e-3 * max|f| before projection,
/// numeric_error when CG exceeds 10 n^2 iterations.
ScalarGridField solve_neumann(const EllipticProblem& problem, double tol,
                              SolveStats* stats = nullptr);

/// Applies the discrete operator (for tests of symmetry/residual identities).
Vec apply_operator(const EllipticProblem& problem, const Vec& u);

/// Node volume weights (trapezoid): h^2 inside, h^2/2 on edges, h^2/4 at corners.
Vec volume_weights(const Grid2D& grid);

/// One manufactured problem instance plus its exact solution.
struct ManufacturedCase {
  EllipticProblem problem;
  ScalarGridField exact;  // mean-zero
};

using ProblemGenerator = std::function<ManufacturedCase(int n)>;

struct ConvergenceReport {
  std::vector<int> sizes;
  std::vector<double> errors;  // L-infinity against the exact solution
  double order = 0.0;          // least-squares slope of log err vs log h
  bool exact = false;          // all errors at rounding level; order is NaN
};

/// Solves the generated problem over the given sizes and fits the observed order.
ConvergenceReport convergence_check(const ProblemGenerator& gen,
                                    const std::vector<int>& sizes, double tol = 1e-10);

/// cos(pi x) cos(pi y) manufactured family on [0,1]^2 with coefficient A.
/// Valid choices keep the conormal flux zero: diagonal A only.
ManufacturedCase manufactured_cosine(int n, double a11 = 1.0, double a22 = 1.0);

/// Full-tensor manufactured family (gradient vanishes on the whole boundary).
ManufacturedCase manufactured_bump_tensor(int n, double a11, double a12, double a22);

}  // namespace slutsky

#endif  // SLUTSKY_ELLIPTIC_HPP
