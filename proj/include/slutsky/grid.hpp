#ifndef SLUTSKY_GRID_HPP
#define SLUTSKY_GRID_HPP

#include <array>
#include <cstddef>
#include <vector>

#include "slutsky/common.hpp"

namespace slutsky {

/// Axis-aligned box, the support shape used throughout.
struct BoxDomain {
  Vec lower;
  Vec upper;

  BoxDomain() = default;
  BoxDomain(Vec lo, Vec hi);

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& q, double tol = 0.0) const;
  double side(int i) const { return upper[i] - lower[i]; }
  Vec center() const;
};

/// Uniform tensor lattice on a 2-D box; n nodes per axis, n = 2^k + 1, n >= 17.
struct Grid2D {
  BoxDomain box;
  int n = 0;
  double hx = 0.0;
  double hy = 0.0;

  Grid2D() = default;
  Grid2D(const BoxDomain& b, int nodes);

  std::size_t size() const { return static_cast<std::size_t>(n) * n; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * n + i; }
  double x(int i) const { return box.lower[0] + hx * i; }
  double y(int j) const { return box.lower[1] + hy * j; }
  bool same_layout(const Grid2D& other) const;
};

/// Nodal scalar samples with bilinear interpolation.
class ScalarGridField {
 public:
  ScalarGridField() = default;
  explicit ScalarGridField(const Grid2D& grid, double fill = 0.0)
      : grid_(grid), values_(grid.size(), fill) {}
  ScalarGridField(const Grid2D& grid, Vec values);

  const Grid2D& grid() const { return grid_; }
  double& at(int i, int j) { return values_[grid_.index(i, j)]; }
  double at(int i, int j) const { return values_[grid_.index(i, j)]; }
  Vec& values() { return values_; }
  const Vec& values() const { return values_; }

  /// Bilinear interpolation; queries are clamped onto the box.
  double eval(double x, double y) const;

  double max_abs() const;
  /// Trapezoid integral over the box.
  double integral() const;
  /// Composite Simpson integral (n odd by construction, so intervals are even).
  double integral_simpson() const;
  /// integral / area.
  double mean() const { return integral() / (grid_.box.side(0) * grid_.box.side(1)); }

 private:
  Grid2D grid_;
  Vec values_;
};

/// C^2 tensor cubic B-spline interpolant of nodal data (natural end conditions).
///
/// Leg velocity fields use this rather than bilinear interpolation: trajectory
/// finite differences in the flow parameters need a twice-differentiable field,
/// and bilinear cell kinks leak into the difference quotients.
class CubicSpline2D {
 public:
  CubicSpline2D() = default;
  CubicSpline2D(const Grid2D& grid, const Vec& nodal);

  double eval(double x, double y) const;
  bool valid() const { return nc_ > 0; }

 private:
  Grid2D grid_;
  int nc_ = 0;  // coefficients per axis = n + 2
  Vec coeff_;   // row-major (nc_ x nc_)
};

/// Two scalar components sampled on one grid.  When built by a leg the
/// components also carry spline interpolants.
struct VectorGridField {
  ScalarGridField u;  // first component
  ScalarGridField v;  // second component
  CubicSpline2D su;
  CubicSpline2D sv;
  bool zero = false;  // exact zero field marker

  const Grid2D& grid() const { return u.grid(); }
  void build_splines();
  /// Spline evaluation when available, bilinear otherwise.
  std::array<double, 2> eval(double x, double y) const;
  /// Max over nodes of the infinity norm of the finite-difference Jacobian.
  double max_jacobian_norm() const;
  double max_abs() const;
};

/// Gradient by central differences inside, one-sided second order on the rim.
VectorGridField grad_field(const ScalarGridField& u);

/// Largest discrete outward normal derivative over boundary nodes of u
/// (one-sided second order); diagnostic for the Neumann condition.
double boundary_normal_flux_max(const ScalarGridField& u);

}  // namespace slutsky

#endif  // SLUTSKY_GRID_HPP
