#ifndef SLUTSKY_ROTATION_HPP
#define SLUTSKY_ROTATION_HPP

#include <memory>
#include <utility>

#include "slutsky/functionals.hpp"
#include "slutsky/transport.hpp"

namespace slutsky {

/// Radial C-infinity bump on the reference box, normalized to unit integral:
/// psi(w) = N exp(-1 / (1 - |(w - c)/r|^2)) on B(c, r), zero outside.
class BumpFunction {
 public:
  /// Validates that the closed ball sits inside the box with margin >= 0.25 r.
  BumpFunction(Vec center, double radius, const BoxDomain& reference_box);
  /// Centered bump with radius = factor * min half-side.  A factor of 0.8
  /// saturates the margin rule; smaller bumps rotate proportionally faster
  /// (speed scales like 1/r^3 at unit mass), so big is cheap.
  static BumpFunction standard(const DemandFamily& family, double radius_factor = 0.8);

  double value(const Vec& omega) const;
  Vec gradient(const Vec& omega) const;

  const Vec& center() const { return center_; }
  double radius() const { return radius_; }
  double normalization() const { return norm_; }
  /// sup |grad psi| over the ball.
  double gradient_max() const { return grad_max_; }

 private:
  Vec center_;
  double radius_;
  double norm_ = 0.0;
  double grad_max_ = 0.0;
};

/// bump_eval: value and gradient of psi_x = psi o T_x^{-1} at a demand point q
/// (chain rule through A_x); identically (0, 0) outside T_x(B(c, r)).
std::pair<double, Vec> bump_eval(const BumpFunction& bump, const DemandFamily& family,
                                 const PriceIncome& x, const Vec& q);

/// A member S of the identified set: S(x) = T(x)/2 + C(x) with C antisymmetric.
/// C is either a constant matrix or a multilinear grid of c_12 values (d = 2).
class SlutskyTarget {
 public:
  /// Constant C with C_12 = -C_21 = c12 (d = 2).
  static SlutskyTarget constant_c12(double c12);
  /// Constant antisymmetric matrix (validated).
  explicit SlutskyTarget(Mat constant_c);
  /// Piecewise-multilinear c_12(x) over a lattice of flattened x coordinates.
  static SlutskyTarget from_grid(std::vector<Vec> axes, Vec c12_values);

  Mat antisymmetric_part(const PriceIncome& x) const;
  bool is_zero() const;

 private:
  SlutskyTarget() = default;
  Mat constant_;
  bool has_grid_ = false;
  std::vector<Vec> axes_;
  Vec grid_values_;
};

/// Monte Carlo rotation coefficients a(x) and their consistency diagnostics.
struct RotationCoeffs {
  PriceIncome x;
  Mat a;           // exactly antisymmetric, used by the field
  Mat a_raw;       // before antisymmetrization
  Mat defect_se;   // standard errors of the antisymmetry defects
  double max_defect = 0.0;
  std::size_t n = 0;
};

/// Coefficients a_ij(x) = S_ij(x) - D_pj m_i(x) - E[vbar_i(Qbar) Qbar_j]
/// by Monte Carlo over n reference draws pushed through the Step-1 flow.
/// Oracle moments are used when the family has them, otherwise the common
/// random number finite-difference estimates of estimate_functionals.
/// Throws inconsistency_error when the antisymmetry defect exceeds 5 standard
/// errors (a broken T oracle or flow).
RotationCoeffs compute_coeffs(const DemandFamily& family, const SlutskyTarget& target,
                              const CompositeFlow& step1, const PriceIncome& x,
                              std::size_t n, std::uint64_t seed);

/// The demand-coordinate rotation field
///   w_i(q) = rho_x(q)^{-1} (-sum_{k>=i} a_ik D_k psi_x + sum_{k<i} a_ki D_k psi_x),
/// exactly zero outside the bump support.
Vec rotation_field(const Mat& a, const BumpFunction& bump, const DemandFamily& family,
                   const PriceIncome& x, const Vec& q);

}  // namespace slutsky

#endif  // SLUTSKY_ROTATION_HPP
