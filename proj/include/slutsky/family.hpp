#ifndef SLUTSKY_FAMILY_HPP
#define SLUTSKY_FAMILY_HPP

#include <memory>
#include <string>
#include <vector>

#include "slutsky/grid.hpp"

namespace slutsky {

/// A price-income pair x = (p, y), prices and income relative to the numeraire.
struct PriceIncome {
  Vec p;
  double y = 0.0;

  PriceIncome() = default;
  PriceIncome(Vec prices, double income) : p(std::move(prices)), y(income) {}

  int dim() const { return static_cast<int>(p.size()); }
  /// Flattened coordinates (p_1, ..., p_d, y).
  Vec flat() const {
    Vec f = p;
    f.push_back(y);
    return f;
  }
  static PriceIncome from_flat(const Vec& f) {
    PriceIncome x(Vec(f.begin(), f.end() - 1), f.back());
    return x;
  }
  double coord(int k) const { return k < dim() ? p[k] : y; }
  PriceIncome with_coord(int k, double v) const {
    PriceIncome x = *this;
    if (k < dim())
      x.p[k] = v;
    else
      x.y = v;
    return x;
  }
};

/// One coordinate line through the price-income box: x(t) replaces coordinate
/// `coord` of `base` by t for t in [t0, t1].  Legs of the composite flow, and
/// pullback densities, are parametrized this way.
struct LegPath {
  int coord = 0;  // 0..d-1 for prices, d for income
  PriceIncome base;
  double t0 = 0.0;
  double t1 = 0.0;

  PriceIncome at(double t) const { return base.with_coord(coord, t); }
};

/// First and second moments of mu_x together with their x-gradients.
struct Moments {
  Vec m;                // d
  Mat M;                // d x d, symmetric
  std::vector<Vec> dm;  // d+1 entries: d/dp_1 ... d/dp_d, d/dy
  std::vector<Mat> dM;
};

/// A parametric family (mu_x): density, rectangular support, reference-domain
/// diffeomorphism T_x with derivatives, samplers and (optionally) closed-form
/// moments.  Implementations must be immutable after construction; every
/// method here is safe for concurrent readers.
class DemandFamily {
 public:
  virtual ~DemandFamily() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  /// The box X = P x Y over flattened coordinates (p, y).
  virtual const BoxDomain& price_income_box() const = 0;
  /// Reference point: all coordinates at their lower bounds.
  virtual const PriceIncome& x_ref() const = 0;
  /// Support of the reference measure mu_{x_ref}.
  virtual const BoxDomain& reference_box() const = 0;

  /// Throws domain_error unless x lies in X (1e-12 slack).
  void validate_x(const PriceIncome& x) const;
  bool contains_x(const PriceIncome& x) const;

  /// Support of mu_x (axis-aligned).
  virtual BoxDomain support(const PriceIncome& x) const = 0;
  /// Density of mu_x at q; zero outside the support.  Throws domain_error for
  /// x outside X.
  virtual double density(const PriceIncome& x, const Vec& q) const = 0;

  // Support diffeomorphism T_x : reference box -> support(x).
  virtual Vec support_map(const PriceIncome& x, const Vec& omega) const = 0;
  virtual Vec support_map_inverse(const PriceIncome& x, const Vec& q) const = 0;
  /// A_x(omega) = (D T_x(omega))^{-1}.
  virtual Mat support_map_A(const PriceIncome& x, const Vec& omega) const = 0;
  virtual double support_map_jacobian_det(const PriceIncome& x, const Vec& omega) const = 0;
  /// d T_x(omega) / d x_k for k in 0..d (prices then income).
  virtual Vec support_map_xgrad(const PriceIncome& x, const Vec& omega, int k) const;

  /// Pulled-back density rho~_t(omega) = rho_t(T_t omega) |det D T_t(omega)|
  /// along a leg, and its t-derivative.  The base-class derivative is a
  /// central difference with step 1e-4 (relative to the coordinate scale);
  /// built-in families override it with the analytic expression.
  double pullback_density(const LegPath& leg, double t, const Vec& omega) const;
  virtual double pullback_density_dt(const LegPath& leg, double t, const Vec& omega) const;
  /// Allocation-free d = 2 pullback density for integrator inner loops.
  virtual double pullback_density_2d(const LegPath& leg, double t, double w0,
                                     double w1) const;
  /// |det A_x(omega)| = |det D T_x(omega)|^{-1} along a leg, allocation-free.
  virtual double support_map_detA_2d(const LegPath& leg, double t, double w0,
                                     double w1) const;

  /// Uniform positive lower bound on the pulled-back densities (assumption
  /// A.1.4's constant c); velocity construction floors rho~ at this value.
  virtual double density_floor() const = 0;

  virtual bool has_moment_oracle() const { return false; }
  /// Closed-form (or quadrature) moments; throws unsupported_error without an oracle.
  virtual Moments moments(const PriceIncome& x) const;

  /// Draw `index` of the i.i.d. reference sample keyed by `seed`.
  virtual Vec reference_sample_point(std::uint64_t seed, std::uint64_t index) const = 0;
  /// Oracle draw from mu_x; shares the underlying uniforms with equal (seed,
  /// index) across x, which gives common random numbers in x.
  virtual Vec sample_point_at(const PriceIncome& x, std::uint64_t seed,
                              std::uint64_t index) const = 0;
  /// Marginal CDF of coordinate `k` of mu_x.
  virtual double marginal_cdf(const PriceIncome& x, int k, double value) const = 0;

  std::vector<Vec> reference_sample(std::size_t n, std::uint64_t seed) const;
  std::vector<Vec> sample_at(const PriceIncome& x, std::size_t n, std::uint64_t seed) const;
};

/// Random Cobb-Douglas demand q_i = y eta_i / p_i with independent uniform
/// budget shares eta_i on [0.4/d, 0.8/d] (the [0.2, 0.4]^2 box at d = 2, and
/// sum eta < 1 for every d); X = [1,2]^d x [1,2].
class Cd0Family : public DemandFamily {
 public:
  explicit Cd0Family(int d = 2);

  std::string name() const override { return "cd0"; }
  int dim() const override { return d_; }
  const BoxDomain& price_income_box() const override { return box_x_; }
  const PriceIncome& x_ref() const override { return x_ref_; }
  const BoxDomain& reference_box() const override { return ref_box_; }

  BoxDomain support(const PriceIncome& x) const override;
  double density(const PriceIncome& x, const Vec& q) const override;
  Vec support_map(const PriceIncome& x, const Vec& omega) const override;
  Vec support_map_inverse(const PriceIncome& x, const Vec& q) const override;
  Mat support_map_A(const PriceIncome& x, const Vec& omega) const override;
  double support_map_jacobian_det(const PriceIncome& x, const Vec& omega) const override;
  Vec support_map_xgrad(const PriceIncome& x, const Vec& omega, int k) const override;
  double pullback_density_dt(const LegPath& leg, double t, const Vec& omega) const override;
  double pullback_density_2d(const LegPath&, double, double, double) const override {
    return eta_density_;
  }
  double support_map_detA_2d(const LegPath& leg, double t, double w0,
                             double w1) const override;
  double density_floor() const override { return 0.5 * eta_density_; }
  bool has_moment_oracle() const override { return true; }
  Moments moments(const PriceIncome& x) const override;
  Vec reference_sample_point(std::uint64_t seed, std::uint64_t index) const override;
  Vec sample_point_at(const PriceIncome& x, std::uint64_t seed,
                      std::uint64_t index) const override;
  double marginal_cdf(const PriceIncome& x, int k, double value) const override;

 private:
  int d_;
  double eta_lo_;
  double eta_hi_;
  double eta_density_;  // (hi - lo)^{-d}
  BoxDomain box_x_;
  BoxDomain ref_box_;
  PriceIncome x_ref_;
};

/// Fixed-support family on [0.2, 0.4]^2: q_1 exponentially tilted with natural
/// parameter theta(x) = 5 (y - p_1), q_2 uniform; X = [1, 1.2]^2 x [1, 1.2].
/// The support map is the identity, so every transport leg runs through the
/// Poisson velocity machinery.
class TiltFamily : public DemandFamily {
 public:
  TiltFamily();

  std::string name() const override { return "tilt"; }
  int dim() const override { return 2; }
  const BoxDomain& price_income_box() const override { return box_x_; }
  const PriceIncome& x_ref() const override { return x_ref_; }
  const BoxDomain& reference_box() const override { return ref_box_; }

  BoxDomain support(const PriceIncome&) const override { return ref_box_; }
  double density(const PriceIncome& x, const Vec& q) const override;
  Vec support_map(const PriceIncome&, const Vec& omega) const override { return omega; }
  Vec support_map_inverse(const PriceIncome&, const Vec& q) const override { return q; }
  Mat support_map_A(const PriceIncome& x, const Vec& omega) const override;
  double support_map_jacobian_det(const PriceIncome&, const Vec&) const override {
    return 1.0;
  }
  Vec support_map_xgrad(const PriceIncome&, const Vec&, int) const override {
    return Vec(2, 0.0);
  }
  double pullback_density_dt(const LegPath& leg, double t, const Vec& omega) const override;
  double pullback_density_2d(const LegPath& leg, double t, double w0,
                             double w1) const override;
  double support_map_detA_2d(const LegPath&, double, double, double) const override {
    return 1.0;
  }
  double density_floor() const override { return 10.0; }
  bool has_moment_oracle() const override { return true; }
  Moments moments(const PriceIncome& x) const override;
  Vec reference_sample_point(std::uint64_t seed, std::uint64_t index) const override;
  Vec sample_point_at(const PriceIncome& x, std::uint64_t seed,
                      std::uint64_t index) const override;
  double marginal_cdf(const PriceIncome& x, int k, double value) const override;

  static double theta_of(const PriceIncome& x) { return 5.0 * (x.y - x.p[0]); }
  /// Tilted q1 density z(theta) exp(theta (q - 0.3)) on [0.2, 0.4].
  static double tilted_density1(double theta, double q1);
  /// Mean shift L(theta) = E[q1] - 0.3 = 0.1 coth(0.1 theta) - 1/theta.
  static double mean_shift(double theta);
  static double tilted_cdf1(double theta, double q1);
  static double tilted_quantile1(double theta, double u);

 private:
  BoxDomain box_x_;
  BoxDomain ref_box_;
  PriceIncome x_ref_;
};

/// Family registry for the CLI and bindings ("cd0", "tilt").
std::shared_ptr<const DemandFamily> make_family(const std::string& name);

/// Nodes and weights of the n-point Gauss-Legendre rule on [a, b].
void gauss_legendre(int n, double a, double b, Vec& nodes, Vec& weights);

}  // namespace slutsky

#endif  // SLUTSKY_FAMILY_HPP
