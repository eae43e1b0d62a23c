#ifndef SLUTSKY_TRANSPORT_HPP
#define SLUTSKY_TRANSPORT_HPP

#include <array>
#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>

#include "slutsky/elliptic.hpp"
#include "slutsky/family.hpp"

namespace slutsky {

using P2 = std::array<double, 2>;

struct FlowConfig {
  int grid_n = 65;
  int leg_knots = 9;
  int rk4_steps = 64;
  double solve_tol = 1e-10;  // leg Neumann solves (tighter than the module
                             // default so CG noise stays far below FD signals)
  int coeff_samples = 20000;       // rotation coefficient Monte Carlo size
  std::uint64_t coeff_seed = 101;  // stream for the coefficient Monte Carlo
  int rotation_substeps_per_rev = 32;

  void validate() const;
};

/// velocity = grad(u) / max(rho, floor), nodewise.
/// Throws regularity_error when rho dips below floor anywhere on the grid.
VectorGridField velocity_from_potential(const ScalarGridField& u,
                                        const ScalarGridField& rho, double floor);

/// Componentwise McShane extension sup_y (v_i(y) - L |query - y|) over the
/// field's box (discretized over grid nodes).  Inside the box it returns the
/// interpolated field value.
std::array<double, 2> lipschitz_extend(const VectorGridField& v, const BoxDomain& box,
                                       double L, double qx, double qy);

/// Classical RK4 for dX/dt = f(t, X) with `steps` uniform steps.
P2 integrate_rk4(const std::function<P2(double, const P2&)>& f, double t0, double t1,
                 P2 x0, int steps);

/// One transport leg: per-knot Poisson velocities of the pulled-back density
/// path, linear in t between knots, C^2 spline in space, plus an optional
/// divergence-free rotation overlay (the correction rides on the income leg).
struct Leg {
  LegPath path;
  Vec knots;
  std::vector<VectorGridField> fields;  // per knot; empty when zero_velocity
  bool zero_velocity = false;
  double lipschitz = 0.0;
  double base_max_speed = 0.0;

  /// Stream-field correction in reference coordinates:
  ///   v_rot(t, w) = a(t) / rho~_t(w) * perp-grad psi(w),
  /// which is the pullback of the demand-space rotation field w_x.
  struct Overlay {
    bool active = false;
    P2 center{0.0, 0.0};
    double radius = 0.0;
    double norm = 0.0;  // bump normalization (integral one over the box)
    Vec knot_a;         // a_12 at the leg knots, linearly interpolated
    double floor = 1e-12;
    const DemandFamily* family = nullptr;
    double max_speed = 0.0;
    double substep_dt = 0.0;  // stage-size target inside the bump
  } overlay;

  const Grid2D& grid() const { return fields.front().grid(); }
  bool trivial() const { return zero_velocity && !overlay.active; }

  P2 velocity(double t, const P2& w) const;
  /// Deterministic substep count for a base step [t, t+h] starting at w.
  int substep_factor(double t, const P2& w, double h) const;
};

/// Integrates a leg from its start to t_target.
P2 leg_integrate(const Leg& leg, double t_target, const P2& omega, int steps);
/// Integrates a leg over [ta, tb] (knot-to-knot marching for coefficients).
P2 leg_integrate_segment(const Leg& leg, double ta, double tb, const P2& omega, int steps);

struct FlowDerivatives {
  Mat dp;          // dPhi_i / dp_j
  Vec dy;          // dPhi_i / dy
  bool one_sided = false;  // boundary fallback used
};

struct FlowDiagnostics {
  long clamped = 0;            // endpoint clamps within the 1e-9 budget
  long clamp_violations = 0;   // endpoints outside the budget (left unclamped)
  double max_clamp = 0.0;
};

class BumpFunction;   // rotation.hpp
class SlutskyTarget;  // rotation.hpp
class CompositeFlow;

/// Builds the Step-2 income leg (base velocities plus the rotation overlay);
/// implemented alongside the coefficient machinery in rotation.cpp.
std::shared_ptr<const Leg> build_corrected_income_leg(const CompositeFlow& flow,
                                                      const PriceIncome& x);

/// The composite map Phi(x, omega): price legs in order p_1 ... p_d, then the
/// income leg (optionally carrying the rotation correction), then the support
/// map T_x.  Legs are cached per quantized path prefix; after construction a
/// leg is immutable, so batch evaluation is read-only and parallel-safe.
class CompositeFlow {
 public:
  CompositeFlow(std::shared_ptr<const DemandFamily> family, FlowConfig config);

  const DemandFamily& family() const { return *family_; }
  const FlowConfig& config() const { return config_; }
  bool corrected() const { return static_cast<bool>(target_); }
  const SlutskyTarget* target() const { return target_.get(); }
  const BumpFunction* bump() const { return bump_.get(); }

  /// Attach the Step-2 correction; defined in rotation.cpp.
  void attach_correction(std::shared_ptr<const SlutskyTarget> target,
                         std::shared_ptr<const BumpFunction> bump);

  /// Phi(x, omega); omega must lie in the reference box.
  Vec eval(const PriceIncome& x, const Vec& omega) const;
  /// Pushforward of the first n reference draws under `seed`.
  std::vector<Vec> push(const PriceIncome& x, std::size_t n, std::uint64_t seed) const;
  /// Central finite differences of eval in each x coordinate (one-sided
  /// second-order at the box rim, flagged).
  FlowDerivatives jacobian_fd(const PriceIncome& x, const Vec& omega, double h_p = 1e-3,
                              double h_y = 1e-3) const;

  /// Reference-domain state after all legs (before T_x); `use_correction`
  /// selects the corrected income leg when one is attached.
  P2 reference_state(const PriceIncome& x, const P2& omega, bool use_correction) const;

  /// Step-1 income-leg velocity in demand coordinates at q = T_x(w):
  /// vbar = dT_x/dy (w) + DT_x(w) vtilde_y(w); the law of motion of the
  /// preliminary ODE.  Used by the rotation coefficients.
  Vec income_velocity_bar(const PriceIncome& x, const P2& w) const;

  /// Cached leg access (builds on first use).  coord in 0..d; corrected only
  /// meaningful for coord == d.
  std::shared_ptr<const Leg> leg_for(const PriceIncome& x, int coord,
                                     bool use_correction) const;

  FlowDiagnostics diagnostics() const;

 private:
  friend std::shared_ptr<const Leg> build_corrected_income_leg(const CompositeFlow&,
                                                               const PriceIncome&);
  std::shared_ptr<const Leg> build_base_leg(const LegPath& path) const;
  LegPath path_for(const PriceIncome& x, int coord) const;

  std::shared_ptr<const DemandFamily> family_;
  FlowConfig config_;
  std::shared_ptr<const SlutskyTarget> target_;
  std::shared_ptr<const BumpFunction> bump_;
  Grid2D grid_;

  mutable std::mutex cache_mutex_;
  mutable std::map<std::vector<std::int64_t>, std::shared_ptr<const Leg>> leg_cache_;
  mutable std::atomic<long> clamped_{0};
  mutable std::atomic<long> clamp_violations_{0};
  mutable std::atomic<std::uint64_t> max_clamp_bits_{0};
};

}  // namespace slutsky

#endif  // SLUTSKY_TRANSPORT_HPP
