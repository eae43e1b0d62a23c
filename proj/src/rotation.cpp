#include "slutsky/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace slutsky {

// ------------------------------ BumpFunction ---------------------------------

BumpFunction::BumpFunction(Vec center, double radius, const BoxDomain& box)
    : center_(std::move(center)), radius_(radius) {
  const int d = box.dim();
  if (static_cast<int>(center_.size()) != d)
    throw config_error("BumpFunction: center dimension mismatch");
  if (!(radius_ > 0.0)) throw config_error("BumpFunction: radius must be positive");
  for (int i = 0; i < d; ++i) {
    const double margin = 0.25 * radius_;
    if (center_[i] - radius_ < box.lower[i] + margin - 1e-15 ||
        center_[i] + radius_ > box.upper[i] - margin + 1e-15)
      throw config_error(
          "BumpFunction: ball must sit inside the support with margin 0.25 r");
  }
  if (d != 2)
    throw unsupported_error("BumpFunction: numeric normalization implemented for d = 2");

  // Midpoint rule over the bounding square; psi is flat C-infinity with compact
  // support, so the rule converges superalgebraically.
  const int m = 256;
  const double h = 2.0 * radius_ / m;
  double integral = 0.0;
  for (int j = 0; j < m; ++j) {
    const double wy = center_[1] - radius_ + (j + 0.5) * h;
    const double uy = (wy - center_[1]) / radius_;
    for (int i = 0; i < m; ++i) {
      const double wx = center_[0] - radius_ + (i + 0.5) * h;
      const double ux = (wx - center_[0]) / radius_;
      const double s = ux * ux + uy * uy;
      if (s < 1.0) integral += std::exp(-1.0 / (1.0 - s));
    }
  }
  integral *= h * h;
  norm_ = 1.0 / integral;

  double gmax = 0.0;
  for (int k = 1; k < 100000; ++k) {
    const double s = k * 1e-5;
    const double one_m = 1.0 - s * s;
    gmax = std::max(gmax, 2.0 * s / (one_m * one_m) * std::exp(-1.0 / one_m));
  }
  grad_max_ = norm_ * gmax / radius_;
}

BumpFunction BumpFunction::standard(const DemandFamily& family, double radius_factor) {
  const BoxDomain& box = family.reference_box();
  double half = std::numeric_limits<double>::infinity();
  for (int i = 0; i < box.dim(); ++i) half = std::min(half, 0.5 * box.side(i));
  return BumpFunction(box.center(), radius_factor * half, box);
}

double BumpFunction::value(const Vec& omega) const {
  double s = 0.0;
  for (std::size_t i = 0; i < center_.size(); ++i) {
    const double u = (omega[i] - center_[i]) / radius_;
    s += u * u;
  }
  if (s >= 1.0) return 0.0;
  return norm_ * std::exp(-1.0 / (1.0 - s));
}

Vec BumpFunction::gradient(const Vec& omega) const {
  Vec g(center_.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < center_.size(); ++i) {
    const double u = (omega[i] - center_[i]) / radius_;
    s += u * u;
  }
  if (s >= 1.0) return g;
  const double one_m = 1.0 - s;
  const double val = norm_ * std::exp(-1.0 / one_m);
  const double scale = -2.0 * val / (radius_ * radius_ * one_m * one_m);
  for (std::size_t i = 0; i < center_.size(); ++i) g[i] = scale * (omega[i] - center_[i]);
  return g;
}

std::pair<double, Vec> bump_eval(const BumpFunction& bump, const DemandFamily& family,
                                 const PriceIncome& x, const Vec& q) {
  family.validate_x(x);
  const int d = family.dim();
  const Vec omega = family.support_map_inverse(x, q);
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    const double u = (omega[i] - bump.center()[i]) / bump.radius();
    s += u * u;
  }
  if (s >= 1.0) return {0.0, Vec(q.size(), 0.0)};  // outside the bump: exact zero
  const double psi = bump.value(omega);
  // psi_x is the pushforward density psi(omega) |det A_x(omega)|, which keeps
  // int psi_x over the support equal to one for every x.
  auto detA = [&](const Vec& w) {
    return 1.0 / std::abs(family.support_map_jacobian_det(x, w));
  };
  const double det = detA(omega);
  const Vec gref = bump.gradient(omega);
  const Mat a = family.support_map_A(x, omega);
  Vec g(q.size(), 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) g[i] += det * a(k, i) * gref[k];
  // product-rule term through det A (zero for affine support maps)
  const double h = 1e-6;
  for (int i = 0; i < d; ++i) {
    Vec qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    const double dplus = detA(family.support_map_inverse(x, qp));
    const double dminus = detA(family.support_map_inverse(x, qm));
    const double ddet = (dplus - dminus) / (2 * h);
    if (ddet != 0.0) g[i] += psi * ddet;
  }
  return {psi * det, g};
}

// ------------------------------ SlutskyTarget --------------------------------

SlutskyTarget SlutskyTarget::constant_c12(double c12) {
  Mat c(2, 2);
  c(0, 1) = c12;
  c(1, 0) = -c12;
  return SlutskyTarget(std::move(c));
}

SlutskyTarget::SlutskyTarget(Mat constant_c) : constant_(std::move(constant_c)) {
  if (constant_.rows != constant_.cols)
    throw config_error("SlutskyTarget: C must be square");
  for (int i = 0; i < constant_.rows; ++i)
    for (int j = 0; j < constant_.cols; ++j)
      if (std::abs(constant_(i, j) + constant_(j, i)) > 1e-12)
        throw config_error("SlutskyTarget: C must be antisymmetric");
}

SlutskyTarget SlutskyTarget::from_grid(std::vector<Vec> axes, Vec c12_values) {
  std::size_t total = 1;
  for (const Vec& ax : axes) {
    if (ax.size() < 2) throw config_error("SlutskyTarget: each axis needs two nodes");
    for (std::size_t k = 1; k < ax.size(); ++k)
      if (!(ax[k] > ax[k - 1]))
        throw config_error("SlutskyTarget: axis values must be ascending");
    total *= ax.size();
  }
  if (c12_values.size() != total)
    throw config_error("SlutskyTarget: value count does not match the lattice");
  SlutskyTarget t;
  t.constant_ = Mat(2, 2);
  t.has_grid_ = true;
  t.axes_ = std::move(axes);
  t.grid_values_ = std::move(c12_values);
  return t;
}

Mat SlutskyTarget::antisymmetric_part(const PriceIncome& x) const {
  if (!has_grid_) return constant_;
  // Multilinear interpolation over the flattened coordinates.
  const Vec flat = x.flat();
  const int na = static_cast<int>(axes_.size());
  std::vector<int> base(na);
  Vec frac(na);
  for (int k = 0; k < na; ++k) {
    const Vec& ax = axes_[k];
    double v = std::clamp(flat[k], ax.front(), ax.back());
    auto it = std::upper_bound(ax.begin(), ax.end(), v);
    int hi = static_cast<int>(it - ax.begin());
    hi = std::clamp(hi, 1, static_cast<int>(ax.size()) - 1);
    base[k] = hi - 1;
    frac[k] = (v - ax[hi - 1]) / (ax[hi] - ax[hi - 1]);
  }
  double value = 0.0;
  const int corners = 1 << na;
  for (int mask = 0; mask < corners; ++mask) {
    double w = 1.0;
    std::size_t idx = 0;
    for (int k = 0; k < na; ++k) {
      const int offset = (mask >> k) & 1;
      w *= offset ? frac[k] : 1.0 - frac[k];
      idx = idx * axes_[k].size() + (base[k] + offset);
    }
    value += w * grid_values_[idx];
  }
  Mat c(2, 2);
  c(0, 1) = value;
  c(1, 0) = -value;
  return c;
}

bool SlutskyTarget::is_zero() const {
  if (has_grid_) {
    for (double v : grid_values_)
      if (v != 0.0) return false;
    return true;
  }
  for (double v : constant_.a)
    if (v != 0.0) return false;
  return true;
}

// ------------------------------ coefficients ---------------------------------

namespace {

// vbar = dT/dy + DT vtilde in demand coordinates (DT = A^{-1}, 2x2).
inline void vbar_from_parts(const DemandFamily& fam, const PriceIncome& x, const Vec& omega,
                            const P2& vtilde, Vec& out) {
  out = fam.support_map_xgrad(x, omega, fam.dim());
  if (vtilde[0] != 0.0 || vtilde[1] != 0.0) {
    const Mat a = fam.support_map_A(x, omega);
    const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const double t00 = a(1, 1) / det, t01 = -a(0, 1) / det;
    const double t10 = -a(1, 0) / det, t11 = a(0, 0) / det;
    out[0] += t00 * vtilde[0] + t01 * vtilde[1];
    out[1] += t10 * vtilde[0] + t11 * vtilde[1];
  }
}

struct ETermAcc {
  MeanAccumulator e[2][2];
  MeanAccumulator offsum;  // vbar0 Q1 + vbar1 Q0
  MeanAccumulator diag0, diag1;

  void add(const Vec& vbar, const Vec& q) {
    e[0][0].add(vbar[0] * q[0]);
    e[0][1].add(vbar[0] * q[1]);
    e[1][0].add(vbar[1] * q[0]);
    e[1][1].add(vbar[1] * q[1]);
    offsum.add(vbar[0] * q[1] + vbar[1] * q[0]);
    diag0.add(vbar[0] * q[0]);
    diag1.add(vbar[1] * q[1]);
  }
  void merge(const ETermAcc& o) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) e[i][j].merge(o.e[i][j]);
    offsum.merge(o.offsum);
    diag0.merge(o.diag0);
    diag1.merge(o.diag1);
  }
};

// Assembles a(x) from identified functionals, the target C, and the E-term
// estimates; runs the antisymmetry-defect checks and antisymmetrizes exactly.
RotationCoeffs assemble_coeffs(const PriceIncome& x, const IdentifiedFunctionals& fn,
                               const Mat& C, const ETermAcc& acc) {
  RotationCoeffs rc;
  rc.x = x;
  rc.n = acc.e[0][0].count();
  rc.a_raw = Mat(2, 2);
  rc.defect_se = Mat(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      rc.a_raw(i, j) = 0.5 * fn.T(i, j) + C(i, j) - fn.dpm(i, j) - acc.e[i][j].mean();

  auto comb = [](std::initializer_list<double> ses) {
    double s = 0.0;
    for (double v : ses) s += v * v;
    return std::sqrt(s);
  };
  const double se_off = comb({acc.offsum.standard_error(), fn.T_se(0, 1),
                              fn.dpm_se(0, 1), fn.dpm_se(1, 0)});
  const double se_d0 =
      comb({acc.diag0.standard_error(), 0.5 * fn.T_se(0, 0), fn.dpm_se(0, 0)});
  const double se_d1 =
      comb({acc.diag1.standard_error(), 0.5 * fn.T_se(1, 1), fn.dpm_se(1, 1)});
  rc.defect_se(0, 1) = rc.defect_se(1, 0) = se_off;
  rc.defect_se(0, 0) = se_d0;
  rc.defect_se(1, 1) = se_d1;

  const double off_defect = rc.a_raw(0, 1) + rc.a_raw(1, 0);
  rc.max_defect = std::max({std::abs(off_defect), std::abs(rc.a_raw(0, 0)),
                            std::abs(rc.a_raw(1, 1))});
  if (std::abs(off_defect) > 5.0 * std::max(se_off, 1e-15) ||
      std::abs(rc.a_raw(0, 0)) > 5.0 * std::max(se_d0, 1e-15) ||
      std::abs(rc.a_raw(1, 1)) > 5.0 * std::max(se_d1, 1e-15))
    throw inconsistency_error(
        "compute_coeffs: antisymmetry defect beyond 5 standard errors");

  rc.a = Mat(2, 2);
  double a12 = 0.5 * (rc.a_raw(0, 1) - rc.a_raw(1, 0));
  if (std::abs(a12) <= 1e-12) a12 = 0.0;
  rc.a(0, 1) = a12;
  rc.a(1, 0) = -a12;
  return rc;
}

}  // namespace

RotationCoeffs compute_coeffs(const DemandFamily& family, const SlutskyTarget& target,
                              const CompositeFlow& step1, const PriceIncome& x,
                              std::size_t n, std::uint64_t seed) {
  family.validate_x(x);
  if (family.dim() != 2)
    throw unsupported_error("compute_coeffs: implemented for d = 2");
  // Materialize the legs before the parallel section.
  step1.leg_for(x, 0, false);
  step1.leg_for(x, 1, false);
  step1.leg_for(x, 2, false);

  const std::size_t chunk = 2048;
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  std::vector<ETermAcc> partial(nchunks);
  parallel_chunks(n, chunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    ETermAcc acc;
    Vec vbar(2), omega_vec(2);
    for (std::size_t i = b; i < e; ++i) {
      const Vec omega = family.reference_sample_point(seed, i);
      const P2 w = step1.reference_state(x, {omega[0], omega[1]}, false);
      omega_vec[0] = w[0];
      omega_vec[1] = w[1];
      const Vec vb = step1.income_velocity_bar(x, w);
      const Vec q = family.support_map(x, omega_vec);
      acc.add(vb, q);
    }
    partial[c] = acc;
  });
  ETermAcc acc;
  for (const ETermAcc& p : partial) acc.merge(p);

  const IdentifiedFunctionals fn =
      family.has_moment_oracle()
          ? functionals_from_oracle(family, x)
          : estimate_functionals(family, x, n, 1e-3, derive_seed(seed, 17), false);
  return assemble_coeffs(x, fn, target.antisymmetric_part(x), acc);
}

Vec rotation_field(const Mat& a, const BumpFunction& bump, const DemandFamily& family,
                   const PriceIncome& x, const Vec& q) {
  family.validate_x(x);
  const int d = family.dim();
  Vec w(d, 0.0);
  const Vec omega = family.support_map_inverse(x, q);
  if (bump.value(omega) == 0.0) return w;  // outside the bump support: exact zero
  const auto [val, grad] = bump_eval(bump, family, x, q);
  (void)val;
  const double rho = family.density(x, q);
  const double det_a = 1.0 / std::abs(family.support_map_jacobian_det(x, omega));
  const double floor_q = family.density_floor() * det_a;
  const double inv = 1.0 / std::max(rho, floor_q);
  for (int i = 0; i < d; ++i) {
    double acc = 0.0;
    for (int k = i; k < d; ++k) acc -= a(i, k) * grad[k];
    for (int k = 0; k < i; ++k) acc += a(k, i) * grad[k];
    w[i] = inv * acc;
  }
  return w;
}

// --------------------- corrected leg and flow attachment ---------------------

void CompositeFlow::attach_correction(std::shared_ptr<const SlutskyTarget> target,
                                      std::shared_ptr<const BumpFunction> bump) {
  if (!target || !bump) throw config_error("attach_correction: null target or bump");
  if (corrected()) throw config_error("attach_correction: correction already attached");
  target_ = std::move(target);
  bump_ = std::move(bump);
}

std::shared_ptr<const Leg> build_corrected_income_leg(const CompositeFlow& flow,
                                                      const PriceIncome& x) {
  const DemandFamily& fam = flow.family();
  const FlowConfig& cfg = flow.config();
  const int d = fam.dim();
  auto base = flow.leg_for(x, d, false);
  const SlutskyTarget& target = *flow.target();

  // Coefficients at the leg knots: one marched trajectory per draw, E-terms
  // accumulated at every knot along the way.
  const Vec& knots = base->knots;
  const int K = static_cast<int>(knots.size());
  const int seg_steps = std::max(4, cfg.rk4_steps / std::max(1, K - 1));
  const std::size_t n = static_cast<std::size_t>(cfg.coeff_samples);
  const std::uint64_t seed = cfg.coeff_seed;
  // Start state: after the price legs, i.e. at (p, y_lower).
  const PriceIncome x0 = x.with_coord(d, knots.front());
  for (int coord = 0; coord < d; ++coord) flow.leg_for(x, coord, false);

  const std::size_t chunk = 2048;
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  std::vector<std::vector<ETermAcc>> partial(nchunks, std::vector<ETermAcc>(K));
  parallel_chunks(n, chunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    std::vector<ETermAcc>& accs = partial[c];
    Vec omega_vec(2), vb(2);
    for (std::size_t i = b; i < e; ++i) {
      const Vec omega = fam.reference_sample_point(seed, i);
      P2 w = flow.reference_state(x0, {omega[0], omega[1]}, false);
      for (int k = 0; k < K; ++k) {
        if (k > 0) w = leg_integrate_segment(*base, knots[k - 1], knots[k], w, seg_steps);
        const PriceIncome xk = x.with_coord(d, knots[k]);
        P2 vt{0.0, 0.0};
        if (!base->zero_velocity && !base->fields[k].zero)
          vt = base->fields[k].eval(w[0], w[1]);
        omega_vec[0] = w[0];
        omega_vec[1] = w[1];
        vbar_from_parts(fam, xk, omega_vec, vt, vb);
        const Vec q = fam.support_map(xk, omega_vec);
        accs[k].add(vb, q);
      }
    }
  });

  Vec knot_a(K, 0.0);
  double max_abs_a = 0.0;
  for (int k = 0; k < K; ++k) {
    ETermAcc acc;
    for (std::size_t c = 0; c < nchunks; ++c) acc.merge(partial[c][k]);
    const PriceIncome xk = x.with_coord(d, knots[k]);
    const IdentifiedFunctionals fn =
        fam.has_moment_oracle()
            ? functionals_from_oracle(fam, xk)
            : estimate_functionals(fam, xk, n, 1e-3, derive_seed(seed, 23 + k), false);
    const RotationCoeffs rc = assemble_coeffs(xk, fn, target.antisymmetric_part(xk), acc);
    knot_a[k] = rc.a(0, 1);
    max_abs_a = std::max(max_abs_a, std::abs(knot_a[k]));
  }

  if (max_abs_a == 0.0) return base;  // zero correction: reuse Step 1 bitwise

  auto leg = std::make_shared<Leg>(*base);
  const BumpFunction& bump = *flow.bump();
  Leg::Overlay& o = leg->overlay;
  o.active = true;
  o.center = {bump.center()[0], bump.center()[1]};
  o.radius = bump.radius();
  o.norm = bump.normalization();
  o.knot_a = std::move(knot_a);
  o.floor = fam.density_floor();
  o.family = &fam;
  // Speed bound for the substep rule: max |a| grad_max detA_max / min rho~,
  // the density minimum measured over the bump ball rather than the family's
  // conservative declared floor.
  double det_max = 0.0;
  double rho_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k)
    for (int a = -2; a <= 2; ++a)
      for (int b = -2; b <= 2; ++b) {
        const double wx = o.center[0] + 0.5 * a * o.radius;
        const double wy = o.center[1] + 0.5 * b * o.radius;
        det_max = std::max(det_max,
                           fam.support_map_detA_2d(base->path, knots[k], wx, wy));
        rho_min = std::min(rho_min,
                           fam.pullback_density_2d(base->path, knots[k], wx, wy));
      }
  rho_min = std::max(rho_min, o.floor);
  o.max_speed = max_abs_a * bump.gradient_max() * 1.1 * det_max / rho_min;
  o.substep_dt =
      std::numbers::pi * o.radius / (o.max_speed * cfg.rotation_substeps_per_rev);
  return leg;
}

}  // namespace slutsky
