#include "slutsky/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace slutsky {

void FlowConfig::validate() const {
  if (grid_n < 17) throw config_error("FlowConfig: grid_n must be at least 17");
  if (leg_knots < 9) throw config_error("FlowConfig: leg_knots must be at least 9");
  if (rk4_steps < 1) throw config_error("FlowConfig: rk4_steps must be positive");
  if (!(solve_tol > 0.0 && solve_tol <= 1e-3))
    throw config_error("FlowConfig: solve_tol must lie in (0, 1e-3]");
  if (coeff_samples < 1000) throw config_error("FlowConfig: coeff_samples below 1e3");
  if (rotation_substeps_per_rev < 4)
    throw config_error("FlowConfig: rotation_substeps_per_rev too small");
}

VectorGridField velocity_from_potential(const ScalarGridField& u,
                                        const ScalarGridField& rho, double floor) {
  if (!(floor > 0.0)) throw config_error("velocity_from_potential: floor must be positive");
  for (double r : rho.values())
    if (r < floor)
      throw regularity_error("velocity_from_potential: density below its floor "
                             "inside the support");
  VectorGridField vel = grad_field(u);
  for (std::size_t k = 0; k < vel.u.values().size(); ++k) {
    const double r = std::max(rho.values()[k], floor);
    vel.u.values()[k] /= r;
    vel.v.values()[k] /= r;
  }
  return vel;
}

std::array<double, 2> lipschitz_extend(const VectorGridField& v, const BoxDomain& box,
                                       double L, double qx, double qy) {
  const Grid2D& g = v.grid();
  if (box.contains({qx, qy})) return v.eval(qx, qy);
  double best0 = -std::numeric_limits<double>::infinity();
  double best1 = best0;
  for (int j = 0; j < g.n; ++j) {
    const double dy = qy - g.y(j);
    for (int i = 0; i < g.n; ++i) {
      const double dx = qx - g.x(i);
      const double pen = L * std::sqrt(dx * dx + dy * dy);
      best0 = std::max(best0, v.u.at(i, j) - pen);
      best1 = std::max(best1, v.v.at(i, j) - pen);
    }
  }
  return {best0, best1};
}

P2 integrate_rk4(const std::function<P2(double, const P2&)>& f, double t0, double t1,
                 P2 x, int steps) {
  if (steps < 1) throw config_error("integrate_rk4: steps must be positive");
  const double h = (t1 - t0) / steps;
  if (h == 0.0) return x;
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + s * h;
    const P2 k1 = f(t, x);
    const P2 x2{x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]};
    const P2 k2 = f(t + 0.5 * h, x2);
    const P2 x3{x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]};
    const P2 k3 = f(t + 0.5 * h, x3);
    const P2 x4{x[0] + h * k3[0], x[1] + h * k3[1]};
    const P2 k4 = f(t + h, x4);
    x[0] += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
    x[1] += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
    if (!std::isfinite(x[0]) || !std::isfinite(x[1]))
      throw numeric_error("integrate_rk4: trajectory left the finite range");
  }
  return x;
}

// --------------------------------- Leg ---------------------------------------

namespace {

inline void bump_grad(const Leg::Overlay& o, const P2& w, double& gx, double& gy) {
  const double ux = (w[0] - o.center[0]) / o.radius;
  const double uy = (w[1] - o.center[1]) / o.radius;
  const double s = ux * ux + uy * uy;
  if (s >= 1.0) {
    gx = gy = 0.0;
    return;
  }
  const double one_m = 1.0 - s;
  const double val = o.norm * std::exp(-1.0 / one_m);
  const double scale = -2.0 * val / (o.radius * o.radius * one_m * one_m);
  gx = scale * (w[0] - o.center[0]);
  gy = scale * (w[1] - o.center[1]);
}

}  // namespace

P2 Leg::velocity(double t, const P2& w) const {
  P2 v{0.0, 0.0};
  const int K = static_cast<int>(knots.size());
  double alpha = 0.0;
  int k = 0;
  if (K >= 2) {
    const double dt = knots[1] - knots[0];
    double f = (t - knots.front()) / dt;
    f = std::clamp(f, 0.0, static_cast<double>(K - 1));
    k = std::min(static_cast<int>(f), K - 2);
    alpha = f - k;
  }
  if (!zero_velocity) {
    const VectorGridField& f0 = fields[k];
    const VectorGridField& f1 = fields[k + 1];
    const bool inside = grid().box.contains({w[0], w[1]});
    P2 v0{0.0, 0.0}, v1{0.0, 0.0};
    if (inside) {
      if (!f0.zero) v0 = f0.eval(w[0], w[1]);
      if (!f1.zero) v1 = f1.eval(w[0], w[1]);
    } else {
      if (!f0.zero) v0 = lipschitz_extend(f0, grid().box, lipschitz, w[0], w[1]);
      if (!f1.zero) v1 = lipschitz_extend(f1, grid().box, lipschitz, w[0], w[1]);
    }
    v[0] = (1 - alpha) * v0[0] + alpha * v1[0];
    v[1] = (1 - alpha) * v0[1] + alpha * v1[1];
  }
  if (overlay.active) {
    const double a = (1 - alpha) * overlay.knot_a[k] + alpha * overlay.knot_a[k + 1];
    if (a != 0.0) {
      double gx, gy;
      bump_grad(overlay, w, gx, gy);
      if (gx != 0.0 || gy != 0.0) {
        // Pullback of the demand-space rotation field: the stream gradient of
        // the reference bump scaled by a detA / rho~ (the bump rides on the
        // support map as a pushforward density, so detA appears once).
        const double rho = overlay.family->pullback_density_2d(path, t, w[0], w[1]);
        const double det = overlay.family->support_map_detA_2d(path, t, w[0], w[1]);
        const double c = a * det / std::max(rho, overlay.floor);
        v[0] += c * (-gy);
        v[1] += c * gx;
      }
    }
  }
  return v;
}

int Leg::substep_factor(double t, const P2& w, double h) const {
  if (!overlay.active || overlay.substep_dt <= 0.0) return 1;
  const double reach =
      overlay.radius + (base_max_speed + overlay.max_speed) * std::abs(h) + 1e-12;
  const double dx = w[0] - overlay.center[0];
  const double dy = w[1] - overlay.center[1];
  if (dx * dx + dy * dy > reach * reach) return 1;
  (void)t;
  const int m = static_cast<int>(std::ceil(std::abs(h) / overlay.substep_dt));
  return std::clamp(m, 1, 1 << 20);
}

namespace {

P2 run_span(const Leg& leg, double ta, double tb, P2 w, int steps) {
  if (tb == ta) return w;
  const double h = (tb - ta) / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = ta + s * h;
    const int m = leg.substep_factor(t, w, h);
    const double hs = h / m;
    for (int j = 0; j < m; ++j) {
      const double tj = t + j * hs;
      const P2 k1 = leg.velocity(tj, w);
      const P2 x2{w[0] + 0.5 * hs * k1[0], w[1] + 0.5 * hs * k1[1]};
      const P2 k2 = leg.velocity(tj + 0.5 * hs, x2);
      const P2 x3{w[0] + 0.5 * hs * k2[0], w[1] + 0.5 * hs * k2[1]};
      const P2 k3 = leg.velocity(tj + 0.5 * hs, x3);
      const P2 x4{w[0] + hs * k3[0], w[1] + hs * k3[1]};
      const P2 k4 = leg.velocity(tj + hs, x4);
      w[0] += hs / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
      w[1] += hs / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
    }
    if (!std::isfinite(w[0]) || !std::isfinite(w[1]))
      throw numeric_error("leg_integrate: trajectory left the finite range");
  }
  return w;
}

// Steps are distributed over knot segments so that complete segments run on
// stage times that do not move with the integration target: the map then
// stays smooth in the flow parameters (a stage grid stretching with t_target
// would drag stage times across the t-knot kinks of the linear-in-t field).
P2 leg_run(const Leg& leg, double ta, double tb, P2 w, int steps) {
  if (tb == ta || leg.trivial()) return w;
  const int K = static_cast<int>(leg.knots.size());
  const int per_segment = std::max(1, steps / std::max(1, K - 1));
  const double dir = tb > ta ? 1.0 : -1.0;
  double t = ta;
  while (dir * (tb - t) > 0.0) {
    // knot interval containing t in the direction of travel
    const double rel = (t - leg.knots.front()) / (leg.knots[1] - leg.knots[0]);
    int k = static_cast<int>(std::floor(rel + (dir > 0 ? 1e-12 : -1e-12)));
    k = std::clamp(k, 0, K - 2);
    double edge = dir > 0 ? leg.knots[k + 1] : leg.knots[k];
    if (dir > 0 && edge <= t + 1e-15) edge = leg.knots[std::min(k + 2, K - 1)];
    if (dir < 0 && edge >= t - 1e-15) edge = leg.knots[std::max(k - 1, 0)];
    const double stop = dir > 0 ? std::min(edge, tb) : std::max(edge, tb);
    w = run_span(leg, t, stop, w, per_segment);
    t = stop;
  }
  return w;
}

}  // namespace

P2 leg_integrate(const Leg& leg, double t_target, const P2& omega, int steps) {
  const double lo = std::min(leg.path.t0, leg.path.t1);
  const double hi = std::max(leg.path.t0, leg.path.t1);
  if (t_target < lo - 1e-9 || t_target > hi + 1e-9)
    throw domain_error("leg_integrate: target outside the leg interval");
  // rounding dust at the interval ends is clamped, never integrated backward
  const double t = std::clamp(t_target, lo, hi);
  return leg_run(leg, leg.path.t0, t, omega, steps);
}

P2 leg_integrate_segment(const Leg& leg, double ta, double tb, const P2& omega, int steps) {
  return leg_run(leg, ta, tb, omega, steps);
}

// ----------------------------- CompositeFlow --------------------------------

CompositeFlow::CompositeFlow(std::shared_ptr<const DemandFamily> family, FlowConfig config)
    : family_(std::move(family)), config_(config) {
  config_.validate();
  if (family_->dim() != 2)
    throw unsupported_error("CompositeFlow: transport legs are implemented for d = 2");
  grid_ = Grid2D(family_->reference_box(), config_.grid_n);
}

LegPath CompositeFlow::path_for(const PriceIncome& x, int coord) const {
  const int d = family_->dim();
  const BoxDomain& box = family_->price_income_box();
  PriceIncome base = family_->x_ref();
  for (int k = 0; k < coord && k < d; ++k) base.p[k] = x.p[k];
  if (coord == d) base.p = x.p;
  LegPath path;
  path.coord = coord;
  path.base = std::move(base);
  path.t0 = box.lower[coord];
  path.t1 = box.upper[coord];
  return path;
}

std::shared_ptr<const Leg> CompositeFlow::build_base_leg(const LegPath& path) const {
  auto leg = std::make_shared<Leg>();
  leg->path = path;
  const int K = config_.leg_knots;
  leg->knots.resize(K);
  for (int k = 0; k < K; ++k)
    leg->knots[k] = path.t0 + (path.t1 - path.t0) * k / (K - 1);

  const double floor = family_->density_floor();
  leg->fields.reserve(K);
  bool all_zero = true;
  double lip = 0.0;
  double vmax = 0.0;
  Vec omega(2);
  for (int k = 0; k < K; ++k) {
    ScalarGridField rho(grid_), drho(grid_);
    for (int j = 0; j < grid_.n; ++j)
      for (int i = 0; i < grid_.n; ++i) {
        omega[0] = grid_.x(i);
        omega[1] = grid_.y(j);
        rho.at(i, j) = family_->pullback_density(path, leg->knots[k], omega);
        drho.at(i, j) = family_->pullback_density_dt(path, leg->knots[k], omega);
      }
    VectorGridField vel;
    if (drho.max_abs() <= 1e-14 * std::max(1.0, rho.max_abs())) {
      vel.u = ScalarGridField(grid_);
      vel.v = ScalarGridField(grid_);
      vel.zero = true;
    } else {
      ScalarGridField u =
          solve_neumann(EllipticProblem::laplace(grid_, drho), config_.solve_tol);
      vel = velocity_from_potential(u, rho, floor);
      // The Neumann data says the conormal velocity vanishes; pin the normal
      // component at boundary nodes so the interpolated field is tangent and
      // trajectories cannot leak out of the reference box.
      for (int j = 0; j < grid_.n; ++j) {
        vel.u.at(0, j) = 0.0;
        vel.u.at(grid_.n - 1, j) = 0.0;
      }
      for (int i = 0; i < grid_.n; ++i) {
        vel.v.at(i, 0) = 0.0;
        vel.v.at(i, grid_.n - 1) = 0.0;
      }
      vel.build_splines();
      all_zero = false;
      lip = std::max(lip, vel.max_jacobian_norm());
      vmax = std::max(vmax, vel.max_abs());
    }
    leg->fields.push_back(std::move(vel));
  }
  leg->zero_velocity = all_zero;
  leg->lipschitz = all_zero ? 1.0 : 1.5 * lip;
  leg->base_max_speed = vmax;
  return leg;
}

std::shared_ptr<const Leg> CompositeFlow::leg_for(const PriceIncome& x, int coord,
                                                  bool use_correction) const {
  const int d = family_->dim();
  const bool corrected_leg = use_correction && corrected() && coord == d;
  LegPath path = path_for(x, coord);
  std::vector<std::int64_t> key;
  key.push_back(coord);
  key.push_back(corrected_leg ? 1 : 0);
  for (double c : path.base.flat()) key.push_back(quantize_key(c));
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = leg_cache_.find(key);
    if (it != leg_cache_.end()) return it->second;
  }
  std::shared_ptr<const Leg> leg;
  if (corrected_leg)
    leg = build_corrected_income_leg(*this, x);
  else
    leg = build_base_leg(path);
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto [it, inserted] = leg_cache_.emplace(std::move(key), std::move(leg));
  return it->second;
}

P2 CompositeFlow::reference_state(const PriceIncome& x, const P2& omega,
                                  bool use_correction) const {
  const int d = family_->dim();
  P2 w = omega;
  for (int coord = 0; coord < d; ++coord) {
    auto leg = leg_for(x, coord, false);
    if (!leg->trivial()) w = leg_integrate(*leg, x.p[coord], w, config_.rk4_steps);
  }
  auto leg = leg_for(x, d, use_correction);
  if (!leg->trivial()) w = leg_integrate(*leg, x.y, w, config_.rk4_steps);
  return w;
}

Vec CompositeFlow::eval(const PriceIncome& x, const Vec& omega) const {
  family_->validate_x(x);
  if (omega.size() != 2 || !family_->reference_box().contains(omega, 1e-9))
    throw domain_error("composite_eval: omega outside the reference support");
  P2 w = reference_state(x, {omega[0], omega[1]}, true);

  // Clamp numerical leakage back onto the reference box; anything beyond the
  // 1e-9 budget is left untouched and reported through diagnostics.
  const BoxDomain& box = family_->reference_box();
  double excess = 0.0;
  P2 wc = w;
  for (int i = 0; i < 2; ++i) {
    const double lo = box.lower[i], hi = box.upper[i];
    if (w[i] < lo) excess = std::max(excess, lo - w[i]);
    if (w[i] > hi) excess = std::max(excess, w[i] - hi);
    wc[i] = std::clamp(w[i], lo, hi);
  }
  if (excess > 0.0) {
    if (excess <= 1e-9) {
      w = wc;
      clamped_.fetch_add(1, std::memory_order_relaxed);
    } else {
      clamp_violations_.fetch_add(1, std::memory_order_relaxed);
    }
    std::uint64_t cur = max_clamp_bits_.load(std::memory_order_relaxed);
    std::uint64_t bits;
    std::memcpy(&bits, &excess, sizeof(bits));
    while (true) {
      double cur_val;
      std::memcpy(&cur_val, &cur, sizeof(cur_val));
      if (excess <= cur_val) break;
      if (max_clamp_bits_.compare_exchange_weak(cur, bits, std::memory_order_relaxed))
        break;
    }
  }
  return family_->support_map(x, {w[0], w[1]});
}

std::vector<Vec> CompositeFlow::push(const PriceIncome& x, std::size_t n,
                                     std::uint64_t seed) const {
  family_->validate_x(x);
  // Materialize the legs before going parallel.
  const int d = family_->dim();
  for (int coord = 0; coord < d; ++coord) leg_for(x, coord, false);
  leg_for(x, d, true);
  std::vector<Vec> out(n);
  parallel_chunks(n, 1024, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      out[i] = eval(x, family_->reference_sample_point(seed, i));
  });
  return out;
}

Vec CompositeFlow::income_velocity_bar(const PriceIncome& x, const P2& w) const {
  const int d = family_->dim();
  auto leg = leg_for(x, d, false);
  P2 vt{0.0, 0.0};
  if (!leg->zero_velocity) vt = leg->velocity(x.y, w);
  const Vec omega{w[0], w[1]};
  Vec vbar = family_->support_map_xgrad(x, omega, d);
  if (vt[0] != 0.0 || vt[1] != 0.0) {
    // DT = A^{-1}; for 2x2, invert directly.
    const Mat a = family_->support_map_A(x, omega);
    const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    if (std::abs(det) < 1e-300)
      throw numeric_error("income_velocity_bar: singular support-map Jacobian");
    const double t00 = a(1, 1) / det, t01 = -a(0, 1) / det;
    const double t10 = -a(1, 0) / det, t11 = a(0, 0) / det;
    vbar[0] += t00 * vt[0] + t01 * vt[1];
    vbar[1] += t10 * vt[0] + t11 * vt[1];
  }
  return vbar;
}

FlowDerivatives CompositeFlow::jacobian_fd(const PriceIncome& x, const Vec& omega,
                                           double h_p, double h_y) const {
  family_->validate_x(x);
  const int d = family_->dim();
  const BoxDomain& box = family_->price_income_box();
  FlowDerivatives out;
  out.dp = Mat(d, d);
  out.dy = Vec(d, 0.0);
  for (int k = 0; k <= d; ++k) {
    const double h = (k == d) ? h_y : h_p;
    const double c = x.coord(k);
    const bool lower_ok = c - h >= box.lower[k] - 1e-12;
    const bool upper_ok = c + h <= box.upper[k] + 1e-12;
    Vec deriv(d);
    if (lower_ok && upper_ok) {
      const Vec plus = eval(x.with_coord(k, c + h), omega);
      const Vec minus = eval(x.with_coord(k, c - h), omega);
      for (int i = 0; i < d; ++i) deriv[i] = (plus[i] - minus[i]) / (2 * h);
    } else {
      out.one_sided = true;
      const double sign = lower_ok ? -1.0 : 1.0;  // direction away from the rim
      const Vec f0 = eval(x, omega);
      const Vec f1 = eval(x.with_coord(k, c + sign * h), omega);
      const Vec f2 = eval(x.with_coord(k, c + sign * 2 * h), omega);
      for (int i = 0; i < d; ++i)
        deriv[i] = sign * (-3.0 * f0[i] + 4.0 * f1[i] - f2[i]) / (2 * h);
    }
    if (k == d)
      out.dy = deriv;
    else
      for (int i = 0; i < d; ++i) out.dp(i, k) = deriv[i];
  }
  return out;
}

FlowDiagnostics CompositeFlow::diagnostics() const {
  FlowDiagnostics d;
  d.clamped = clamped_.load();
  d.clamp_violations = clamp_violations_.load();
  const std::uint64_t bits = max_clamp_bits_.load();
  std::memcpy(&d.max_clamp, &bits, sizeof(d.max_clamp));
  return d;
}

}  // namespace slutsky
