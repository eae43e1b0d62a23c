#include "slutsky/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace slutsky {

CoeffField CoeffField::identity(const Grid2D& grid) {
  return constant(grid, 1.0, 0.0, 1.0);
}

CoeffField CoeffField::constant(const Grid2D& grid, double c11, double c12, double c22) {
  CoeffField a;
  a.a11 = ScalarGridField(grid, c11);
  a.a12 = ScalarGridField(grid, c12);
  a.a22 = ScalarGridField(grid, c22);
  return a;
}

namespace {

void validate_spd(const CoeffField& a, const Grid2D& g) {
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double a11 = a.a11.values()[k];
    const double a12 = a.a12.values()[k];
    const double a22 = a.a22.values()[k];
    const double mid = 0.5 * (a11 + a22);
    const double rad = std::sqrt(0.25 * (a11 - a22) * (a11 - a22) + a12 * a12);
    const double lo = mid - rad, hi = mid + rad;
    if (!(lo >= 1e-6 && hi <= 1e6))
      throw config_error("EllipticProblem: coefficient eigenvalues outside [1e-6, 1e6]");
  }
}

}  // namespace

EllipticProblem::EllipticProblem(const Grid2D& g, CoeffField a, ScalarGridField f)
    : grid(g), coeff(std::move(a)), rhs(std::move(f)) {
  if (!rhs.grid().same_layout(g) || !coeff.a11.grid().same_layout(g))
    throw config_error("EllipticProblem: field grids disagree");
  if (!all_finite(rhs.values())) throw numeric_error("EllipticProblem: non-finite rhs");
  validate_spd(coeff, g);
}

EllipticProblem EllipticProblem::laplace(const Grid2D& g, ScalarGridField f) {
  return EllipticProblem(g, CoeffField::identity(g), std::move(f));
}

Vec volume_weights(const Grid2D& g) {
  Vec w(g.size());
  for (int j = 0; j < g.n; ++j) {
    const double wy = (j == 0 || j == g.n - 1) ? 0.5 : 1.0;
    for (int i = 0; i < g.n; ++i) {
      const double wx = (i == 0 || i == g.n - 1) ? 0.5 : 1.0;
      w[g.index(i, j)] = wx * wy * g.hx * g.hy;
    }
  }
  return w;
}

namespace {

// y += L x, where L is the energy-gradient operator described in the header.
void apply_add(const EllipticProblem& p, const Vec& x, Vec& y) {
  const Grid2D& g = p.grid;
  const int n = g.n;
  const Vec& a11 = p.coeff.a11.values();
  const Vec& a22 = p.coeff.a22.values();

  // Horizontal edges: transmissibility = mean a11 * (transverse width / hx).
  for (int j = 0; j < n; ++j) {
    const double width = ((j == 0 || j == n - 1) ? 0.5 : 1.0) * g.hy;
    for (int i = 0; i + 1 < n; ++i) {
      const std::size_t k0 = g.index(i, j), k1 = g.index(i + 1, j);
      const double kappa = 0.5 * (a11[k0] + a11[k1]) * width / g.hx;
      const double flux = kappa * (x[k1] - x[k0]);
      y[k0] -= flux;
      y[k1] += flux;
    }
  }
  // Vertical edges.
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double width = ((i == 0 || i == n - 1) ? 0.5 : 1.0) * g.hx;
      const std::size_t k0 = g.index(i, j), k1 = g.index(i, j + 1);
      const double kappa = 0.5 * (a22[k0] + a22[k1]) * width / g.hy;
      const double flux = kappa * (x[k1] - x[k0]);
      y[k0] -= flux;
      y[k1] += flux;
    }
  }
  if (p.coeff.is_diagonal()) return;

  // Cross terms, cell-centered: energy  sum_c area * a12_c * (d1 u)_c (d2 u)_c.
  const Vec& a12 = p.coeff.a12.values();
  const double area = g.hx * g.hy;
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      const std::size_t k00 = g.index(i, j), k10 = g.index(i + 1, j);
      const std::size_t k01 = g.index(i, j + 1), k11 = g.index(i + 1, j + 1);
      const double ac = 0.25 * (a12[k00] + a12[k10] + a12[k01] + a12[k11]);
      if (ac == 0.0) continue;
      const double d1 = (x[k10] + x[k11] - x[k00] - x[k01]) / (2 * g.hx);
      const double d2 = (x[k01] + x[k11] - x[k00] - x[k10]) / (2 * g.hy);
      const double c = area * ac;
      const double g1 = c * d2 / (2 * g.hx);  // d/d(d1 u) routed to corners
      const double g2 = c * d1 / (2 * g.hy);
      y[k10] += g1;
      y[k11] += g1;
      y[k00] -= g1;
      y[k01] -= g1;
      y[k01] += g2;
      y[k11] += g2;
      y[k00] -= g2;
      y[k10] -= g2;
    }
  }
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void remove_mean(Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  for (double& x : v) x -= m;
}

}  // namespace

Vec apply_operator(const EllipticProblem& p, const Vec& u) {
  Vec y(u.size(), 0.0);
  apply_add(p, u, y);
  return y;
}

ScalarGridField solve_neumann(const EllipticProblem& p, double tol, SolveStats* stats) {
  if (!(tol > 0.0 && tol <= 1e-3))
    throw config_error("solve_neumann: tol must lie in (0, 1e-3]");
  const Grid2D& g = p.grid;
  const Vec vol = volume_weights(g);
  const double total_vol = g.box.side(0) * g.box.side(1);

  // Compatibility: the zero-flux problem needs int f = 0.
  double fmean = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) fmean += vol[k] * p.rhs.values()[k];
  fmean /= total_vol;
  const double fmax = p.rhs.max_abs();
  if (std::abs(fmean) > 1e-3 * fmax)
    throw compatibility_error("solve_neumann: rhs carries mass (|mean f| > 1e-3 max|f|)");

  Vec b(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) b[k] = vol[k] * (p.rhs.values()[k] - fmean);
  remove_mean(b);  // exact constant deflation of the discrete system

  ScalarGridField out(g, 0.0);
  const double bnorm = std::sqrt(dot(b, b));
  if (stats) {
    stats->rhs_mean_removed = std::abs(fmean);
    stats->iterations = 0;
    stats->relative_residual = 0.0;
  }
  if (bnorm == 0.0) return out;

  Vec x(g.size(), 0.0), r = b, z(g.size(), 0.0), q(g.size());
  Vec d = r;
  double rr = dot(r, r);
  const long max_iter = 10L * g.n * g.n;
  long it = 0;
  for (; it < max_iter; ++it) {
    std::fill(q.begin(), q.end(), 0.0);
    apply_add(p, d, q);
    const double dq = dot(d, q);
    if (dq <= 0.0) throw numeric_error("solve_neumann: CG breakdown");
    const double alpha = rr / dq;
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += alpha * d[k];
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= alpha * q[k];
    if ((it + 1) % 64 == 0) remove_mean(r);  // keep the constant mode deflated
    const double rr_next = dot(r, r);
    if (std::sqrt(rr_next) <= tol * bnorm) {
      rr = rr_next;
      ++it;
      break;
    }
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = r[k] + beta * d[k];
  }
  if (std::sqrt(rr) > tol * bnorm)
    throw numeric_error("solve_neumann: CG failed to converge within 10 n^2 iterations");

  // Normalize to int u = 0; a second pass clears the rounding residue.
  for (int pass = 0; pass < 2; ++pass) {
    double um = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) um += vol[k] * x[k];
    um /= total_vol;
    for (double& v : x) v -= um;
  }
  out = ScalarGridField(g, std::move(x));
  if (!all_finite(out.values())) throw numeric_error("solve_neumann: non-finite solution");
  if (stats) {
    stats->iterations = static_cast<int>(it);
    stats->relative_residual = std::sqrt(rr) / bnorm;
  }
  return out;
}

ConvergenceReport convergence_check(const ProblemGenerator& gen,
                                    const std::vector<int>& sizes, double tol) {
  if (sizes.size() < 3)
    throw config_error("convergence_check: insufficient sizes (need at least 3)");
  ConvergenceReport rep;
  rep.sizes = sizes;
  double exact_scale = 0.0;
  for (int n : sizes) {
    ManufacturedCase c = gen(n);
    ScalarGridField u = solve_neumann(c.problem, tol);
    double err = 0.0;
    for (std::size_t k = 0; k < u.values().size(); ++k)
      err = std::max(err, std::abs(u.values()[k] - c.exact.values()[k]));
    rep.errors.push_back(err);
    exact_scale = std::max(exact_scale, c.exact.max_abs());
  }
  bool all_tiny = true;
  for (double e : rep.errors) all_tiny = all_tiny && e <= 1e-13 * std::max(1.0, exact_scale);
  if (all_tiny) {
    rep.exact = true;
    rep.order = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }
  // Least-squares slope of log err against log h.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const std::size_t m = sizes.size();
  for (std::size_t k = 0; k < m; ++k) {
    const double lx = std::log(1.0 / (sizes[k] - 1));
    const double ly = std::log(std::max(rep.errors[k], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  rep.order = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return rep;
}

ManufacturedCase manufactured_cosine(int n, double a11, double a22) {
  using std::numbers::pi;
  Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), n);
  ScalarGridField f(g), exact(g);
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i) {
      const double cx = std::cos(pi * g.x(i)), cy = std::cos(pi * g.y(j));
      exact.at(i, j) = cx * cy;
      f.at(i, j) = (a11 + a22) * pi * pi * cx * cy;
    }
  return {EllipticProblem(g, CoeffField::constant(g, a11, 0.0, a22), std::move(f)),
          std::move(exact)};
}

ManufacturedCase manufactured_bump_tensor(int n, double a11, double a12, double a22) {
  using std::numbers::pi;
  Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), n);
  // u* = h(x) h(y) - mean, h = (1 - cos 2 pi t)/2: grad u* = 0 on the whole rim,
  // so the conormal flux vanishes for any constant SPD A.
  auto h = [&](double t) { return 0.5 * (1.0 - std::cos(2 * pi * t)); };
  auto hp = [&](double t) { return pi * std::sin(2 * pi * t); };
  auto hpp = [&](double t) { return 2 * pi * pi * std::cos(2 * pi * t); };
  ScalarGridField f(g), exact(g);
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i) {
      const double x = g.x(i), y = g.y(j);
      exact.at(i, j) = h(x) * h(y) - 0.25;
      f.at(i, j) = -(a11 * hpp(x) * h(y) + 2 * a12 * hp(x) * hp(y) + a22 * h(x) * hpp(y));
    }
  return {EllipticProblem(g, CoeffField::constant(g, a11, a12, a22), std::move(f)),
          std::move(exact)};
}

}  // namespace slutsky
