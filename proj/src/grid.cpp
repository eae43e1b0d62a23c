#include "slutsky/grid.hpp"

#include <algorithm>
#include <cmath>

namespace slutsky {

BoxDomain::BoxDomain(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size())
    throw config_error("BoxDomain: lower/upper dimension mismatch");
  for (std::size_t i = 0; i < lower.size(); ++i)
    if (!(lower[i] < upper[i]))
      throw config_error("BoxDomain: lower must be strictly below upper componentwise");
}

bool BoxDomain::contains(const Vec& q, double tol) const {
  if (q.size() != lower.size()) return false;
  for (std::size_t i = 0; i < lower.size(); ++i)
    if (q[i] < lower[i] - tol || q[i] > upper[i] + tol) return false;
  return true;
}

Vec BoxDomain::center() const {
  Vec c(lower.size());
  for (std::size_t i = 0; i < lower.size(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
  return c;
}

namespace {
bool power_of_two(int m) { return m > 0 && (m & (m - 1)) == 0; }
}  // namespace

Grid2D::Grid2D(const BoxDomain& b, int nodes) : box(b), n(nodes) {
  if (b.dim() != 2) throw config_error("Grid2D: box must be 2-D");
  if (n < 17 || !power_of_two(n - 1))
    throw config_error("Grid2D: node count must be a power of two plus one, at least 17");
  hx = box.side(0) / (n - 1);
  hy = box.side(1) / (n - 1);
}

bool Grid2D::same_layout(const Grid2D& other) const {
  return n == other.n && box.lower == other.box.lower && box.upper == other.box.upper;
}

ScalarGridField::ScalarGridField(const Grid2D& grid, Vec values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw config_error("ScalarGridField: value count does not match grid");
}

double ScalarGridField::eval(double x, double y) const {
  const Grid2D& g = grid_;
  double fx = (x - g.box.lower[0]) / g.hx;
  double fy = (y - g.box.lower[1]) / g.hy;
  fx = std::clamp(fx, 0.0, static_cast<double>(g.n - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(g.n - 1));
  int i = std::min(static_cast<int>(fx), g.n - 2);
  int j = std::min(static_cast<int>(fy), g.n - 2);
  const double ax = fx - i;
  const double ay = fy - j;
  const double v00 = values_[g.index(i, j)];
  const double v10 = values_[g.index(i + 1, j)];
  const double v01 = values_[g.index(i, j + 1)];
  const double v11 = values_[g.index(i + 1, j + 1)];
  return (1 - ax) * (1 - ay) * v00 + ax * (1 - ay) * v10 + (1 - ax) * ay * v01 +
         ax * ay * v11;
}

double ScalarGridField::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double ScalarGridField::integral() const {
  const Grid2D& g = grid_;
  double sum = 0.0;
  for (int j = 0; j < g.n; ++j) {
    const double wy = (j == 0 || j == g.n - 1) ? 0.5 : 1.0;
    double row = 0.0;
    for (int i = 0; i < g.n; ++i) {
      const double wx = (i == 0 || i == g.n - 1) ? 0.5 : 1.0;
      row += wx * values_[g.index(i, j)];
    }
    sum += wy * row;
  }
  return sum * g.hx * g.hy;
}

double ScalarGridField::integral_simpson() const {
  const Grid2D& g = grid_;
  auto w1 = [&](int k) { return (k == 0 || k == g.n - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0); };
  double sum = 0.0;
  for (int j = 0; j < g.n; ++j) {
    double row = 0.0;
    for (int i = 0; i < g.n; ++i) row += w1(i) * values_[g.index(i, j)];
    sum += w1(j) * row;
  }
  return sum * g.hx * g.hy / 9.0;
}

// --------------------------- cubic B-spline ---------------------------------

namespace {

// Solves the (1 4 1)/6 interpolation system with natural end conditions.
// Input g has n values; output c has n + 2 coefficients (phantoms realized).
void spline_coeffs_1d(const double* g, int n, int stride, std::vector<double>& c,
                      std::vector<double>& scratch) {
  // Natural end conditions give c[0] = g[0], c[n-1] = g[n-1] directly and a
  // tridiagonal system for the interior coefficients.
  c.resize(n + 2);
  if (n == 1) {
    c[1] = g[0];
    c[0] = c[2] = g[0];
    return;
  }
  std::vector<double>& cp = scratch;
  cp.resize(n);
  // unknowns u[k] = coefficient k (0-based, n of them); u[0], u[n-1] pinned.
  // interior rows k = 1..n-2: (u[k-1] + 4 u[k] + u[k+1]) / 6 = g[k]
  // Thomas algorithm on the interior block.
  const double diag = 4.0 / 6.0, off = 1.0 / 6.0;
  std::vector<double> rhs(n);
  for (int k = 0; k < n; ++k) rhs[k] = g[static_cast<std::size_t>(k) * stride];
  std::vector<double> u(n);
  u[0] = rhs[0];
  u[n - 1] = rhs[n - 1];
  if (n > 2) {
    const int m = n - 2;  // interior count
    std::vector<double> d(m), r(m);
    for (int k = 0; k < m; ++k) r[k] = rhs[k + 1];
    r[0] -= off * u[0];
    r[m - 1] -= off * u[n - 1];
    d[0] = diag;
    for (int k = 1; k < m; ++k) {
      const double w = off / d[k - 1];
      d[k] = diag - w * off;
      r[k] -= w * r[k - 1];
    }
    u[m] = r[m - 1] / d[m - 1];
    for (int k = m - 1; k >= 1; --k) u[k] = (r[k - 1] - off * u[k + 1]) / d[k - 1];
  }
  for (int k = 0; k < n; ++k) c[k + 1] = u[k];
  c[0] = 2.0 * u[0] - u[1];          // S'' = 0 at the left end
  c[n + 1] = 2.0 * u[n - 1] - u[n - 2];  // and at the right end
}

inline void bspline_weights(double t, double w[4]) {
  const double t2 = t * t, t3 = t2 * t;
  w[0] = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0;
  w[1] = (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0;
  w[2] = (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0;
  w[3] = t3 / 6.0;
}

}  // namespace

CubicSpline2D::CubicSpline2D(const Grid2D& grid, const Vec& nodal) : grid_(grid) {
  const int n = grid.n;
  nc_ = n + 2;
  // Pass 1: spline each row (x direction).
  std::vector<double> rowc, scratch;
  Vec stage(static_cast<std::size_t>(nc_) * n);
  for (int j = 0; j < n; ++j) {
    spline_coeffs_1d(&nodal[grid.index(0, j)], n, 1, rowc, scratch);
    for (int i = 0; i < nc_; ++i) stage[static_cast<std::size_t>(j) * nc_ + i] = rowc[i];
  }
  // Pass 2: spline each coefficient column (y direction).
  coeff_.assign(static_cast<std::size_t>(nc_) * nc_, 0.0);
  Vec col(n);
  for (int i = 0; i < nc_; ++i) {
    for (int j = 0; j < n; ++j) col[j] = stage[static_cast<std::size_t>(j) * nc_ + i];
    spline_coeffs_1d(col.data(), n, 1, rowc, scratch);
    for (int j = 0; j < nc_; ++j) coeff_[static_cast<std::size_t>(j) * nc_ + i] = rowc[j];
  }
}

double CubicSpline2D::eval(double x, double y) const {
  const Grid2D& g = grid_;
  double fx = (x - g.box.lower[0]) / g.hx;
  double fy = (y - g.box.lower[1]) / g.hy;
  fx = std::clamp(fx, 0.0, static_cast<double>(g.n - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(g.n - 1));
  int i = std::min(static_cast<int>(fx), g.n - 2);
  int j = std::min(static_cast<int>(fy), g.n - 2);
  double wx[4], wy[4];
  bspline_weights(fx - i, wx);
  bspline_weights(fy - j, wy);
  // coefficient window: rows j-1..j+2, cols i-1..i+2, shifted by the phantom.
  double acc = 0.0;
  for (int b = 0; b < 4; ++b) {
    const std::size_t row = static_cast<std::size_t>(j + b) * nc_ + i;
    acc += wy[b] * (wx[0] * coeff_[row] + wx[1] * coeff_[row + 1] +
                    wx[2] * coeff_[row + 2] + wx[3] * coeff_[row + 3]);
  }
  return acc;
}

// ------------------------------ vector field --------------------------------

void VectorGridField::build_splines() {
  zero = u.max_abs() == 0.0 && v.max_abs() == 0.0;
  if (zero) return;
  su = CubicSpline2D(u.grid(), u.values());
  sv = CubicSpline2D(v.grid(), v.values());
}

std::array<double, 2> VectorGridField::eval(double x, double y) const {
  if (zero) return {0.0, 0.0};
  if (su.valid()) return {su.eval(x, y), sv.eval(x, y)};
  return {u.eval(x, y), v.eval(x, y)};
}

double VectorGridField::max_abs() const { return std::max(u.max_abs(), v.max_abs()); }

double VectorGridField::max_jacobian_norm() const {
  const Grid2D& g = grid();
  const VectorGridField& f = *this;
  auto du = [&](const ScalarGridField& s, int i, int j, int axis) {
    if (axis == 0) {
      if (i == 0) return (-3.0 * s.at(0, j) + 4.0 * s.at(1, j) - s.at(2, j)) / (2 * g.hx);
      if (i == g.n - 1)
        return (3.0 * s.at(i, j) - 4.0 * s.at(i - 1, j) + s.at(i - 2, j)) / (2 * g.hx);
      return (s.at(i + 1, j) - s.at(i - 1, j)) / (2 * g.hx);
    }
    if (j == 0) return (-3.0 * s.at(i, 0) + 4.0 * s.at(i, 1) - s.at(i, 2)) / (2 * g.hy);
    if (j == g.n - 1)
      return (3.0 * s.at(i, j) - 4.0 * s.at(i, j - 1) + s.at(i, j - 2)) / (2 * g.hy);
    return (s.at(i, j + 1) - s.at(i, j - 1)) / (2 * g.hy);
  };
  double m = 0.0;
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i) {
      const double r0 = std::abs(du(f.u, i, j, 0)) + std::abs(du(f.u, i, j, 1));
      const double r1 = std::abs(du(f.v, i, j, 0)) + std::abs(du(f.v, i, j, 1));
      m = std::max(m, std::max(r0, r1));
    }
  return m;
}

VectorGridField grad_field(const ScalarGridField& s) {
  const Grid2D& g = s.grid();
  VectorGridField out;
  out.u = ScalarGridField(g);
  out.v = ScalarGridField(g);
  for (int j = 0; j < g.n; ++j) {
    for (int i = 0; i < g.n; ++i) {
      double dx, dy;
      if (i == 0)
        dx = (-3.0 * s.at(0, j) + 4.0 * s.at(1, j) - s.at(2, j)) / (2 * g.hx);
      else if (i == g.n - 1)
        dx = (3.0 * s.at(i, j) - 4.0 * s.at(i - 1, j) + s.at(i - 2, j)) / (2 * g.hx);
      else
        dx = (s.at(i + 1, j) - s.at(i - 1, j)) / (2 * g.hx);
      if (j == 0)
        dy = (-3.0 * s.at(i, 0) + 4.0 * s.at(i, 1) - s.at(i, 2)) / (2 * g.hy);
      else if (j == g.n - 1)
        dy = (3.0 * s.at(i, j) - 4.0 * s.at(i, j - 1) + s.at(i, j - 2)) / (2 * g.hy);
      else
        dy = (s.at(i, j + 1) - s.at(i, j - 1)) / (2 * g.hy);
      out.u.at(i, j) = dx;
      out.v.at(i, j) = dy;
    }
  }
  return out;
}

double boundary_normal_flux_max(const ScalarGridField& u) {
  const Grid2D& g = u.grid();
  double m = 0.0;
  for (int j = 0; j < g.n; ++j) {
    m = std::max(m, std::abs((-3.0 * u.at(0, j) + 4.0 * u.at(1, j) - u.at(2, j)) / (2 * g.hx)));
    m = std::max(m, std::abs((3.0 * u.at(g.n - 1, j) - 4.0 * u.at(g.n - 2, j) +
                              u.at(g.n - 3, j)) /
                             (2 * g.hx)));
  }
  for (int i = 0; i < g.n; ++i) {
    m = std::max(m, std::abs((-3.0 * u.at(i, 0) + 4.0 * u.at(i, 1) - u.at(i, 2)) / (2 * g.hy)));
    m = std::max(m, std::abs((3.0 * u.at(i, g.n - 1) - 4.0 * u.at(i, g.n - 2) +
                              u.at(i, g.n - 3)) /
                             (2 * g.hy)));
  }
  return m;
}

}  // namespace slutsky
