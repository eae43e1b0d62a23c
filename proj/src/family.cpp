#include "slutsky/family.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace slutsky {

// ------------------------------ base class ----------------------------------

bool DemandFamily::contains_x(const PriceIncome& x) const {
  if (x.dim() != dim()) return false;
  return price_income_box().contains(x.flat(), 1e-12);
}

void DemandFamily::validate_x(const PriceIncome& x) const {
  if (!contains_x(x))
    throw domain_error(name() + ": price-income pair outside the family box");
}

Vec DemandFamily::support_map_xgrad(const PriceIncome& x, const Vec& omega, int k) const {
  // Central difference in the x coordinate; built-ins override analytically.
  const double scale = std::max(1.0, std::abs(x.coord(k)));
  const double h = 1e-5 * scale;
  const Vec plus = support_map(x.with_coord(k, x.coord(k) + h), omega);
  const Vec minus = support_map(x.with_coord(k, x.coord(k) - h), omega);
  Vec g(plus.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (plus[i] - minus[i]) / (2 * h);
  return g;
}

double DemandFamily::pullback_density(const LegPath& leg, double t, const Vec& omega) const {
  const PriceIncome x = leg.at(t);
  const Vec q = support_map(x, omega);
  return density(x, q) * std::abs(support_map_jacobian_det(x, omega));
}

double DemandFamily::pullback_density_dt(const LegPath& leg, double t, const Vec& omega) const {
  const double scale = std::max(1.0, std::abs(t));
  const double h = 1e-4 * scale;
  return (pullback_density(leg, t + h, omega) - pullback_density(leg, t - h, omega)) /
         (2 * h);
}

double DemandFamily::pullback_density_2d(const LegPath& leg, double t, double w0,
                                         double w1) const {
  return pullback_density(leg, t, Vec{w0, w1});
}

double DemandFamily::support_map_detA_2d(const LegPath& leg, double t, double w0,
                                         double w1) const {
  return 1.0 / std::abs(support_map_jacobian_det(leg.at(t), Vec{w0, w1}));
}

Moments DemandFamily::moments(const PriceIncome&) const {
  throw unsupported_error(name() + ": no closed-form moment oracle");
}

std::vector<Vec> DemandFamily::reference_sample(std::size_t n, std::uint64_t seed) const {
  std::vector<Vec> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = reference_sample_point(seed, i);
  return out;
}

std::vector<Vec> DemandFamily::sample_at(const PriceIncome& x, std::size_t n,
                                         std::uint64_t seed) const {
  validate_x(x);
  std::vector<Vec> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = sample_point_at(x, seed, i);
  return out;
}

// ------------------------------- CD0 ----------------------------------------

namespace {
constexpr double kEtaLo = 0.2;
constexpr double kEtaHi = 0.4;
constexpr double kEtaMean = 0.3;
constexpr double kEtaVar = 0.04 / 12.0;  // uniform width 0.2
}  // namespace

Cd0Family::Cd0Family(int d) : d_(d) {
  if (d < 2) throw config_error("cd0: dimension must be at least 2");
  eta_lo_ = 0.4 / d;
  eta_hi_ = 0.8 / d;
  eta_density_ = std::pow(1.0 / (eta_hi_ - eta_lo_), d);
  Vec lo(d + 1, 1.0), hi(d + 1, 2.0);
  box_x_ = BoxDomain(lo, hi);
  ref_box_ = BoxDomain(Vec(d, eta_lo_), Vec(d, eta_hi_));
  x_ref_ = PriceIncome(Vec(d, 1.0), 1.0);
}

BoxDomain Cd0Family::support(const PriceIncome& x) const {
  validate_x(x);
  Vec lo(d_), hi(d_);
  for (int i = 0; i < d_; ++i) {
    lo[i] = eta_lo_ * x.y / x.p[i];
    hi[i] = eta_hi_ * x.y / x.p[i];
  }
  return BoxDomain(lo, hi);
}

double Cd0Family::density(const PriceIncome& x, const Vec& q) const {
  validate_x(x);
  double rho = eta_density_;
  for (int i = 0; i < d_; ++i) {
    const double eta = q[i] * x.p[i] / x.y;
    if (eta < eta_lo_ || eta > eta_hi_) return 0.0;
    rho *= x.p[i] / x.y;
  }
  return rho;
}

Vec Cd0Family::support_map(const PriceIncome& x, const Vec& omega) const {
  Vec q(d_);
  for (int i = 0; i < d_; ++i) q[i] = x.y * omega[i] / x.p[i];
  return q;
}

Vec Cd0Family::support_map_inverse(const PriceIncome& x, const Vec& q) const {
  Vec w(d_);
  for (int i = 0; i < d_; ++i) w[i] = q[i] * x.p[i] / x.y;
  return w;
}

Mat Cd0Family::support_map_A(const PriceIncome& x, const Vec&) const {
  Mat a(d_, d_);
  for (int i = 0; i < d_; ++i) a(i, i) = x.p[i] / x.y;
  return a;
}

double Cd0Family::support_map_jacobian_det(const PriceIncome& x, const Vec&) const {
  double det = 1.0;
  for (int i = 0; i < d_; ++i) det *= x.y / x.p[i];
  return det;
}

Vec Cd0Family::support_map_xgrad(const PriceIncome& x, const Vec& omega, int k) const {
  Vec g(d_, 0.0);
  if (k < d_)
    g[k] = -x.y * omega[k] / (x.p[k] * x.p[k]);
  else
    for (int i = 0; i < d_; ++i) g[i] = omega[i] / x.p[i];
  return g;
}

double Cd0Family::pullback_density_dt(const LegPath&, double, const Vec&) const {
  return 0.0;  // uniform eta: the pulled-back density is constant in x
}

double Cd0Family::support_map_detA_2d(const LegPath& leg, double t, double,
                                      double) const {
  const double y = (leg.coord == d_) ? t : leg.base.y;
  double det = 1.0;
  for (int i = 0; i < d_; ++i) {
    const double pi = (leg.coord == i) ? t : leg.base.p[i];
    det *= pi / y;
  }
  return det;
}

Moments Cd0Family::moments(const PriceIncome& x) const {
  validate_x(x);
  const double mean = 0.5 * (eta_lo_ + eta_hi_);
  const double var = (eta_hi_ - eta_lo_) * (eta_hi_ - eta_lo_) / 12.0;
  const double e2 = mean * mean + var;  // E[eta^2]
  Moments mo;
  mo.m.resize(d_);
  mo.M = Mat(d_, d_);
  for (int i = 0; i < d_; ++i) {
    mo.m[i] = mean * x.y / x.p[i];
    for (int j = 0; j < d_; ++j) {
      const double e = (i == j) ? e2 : mean * mean;
      mo.M(i, j) = e * x.y * x.y / (x.p[i] * x.p[j]);
    }
  }
  mo.dm.assign(d_ + 1, Vec(d_, 0.0));
  mo.dM.assign(d_ + 1, Mat(d_, d_));
  for (int k = 0; k < d_; ++k) {
    mo.dm[k][k] = -mo.m[k] / x.p[k];
    for (int j = 0; j < d_; ++j) {
      mo.dM[k](k, j) += -mo.M(k, j) / x.p[k];
      mo.dM[k](j, k) += -mo.M(j, k) / x.p[k];
    }
  }
  for (int i = 0; i < d_; ++i) {
    mo.dm[d_][i] = mo.m[i] / x.y;
    for (int j = 0; j < d_; ++j) mo.dM[d_](i, j) = 2.0 * mo.M(i, j) / x.y;
  }
  return mo;
}

Vec Cd0Family::reference_sample_point(std::uint64_t seed, std::uint64_t index) const {
  Rng rng(seed, index);
  Vec w(d_);
  for (int i = 0; i < d_; ++i) w[i] = rng.uniform(eta_lo_, eta_hi_);
  return w;
}

Vec Cd0Family::sample_point_at(const PriceIncome& x, std::uint64_t seed,
                               std::uint64_t index) const {
  return support_map(x, reference_sample_point(seed, index));
}

double Cd0Family::marginal_cdf(const PriceIncome& x, int k, double value) const {
  const double lo = eta_lo_ * x.y / x.p[k];
  const double hi = eta_hi_ * x.y / x.p[k];
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

// ------------------------------- TILT ---------------------------------------

TiltFamily::TiltFamily() {
  box_x_ = BoxDomain(Vec(3, 1.0), Vec(3, 1.2));
  ref_box_ = BoxDomain(Vec(2, kEtaLo), Vec(2, kEtaHi));
  x_ref_ = PriceIncome(Vec(2, 1.0), 1.0);
}

double TiltFamily::tilted_density1(double theta, double q1) {
  if (std::abs(theta) < 1e-8) {
    // z(theta) -> 5, exp factor -> 1 + theta (q-0.3)
    return 5.0 * (1.0 + theta * (q1 - 0.3));
  }
  const double z = theta / (2.0 * std::sinh(0.1 * theta));
  return z * std::exp(theta * (q1 - 0.3));
}

double TiltFamily::mean_shift(double theta) {
  const double a = std::abs(theta);
  if (a < 0.5) {
    const double t2 = theta * theta;
    return theta * (1.0 / 300.0 - 2.2222222222222221e-6 * t2 +
                    2.1164021164021166e-9 * t2 * t2);
  }
  return 0.1 / std::tanh(0.1 * theta) - 1.0 / theta;
}

double TiltFamily::tilted_cdf1(double theta, double q1) {
  const double q = std::clamp(q1, kEtaLo, kEtaHi);
  if (std::abs(theta) < 1e-8) return (q - kEtaLo) / (kEtaHi - kEtaLo);
  return (std::exp(theta * (q - 0.3)) - std::exp(-0.1 * theta)) /
         (2.0 * std::sinh(0.1 * theta));
}

double TiltFamily::tilted_quantile1(double theta, double u) {
  if (std::abs(theta) < 1e-8) return kEtaLo + (kEtaHi - kEtaLo) * u;
  const double lo = std::exp(-0.1 * theta);
  const double hi = std::exp(0.1 * theta);
  const double q = 0.3 + std::log(lo + u * (hi - lo)) / theta;
  return std::clamp(q, kEtaLo, kEtaHi);  // guard endpoint rounding
}

double TiltFamily::density(const PriceIncome& x, const Vec& q) const {
  validate_x(x);
  if (!ref_box_.contains(q)) return 0.0;
  return tilted_density1(theta_of(x), q[0]) * 5.0;
}

Mat TiltFamily::support_map_A(const PriceIncome&, const Vec&) const {
  Mat a(2, 2);
  a(0, 0) = a(1, 1) = 1.0;
  return a;
}

double TiltFamily::pullback_density_2d(const LegPath& leg, double t, double w0,
                                       double) const {
  const double y = (leg.coord == 2) ? t : leg.base.y;
  const double p1 = (leg.coord == 0) ? t : leg.base.p[0];
  return tilted_density1(5.0 * (y - p1), w0) * 5.0;
}

double TiltFamily::pullback_density_dt(const LegPath& leg, double t, const Vec& omega) const {
  double dtheta;
  if (leg.coord == 0)
    dtheta = -5.0;
  else if (leg.coord == 2)
    dtheta = 5.0;
  else
    return 0.0;
  const PriceIncome x = leg.at(t);
  const double theta = theta_of(x);
  const double rho = tilted_density1(theta, omega[0]) * 5.0;
  // d log rho / d theta = q1 - E[q1]  (exponential-family score)
  return dtheta * rho * (omega[0] - 0.3 - mean_shift(theta));
}

Moments TiltFamily::moments(const PriceIncome& x) const {
  validate_x(x);
  const double theta = theta_of(x);
  static thread_local Vec nodes, weights;
  if (nodes.empty()) gauss_legendre(64, kEtaLo, kEtaHi, nodes, weights);
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double q = nodes[k];
    const double w = weights[k] * tilted_density1(theta, q);
    e1 += w * q;
    e2 += w * q * q;
    e3 += w * q * q * q;
  }
  const double var = e2 - e1 * e1;
  const double cov21 = e3 - e2 * e1;  // Cov(q^2, q)
  const double u1 = kEtaMean, u2 = kEtaMean * kEtaMean + kEtaVar;

  Moments mo;
  mo.m = {e1, u1};
  mo.M = Mat(2, 2);
  mo.M(0, 0) = e2;
  mo.M(0, 1) = mo.M(1, 0) = e1 * u1;
  mo.M(1, 1) = u2;
  mo.dm.assign(3, Vec(2, 0.0));
  mo.dM.assign(3, Mat(2, 2));
  // theta = 5 (y - p1): d/dp1 = -5 d/dtheta, d/dy = +5 d/dtheta, d/dp2 = 0.
  const double slopes[3] = {-5.0, 0.0, 5.0};
  for (int k = 0; k < 3; ++k) {
    const double s = slopes[k];
    if (s == 0.0) continue;
    mo.dm[k][0] = s * var;
    mo.dM[k](0, 0) = s * cov21;
    mo.dM[k](0, 1) = mo.dM[k](1, 0) = s * var * u1;
  }
  return mo;
}

Vec TiltFamily::reference_sample_point(std::uint64_t seed, std::uint64_t index) const {
  Rng rng(seed, index);
  return {kEtaLo + (kEtaHi - kEtaLo) * rng.uniform(),
          kEtaLo + (kEtaHi - kEtaLo) * rng.uniform()};
}

Vec TiltFamily::sample_point_at(const PriceIncome& x, std::uint64_t seed,
                                std::uint64_t index) const {
  Rng rng(seed, index);
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  return {tilted_quantile1(theta_of(x), u1), kEtaLo + (kEtaHi - kEtaLo) * u2};
}

double TiltFamily::marginal_cdf(const PriceIncome& x, int k, double value) const {
  if (k == 0) return tilted_cdf1(theta_of(x), value);
  return std::clamp((value - kEtaLo) / (kEtaHi - kEtaLo), 0.0, 1.0);
}

// ------------------------------ registry ------------------------------------

std::shared_ptr<const DemandFamily> make_family(const std::string& name) {
  if (name == "cd0") return std::make_shared<Cd0Family>();
  if (name == "tilt") return std::make_shared<TiltFamily>();
  throw config_error("unknown family '" + name + "' (expected cd0 or tilt)");
}

void gauss_legendre(int n, double a, double b, Vec& nodes, Vec& weights) {
  using std::numbers::pi;
  nodes.resize(n);
  weights.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double xm = 0.5 * (b + a), xl = 0.5 * (b - a);
    nodes[i] = xm - xl * x;
    nodes[n - 1 - i] = xm + xl * x;
    weights[i] = weights[n - 1 - i] = 2.0 * xl / ((1.0 - x * x) * pp * pp);
  }
}

}  // namespace slutsky
