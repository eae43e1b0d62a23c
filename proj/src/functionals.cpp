#include "slutsky/functionals.hpp"

#include <cmath>

namespace slutsky {

IdentifiedFunctionals functionals_from_oracle(const DemandFamily& family,
                                              const PriceIncome& x) {
  const Moments mo = family.moments(x);
  const int d = family.dim();
  IdentifiedFunctionals fn;
  fn.x = x;
  fn.oracle = true;
  fn.m = mo.m;
  fn.M = mo.M;
  fn.T = Mat(d, d);
  fn.dpm = Mat(d, d);
  fn.m_se = Vec(d, 0.0);
  fn.M_se = Mat(d, d);
  fn.T_se = Mat(d, d);
  fn.dpm_se = Mat(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      fn.dpm(i, j) = mo.dm[j][i];  // D_{p_j} m_i
      fn.T(i, j) = mo.dm[i][j] + mo.dm[j][i] + mo.dM[d](i, j);
    }
  return fn;
}

namespace {

struct FnAcc {
  // d = general; flattened accumulators.
  std::vector<MeanAccumulator> m;     // d
  std::vector<MeanAccumulator> M;     // d*d
  std::vector<MeanAccumulator> dpm;   // d*d: D_{p_j} m_i
  std::vector<MeanAccumulator> T;     // d*d

  explicit FnAcc(int d) : m(d), M(d * d), dpm(d * d), T(d * d) {}
  void merge(const FnAcc& o) {
    for (std::size_t k = 0; k < m.size(); ++k) m[k].merge(o.m[k]);
    for (std::size_t k = 0; k < M.size(); ++k) M[k].merge(o.M[k]);
    for (std::size_t k = 0; k < dpm.size(); ++k) dpm[k].merge(o.dpm[k]);
    for (std::size_t k = 0; k < T.size(); ++k) T[k].merge(o.T[k]);
  }
};

}  // namespace

IdentifiedFunctionals estimate_functionals(const DemandFamily& family,
                                           const PriceIncome& x, std::size_t n, double h,
                                           std::uint64_t seed, bool prefer_oracle) {
  family.validate_x(x);
  if (prefer_oracle && family.has_moment_oracle()) return functionals_from_oracle(family, x);
  if (n < 1000) throw config_error("estimate_functionals: n must be at least 1e3");
  if (!(h > 0.0)) throw config_error("estimate_functionals: h must be positive");

  const int d = family.dim();
  const BoxDomain& box = family.price_income_box();

  // Per-coordinate stencil: central when x +- h is interior, else second-order
  // one-sided away from the rim.
  struct Stencil {
    bool central;
    double sign;
  };
  std::vector<Stencil> stencil(d + 1);
  bool one_sided = false;
  for (int k = 0; k <= d; ++k) {
    const double c = x.coord(k);
    const bool lower_ok = c - h >= box.lower[k] - 1e-12;
    const bool upper_ok = c + h <= box.upper[k] + 1e-12;
    stencil[k] = {lower_ok && upper_ok, lower_ok ? -1.0 : 1.0};
    one_sided = one_sided || !stencil[k].central;
  }

  const std::size_t chunk = 2048;
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  std::vector<FnAcc> partial(nchunks, FnAcc(d));
  parallel_chunks(n, chunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    FnAcc acc(d);
    std::vector<Vec> dq(d + 1);      // d q / d x_k per draw (CRN differences)
    std::vector<Vec> dqq(d + 1);     // d (q q') / d x_k, flattened d*d
    for (std::size_t i = b; i < e; ++i) {
      const Vec q0 = family.sample_point_at(x, seed, i);
      for (int k = 0; k <= d; ++k) {
        const double cv = x.coord(k);
        Vec qp, qm;
        if (stencil[k].central) {
          qp = family.sample_point_at(x.with_coord(k, cv + h), seed, i);
          qm = family.sample_point_at(x.with_coord(k, cv - h), seed, i);
        } else {
          const double s = stencil[k].sign;
          qp = family.sample_point_at(x.with_coord(k, cv + s * h), seed, i);
          qm = family.sample_point_at(x.with_coord(k, cv + s * 2 * h), seed, i);
        }
        dq[k].assign(d, 0.0);
        dqq[k].assign(static_cast<std::size_t>(d) * d, 0.0);
        for (int a = 0; a < d; ++a) {
          if (stencil[k].central)
            dq[k][a] = (qp[a] - qm[a]) / (2 * h);
          else
            dq[k][a] = stencil[k].sign * (-3.0 * q0[a] + 4.0 * qp[a] - qm[a]) / (2 * h);
          for (int bcol = 0; bcol < d; ++bcol) {
            double prod;
            if (stencil[k].central)
              prod = (qp[a] * qp[bcol] - qm[a] * qm[bcol]) / (2 * h);
            else
              prod = stencil[k].sign *
                     (-3.0 * q0[a] * q0[bcol] + 4.0 * qp[a] * qp[bcol] -
                      qm[a] * qm[bcol]) /
                     (2 * h);
            dqq[k][static_cast<std::size_t>(a) * d + bcol] = prod;
          }
        }
      }
      for (int a = 0; a < d; ++a) {
        acc.m[a].add(q0[a]);
        for (int bcol = 0; bcol < d; ++bcol) {
          acc.M[static_cast<std::size_t>(a) * d + bcol].add(q0[a] * q0[bcol]);
          acc.dpm[static_cast<std::size_t>(a) * d + bcol].add(dq[bcol][a]);
          const double t = dq[a][bcol] + dq[bcol][a] +
                           dqq[d][static_cast<std::size_t>(a) * d + bcol];
          acc.T[static_cast<std::size_t>(a) * d + bcol].add(t);
        }
      }
    }
    partial[c] = std::move(acc);
  });
  FnAcc acc(d);
  for (FnAcc& p : partial) acc.merge(p);

  IdentifiedFunctionals fn;
  fn.x = x;
  fn.n = n;
  fn.h = h;
  fn.one_sided = one_sided;
  fn.m = Vec(d);
  fn.m_se = Vec(d);
  fn.M = Mat(d, d);
  fn.M_se = Mat(d, d);
  fn.T = Mat(d, d);
  fn.T_se = Mat(d, d);
  fn.dpm = Mat(d, d);
  fn.dpm_se = Mat(d, d);
  for (int i = 0; i < d; ++i) {
    fn.m[i] = acc.m[i].mean();
    fn.m_se[i] = acc.m[i].standard_error();
    for (int j = 0; j < d; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * d + j;
      fn.M(i, j) = acc.M[k].mean();
      fn.M_se(i, j) = acc.M[k].standard_error();
      fn.dpm(i, j) = acc.dpm[k].mean();
      fn.dpm_se(i, j) = acc.dpm[k].standard_error();
      fn.T(i, j) = acc.T[k].mean();
      fn.T_se(i, j) = acc.T[k].standard_error();
    }
  }
  // Enforce the symmetries that hold by construction.
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double ms = 0.5 * (fn.M(i, j) + fn.M(j, i));
      fn.M(i, j) = fn.M(j, i) = ms;
      const double ts = 0.5 * (fn.T(i, j) + fn.T(j, i));
      fn.T(i, j) = fn.T(j, i) = ts;
      const double tse = 0.5 * (fn.T_se(i, j) + fn.T_se(j, i));
      fn.T_se(i, j) = fn.T_se(j, i) = tse;
    }
  return fn;
}

}  // namespace slutsky
