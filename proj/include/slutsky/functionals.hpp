#ifndef SLUTSKY_FUNCTIONALS_HPP
#define SLUTSKY_FUNCTIONALS_HPP

#include "slutsky/family.hpp"

namespace slutsky {

/// Everything recoverable from the cross-sectional marginals at one
/// price-income pair: moments, their price gradients, and the functional
/// T_ij = D_pi m_j + D_pj m_i + D_y M_ij, with standard errors when estimated
/// by Monte Carlo (zero in oracle mode).
struct IdentifiedFunctionals {
  PriceIncome x;
  Vec m;
  Mat M;
  Mat T;
  Mat dpm;  // dpm(i, j) = D_{p_j} m_i
  Vec m_se;
  Mat M_se;
  Mat T_se;
  Mat dpm_se;
  std::size_t n = 0;
  double h = 0.0;
  bool oracle = false;
  bool one_sided = false;  // boundary finite-difference fallback used
};

/// Exact functionals from the family's closed-form moment oracle.
IdentifiedFunctionals functionals_from_oracle(const DemandFamily& family,
                                              const PriceIncome& x);

/// estimate_functionals: oracle when available and allowed, otherwise Monte
/// Carlo with common-random-number central differences (step h; one-sided
/// second order at the box rim, flagged).  T is symmetrized by construction.
IdentifiedFunctionals estimate_functionals(const DemandFamily& family,
                                           const PriceIncome& x, std::size_t n, double h,
                                           std::uint64_t seed, bool prefer_oracle = true);

}  // namespace slutsky

#endif  // SLUTSKY_FUNCTIONALS_HPP
