#ifndef SLUTSKY_STATS_HPP
#define SLUTSKY_STATS_HPP

#include <functional>

#include "slutsky/common.hpp"

namespace slutsky {

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b| (inputs copied and sorted).
double ks_two_sample(Vec a, Vec b);

/// One-sample statistic against an exact CDF.
double ks_one_sample(Vec a, const std::function<double(double)>& cdf);

/// 99% asymptotic quantile of the two-sample statistic at sizes (n, m).
double ks_two_sample_q99(std::size_t n, std::size_t m);

/// Szekely-Rizzo energy statistic 2 A - B - C (V-statistic form, nonnegative),
/// computed on deterministic strided subsamples of at most `cap` points each.
double energy_distance(const std::vector<Vec>& x, const std::vector<Vec>& y,
                       std::size_t cap = 5000);

/// Extracts one coordinate column.
Vec column_of(const std::vector<Vec>& rows, int k);

}  // namespace slutsky

#endif  // SLUTSKY_STATS_HPP
