#include "slutsky/stats.hpp"

#include <algorithm>
#include <cmath>

namespace slutsky {

double ks_two_sample(Vec a, Vec b) {
  if (a.empty() || b.empty()) throw config_error("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

double ks_one_sample(Vec a, const std::function<double(double)>& cdf) {
  if (a.empty()) throw config_error("ks_one_sample: empty sample");
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = cdf(a[i]);
    d = std::max(d, std::max((i + 1) / n - f, f - i / n));
  }
  return d;
}

double ks_two_sample_q99(std::size_t n, std::size_t m) {
  // K(1.6276) ~ 0.99 for the Kolmogorov distribution.
  const double c99 = 1.6276;
  return c99 * std::sqrt(static_cast<double>(n + m) /
                         (static_cast<double>(n) * static_cast<double>(m)));
}

namespace {

std::vector<std::size_t> strided_indices(std::size_t n, std::size_t block,
                                         std::size_t nblocks, std::size_t cap) {
  std::vector<std::size_t> idx;
  idx.reserve(cap);
  for (std::size_t k = block; k < n && idx.size() < cap; k += nblocks) idx.push_back(k);
  return idx;
}

double mean_pair_distance(const std::vector<Vec>& x, const std::vector<std::size_t>& ix,
                          const std::vector<Vec>& y, const std::vector<std::size_t>& iy) {
  double sum = 0.0;
  for (std::size_t a : ix) {
    const Vec& xa = x[a];
    for (std::size_t b : iy) {
      const Vec& yb = y[b];
      double s = 0.0;
      for (std::size_t k = 0; k < xa.size(); ++k) {
        const double d = xa[k] - yb[k];
        s += d * d;
      }
      sum += std::sqrt(s);
    }
  }
  return sum / (static_cast<double>(ix.size()) * static_cast<double>(iy.size()));
}

}  // namespace

double energy_distance(const std::vector<Vec>& x, const std::vector<Vec>& y,
                       std::size_t cap) {
  if (x.empty() || y.empty()) throw config_error("energy_distance: empty sample");
  // Disjoint strided blocks of at most `cap` points each keep the pair count
  // quadratic in cap while the block average tames the V-statistic noise.
  const std::size_t nmin = std::min(x.size(), y.size());
  const std::size_t nblocks = std::max<std::size_t>(1, (nmin + cap - 1) / cap);
  double total = 0.0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    const auto ix = strided_indices(x.size(), b, nblocks, cap);
    const auto iy = strided_indices(y.size(), b, nblocks, cap);
    const double cross = mean_pair_distance(x, ix, y, iy);
    const double within_x = mean_pair_distance(x, ix, x, ix);
    const double within_y = mean_pair_distance(y, iy, y, iy);
    total += 2.0 * cross - within_x - within_y;
  }
  return total / static_cast<double>(nblocks);
}

Vec column_of(const std::vector<Vec>& rows, int k) {
  Vec col(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][k];
  return col;
}

}  // namespace slutsky
