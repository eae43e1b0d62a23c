#ifndef SLUTSKY_COMMON_HPP
#define SLUTSKY_COMMON_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace slutsky {

using Vec = std::vector<double>;

/// Thrown when a price-income pair or a query point violates a domain contract.
class domain_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for invalid user configuration (bad grid size, bounds, lattice, ...).
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an iterative method fails or a computation produces non-finite values.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a Neumann right-hand side carries mass (family violating conservation).
class compatibility_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a density drops below its declared positive floor.
class regularity_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an optional capability (closed-form oracle, dimension) is missing.
class unsupported_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when cross-checked quantities disagree beyond statistical tolerance.
class inconsistency_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Deterministic random numbers.
//
// All sampling is keyed by (seed, stream): every draw derives its own stream,
// so batch results are independent of thread count and evaluation order, and
// the first n draws of a seed are a prefix of the first 2n.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// xoshiro256++ generator; seeded via splitmix64 as its authors recommend.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  /// Independent stream for draw `stream` under `seed`.
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t sm = seed;
    std::uint64_t a = splitmix64(sm);
    sm = a ^ (stream * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1); 53-bit mantissa, bitwise stable across platforms.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

// ---------------------------------------------------------------------------
// Parallelism.
// ---------------------------------------------------------------------------

/// Number of worker threads: min(hardware, SLUTSKY_FORGE_THREADS when set).
int worker_count();

/// Runs fn(chunk_index, begin, end) over [0, n) in fixed chunks.
///
/// Chunk boundaries do not depend on the thread count, so callers that store
/// per-chunk partial results and combine them in chunk order get bitwise
/// reproducible totals under any parallelism level.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Small dense matrices (d is 2 or 3 in practice; storage is row-major).
// ---------------------------------------------------------------------------

struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  Mat transposed() const {
    Mat t(cols, rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }
};

/// Running mean / standard-error accumulator (Welford).
class MeanAccumulator {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  void merge(const MeanAccumulator& other) {
    if (other.n_ == 0) return;
    if (n_ == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_);
    const double delta = other.mean_ - mean_;
    mean_ += delta * nb / (na + nb);
    m2_ += other.m2_ + delta * delta * na * nb / (na + nb);
    n_ += other.n_;
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double standard_error() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Quantizes a real to an integer key (1e-9 quantum) for cache lookup.
inline std::int64_t quantize_key(double x) {
  return static_cast<std::int64_t>(std::llround(x * 1e9));
}

/// Stable sub-seed derivation for auxiliary sample streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ ((tag + 1) * 0xd1342543de82ef95ull);
  return splitmix64(s);
}

}  // namespace slutsky

#endif  // SLUTSKY_COMMON_HPP
