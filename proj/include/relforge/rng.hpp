#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace relforge {

// Deterministic RNG with fully specified derived draws. std::mt19937_64 output is
// pinned by the standard, but std::uniform_*_distribution and std::shuffle are
// implementation-defined; corpora must be byte-identical across platforms, so the
// mappings are spelled out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t u64() { return eng_(); }

  // Unbiased draw in [0, n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = u64();
    } while (x >= limit);
    return x % n;
  }

  // Inclusive integer range.
  std::int64_t int_range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Uniform in [0, 1) with 53 random bits.
  double real01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double real_range(double lo, double hi) { return lo + (hi - lo) * real01(); }

  bool coin() { return (u64() & 1) != 0; }

  // In-place Fisher–Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k elements of a Fisher–Yates pass; selection order is part of the
  // deterministic contract.
  template <class T>
  std::vector<T> sample(const std::vector<T>& pool, std::size_t k) {
    std::vector<T> work = pool;
    if (k > work.size()) k = work.size();
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(below(work.size() - i));
      std::swap(work[i], work[j]);
    }
    work.resize(k);
    return work;
  }

 private:
  std::mt19937_64 eng_;
};

// Stateless seed derivation for per-item streams (seed xor-mixed with the item
// index, then finalized splitmix-style so nearby seeds do not correlate).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed ^ (index + 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace relforge
