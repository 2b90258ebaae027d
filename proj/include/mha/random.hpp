#ifndef MHA_RANDOM_HPP
#define MHA_RANDOM_HPP

#include <cstdint>
#include <random>
#include <span>

namespace mha {

// mt19937_64 output is fixed by the standard; the std distributions are not,
// so the helpers below convert raw draws themselves.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for item `index` of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Draws an index with probability proportional to `weights` (inverse CDF).
/// Weights must be non-negative with a positive sum.
std::size_t sample_weighted(Rng& rng, std::span<const double> weights);

/// Inverse-CDF draw from a distribution given as log-probabilities that are
/// already normalised.
std::size_t sample_log_probs(Rng& rng, std::span<const double> log_probs);

template <typename T>
void shuffle(Rng& rng, std::span<T> items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace mha

#endif  // MHA_RANDOM_HPP
