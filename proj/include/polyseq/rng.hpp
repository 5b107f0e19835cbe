#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace polyseq::rng {

/// SplitMix64 generator (Steele, Lea, Flood 2014; public domain reference
/// sequence). Every stochastic component of the library draws from this
/// generator so that runs are reproducible bit-for-bit across platforms,
/// which std::uniform_* distributions do not guarantee.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 mantissa bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection,
  /// exact and unbiased for any bound >= 1.
  std::uint64_t below(std::uint64_t bound) {
    __uint128_t m = static_cast<__uint128_t>(next()) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      std::uint64_t threshold = (0ULL - bound) % bound;
      while (lo < threshold) {
        m = static_cast<__uint128_t>(next()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t state_;
};

/// Mixes a base seed with up to three stream coordinates into an independent
/// sub-seed. Batched samplers give every (row, cut, rollout) lane its own
/// stream derived this way, so a lane can be replayed in isolation; the
/// reward-estimation tests rely on replaying exactly these streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  SplitMix64 g(seed);
  std::uint64_t s = g.next();
  s ^= 0x9E3779B97F4A7C15ULL * (a + 1);
  SplitMix64 g2(s);
  s = g2.next() ^ (0xC2B2AE3D27D4EB4FULL * (b + 1));
  SplitMix64 g3(s);
  return g3.next() ^ (0x165667B19E3779F9ULL * (c + 1));
}

/// In-place Fisher-Yates shuffle with our own generator: std::shuffle's
/// output is implementation-defined, this one is pinned.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(g.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Draws an index from an unnormalized non-negative weight row by inverse
/// CDF walk. Falls back to the last positive weight on floating point
/// residue. One uniform is consumed per call.
template <typename T>
int sample_categorical(std::span<const T> probs, SplitMix64& g) {
  double u = g.uniform();
  double cum = 0.0;
  int last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = static_cast<double>(probs[i]);
    if (p > 0.0) last = static_cast<int>(i);
    cum += p;
    if (u < cum) return static_cast<int>(i);
  }
  return last;
}

}  // namespace polyseq::rng
