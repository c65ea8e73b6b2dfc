#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace agentask {

// splitmix64; used to derive well-separated substream seeds from (seed, tag).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x51ed2700a1b4cd17ull));
}

// mt19937_64 with explicit conversions. The standard pins the raw engine
// output, and doing the uniform mappings ourselves keeps rollouts bit-equal
// across standard libraries (std::uniform_*_distribution is not portable).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 bits
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // inclusive bounds
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // rejection sampling for an unbiased draw
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return lo + static_cast<std::int64_t>(x % span);
  }

  // index into a probability vector; mass left over falls to `fallback`
  std::size_t pick(const std::vector<double>& probs, std::size_t fallback) {
    double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return fallback;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace agentask
