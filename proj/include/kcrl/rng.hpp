#pragma once

#include <cstdint>
#include <random>

namespace kcrl {

/// Seedable random stream used everywhere randomness enters the library.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are implemented here (not with <random>'s
/// distribution classes, whose algorithms are implementation-defined) so that
/// sampled values are identical across standard libraries.
///
/// Stream splitting: `Rng::stream(seed, stream, index)` hashes the triple with
/// SplitMix64 into an engine seed. Distinct (stream, index) pairs give
/// statistically independent sequences under the same base seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t index = 0) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
    s = splitmix64(s ^ splitmix64(index + 0x9e3779b97f4a7c15ULL));
    return Rng(s);
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream identifiers used by the library.
namespace streams {
inline constexpr std::uint64_t kFrequencies = 1;
inline constexpr std::uint64_t kPhases = 2;
inline constexpr std::uint64_t kCostInitialStates = 3;
inline constexpr std::uint64_t kEvaluation = 4;
inline constexpr std::uint64_t kHoldout = 5;
inline constexpr std::uint64_t kBatch = 6;
inline constexpr std::uint64_t kPolicyInit = 7;
inline constexpr std::uint64_t kProbes = 8;
}  // namespace streams

}  // namespace kcrl
