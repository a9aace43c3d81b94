#pragma once

// Random streams are SplitMix64 (Steele, Lea & Flood 2014). Every probe gets
// its own substream keyed by (seed, stream tag, probe index), so generation is
// independent of the order probes are produced in.

#include <cstdint>

namespace losstomo {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                           std::uint64_t b = 0) {
  std::uint64_t h = splitmix64_mix(seed + 0x9e3779b97f4a7c15ULL);
  h = splitmix64_mix(h ^ (a + 0x632be59bd9b4e019ULL));
  return splitmix64_mix(h ^ (b + 0x8cb92ba72f3d8dd7ULL));
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t state) : state_(state) {}

  constexpr std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // True with probability p; p >= 1 always passes and p <= 0 never does.
  constexpr bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

// Stream tags keep simulation and masking draws apart under one user seed.
enum class StreamTag : std::uint64_t { Probe = 1, Missing = 2 };

inline SplitMix64 probe_stream(std::uint64_t seed, StreamTag tag, std::uint64_t probe) {
  return SplitMix64(derive_seed(seed, static_cast<std::uint64_t>(tag), probe));
}

}  // namespace losstomo
