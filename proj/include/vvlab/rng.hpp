#pragma once

// Counter-derived random streams: every (particle, realization) pair owns an
// independent generator seeded from a hash of the master seed, so results do
// not depend on how work is partitioned.

#include <cstdint>
#include <limits>
#include <random>

namespace vvlab {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t particle,
                                    std::uint64_t realization) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ mix64(particle + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ mix64(realization + 0x8cb92ba72f3d8dd7ULL));
  return h;
}

/// SplitMix64 generator; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Standard normal variates for one stream.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : gen_(seed) {}
  double operator()() { return dist_(gen_); }

 private:
  SplitMix64 gen_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace vvlab
