#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nvstorm {

// splitmix64 finalizer; full-period 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Logical stream families. Every stochastic step of the toolkit draws from a
// generator seeded by (run seed, stream kind, element index) so that traces,
// frames and drift are statistically independent and any element can be
// regenerated in isolation (e.g. one frame out of a stack, on any thread).
enum class Stream : std::uint64_t {
  telegraph = 1,    // per-emitter charge-state trace
  frame_noise = 2,  // per-frame Poisson sampling
  drift = 3,        // drift trajectory
  experiment = 4,   // Monte Carlo harnesses
};

inline std::uint64_t substream_seed(std::uint64_t seed, Stream kind, std::uint64_t index) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ mix64(static_cast<std::uint64_t>(kind)));
  return mix64(h ^ mix64(index));
}

// mt19937_64 with hand-rolled samplers. The standard distributions are not
// bit-reproducible across library implementations; these are.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log argument.
  double uniform_pos() { return 1.0 - uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double mean) { return -mean * std::log(uniform_pos()); }

  double normal() {
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    return r * std::cos(6.283185307179586 * uniform());
  }

  // Arrival counting: k = #{k : sum of Exp(1) gaps <= lambda}. Exact for all
  // lambda, O(lambda) draws; fine for the per-pixel means this project sees.
  std::uint64_t poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    std::uint64_t k = 0;
    double t = exponential(1.0);
    while (t <= lambda) {
      ++k;
      t += exponential(1.0);
    }
    return k;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace nvstorm
