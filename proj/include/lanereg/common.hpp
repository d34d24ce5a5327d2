#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace lanereg {

/// Raised when a configuration file or struct violates its documented invariants.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a hard simulation invariant breaks (overlap, negative speed, ...).
/// The message carries enough state to reproduce the fault.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Independent, reproducible RNG stream derived from a run seed and a stream tag.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x9e3779b9u};
  return Rng(seq);
}

/// Uniform double in [0, 1) with a fixed bit recipe (portable across standard libraries).
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Lemire's rejection keeps the draw unbiased.
  const std::uint64_t limit = -n % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= limit) return r % n;
  }
}

}  // namespace lanereg
