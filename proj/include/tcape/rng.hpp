#pragma once

#include <cstdint>

namespace tcape {

/// Counter-based generator: output n is a pure function of (seed, n), so the
/// full state is two integers and any stream can be resumed or forked exactly.
class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Independent stream keyed by `stream`; does not advance this generator.
  CounterRng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace tcape
