#pragma once

#include <cstdint>

namespace equipose {

/// Counter-based pseudo-random generator. Each draw mixes (key, counter) with
/// splitmix64 finalizers, so streams are reproducible across platforms and a
/// stream can be forked into independent child streams without sharing state.
/// A normal draw always consumes exactly two counter slots.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  /// Integer in [0, n), n > 0.
  std::uint64_t below(std::uint64_t n);

  /// Independent child stream; deterministic function of (parent key, id).
  CounterRng fork(std::uint64_t id) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace equipose
