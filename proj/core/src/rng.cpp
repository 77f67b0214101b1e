#include "equipose/rng.hpp"

#include <cmath>

namespace equipose {
namespace {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) {
  key_ = splitmix64(splitmix64(seed) ^ (0xa02bdbf7bb3c0a7ull * (stream + 1)));
}

std::uint64_t CounterRng::next_u64() {
  return splitmix64(key_ ^ splitmix64(counter_++));
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double CounterRng::normal() {
  // Consume two slots unconditionally so trajectories do not depend on call
  // interleaving.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  // Modulo bias is < 2^-53 for the n used here (schedule lengths, indices).
  return next_u64() % n;
}

CounterRng CounterRng::fork(std::uint64_t id) const {
  CounterRng child(0);
  child.key_ = splitmix64(key_ ^ splitmix64(0x517cc1b727220a95ull + id));
  child.counter_ = 0;
  return child;
}

}  // namespace equipose
