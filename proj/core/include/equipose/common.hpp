#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace equipose {

/// Raised on any contract violation (bad arguments, malformed files,
/// inconsistent shapes). CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] void fail(const std::string& msg);

#define EQP_REQUIRE(cond, msg)         \
  do {                                 \
    if (!(cond)) ::equipose::fail(msg); \
  } while (0)

/// Thread cap for embarrassingly parallel loops. Reads EQUIPOSE_THREADS once;
/// values < 1 or unset mean single-threaded.
int max_threads();

/// Runs fn(i) for i in [0, n). Results must be written to disjoint slots so
/// the outcome is independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// FNV-1a over a byte string; used for config hashes in checkpoint manifests.
std::uint64_t fnv1a(const std::string& bytes);

std::string hex64(std::uint64_t v);

}  // namespace equipose
