#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace autotool {

/// SplitMix64 finalizer. Bijective 64-bit mixing.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// FNV-1a over the bytes of `s`.
std::uint64_t fnv1a(std::string_view s) noexcept;

/// Named substream of a root seed ("tools", "tasks", "rollouts", "init", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Small portable generator (SplitMix64 stream). The standard distributions
/// are implementation-defined, so uniform/normal draws are done here to keep
/// every output byte identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n) noexcept;

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace autotool
