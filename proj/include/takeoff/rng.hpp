#pragma once

// Counter-based random streams. Each simulation run owns an independent
// Philox4x32-10 stream addressed by (master seed, stream id), so batches can
// be split across any number of workers without changing a single draw.

#include <array>
#include <cstdint>
#include <limits>

namespace takeoff {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) noexcept;
};

/// UniformRandomBitGenerator producing 64-bit words from one Philox stream.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n) by rejection (unbiased); n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller.
  double normal() noexcept;

 private:
  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 4;
};

/// 64-bit mixing function (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace takeoff
