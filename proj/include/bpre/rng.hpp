#pragma once

// Counter-based random streams. Stream k of a given seed is statistically
// independent of stream j for j != k, and every draw is a pure function of
// (seed, stream, draw index). Monte Carlo code assigns one stream per
// replicate so that serial and multithreaded runs produce bit-identical
// replicate values.

#include <cstdint>

namespace bpre {

namespace detail {

inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer (Vigna / Stafford mix 13).
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(detail::mix64(seed + detail::golden_gamma) ^
               detail::mix64((stream + 1) * 0xDA942042E4DD58B5ull)) {}

  std::uint64_t next_u64() {
    state_ += detail::golden_gamma;
    return detail::mix64(state_);
  }

  // Uniform on [0, 1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe as a log() argument.
  double next_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    // 64-bit multiply-shift; modulo bias is < 2^-64 * n, irrelevant here.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

}  // namespace bpre
