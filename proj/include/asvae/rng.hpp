// Counter-based random streams.
//
// Every draw is a pure function of (seed, counter): the counter is hashed with
// the seed through two rounds of the splitmix64 finalizer. Replaying a stream
// from the same (seed, counter) pair reproduces the same values on every
// platform with IEEE doubles.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "asvae/tensor.hpp"

namespace asvae {

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class RngStream {
 public:
  constexpr explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

  constexpr std::uint64_t next_u64() noexcept {
    const std::uint64_t key = detail::mix64(seed_ + 0x9E3779B97F4A7C15ULL);
    const std::uint64_t c = counter_++;
    return detail::mix64(detail::mix64(c * 0x9E3779B97F4A7C15ULL + key) ^ key);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Multiply-shift; the bias is below 2^-64 * n and irrelevant here.
    const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  /// Standard normal via Box-Muller (cosine branch); consumes two counters.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent child stream keyed by `tag`; does not advance this stream.
  constexpr RngStream fork(std::uint64_t tag) const noexcept {
    return RngStream(detail::mix64(seed_ ^ detail::mix64(tag + 0xD1B54A32D192ED03ULL)), 0);
  }

  friend constexpr bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// I.i.d. N(0, 1) draws. The result is a plain tensor: noise enters a tape as
/// a constant, so no gradient ever flows into it.
inline Tensor sample_standard_normal(RngStream& stream, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = stream.normal();
  return t;
}

inline Tensor sample_uniform(RngStream& stream, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = stream.uniform();
  return t;
}

/// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> permutation(RngStream& stream, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.below(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace asvae
