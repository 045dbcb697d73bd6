#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. 2011).
// A draw is a pure function of (seed, stream, step, slot), so realizations
// can be advanced in any order or in parallel without coupling.

#include <array>
#include <cmath>
#include <cstdint>

namespace dk {

namespace detail {

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// 53-bit uniform in (0, 1)
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// One independent random stream: a (seed, stream id) pair.
class RandomStream {
 public:
  RandomStream() = default;
  RandomStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    const std::uint64_t k = detail::splitmix64(seed ^ detail::splitmix64(stream + 0x632BE59BD9B4E019ull));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Two independent standard normals for (step, pair) via Box-Muller.
  std::array<double, 2> normal_pair(std::uint64_t step, std::uint64_t pair) const {
    const auto r = detail::philox4x32({static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pair >> 32),
                                       static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)},
                                      key_);
    const double u1 = detail::to_open_unit(r[0], r[1]);
    const double u2 = detail::to_open_unit(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * M_PI * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  double normal(std::uint64_t step, std::uint64_t slot) const {
    return normal_pair(step, slot / 2)[slot % 2];
  }

  /// Uniform in (0, 1) for (step, slot).
  double uniform(std::uint64_t step, std::uint64_t slot) const {
    const auto r = detail::philox4x32({static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(slot >> 32),
                                       static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32) ^ 0x80000000u},
                                      key_);
    return detail::to_open_unit(r[0], r[1]);
  }

 private:
  std::uint64_t seed_ = 0, stream_ = 0;
  std::array<std::uint32_t, 2> key_{};
};

}  // namespace dk
