#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, stream id, path index, draw counter), so paths can be generated in any
// order or thread without changing a single bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace hk {

/// Philox4x32-10 block function.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

enum class StreamId : std::uint32_t { brownian = 1, jumps = 2, bridge = 3, tau = 4, tau_bridge = 5 };

class CounterStream {
 public:
  CounterStream(std::uint64_t seed, StreamId id, std::uint64_t path_index)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32) ^ (static_cast<std::uint32_t>(id) * 0x85EBCA6Bu)},
        path_lo_(static_cast<std::uint32_t>(path_index)),
        path_hi_(static_cast<std::uint32_t>(path_index >> 32) ^ (static_cast<std::uint32_t>(id) << 24)) {}

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() {
    if (pos_ == 2) refill();
    return values_[pos_++];
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = rad * std::sin(ang);
    has_spare_ = true;
    return rad * std::cos(ang);
  }

  double exponential() { return -std::log(uniform()); }

 private:
  void refill() {
    const auto out = philox4x32({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32), path_lo_, path_hi_}, key_);
    ++block_;
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    for (int i = 0; i < 2; ++i) {
      const std::uint64_t bits = (std::uint64_t{out[2 * i]} << 32) | out[2 * i + 1];
      values_[i] = (static_cast<double>(bits >> 11) + 0.5) * kScale;
    }
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t path_lo_, path_hi_;
  std::uint64_t block_ = 0;
  std::array<double, 2> values_{};
  int pos_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hk
