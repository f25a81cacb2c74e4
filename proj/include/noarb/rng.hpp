#pragma once

// Counter-based random streams (Philox4x32-10) keyed by (seed, path, stream).
// A path's draws depend only on those three values, so results do not change
// with the number of worker threads or the order paths are processed in.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace noarb {

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  Philox4x32(std::uint64_t key, Block counter) : key_{lo(key), hi(key)}, ctr_(counter) {}

  Block next() {
    Block out = round10(ctr_, key_);
    if (++ctr_[3] == 0 && ++ctr_[2] == 0) ++ctr_[1];
    return out;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  std::array<std::uint32_t, 2> key_;
  Block ctr_;

  static std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
  static std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

  static Block round10(Block c, std::array<std::uint32_t, 2> k) {
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
      c = {hi(p1) ^ c[1] ^ k[0], lo(p1), hi(p0) ^ c[3] ^ k[1], lo(p0)};
      k[0] += kW0;
      k[1] += kW1;
    }
    return c;
  }
};

/// Independent random stream for one (seed, path, stream) triple.
class PathRng {
 public:
  enum Stream : std::uint32_t { Diffusion = 0, Chain = 1, Aux = 2 };

  PathRng(std::uint64_t seed, std::uint64_t path, std::uint32_t stream)
      : gen_(seed, {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                    stream, 0u}) {}

  /// Uniform on (0, 1), 53-bit resolution, never exactly 0 or 1.
  double uniform() {
    const std::uint64_t a = take() >> 5;
    const std::uint64_t b = take() >> 6;
    const double u = (static_cast<double>(a) * 67108864.0 + static_cast<double>(b) + 0.5) *
                     (1.0 / 9007199254740992.0);
    return u;
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

  /// Exponential with the given rate (> 0).
  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  Philox4x32 gen_;
  Philox4x32::Block buf_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;

  std::uint64_t take() {
    if (used_ == 4) {
      buf_ = gen_.next();
      used_ = 0;
    }
    return buf_[used_++];
  }
};

}  // namespace noarb
