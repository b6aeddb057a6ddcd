#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace dpboot {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Tags that separate the independent random-stream families derived from one
/// master seed. Streams for different purposes never collide even when their
/// task indices do.
namespace stream_tag {
constexpr std::uint64_t bootstrap_task = 0;
constexpr std::uint64_t resample = 1;
constexpr std::uint64_t base_draw = 2;
constexpr std::uint64_t sweep = 3;
constexpr std::uint64_t synthetic = 4;
}  // namespace stream_tag

/// Deterministic random stream addressed by (seed, tag, index).
///
/// All distribution transforms are implemented here on top of the fully
/// specified mt19937_64 engine, so a stream's output depends only on its
/// address and the call sequence -- not on the standard library's
/// unspecified distribution algorithms. This is what makes bootstrap draws
/// bit-reproducible across reruns and across serial/parallel schedules.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t tag = 0, std::uint64_t index = 0) {
    std::uint64_t s = seed;
    std::uint64_t mixed = splitmix64(s);
    s = mixed ^ (0x9E3779B97F4A7C15ULL * (tag + 1));
    mixed = splitmix64(s);
    s = mixed ^ (0xBF58476D1CE4E5B9ULL * (index + 1));
    engine_.seed(splitmix64(s));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); safe as a log() argument.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  /// Unbiased index in [0, n).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return static_cast<std::size_t>(r % n);
  }

  /// Standard normal via Box-Muller; the spare deviate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Exp(1) by inversion.
  double exponential() { return -std::log(uniform_pos()); }

  /// Gamma(shape, 1) via Marsaglia-Tsang. Shapes below one use the power
  /// boost Gamma(shape) = Gamma(shape+1) * U^{1/shape}, which stays valid for
  /// arbitrarily small shapes; tiny outcomes may underflow to zero, which is
  /// below double resolution of the true draw.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
    if (shape < 1.0) {
      const double g = gamma_at_least_one(shape + 1.0);
      const double u = uniform_pos();
      return g * std::exp(std::log(u) / shape);
    }
    return gamma_at_least_one(shape);
  }

 private:
  double gamma_at_least_one(double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dpboot
