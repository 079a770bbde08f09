#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fairfeeder {

constexpr double kStepHours = 0.5;  // half-hour metering resolution
constexpr std::size_t kSlotsPerDay = 48;

constexpr double kVoltageLowPu = 0.95;
constexpr double kVoltageHighPu = 1.05;

constexpr double kTwoPi = 6.28318530717958647692;

// Deterministic random stream. Wraps mt19937_64 but produces doubles and
// indices through fixed arithmetic, so sequences do not depend on the
// standard library's distribution implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // in [0, 1)
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // index in [0, n); multiply-shift keeps bias below n / 2^64
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  // standard normal via Box-Muller; caches the spare draw
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return radius * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // derive an independent child seed
  std::uint64_t fork() { return splitmix64(engine_()); }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// exp via range reduction and an order-11 Taylor core; relative error stays
// below ~1e-14 on the |x| <= 40 range the networks use. Pure arithmetic, so
// results are identical across libm versions and the loops vectorize.
inline double fast_exp(double x) {
  x = x < -40.0 ? -40.0 : (x > 40.0 ? 40.0 : x);
  const double n = std::nearbyint(x * 1.4426950408889634);
  double r = x - n * 0.693147180559945286;   // ln2 high
  r -= n * 2.3190468138462995584e-17;        // ln2 low
  double p = 1.0 / 39916800.0;               // 1/11!
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  // scale by 2^n through the exponent bits; |n| <= 58 here
  const auto bits =
      static_cast<std::uint64_t>(static_cast<std::int64_t>(n) + 1023) << 52;
  double scale;
  __builtin_memcpy(&scale, &bits, sizeof scale);
  return p * scale;
}

inline double fast_tanh(double x) {
  const double a = x < 0.0 ? -x : x;
  const double e = fast_exp(2.0 * a);  // clamped inside fast_exp
  const double t = 1.0 - 2.0 / (e + 1.0);
  return x < 0.0 ? -t : t;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace fairfeeder
