#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace docdef {

// Stateless splitmix64 finalizer. Used only to derive child seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent child seed from (seed, tag, index). Every random
// consumer in the toolkit owns a stream derived this way, so adding or
// removing one consumer never shifts the draws seen by another, and
// parallel and serial runs produce identical results.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t index = 0) {
  return mix64(mix64(seed ^ mix64(tag)) ^ mix64(index));
}

// Stream tags. Values are arbitrary but fixed; changing them changes
// every seeded fixture.
namespace stream_tag {
inline constexpr std::uint64_t kAttackInit = 0x01;
inline constexpr std::uint64_t kCounterattackInit = 0x02;
inline constexpr std::uint64_t kOrthogonalDraw = 0x03;
inline constexpr std::uint64_t kSensitivityProbe = 0x04;
inline constexpr std::uint64_t kExample = 0x05;
inline constexpr std::uint64_t kBlobTemplate = 0x06;
inline constexpr std::uint64_t kBlobAnchorSplit = 0x07;
inline constexpr std::uint64_t kBlobTestSplit = 0x08;
inline constexpr std::uint64_t kEncoderInit = 0x09;
inline constexpr std::uint64_t kAttackStage = 0x0a;
inline constexpr std::uint64_t kDefenseStage = 0x0b;
inline constexpr std::uint64_t kPcaStart = 0x0c;
inline constexpr std::uint64_t kCalibrationStage = 0x0d;
}  // namespace stream_tag

// mt19937_64 with explicit uniform/normal mappings. The engine is fully
// specified by the standard and the mappings below avoid the
// implementation-defined behavior of std:: distributions, so identical
// seeds give identical draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the spare is cached per object.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
    double u2 = uniform01();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * kPi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace docdef
