#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lorafuse {

// splitmix64 step; used to derive independent per-stage seeds from one
// master seed so that pipeline stages stay reproducible when invoked
// separately.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed streams used by the simulator. Fixed constants, part of the
// reproducibility contract.
namespace seed_stream {
inline constexpr std::uint64_t kBackbone = 1;
inline constexpr std::uint64_t kTeachers = 2;
inline constexpr std::uint64_t kDomainData = 3;   // + domain id
inline constexpr std::uint64_t kCrossTasks = 100;
inline constexpr std::uint64_t kCalibration = 200;
inline constexpr std::uint64_t kAdapterInit = 300;  // shared across clients
}  // namespace seed_stream

// Deterministic random source. Gaussian samples use Box-Muller on raw
// 64-bit draws so the byte stream does not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in (0, 1].
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace lorafuse
