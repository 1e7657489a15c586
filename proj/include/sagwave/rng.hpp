#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace sagwave {

// splitmix64 finalizer; used to turn (master_seed, index) pairs into
// independent stream seeds so adding replications never perturbs earlier ones.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64(master_seed ^ splitmix64(index + 1));
}

// Gaussian sampler over the standard-specified mt19937_64 engine. Box-Muller
// is hand-rolled because std::normal_distribution's algorithm is
// implementation-defined and outputs must be reproducible everywhere.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Standard normal truncated to [-3, 3] by rejection.
  double next_truncated3() {
    double z = next();
    while (z < -3.0 || z > 3.0) z = next();
    return z;
  }

 private:
  double uniform01() {
    return (engine_() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sagwave
