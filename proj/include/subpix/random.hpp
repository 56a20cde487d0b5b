#ifndef SUBPIX_RANDOM_HPP
#define SUBPIX_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace subpix {

// splitmix64 finalizer; used to spread user seeds and derive per-trial
// streams that are decorrelated from each other.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(base + 0x9e3779b97f4a7c15ull * (stream + 1));
}

// Deterministic Gaussian stream: mt19937_64 + Box-Muller. The standard
// library's normal_distribution is implementation-defined, so results would
// not be reproducible across toolchains; this one is pinned.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : gen_(mix_seed(seed)) {}

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace subpix

#endif  // SUBPIX_RANDOM_HPP
