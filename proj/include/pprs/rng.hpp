#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

namespace pprs {

using Vec = Eigen::VectorXd;

/// splitmix64 finalizer: the standard 64-bit avalanche mix.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Combines counters into one stream seed; used to derive disjoint
/// per-(iteration, sample) streams from a master seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (0x9E3779B97F4A7C15ULL + b));
}
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

/// Deterministic, platform-independent generator: a splitmix64 counter
/// stream with explicit Box-Muller normals. Construction is two words, so
/// making one stream per (iteration, sample) is cheap.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_++); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]: keeps the log finite
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vec normal_vec(int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = normal();
    return v;
  }

  /// Uniform in the radius ball: normalized Gaussian direction scaled by
  /// radius·U^{1/dim}.
  Vec ball_vec(int dim, double radius) {
    Vec dir = normal_vec(dim);
    const double norm = dir.norm();
    if (norm == 0.0) {
      dir.setZero();
      dir(0) = 1.0;
    } else {
      dir /= norm;
    }
    const double u = uniform();
    return dir * (radius * std::pow(u, 1.0 / dim));
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pprs
