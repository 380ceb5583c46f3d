#ifndef MIXREG_RNG_HPP
#define MIXREG_RNG_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

namespace mixreg {

/// splitmix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic seed for sub-stream `a` of `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
  return mix64(mix64(seed) ^ mix64(a + 1));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
  return derive_seed(derive_seed(seed, a, b), c);
}

/// mt19937_64 with explicit, distribution-free draw code so that streams are
/// reproducible bit-for-bit for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; one draw consumes two uniforms, no cache.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// Index draw from a probability vector by CDF inversion.
  int categorical(const Eigen::VectorXd& p) {
    double u = uniform();
    double acc = 0.0;
    for (Eigen::Index k = 0; k + 1 < p.size(); ++k) {
      acc += p[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(p.size() - 1);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mixreg

#endif  // MIXREG_RNG_HPP
