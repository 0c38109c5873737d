#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace stagerec {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent sub-stream seed from a root seed and a label, so
/// every stochastic component (init, sampling, dropout, ...) gets its own
/// stream and stays reproducible regardless of call order elsewhere.
inline std::uint64_t deriveSeed(std::uint64_t root, std::string_view label, std::uint64_t index = 0) {
  std::uint64_t s = root ^ fnv1a(label);
  s ^= 0x9e3779b97f4a7c15ULL * (index + 1);
  splitmix64(s);
  return s;
}

/// Deterministic generator with hand-rolled distributions. Standard library
/// distributions are implementation-defined, which would break byte-identical
/// reproducibility across toolchains, so the few draws we need live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so nearby seeds decorrelate.
    splitmix64(state_);
    splitmix64(state_);
  }

  std::uint64_t nextU64() { return splitmix64(state_); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(nextU64() >> 11) * 0x1.0p-53; }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("rng: below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = nextU64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (no cached spare, to keep state minimal).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Poisson draw via Knuth's product method; fine for the small means used
  /// by the synthetic generator.
  int poisson(double mean) {
    if (mean < 0.0) throw std::invalid_argument("rng: poisson mean must be >= 0");
    if (mean == 0.0) return 0;
    const double l = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > l);
    return k - 1;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace stagerec
