#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gazekit/errors.hpp"

namespace gazekit {

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic random source. The raw mt19937_64 stream is pinned by the
// standard; all transforms (uniform, normal, shuffle) are done by hand because
// std::*_distribution output is implementation-defined and we promise
// bit-identical runs for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the sine branch is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Uniform integer on [0, n), rejection sampled to avoid modulo bias.
  std::int64_t uniform_int(std::int64_t n) {
    if (n <= 0) throw ValueError("Rng::uniform_int: n must be positive");
    const std::uint64_t un = std::uint64_t(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return std::int64_t(x % un);
  }

  // Derive an independent stream keyed by (seed, tag).
  Rng fork(const std::string& tag) const {
    std::uint64_t h = fnv1a64(&seed_, sizeof(seed_));
    h = fnv1a64(tag.data(), tag.size(), h);
    return Rng(h);
  }

  // Fisher-Yates with explicit draws (std::shuffle is not portable).
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = std::size_t(uniform_int(std::int64_t(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace gazekit
