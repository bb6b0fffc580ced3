#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace roma {

// Deterministic 64-bit generator (splitmix64). Used instead of the <random>
// distributions so that streams are bit-identical across platforms and
// standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform01_open_low() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01_open_low();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double rademacher() { return (next_u64() & 1ull) ? 1.0 : -1.0; }

  bool bernoulli(double p) { return uniform01() < p; }

  // Unbiased integer in [0, n) via 128-bit multiply (Lemire).
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) *
                          static_cast<unsigned __int128>(n);
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t t = (0ull - n) % n;
      while (lo < t) {
        m = static_cast<unsigned __int128>(next_u64()) *
            static_cast<unsigned __int128>(n);
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace detail {
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
inline uint64_t hash_tag(std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}
}  // namespace detail

// Substream derivation: every random stream in the project is obtained from a
// root seed, a purpose tag and up to three indices. Streams with different
// (tag, a, b, c) are independent for practical purposes.
inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t a = 0,
                            uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = detail::mix64(root ^ 0x2545f4914f6cdd1dull);
  s = detail::mix64(s ^ detail::hash_tag(tag));
  s = detail::mix64(s ^ (a + 0x9e3779b97f4a7c15ull));
  s = detail::mix64(s ^ (b + 0xd1b54a32d192ed03ull));
  s = detail::mix64(s ^ (c + 0x8cb92ba72f3d8dd7ull));
  return s;
}

}  // namespace roma
