#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace mrm {

// All randomness flows through mt19937_64 (whose output sequence the
// standard pins down) plus the transforms below. <random> distributions are
// implementation-defined, so we roll our own: fixed seed means identical
// streams on every platform.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Stable seed for a named substream (for example one per user id), so
// adding or reordering users never shifts another user's stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  return splitmix64(master ^ fnv1a64(label));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) {
  return splitmix64(master ^ splitmix64(salt));
}

// [0,1) from the top 53 bits
inline double uniform01(Rng& g) { return (g() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Box-Muller, cosine branch only; one normal consumes two uniforms.
inline double normal(Rng& g) {
  double u1 = uniform01(g);
  while (u1 <= 0.0) u1 = uniform01(g);
  double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::vector<double> normal_vec(Rng& g, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = normal(g);
  return v;
}

// Modulo bias is negligible at the sizes used here.
inline std::uint64_t below(Rng& g, std::uint64_t n) { return g() % n; }

// Fisher-Yates; spelled out so the permutation is seed-stable.
template <class T>
void shuffle(std::vector<T>& v, Rng& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[below(g, i)]);
  }
}

}  // namespace mrm
