// Deterministic random number generation. We keep our own generator and
// sampling transforms (uniform / Box-Muller normal / categorical) so that
// sampled values are reproducible bit-for-bit across platforms and toolchains;
// std::* distributions make no such guarantee.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>

#include "aif/core/tensor.hpp"

namespace aif {

inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Mix extra words into a base seed to derive independent streams
// (per step, per candidate, per sample, ...).
inline uint64_t mix_seed(uint64_t base, std::initializer_list<uint64_t> words) {
  uint64_t s = base;
  (void)splitmix64(s);
  for (uint64_t w : words) {
    s ^= w + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    (void)splitmix64(s);
  }
  return s;
}

// FNV-1a 64-bit, used both for content hashes and for deriving seeds from tags.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// xoshiro256++ (Blackman & Vigna), seeded via splitmix64.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (fresh pair per call keeps streams simple).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Integer in [0, n).
  uint64_t below(uint64_t n) {
    AIF_CHECK(n > 0, "Rng::below(0)");
    // Rejection-free multiply-shift; bias is negligible for our n and keeps
    // the consumed-stream length fixed (one u64 per draw).
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Index sampled from unnormalized nonnegative weights.
  int categorical(const double* w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[i];
    AIF_CHECK(total > 0.0, "categorical: nonpositive weight total");
    double u = uniform() * total;
    for (int i = 0; i < n; ++i) {
      u -= w[i];
      if (u < 0.0) return i;
    }
    return n - 1;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Row-wise softmax into probabilities (numerically stable).
template <class T>
inline void softmax_row(const T* logits, double* probs, int n) {
  double mx = -1e300;
  for (int i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(static_cast<double>(logits[i]) - mx);
    z += probs[i];
  }
  for (int i = 0; i < n; ++i) probs[i] /= z;
}

}  // namespace aif
