// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "gpucc/common.hpp"

namespace gpucc {

// Deterministic, platform-independent RNG for the simulation loop.
// std::mt19937 distributions are implementation-defined, so the trace
// determinism guarantee is built on this instead.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint32_t next_u32() { return uint32_t(next_u64() >> 32); }

  // Uniform in [0, bound).
  uint64_t below(uint64_t bound) { return bound ? next_u64() % bound : 0; }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * (1.0 / 9007199254740992.0); }

  bool chance(double p) { return uniform() < p; }

  // Box-Muller; one value per call, the pair's second half is discarded to
  // keep draw counts predictable for scenario replay.
  double gaussian(double mean, double sigma) {
    if (sigma <= 0.0) return mean;
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double mag = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * mag * std::cos(2.0 * M_PI * u2);
  }

  Bytes bytes(size_t n) {
    Bytes out(n);
    for (size_t i = 0; i < n; ++i) {
      if (i % 8 == 0) cache_ = next_u64();
      out[i] = uint8_t(cache_ >> (8 * (i % 8)));
    }
    return out;
  }

 private:
  uint64_t state_;
  uint64_t cache_ = 0;
};

// Stateless hash of a 64-bit value; used for address-keyed deterministic data.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace gpucc
