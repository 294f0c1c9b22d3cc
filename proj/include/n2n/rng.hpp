/* Copyright 2026 The n2n Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef N2N_RNG_HPP_
#define N2N_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace n2n {

// Deterministic random source. std::mt19937_64 output is pinned by the
// standard, and the derived draws below avoid std::*_distribution, whose
// sequences differ between standard library implementations. Identical
// seeds therefore give identical streams on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Independent substream: mixes (seed, stream) through splitmix64 so that
  // e.g. per-step dropout masks and the epoch shuffle never share state.
  static Rng stream(uint64_t seed, uint64_t stream_id) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, bound). bound must be > 0.
  uint32_t uniform_u32(uint32_t bound) {
    const uint64_t span = uint64_t(bound);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return uint32_t(r % span);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return double(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller. Caches the second deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace n2n

#endif  // N2N_RNG_HPP_
