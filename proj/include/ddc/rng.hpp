#pragma once

#include <cstdint>

namespace ddc {

// splitmix64 finalizer; used both to derive child seeds and as the
// per-stream generator.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based child-seed derivation: independent streams per (seed, id).
inline uint64_t derive_seed(uint64_t seed, uint64_t stream_id) {
  return mix64(seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1));
}

// Small counter-based generator (splitmix64 sequence). One instance per
// market / replication keeps results independent of scheduling order.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), n >= 1.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t limit = n * ((~uint64_t{0}) / n);
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

 private:
  uint64_t state_;
};

}  // namespace ddc
