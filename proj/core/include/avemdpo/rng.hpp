#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

// Deterministic RNG used everywhere. std:: distributions are not pinned
// across standard libraries, so sampling is hand-rolled on top of
// splitmix64: identical seeds give identical byte streams on any build.

namespace avemdpo {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in {0, ..., n-1}, unbiased (rejection sampling).
  uint64_t below(uint64_t n);

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo) + 1));
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller. No cached spare: one draw consumes
  // two uniforms so the stream position is a pure function of call count.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Stable seed derivation: hash(pipeline_seed, key) for per-item streams.
uint64_t derive_seed(uint64_t seed, std::string_view key);

}  // namespace avemdpo
