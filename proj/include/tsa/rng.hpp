#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tsa {

// Deterministic random stream. The raw engine is std::mt19937_64 (fully
// specified by the standard); the uniform/normal transforms are written out
// here instead of using std::*_distribution, whose sequences are
// implementation-defined. Identical seed + call sequence gives an identical
// stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tsa
