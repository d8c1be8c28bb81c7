#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tahcd {

// Deterministic random stream. We draw raw 64-bit words from mt19937_64 and
// map them to doubles ourselves so results are bit-identical across standard
// libraries (std::uniform_real_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the spare deviate.
  double normal();

  // Uniform integer in [0, n). n must be positive.
  int below(int n);

  std::vector<double> normal_vec(int n);

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = int(v.size()) - 1; i > 0; --i) std::swap(v[i], v[std::size_t(below(i + 1))]);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Derives an independent seed for a named sub-stream so that, e.g., noise
// draws do not shift when an unrelated consumer draws more numbers.
std::uint64_t substream_seed(std::uint64_t master, std::string_view name);

inline Rng substream(std::uint64_t master, std::string_view name) {
  return Rng(substream_seed(master, name));
}

}  // namespace tahcd
