#include "tahcd/rng.hpp"

#include <cmath>
#include <numbers>

#include "tahcd/errors.hpp"

namespace tahcd {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();  // log(0) guard
  double r = std::sqrt(-2.0 * std::log(u1));
  double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

int Rng::below(int n) {
  if (n <= 0) throw NumericError("Rng::below: n must be positive");
  // Rejection sampling to avoid modulo bias (negligible here, but free).
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % std::uint64_t(n);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return int(x % std::uint64_t(n));
}

std::vector<double> Rng::normal_vec(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = normal();
  return v;
}

std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
  // FNV-1a over the name, mixed with the master seed.
  std::uint64_t h = 14695981039346656037ull;
  for (char c : name) {
    h ^= std::uint64_t(static_cast<unsigned char>(c));
    h *= 1099511628211ull;
  }
  h ^= master * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull;
  // splitmix-style finalizer so adjacent masters land far apart
  h ^= h >> 30;
  h *= 0xBF58476D1CE4E5B9ull;
  h ^= h >> 27;
  h *= 0x94D049BB133111EBull;
  h ^= h >> 31;
  return h;
}

}  // namespace tahcd
