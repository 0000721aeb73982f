#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dgstmtl {

// splitmix64 step; used to derive independent stream seeds from one root seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stream ids for the fixed seed-mixing scheme (one root --seed drives all
// randomness; every consumer gets its own derived stream).
enum class SeedStream : std::uint64_t {
  synth = 1,
  param_init = 2,
  batch_order = 3,
  grad_check = 4,
};

inline std::uint64_t derive_seed(std::uint64_t root, SeedStream stream) {
  std::uint64_t s = root ^ (0xA076'1D64'78BD'642Full * static_cast<std::uint64_t>(stream));
  return splitmix64(s);
}

// mt19937_64 with portable uniform/gaussian transforms. The engine itself is
// fully specified by the standard; the transforms avoid the
// implementation-defined std::*_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; both values of each pair are consumed in order.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // [0, n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dgstmtl
