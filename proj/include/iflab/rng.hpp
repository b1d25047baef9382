#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace iflab {

// Seed mixing for derived streams (per-replication, per-fold). splitmix64 is
// the usual finalizer; good avalanche, cheap, and stable across platforms.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (0x9e3779b97f4a7c15ULL + b));
}

// Replication r of sample size n under a master seed. Keeping this in one
// place guarantees the CLI can re-derive the exact seed a study used.
inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t n,
                                      std::uint64_t r) {
  return mix_seed(mix_seed(master, n), r + 1);
}

// mt19937_64 output is fully pinned by the standard; the standard library
// *distributions* are not, so we roll our own on top of the raw engine to
// keep every sampled byte reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1]; safe to pass to log()
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, no cached spare: two raw draws per normal keeps the
  // draw count per call fixed, which makes call sites easy to reason about.
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  // unbiased integer in [0, n) by rejection
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t bound = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = eng_();
    } while (v >= bound);
    return v % n;
  }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace iflab
