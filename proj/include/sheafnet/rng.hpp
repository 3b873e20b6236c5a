#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sheafnet {

// mt19937_64 wrapped with hand-rolled distributions. The standard
// distribution classes are implementation-defined, so seeded runs would not
// reproduce across standard libraries; these do.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Uniform integer in [0, n).
  int randint(int n) { return static_cast<int>(gen_() % static_cast<uint64_t>(n)); }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = randint(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  // Independent deterministic substream, e.g. one per fold.
  Rng spawn(uint64_t key) const {
    uint64_t z = seed_ + (key + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace sheafnet
