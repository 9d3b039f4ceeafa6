#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace bseg {

// Mixes a base seed with a stream tag so independent random streams
// (init, shuffling, per-sample generation) can be derived from one seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded generator with hand-rolled distributions. std::*_distribution is
// implementation-defined, which would break bit-exact determinism contracts;
// everything here is plain arithmetic on the mt19937_64 stream.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, one spare cached per pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
  int uniform_int(int lo, int hi) {
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return lo + static_cast<int>(x % range);
  }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = uniform_int(0, static_cast<int>(i));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bseg
