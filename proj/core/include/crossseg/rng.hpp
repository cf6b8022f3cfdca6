#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crossseg/common.hpp"

namespace crossseg {

// splitmix64 step, used to derive independent stream seeds from one root seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named RNG streams. Keeping data shuffling, augmentation and model init on
// separate streams makes each one reproducible independently of the others.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream_id) {
  std::uint64_t s = root ^ (0x51c6a707ee7293d1ULL * (stream_id + 1));
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

namespace streams {
constexpr std::uint64_t kData = 1;
constexpr std::uint64_t kAugment = 2;
constexpr std::uint64_t kModel1 = 3;
constexpr std::uint64_t kModel2 = 4;
constexpr std::uint64_t kSynthetic = 5;
}  // namespace streams

// mt19937_64 with hand-rolled distributions. The standard distribution
// objects are implementation-defined, which would break byte-identical
// dataset generation across standard libraries; the raw generator is not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n) {
    CROSSSEG_CHECK(n > 0, "uniform_int: n must be positive");
    // Rejection sampling to avoid modulo bias.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; one value per call keeps the draw order trivially auditable.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    // u1 == 0 would take log(0); nudge into (0,1).
    u1 = std::max(u1, 0x1.0p-53);
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // mt19937_64 state round-trips exactly through its stream operators.
  std::string serialize() const {
    std::ostringstream oss;
    oss << gen_;
    return oss.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream iss(s);
    iss >> gen_;
    CROSSSEG_CHECK_RT(!iss.fail(), "Rng::deserialize: malformed state string");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace crossseg
