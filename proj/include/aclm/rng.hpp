#pragma once
// Seeded RNG with explicit distributions. std::*_distribution output is
// implementation-defined, so everything that must reproduce bitwise across
// toolchains draws through this wrapper instead.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace aclm {

// splitmix64 finalizer; derives independent stream seeds from (seed, purpose)
// so resumed runs can reconstruct any phase's RNG without replaying history.
inline uint64_t mix_seed(uint64_t seed, uint64_t purpose) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (purpose + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    assert(n > 0);
    return static_cast<int>(gen_() % static_cast<uint64_t>(n));
  }

  // standard normal, Box-Muller with cached spare
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = 1.0 - uniform();  // (0, 1], keeps log finite
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 2.0 * 3.14159265358979323846 * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from {0, ..., n-1}, order randomized
  std::vector<int> sample_without_replacement(int n, int k) {
    assert(k >= 0 && k <= n);
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) ids[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + uniform_int(n - i);
      std::swap(ids[i], ids[j]);
    }
    ids.resize(k);
    return ids;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace aclm
