#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace pwseg {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a master seed plus integer tags.
// Every source of randomness in a run gets its own derived seed, so adding
// or removing one consumer never shifts the draws seen by another.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) {
  std::uint64_t s = seed;
  std::uint64_t h = splitmix64(s);
  for (std::uint64_t t : {static_cast<std::uint64_t>(tags)...}) {
    s ^= t + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h = splitmix64(s);
  }
  return h;
}

// Seed tags (namespaced per purpose; arbitrary distinct constants).
namespace seed_tag {
constexpr std::uint64_t image = 0x01;
constexpr std::uint64_t val_image = 0x02;
constexpr std::uint64_t partition = 0x03;
constexpr std::uint64_t model_init = 0x04;
constexpr std::uint64_t bank = 0x05;
constexpr std::uint64_t detector = 0x06;
constexpr std::uint64_t labeled_shuffle = 0x07;
constexpr std::uint64_t unlabeled_shuffle = 0x08;
constexpr std::uint64_t augment_labeled = 0x09;
constexpr std::uint64_t augment_unlabeled = 0x0a;
constexpr std::uint64_t negatives = 0x0b;
constexpr std::uint64_t strong_extra = 0x0c;
}  // namespace seed_tag

// Deterministic RNG with hand-rolled distributions; the draws depend only on
// the seed and call sequence, never on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // inclusive [lo, hi]
  int uniform_int(int lo, int hi) { return lo + uniform_int(hi - lo + 1); }

  double normal(double mean = 0.0, double sigma = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + sigma * spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + sigma * r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  // k distinct indices from [0, n), returned ascending so the caller keeps
  // the original element order.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (k >= n) return idx;
    for (int i = 0; i < k; ++i) {
      std::swap(idx[i], idx[i + uniform_int(n - i)]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pwseg
