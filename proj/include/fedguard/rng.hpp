#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedguard {

std::uint64_t splitmix64(std::uint64_t x);

// 64-bit FNV-1a of a purpose tag.
std::uint64_t tag_hash(std::string_view tag);

// Child seed for one purpose, keyed by (client, round). Every random draw in a
// run starts from one of these, so the order in which clients are processed
// never changes any result.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t client, std::uint64_t round);

// Thin wrapper over mt19937_64. Distributions are implemented here instead of
// using <random>'s, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t below(std::size_t n);

  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace fedguard
