#pragma once

#include <cstdint>
#include <initializer_list>
#include <iterator>
#include <random>
#include <string_view>
#include <utility>

namespace mrinet {

// Seeded random stream. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; the conversions below are written out by hand
// because the std distributions are implementation-defined.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Stream keyed by a tuple, e.g. (seed, epoch, sample_index). Streams with
  // different keys are independent of each other and of draw order.
  static Rng keyed(std::initializer_list<std::uint64_t> key);

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
// FNV-1a; used to key streams by parameter or layer name.
std::uint64_t hash_name(std::string_view name);

// Fisher-Yates shuffle driven by Rng::below.
template <typename It> void shuffle(It first, It last, Rng &rng) {
  auto n = static_cast<std::uint64_t>(std::distance(first, last));
  for (std::uint64_t i = n; i > 1; --i) {
    auto j = rng.below(i);
    using std::swap;
    swap(*(first + static_cast<std::ptrdiff_t>(i - 1)),
         *(first + static_cast<std::ptrdiff_t>(j)));
  }
}

} // namespace mrinet
