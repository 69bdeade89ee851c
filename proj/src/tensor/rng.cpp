#include "mrinet/rng.hpp"

namespace mrinet {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng Rng::keyed(std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto k : key)
    h = splitmix64(h ^ splitmix64(k));
  return Rng(h);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1)
    return 0;
  // Rejection sampling on the top of the range.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  for (;;) {
    auto x = next();
    if (x < limit)
      return x % n;
  }
}

} // namespace mrinet
