#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace poselift {

// Deterministic stream factory. Distribution draws below are hand-rolled on
// top of the raw engine output so generated values depend only on the seed,
// never on the standard library's distribution internals.

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ull;
  }
  return hash;
}
}  // namespace detail

// Independent stream for (seed, label, a, b), e.g. ("flip", epoch, sample).
inline std::mt19937_64 seeded_stream(std::uint64_t seed, std::string_view label,
                                     std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t state = seed;
  state ^= detail::splitmix64(state) ^ detail::fnv1a(label);
  state ^= detail::splitmix64(state) ^ (a * 0x9e3779b97f4a7c15ull);
  state ^= detail::splitmix64(state) ^ (b * 0xc2b2ae3d27d4eb4full);
  return std::mt19937_64(detail::splitmix64(state));
}

// Uniform on [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(gen);
}

// Box-Muller without a cached spare: two engine draws per value.
inline double normal_draw(std::mt19937_64& gen, double mean = 0.0, double stddev = 1.0) {
  double u1 = uniform_unit(gen);
  while (u1 <= 0.0) u1 = uniform_unit(gen);
  const double u2 = uniform_unit(gen);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * radius * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Bounded draw by rejection: uniform over [0, bound).
inline std::uint64_t bounded_draw(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = gen();
  while (draw >= limit) draw = gen();
  return draw % bound;
}

// Fisher-Yates with the bounded draw above; std::shuffle's draw pattern is
// implementation-defined, which would leak into checkpoint bytes.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(bounded_draw(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace poselift
