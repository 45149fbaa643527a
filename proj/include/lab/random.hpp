#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lab::rng {

/// splitmix64 finalizer, used as a stateless mixing function.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ (b + 0x632be59bd9b4e019ULL)); }

inline std::uint64_t hash(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return hash(hash(hash(a, b), c), d);
}

/// Seed of the i-th independent sample. Depends only on (master, i), so results
/// do not change with the number of workers or the order they run in.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) { return hash(master, index); }

/// Maps 53 random bits to the open interval (0, 1).
inline double to_unit(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

/// Standard normal determined entirely by its key (Box-Muller on two hashed words).
double keyed_normal(std::uint64_t key);

/// Sequential generator for one sample.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(mix64(seed)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return to_unit(engine_()); }
  double exponential(double rate) { return -std::log(uniform()) / rate; }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace lab::rng
