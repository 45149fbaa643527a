#include "lab/random.hpp"

#include <cmath>
#include <numbers>

namespace lab::rng {

double keyed_normal(std::uint64_t key) {
  const double u1 = to_unit(hash(key, 1));
  const double u2 = to_unit(hash(key, 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lab::rng
