#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lab/error.hpp"
#include "lab/params.hpp"
#include "lab/random.hpp"

using namespace lab;

TEST_CASE("kappa 16 constants") {
  const auto p = LqgParams::from_kappa(16.0);
  CHECK(p.gamma == doctest::Approx(1.0));
  CHECK(p.Q == doctest::Approx(2.5));
  CHECK(p.a2 == doctest::Approx(2.0 * std::numbers::sqrt2));
  CHECK(p.corr == doctest::Approx(-std::numbers::sqrt2 / 2));
  const double t = std::tan(std::numbers::pi / 8);
  CHECK(p.sum_variance() == doctest::Approx(4 * t));
  CHECK(p.difference_variance() == doctest::Approx(4 / t));
  CHECK(p.first_passage_scale() == doctest::Approx(1 / (8 * t)));
  CHECK(p.tangent_scale() == doctest::Approx(t / 8));
}

TEST_CASE("gamma and kappa constructors agree") {
  const auto a = LqgParams::from_gamma(0.8);
  const auto b = LqgParams::from_kappa(16.0 / 0.64);
  CHECK(a.kappa == doctest::Approx(b.kappa));
  CHECK(a.a2 == doctest::Approx(b.a2));
  CHECK(a.corr == doctest::Approx(b.corr));
}

TEST_CASE("parameter range") {
  CHECK_THROWS_AS(LqgParams::from_kappa(8.0), PreconditionError);
  CHECK_THROWS_AS(LqgParams::from_kappa(4.0), PreconditionError);
  CHECK_THROWS_AS(LqgParams::from_gamma(1.5), PreconditionError);
  CHECK_THROWS_AS(LqgParams::from_gamma(0.0), PreconditionError);
}

TEST_CASE("seeds are stateless") {
  CHECK(rng::derive_seed(7, 3) == rng::derive_seed(7, 3));
  CHECK(rng::derive_seed(7, 3) != rng::derive_seed(7, 4));
  CHECK(rng::keyed_normal(42) == rng::keyed_normal(42));
  rng::Stream a(5), b(5);
  CHECK(a.normal() == b.normal());
  const double u = a.uniform();
  CHECK(u > 0.0);
  CHECK(u < 1.0);
}
