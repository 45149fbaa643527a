#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lab/error.hpp"
#include "lab/loewner.hpp"
#include "lab/random.hpp"
#include "lab/stats.hpp"

using namespace lab;
using namespace lab::loewner;

TEST_CASE("mobius vector field") {
  CHECK(std::abs(mobius_vector_field(1.0, 0.0)) == 0.0);
  CHECK(std::abs(mobius_vector_field(1.0, -1.0)) == 0.0);
  CHECK(std::abs(mobius_vector_field(cplx(0, 1), 1.0) - cplx(0, -1)) < 1e-15);
  CHECK_THROWS_AS(mobius_vector_field(1.0, 1.0), SingularityError);
  // derivative against a central difference
  const cplx u = std::polar(1.0, 0.3), z(0.2, -0.4);
  const double h = 1e-6;
  const cplx fd = (mobius_vector_field(u, z + h) - mobius_vector_field(u, z - h)) / (2 * h);
  CHECK(std::abs(mobius_vector_field_dz(u, z) - fd) < 1e-7);
}

TEST_CASE("radial driving") {
  const auto zero = sample_radial_driving(10.0, 0.0, 0.01, 1);
  CHECK(zero.steps() == 0);
  CHECK(std::abs(zero.unit(0) - cplx(1, 0)) == 0.0);
  const auto a = sample_radial_driving(10.0, 1.0, 0.01, 7);
  const auto b = sample_radial_driving(10.0, 1.0, 0.01, 7);
  CHECK(a.values() == b.values());
  for (std::size_t k = 0; k <= a.steps(); ++k) CHECK(std::abs(std::abs(a.unit(k)) - 1.0) < 1e-15);
  CHECK_THROWS_AS(sample_radial_driving(10.0, 1.0, 0.0, 1), PreconditionError);

  // refined values are reproducible and consistent at grid ends
  CHECK(a.refined(3, 4, 0) == a.value(3));
  CHECK(a.refined(3, 4, 16) == a.value(4));
  CHECK(a.refined(3, 4, 5) == b.refined(3, 4, 5));
}

TEST_CASE("driving variance matches Brownian scaling") {
  const double kappa = 10.0, T = 1.0;
  const int n = 10000;
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_radial_driving(kappa, T, 0.05, rng::derive_seed(3, i)).values().back();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  const double var = s2 / n - (s / n) * (s / n);
  const double se = std::sqrt((s4 / n - (s2 / n) * (s2 / n)) / n);
  CHECK(std::abs(var - kappa * T) < 3 * se);
}

TEST_CASE("forward radial basics") {
  const auto d = constant_radial_driving(0.0, 1.0, 1e-3);
  const std::vector<cplx> pts{0.0, 1.0};
  ChainOptions o;
  o.track_derivative = true;
  const auto chain = evolve_forward_radial(d, 10.0, pts, o);
  for (const cplx g : chain.tracked[0].trajectory) CHECK(std::abs(g) == 0.0);
  CHECK_FALSE(chain.tracked[0].swallow_time.has_value());
  REQUIRE(chain.tracked[1].swallow_time.has_value());
  CHECK(*chain.tracked[1].swallow_time <= d.step());
  CHECK(capacity_error(chain) < 2e-3);
  const std::vector<cplx> outside{cplx(1.5, 0)};
  CHECK_THROWS_AS(evolve_forward_radial(d, 10.0, outside), PreconditionError);
}

TEST_CASE("capacity error is first order") {
  const std::vector<double> steps{1e-3, 5e-4, 2.5e-4};
  std::vector<double> errors;
  const std::vector<cplx> pts{0.0};
  ChainOptions o;
  o.track_derivative = true;
  for (double h : steps) errors.push_back(capacity_error(evolve_forward_radial(10.0, 1.0, h, 5, pts, o)));
  CHECK(errors[1] < errors[0]);
  CHECK(errors[2] < errors[1]);
  CHECK(stats::order_fit(steps, errors) >= 0.9);
}

TEST_CASE("inverse of the forward chain") {
  const std::vector<cplx> pts{cplx(0.3, 0.2), cplx(-0.5, 0.1), cplx(0.1, -0.6), 0.0};
  ChainOptions o;
  o.record_stride = 0;
  const auto chain = evolve_forward_radial(10.0, 0.3, 1e-3, 21, pts, o);
  CHECK(std::abs(invert_chain_at(chain, 0.0, cplx(0.2, 0.3)) - cplx(0.2, 0.3)) < 1e-12);
  CHECK(std::abs(invert_chain_at(chain, 0.3, 0.0)) < 1e-12);
  for (const auto& tp : chain.tracked) {
    if (tp.swallow_time) continue;
    CHECK(std::abs(invert_chain_at(chain, 0.3, tp.final_value) - tp.initial) < 1e-8);
  }
}

TEST_CASE("reverse radial") {
  const std::vector<cplx> pts{0.0, cplx(0.4, 0)};
  ChainOptions o;
  o.track_derivative = true;
  const auto zero = evolve_reverse_radial(10.0, 0.0, 1e-3, 2, pts, o);
  CHECK(std::abs(zero.tracked[1].final_value - cplx(0.4, 0)) < 1e-15);
  const auto chain = evolve_reverse_radial(10.0, 0.5, 1e-3, 2, pts, o);
  CHECK(std::abs(chain.tracked[0].final_value) == 0.0);
  CHECK(capacity_error(chain) < 1e-9);
  CHECK(std::abs(chain.tracked[1].final_value) < 0.4);
}

TEST_CASE("reverse chordal with force point") {
  const cplx z0(0.3, 1.0);
  const auto zero = evolve_reverse_chordal_rho(10.0, 16.0, z0, 0.0, 1e-3, 4);
  CHECK(zero.force_trajectory.size() == 1);
  CHECK(std::abs(zero.force_trajectory[0] - z0) == 0.0);

  const double T = 0.5, y1 = 1e3, y2 = 2e3;
  const std::vector<cplx> pts{cplx(0, y1), cplx(0, y2)};
  const auto r = evolve_reverse_chordal_rho(10.0, 16.0, z0, T, 1e-3, 4, pts);
  double prev = 0.0;
  for (const cplx f : r.force_trajectory) {
    CHECK(f.imag() >= prev - 1e-12);
    prev = f.imag();
  }
  // f(iy) - iy = -W + c / (iy) + O(y^-2): solve for c from two radii
  const cplx e1 = r.chain.tracked[0].final_value - cplx(0, y1);
  const cplx e2 = r.chain.tracked[1].final_value - cplx(0, y2);
  const cplx c = (e1 - e2) / (1.0 / cplx(0, y1) - 1.0 / cplx(0, y2));
  CHECK(std::abs(c.real() + 2 * T) < 1e-2 * 2 * T);
}

TEST_CASE("whole-plane chain") {
  const std::vector<cplx> pts{cplx(1, 0), cplx(0, 2)};
  ChainOptions o;
  o.record_stride = 0;
  const auto a = simulate_whole_plane(10.0, 6.0, 4.0, 1e-3, 8, pts, o);
  const auto b = simulate_whole_plane(10.0, 6.0, 4.0, 1e-3, 8, pts, o);
  CHECK(a.tracked[0].swallow_time == b.tracked[0].swallow_time);
  CHECK(a.driving.t0() == doctest::Approx(-6.0));
  for (const auto& tp : a.tracked) {
    if (tp.swallow_time) CHECK(*tp.swallow_time >= -6.0);
  }
  const std::vector<cplx> inside{cplx(1e-4, 0)};
  CHECK_THROWS_AS(simulate_whole_plane(10.0, 6.0, 1.0, 1e-3, 8, inside, o), PreconditionError);
}

TEST_CASE("whole-plane conjugation symmetry") {
  const cplx z(0.5, 1.0);
  const std::vector<cplx> pts{z, std::conj(z)};
  ChainOptions o;
  o.record_stride = 0;
  std::size_t first = 0, decided = 0;
  for (int i = 0; i < 400; ++i) {
    const auto c = simulate_whole_plane(10.0, 4.0, 6.0, 2e-3, rng::derive_seed(13, i), pts, o);
    const auto& t1 = c.tracked[0].swallow_time;
    const auto& t2 = c.tracked[1].swallow_time;
    if (!t1 || !t2) continue;
    ++decided;
    first += *t1 < *t2;
  }
  REQUIRE(decided > 300);
  const auto [lo, hi] = stats::proportion_interval(first, decided, 0.01);
  CHECK(lo <= 0.5);
  CHECK(hi >= 0.5);
}
