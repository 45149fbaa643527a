#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lab/error.hpp"
#include "lab/mot.hpp"
#include "lab/random.hpp"
#include "lab/stats.hpp"

using namespace lab;

namespace {

const LqgParams k16 = LqgParams::from_kappa(16.0);

}  // namespace

TEST_CASE("inverse gamma law") {
  const mot::InverseGamma law(0.3);
  CHECK(law.cdf(0.3) == doctest::Approx(std::erfc(1.0)));
  CHECK(law.cdf(0.3) == doctest::Approx(0.15730).epsilon(1e-4));
  CHECK(law.density(0.0) == 0.0);
  CHECK(law.density(-1.0) == 0.0);
  CHECK(law.cdf(-1.0) == 0.0);
  // substitute a = b / x^2 to integrate the heavy tail on a finite interval
  const double mass = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double x) { return x <= 0 ? 0.0 : law.density(0.3 / (x * x)) * 0.6 / (x * x * x); }, 0.0, 12.0, 10,
      1e-12);
  CHECK(std::abs(mass - 1.0) < 1e-6);
  CHECK(law.cdf(law.quantile(0.4)) == doctest::Approx(0.4));

  rng::Stream s(1);
  std::vector<double> x(100000);
  for (double& v : x) v = law.sample(s);
  CHECK(stats::ks_one_sample(x, [&](double a) { return law.cdf(a); }).passed);
  CHECK_THROWS_AS(mot::InverseGamma(0.0), PreconditionError);
}

TEST_CASE("correlated Brownian motion") {
  const auto p0 = mot::sample_crt(k16, 1.0, 0.5, 3);
  CHECK(p0.X[0] == 0.0);
  CHECK(p0.Y[0] == 0.0);
  const int n = 100000;
  std::vector<double> dx, dy, dt(n, 1.0), dx1, dx2, one(n, 1.0);
  for (int i = 0; i < n; ++i) {
    const auto p = mot::sample_crt(k16, 1.0, 0.5, rng::derive_seed(4, i));
    dx.push_back(p.X[2]);
    dy.push_back(p.Y[2]);
    dx1.push_back(p.X[1]);
    dx2.push_back(p.X[2] - p.X[1]);
  }
  const auto c = stats::cov_estimate(dx, dy, dt);
  CHECK(c.xx / k16.a2 == doctest::Approx(1.0).epsilon(0.03));
  CHECK(c.yy / k16.a2 == doctest::Approx(1.0).epsilon(0.03));
  CHECK(std::abs(c.correlation() + std::numbers::sqrt2 / 2) < 3 * c.se_xy / std::sqrt(c.xx * c.yy) + 0.01);
  const auto halves = stats::cov_estimate(dx1, dx2, one);
  CHECK(std::abs(halves.xy) < 3 * halves.se_xy);
}

TEST_CASE("reversed windows have the same covariance") {
  std::vector<double> fx, fy, rx, ry, dt;
  for (int i = 0; i < 2000; ++i) {
    const auto p = mot::sample_crt(k16, 2.0, 0.1, rng::derive_seed(8, i));
    const std::size_t n = p.X.size() - 1;
    for (std::size_t k = 0; k < n; ++k) {
      fx.push_back(p.X[k + 1] - p.X[k]);
      fy.push_back(p.Y[k + 1] - p.Y[k]);
      rx.push_back(p.X[n - k - 1] - p.X[n - k]);
      ry.push_back(p.Y[n - k - 1] - p.Y[n - k]);
      dt.push_back(p.times[k + 1] - p.times[k]);
    }
  }
  const auto f = stats::cov_estimate(fx, fy, dt), r = stats::cov_estimate(rx, ry, dt);
  CHECK(std::abs(r.xx - k16.a2) < 3 * r.se_xx);
  CHECK(std::abs(r.xy - k16.a2 * k16.corr) < 3 * r.se_xy);
  CHECK(r.xx == doctest::Approx(f.xx));
}

TEST_CASE("stopped process") {
  const auto p = mot::stopped_crt_disk(k16, 1.0, 1e-2, 5, mot::default_guard(1.0));
  REQUIRE(p.stop_time.has_value());
  CHECK(std::abs(1.0 + p.X.back() + p.Y.back()) < 1e-12);
  CHECK(p.times.back() == *p.stop_time);
  CHECK_THROWS_AS(mot::stopped_crt_disk(k16, 0.0, 1e-2, 5, 10.0), PreconditionError);

  const int n = 5000;
  std::vector<double> tau;
  mot::StoppedCrtOptions o;
  o.record = false;
  const double guard = mot::default_guard(1.0);
  std::size_t censored = 0;
  for (int i = 0; i < n; ++i) {
    const auto q = mot::stopped_crt_disk(k16, 1.0, 0.02 / k16.sum_variance(), rng::derive_seed(6, i), guard, o);
    censored += q.censored;
    tau.push_back(q.censored ? std::numeric_limits<double>::infinity() : *q.stop_time);
  }
  CHECK(static_cast<double>(censored) / n < 0.015);
  const mot::InverseGamma law(k16.first_passage_scale());
  CHECK(stats::ks_one_sample(tau, [&](double a) { return law.cdf(a); }, 0.01, guard).passed);
}

TEST_CASE("conditioned durations") {
  rng::Stream s(2);
  for (int i = 0; i < 1000; ++i) CHECK(mot::conditioned_duration(k16, 1e-3, s) >= 1.0);
  // the ell = 0 limit has P[tau > s] = s^{-1/2}
  std::vector<double> t;
  for (int i = 0; i < 20000; ++i) t.push_back(mot::conditioned_duration(k16, 0.0, s));
  CHECK(stats::ks_one_sample(t, [](double x) { return x <= 1 ? 0.0 : 1.0 - 1.0 / std::sqrt(x); }).passed);
  CHECK_THROWS_AS(mot::conditioned_first_passage_marginal(k16, 0.1, 1.0, 1), PreconditionError);
}

TEST_CASE("sphere pair") {
  const auto p = LqgParams::from_gamma(1.0);
  for (int i = 0; i < 200; ++i) {
    const auto pair = mot::sample_sphere_pair(p, 1e-2, rng::derive_seed(9, i));
    CHECK(pair.tau >= 1.0);
    CHECK(pair.times.back() == pair.tau);
    CHECK(pair.L.back() == 0.0);
    CHECK(pair.L.front() == doctest::Approx(1e-3));
    for (double l : pair.L) CHECK(l >= 0.0);
    CHECK(pair.Z.front() == 0.0);
  }
}

TEST_CASE("boundary length extraction") {
  const auto p = LqgParams::from_kappa(16.0);
  const auto grid = std::make_shared<field::GridSpec>(field::disk_grid(16, 32, 2 * std::numbers::pi / 32));
  field::CovarianceFactorization cov(grid);
  const auto f = field::sample_lf_disk_fixed_length(p, p.Q - p.gamma / 4, 1.5 * p.gamma, 1.0, cov, 1);
  loewner::LoewnerChain chain;
  chain.driving = loewner::sample_radial_driving(p.kappa, 0.5, 5e-3, 2);
  chain.kappa = p.kappa;
  chain.options.record_stride = 0;
  const std::vector<double> schedule{0.1, 0.2, 0.3, 0.4, 0.5};
  mot::ExtractionOptions o;
  o.boundary_nodes = 128;
  const auto bp = mot::extract_boundary_process(f, p, chain, schedule, o);
  REQUIRE(bp.X.size() >= schedule.size() + 1);
  CHECK(bp.X[0] == 0.0);
  CHECK(bp.Y[0] == 0.0);
  CHECK(bp.ell0 == doctest::Approx(1.0).epsilon(0.1));
  for (std::size_t k = 0; k < bp.L.size(); ++k) {
    CHECK(std::abs(bp.L[k] - (bp.ell0 + bp.X[k] + bp.Y[k])) < 0.02 * bp.L[k]);
    if (k > 0) CHECK(bp.area_times[k] >= bp.area_times[k - 1]);
  }
  CHECK(bp.area_times.back() > bp.area_times.front());
  const std::vector<double> bad{0.1, 0.1};
  CHECK_THROWS_AS(mot::extract_boundary_process(f, p, chain, bad, o), PreconditionError);
}
