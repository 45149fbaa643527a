#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lab/error.hpp"
#include "lab/random.hpp"
#include "lab/stats.hpp"

using namespace lab;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  rng::Stream s(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = s.normal();
  return v;
}

}  // namespace

TEST_CASE("Kolmogorov constants") {
  CHECK(stats::kolmogorov_critical(0.01) == doctest::Approx(1.628).epsilon(1e-3));
  CHECK(stats::kolmogorov_critical(0.05) == doctest::Approx(1.358).epsilon(1e-3));
  CHECK(stats::kolmogorov_pvalue(1.628) == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("two-sample KS trivial cases") {
  const std::vector<double> a{1.0, 2.0, 3.0};
  CHECK(stats::ks_two_sample(a, a).statistic == 0.0);
  const std::vector<double> x{0.0}, y{1.0};
  CHECK(stats::ks_two_sample(x, y).statistic == 1.0);
  const std::vector<double> empty;
  CHECK_THROWS_AS(stats::ks_two_sample(empty, a), PreconditionError);
  const auto r = stats::ks_two_sample(a, a);
  CHECK(r.threshold == doctest::Approx(1.628 * std::sqrt(6.0 / 9.0)).epsilon(1e-3));
  CHECK(r.passed);
}

TEST_CASE("two-sample KS null calibration") {
  int rejections = 0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    const auto a = normals(500, rng::derive_seed(11, 2 * r));
    const auto b = normals(500, rng::derive_seed(11, 2 * r + 1));
    if (!stats::ks_two_sample(a, b, 0.05).passed) ++rejections;
  }
  const double size = static_cast<double>(rejections) / reps;
  CHECK(size >= 0.025);
  CHECK(size <= 0.1);
}

TEST_CASE("one-sample KS against the right and wrong law") {
  const auto v = normals(5000, 3);
  CHECK(stats::ks_one_sample(v, normal_cdf).passed);
  CHECK_FALSE(stats::ks_one_sample(v, [](double x) { return normal_cdf(x - 0.2); }).passed);
}

TEST_CASE("censored one-sample KS ignores the tail") {
  auto v = normals(5000, 4);
  for (auto& x : v)
    if (x > 1.0) x = std::numeric_limits<double>::infinity();
  const auto r = stats::ks_one_sample(v, normal_cdf, 0.01, 1.0);
  CHECK(r.passed);
}

TEST_CASE("weighted KS") {
  const auto v = normals(2000, 5);
  const std::vector<double> ones(v.size(), 1.0);
  const auto plain = stats::ks_one_sample(v, normal_cdf);
  const auto weighted = stats::weighted_ks(v, ones, normal_cdf);
  CHECK(weighted.statistic == doctest::Approx(plain.statistic));

  std::vector<double> doubled, halves;
  for (double x : v) {
    doubled.push_back(x);
    doubled.push_back(x);
    halves.push_back(0.5);
    halves.push_back(0.5);
  }
  CHECK(stats::weighted_ks(doubled, halves, normal_cdf).statistic == doctest::Approx(plain.statistic));

  const std::vector<double> zeros(v.size(), 0.0);
  CHECK_THROWS(stats::weighted_ks(v, zeros, normal_cdf));
}

TEST_CASE("weighted KS with exponential tilting") {
  // Exp(1) samples weighted by x are Gamma(2) distributed.
  rng::Stream s(6);
  std::vector<double> x(20000), w(20000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = s.exponential(1.0);
    w[i] = x[i];
  }
  auto gamma2 = [](double t) { return t <= 0 ? 0.0 : 1.0 - (1.0 + t) * std::exp(-t); };
  CHECK(stats::weighted_ks(x, w, gamma2).passed);
  CHECK(stats::effective_sample_size(w) < 20000.0);
}

TEST_CASE("covariance estimation") {
  const std::vector<double> dx{1.0, -2.0, 0.5, 3.0, -1.0};
  const std::vector<double> neg{-1.0, 2.0, -0.5, -3.0, 1.0};
  const std::vector<double> dt(5, 1.0);
  CHECK(stats::cov_estimate(dx, dx, dt).correlation() == doctest::Approx(1.0));
  CHECK(stats::cov_estimate(dx, neg, dt).correlation() == doctest::Approx(-1.0));
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(stats::cov_estimate(one, one, std::vector<double>{1.0}), PreconditionError);
}

TEST_CASE("two-proportion test") {
  CHECK(stats::two_proportion(300, 1000, 300, 1000).statistic == 0.0);
  const auto r = stats::two_proportion(500, 1000, 900, 1000);
  CHECK_FALSE(r.passed);
  CHECK(std::abs(r.statistic) == doctest::Approx(19.2).epsilon(0.02));

  int rejections = 0;
  const int reps = 1000;
  for (int k = 0; k < reps; ++k) {
    rng::Stream s(rng::derive_seed(9, k));
    std::size_t a = 0, b = 0;
    for (int i = 0; i < 1000; ++i) {
      a += s.uniform() < 0.4;
      b += s.uniform() < 0.4;
    }
    if (!stats::two_proportion(a, 1000, b, 1000, 0.05).passed) ++rejections;
  }
  const double size = static_cast<double>(rejections) / reps;
  CHECK(size >= 0.025);
  CHECK(size <= 0.1);
}

TEST_CASE("order fit") {
  const std::vector<double> h{1e-3, 5e-4, 2.5e-4};
  std::vector<double> e1, e2;
  for (double x : h) {
    e1.push_back(3.0 * x);
    e2.push_back(7.0 * x * x);
  }
  CHECK(stats::order_fit(h, e1) == doctest::Approx(1.0));
  CHECK(stats::order_fit(h, e2) == doctest::Approx(2.0));
  const std::vector<double> bad{1.0, 0.0, 1.0};
  CHECK_THROWS_AS(stats::order_fit(h, bad), PreconditionError);
}

TEST_CASE("report json round trip fields") {
  const auto r = stats::two_proportion(500, 1000, 900, 1000);
  const auto j = r.to_json();
  CHECK(j.at("name").is_string());
  CHECK(j.at("verdict") == "fail");
  CHECK(j.contains("critical_value"));
}
