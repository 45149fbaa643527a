#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "lab/error.hpp"
#include "lab/field.hpp"
#include "lab/gmc.hpp"
#include "lab/random.hpp"

using namespace lab;
using namespace lab::field;

namespace {

constexpr double kPi = std::numbers::pi;

FieldSample zero_field(std::shared_ptr<const GridSpec> g) {
  FieldSample f;
  f.grid = g;
  f.gaussian.assign(g->size(), 0.0);
  return f;
}

// Expected area mass sum eps^{g^2/2} e^{g^2 Var / 2} |cell| from the grid covariance.
double expected_area(const CovarianceFactorization& cov, double gamma) {
  const auto& g = cov.grid();
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.is_boundary(i)) continue;
    s += std::pow(g.node_eps[i], gamma * gamma / 2) * std::exp(gamma * gamma / 2 * cov.covariance(i, i)) * g.cell[i];
  }
  return s;
}

}  // namespace

TEST_CASE("zero field masses") {
  const auto g = std::make_shared<GridSpec>(disk_grid(8, 16, 0.05));
  const auto f = zero_field(g);
  const auto area = gmc::area_measure(f, 1.0);
  const auto bdy = gmc::boundary_measure(f, 1.0);
  CHECK(area.nodes.size() == 8 * 16);
  CHECK(bdy.nodes.size() == 16);
  for (std::size_t k = 0; k < area.nodes.size(); ++k) {
    const std::size_t i = area.nodes[k];
    CHECK(area.mass[k] == doctest::Approx(std::pow(g->node_eps[i], 0.5) * g->cell[i]));
  }
  for (std::size_t k = 0; k < bdy.nodes.size(); ++k) {
    const std::size_t i = bdy.nodes[k];
    CHECK(bdy.mass[k] == doctest::Approx(std::pow(g->node_eps[i], 0.25) * g->cell[i]));
  }
}

TEST_CASE("constant shifts scale exactly") {
  const auto g = std::make_shared<GridSpec>(disk_grid(16, 32, 0.05));
  CovarianceFactorization cov(g);
  auto f = sample_gff(cov, 1);
  const double gamma = 0.9, c = 0.7;
  const double a0 = gmc::area_measure(f, gamma).total, b0 = gmc::boundary_measure(f, gamma).total;
  f.constant += c;
  CHECK(gmc::area_measure(f, gamma).total == doctest::Approx(a0 * std::exp(gamma * c)).epsilon(1e-13));
  CHECK(gmc::boundary_measure(f, gamma).total == doctest::Approx(b0 * std::exp(gamma * c / 2)).epsilon(1e-13));
}

TEST_CASE("first moment oracle") {
  const auto g = std::make_shared<GridSpec>(disk_grid(16, 32, 2 * kPi / 64));
  CovarianceFactorization cov(g);
  const double gamma = 1.0;
  double eb = 0.0;
  for (std::size_t i : g->boundary) {
    eb += std::pow(g->node_eps[i], gamma * gamma / 4) * std::exp(gamma * gamma / 8 * cov.covariance(i, i)) * g->cell[i];
  }
  const int n = 4000;
  double sa = 0, sa2 = 0, sb = 0, sb2 = 0;
  for (int k = 0; k < n; ++k) {
    const auto f = sample_gff(cov, rng::derive_seed(31, k));
    const double a = gmc::area_measure(f, gamma).total, b = gmc::boundary_measure(f, gamma).total;
    sa += a;
    sa2 += a * a;
    sb += b;
    sb2 += b * b;
  }
  const double ma = sa / n, mb = sb / n;
  CHECK(std::abs(ma - expected_area(cov, gamma)) < 3 * std::sqrt((sa2 / n - ma * ma) / n));
  CHECK(std::abs(mb - eb) < 3 * std::sqrt((sb2 / n - mb * mb) / n));
}

TEST_CASE("two-eps consistency of the expected area") {
  const auto g1 = std::make_shared<GridSpec>(disk_grid(32, 64, 2 * kPi / 64));
  const auto g2 = std::make_shared<GridSpec>(disk_grid(32, 64, 2 * kPi / 128));
  CovarianceFactorization c1(g1), c2(g2);
  const double e1 = expected_area(c1, 1.0), e2 = expected_area(c2, 1.0);
  CHECK(std::abs(e1 / e2 - 1.0) < 0.1);
}

TEST_CASE("arc split") {
  const auto g = std::make_shared<GridSpec>(disk_grid(4, 64, 0.05));
  const auto bdy = gmc::boundary_measure(zero_field(g), 1.0);
  const auto [a, b] = gmc::arc_split(bdy, 0.1, 0.1 + kPi);
  CHECK(a == doctest::Approx(b));
  CHECK(a + b == doctest::Approx(bdy.total).epsilon(1e-15));

  CovarianceFactorization cov(g);
  const auto rough = gmc::boundary_measure(sample_gff(cov, 3), 1.0);
  double prev = rough.total;
  for (double gap : {2.0, 1.0, 0.5, 0.1, 0.01, 1e-4}) {
    const auto [first, second] = gmc::arc_split(rough, 0.3, 0.3 + gap);
    CHECK(first + second == doctest::Approx(rough.total).epsilon(1e-14));
    CHECK(first <= prev);
    prev = first;
  }
  CHECK(prev < 1e-3 * rough.total);
  CHECK_THROWS_AS(gmc::arc_split(gmc::area_measure(zero_field(g), 1.0), 0.0, 1.0), PreconditionError);
}

TEST_CASE("Seiberg bound") {
  const auto g = std::make_shared<GridSpec>(disk_grid(8, 16, 0.05));
  auto f = zero_field(g);
  f.insertions.push_back(Insertion{2.5, 0.0, false});
  CHECK_THROWS_AS(gmc::area_measure(f, 1.0), PreconditionError);
  f.insertions[0].strength = 2.25;
  CHECK(gmc::area_measure(f, 1.0).total > 0.0);
}

TEST_CASE("log-polar disk covariance matches the disk Green function") {
  const auto P = LqgParams::from_gamma(1.0);
  gmc::LogPolarOptions o;
  o.angles = 64;
  o.depth = 6.0;
  const gmc::LogPolarDisk d(P, P.Q - 0.25, 1.5, o);
  // node pairs well separated compared with the mode cutoff
  const std::size_t pairs[3][4] = {{10, 3, 10, 20}, {40, 7, 60, 7}, {2, 10, 2, 40}};
  const int n = 6000;
  double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0}, boundary_mean = 0.0;
  std::vector<double> in, bd;
  for (int r = 0; r < n; ++r) {
    d.sample_gaussian(rng::derive_seed(4, r), in, bd);
    for (int q = 0; q < 3; ++q) {
      const double v = in[pairs[q][0] * 64 + pairs[q][1]] * in[pairs[q][2] * 64 + pairs[q][3]];
      sum[q] += v;
      sq[q] += v * v;
    }
    double m = 0.0;
    for (double x : bd) m += x / 64.0;
    boundary_mean = std::max(boundary_mean, std::abs(m));
  }
  CHECK(boundary_mean < 1e-10);
  for (int q = 0; q < 3; ++q) {
    const double mean = sum[q] / n, se = std::sqrt((sq[q] / n - mean * mean) / n);
    const double g = green_disk(d.node(pairs[q][0], pairs[q][1]), d.node(pairs[q][2], pairs[q][3]));
    CHECK(std::abs(mean - g) < 4 * se + 0.03);
  }
}

TEST_CASE("log-polar disk masses") {
  const auto P = LqgParams::from_gamma(1.0);
  gmc::LogPolarOptions o;
  o.angles = 32;
  o.depth = 3.0;
  const gmc::LogPolarDisk d(P, 1.0, 1.0, o);
  std::vector<double> in, bd;
  d.sample_gaussian(11, in, bd);
  const auto stored = d.masses(in, bd);
  const auto streamed = d.sample_masses(11);
  CHECK(stored.area == doctest::Approx(streamed.area).epsilon(1e-12));
  CHECK(stored.length == doctest::Approx(streamed.length).epsilon(1e-12));
  // Wick normalization: the mean boundary length is the integral of |1 - e^{i theta}|^{-gamma beta / 2}
  double mean = 0.0;
  const int n = 4000;
  for (int r = 0; r < n; ++r) mean += d.sample_masses(rng::derive_seed(12, r)).length / n;
  double exact = 0.0;
  const int m = 200000;
  for (int k = 0; k < m; ++k) {
    const double th = 2 * kPi * (k + 0.5) / m;
    exact += std::pow(2.0 * std::sin(th / 2.0), -0.5) * 2 * kPi / m;
  }
  CHECK(mean == doctest::Approx(exact).epsilon(0.03));
  // fixed length: the shifted field has length ell and weight (2/gamma) ell^{p-1} / L^p
  const auto f = d.sample_fixed_length(2.0, 11);
  const double p = (2.0 * 1.0 + 1.0 - 2.0 * P.Q) / P.gamma;
  CHECK(f.raw_length == doctest::Approx(stored.length));
  CHECK(f.area == doctest::Approx(stored.area * 4.0 / (stored.length * stored.length)));
  CHECK(f.weight == doctest::Approx(2.0 * std::pow(2.0, p - 1.0) / std::pow(stored.length, p)));
  CHECK_THROWS_AS(gmc::LogPolarDisk(P, P.Q, 1.0, o), PreconditionError);
  CHECK_THROWS_AS(gmc::LogPolarDisk(P, 1.0, 2.0, o), PreconditionError);
}
