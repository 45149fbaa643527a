#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <vector>

#include "lab/error.hpp"
#include "lab/field.hpp"
#include "lab/gmc.hpp"
#include "lab/random.hpp"
#include "lab/stats.hpp"

using namespace lab;
using namespace lab::field;

namespace {

constexpr double kPi = std::numbers::pi;

std::shared_ptr<const GridSpec> small_disk() {
  return std::make_shared<GridSpec>(disk_grid(16, 32, 2 * kPi / 64));
}

FieldSample rotate_nodes(const FieldSample& f, std::size_t shift) {
  ConformalMap rot;
  const double angle = 2 * kPi * static_cast<double>(shift) / static_cast<double>(f.grid->angles);
  rot.inverse = [angle](cplx w, cplx* d) {
    *d = std::polar(1.0, -angle);
    return w * std::polar(1.0, -angle);
  };
  rot.forward = [angle](cplx z) { return z * std::polar(1.0, angle); };
  return coordinate_change(f, rot, *f.grid, 2.5);
}

}  // namespace

TEST_CASE("disk Green function") {
  CHECK(green_disk(0.0, cplx(0.3, 0.4)) == doctest::Approx(-std::log(0.5)));
  CHECK(green_disk(0.0, 0.5) == doctest::Approx(std::log(2.0)));
  CHECK(green_disk(cplx(0.1, 0.2), cplx(-0.3, 0.5)) == doctest::Approx(green_disk(cplx(-0.3, 0.5), cplx(0.1, 0.2))));
  CHECK_THROWS_AS(green_disk(0.2, 0.2), SingularityError);
}

TEST_CASE("half-plane Green function") {
  CHECK(green_halfplane_infinity(cplx(0, 1)) == doctest::Approx(0.0));
  CHECK(green_halfplane_infinity(cplx(0, 2)) == doctest::Approx(2 * std::log(2.0)));
  CHECK(green_halfplane(cplx(0, 1), cplx(0, 2)) == doctest::Approx(std::log(4.0 / 3.0)));
  CHECK_THROWS_AS(green_halfplane(cplx(0, 1), cplx(0, 1)), SingularityError);
}

TEST_CASE("circle log averages") {
  CHECK(circle_log_average(0.5, 0.01, 0.02) == doctest::Approx(-std::log(0.5)).epsilon(1e-9));
  CHECK(circle_log_average(0.0, 0.01, 0.01) == doctest::Approx(-std::log(0.01)).epsilon(1e-9));
  CHECK(circle_log_average(0.0, 0.01, 0.04) == doctest::Approx(-std::log(0.04)).epsilon(1e-9));
}

TEST_CASE("grids") {
  const auto g = disk_grid(8, 16, 0.1);
  CHECK(g.size() == 9 * 16);
  CHECK(g.boundary.size() == 16);
  double area = 0.0, length = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) (g.is_boundary(i) ? length : area) += g.cell[i];
  CHECK(area == doctest::Approx(kPi));
  CHECK(length == doctest::Approx(2 * kPi));
  const auto again = rebuild_grid(g.params);
  CHECK(again.nodes == g.nodes);
  CHECK(again.node_eps == g.node_eps);
  const auto c = boundary_circle(64, 0.5);
  CHECK(rebuild_grid(c.params).size() == 64);
  CHECK_THROWS_AS(disk_grid(8, 15, 0.1), PreconditionError);
}

TEST_CASE("factorization reproduces the covariance") {
  auto g = small_disk();
  CovarianceFactorization cov(g);
  for (std::size_t i : {0u, 40u, 200u, 300u}) {
    for (std::size_t j : {5u, 77u, 250u}) {
      CHECK(cov.covariance(i, j) == doctest::Approx(node_covariance(*g, i, j)).epsilon(1e-6));
    }
  }
  const auto hp = std::make_shared<GridSpec>(half_plane_grid(12, 6, 4.0, 2.0, 0.1));
  CovarianceFactorization hcov(hp);
  CHECK(hcov.covariance(3, 20) == doctest::Approx(node_covariance(*hp, 3, 20)).epsilon(1e-8));
}

TEST_CASE("GFF samples") {
  auto g = small_disk();
  CovarianceFactorization cov(g);
  const std::size_t a = 2 * 32 + 3, b = 13 * 32 + 20;  // well separated interior nodes
  const int n = 10000;
  double sa = 0, sb = 0, sab = 0, sab2 = 0, pair = 0, pair2 = 0;
  for (int k = 0; k < n; ++k) {
    const auto f = sample_gff(cov, rng::derive_seed(17, k));
    if (k < 10) {
      double mean = 0.0;
      for (std::size_t i : g->boundary) mean += f.gaussian[i];
      CHECK(std::abs(mean / g->boundary.size()) < 1e-10);
    }
    double p = 0.0;
    for (std::size_t i = 0; i < g->size(); ++i) p += std::sin(0.37 * i) * f.gaussian[i];
    pair += p;
    pair2 += p * p;
    sa += f.gaussian[a];
    sb += f.gaussian[b];
    sab += f.gaussian[a] * f.gaussian[b];
    sab2 += std::pow(f.gaussian[a] * f.gaussian[b], 2);
  }
  const double pm = pair / n, pse = std::sqrt((pair2 / n - pm * pm) / n);
  CHECK(std::abs(pm) < 3 * pse);
  const double c = sab / n - (sa / n) * (sb / n);
  const double se = std::sqrt((sab2 / n - (sab / n) * (sab / n)) / n);
  CHECK(std::abs(c - green_disk(g->nodes[a], g->nodes[b])) < 3 * se);
}

TEST_CASE("fixed boundary length field") {
  const auto p = LqgParams::from_gamma(1.0);
  auto g = small_disk();
  CovarianceFactorization cov(g);
  const double alpha = p.Q - p.gamma / 4, beta = 1.5 * p.gamma;
  const auto f = sample_lf_disk_fixed_length(p, alpha, beta, 1.0, cov, 3);
  const double L = gmc::boundary_measure(f, p.gamma).total;
  CHECK(L == doctest::Approx(1.0).epsilon(1e-12));
  auto raw = f;
  raw.constant = 0.0;
  const double L0 = gmc::boundary_measure(raw, p.gamma).total;
  CHECK(f.weight == doctest::Approx(2.0 / p.gamma / L0).epsilon(1e-12));
  const auto f2 = sample_lf_disk_fixed_length(p, alpha, beta, 2.0, cov, 3);
  CHECK(f2.constant - f.constant == doctest::Approx(2.0 / p.gamma * std::log(2.0)));
  CHECK(f2.gaussian == f.gaussian);
  CHECK_THROWS_AS(sample_lf_disk_fixed_length(p, alpha, p.Q, 1.0, cov, 3), PreconditionError);
}

TEST_CASE("coordinate change") {
  const auto p = LqgParams::from_gamma(1.0);
  auto g = small_disk();
  CovarianceFactorization cov(g);
  auto f = sample_lf_disk_fixed_length(p, p.Q - 0.25, 1.5, 1.0, cov, 9);

  ConformalMap id;
  id.inverse = [](cplx w, cplx* d) {
    *d = 1.0;
    return w;
  };
  id.forward = [](cplx z) { return z; };
  const auto same = coordinate_change(f, id, *g, p.Q);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(same.value(i) == doctest::Approx(f.value(i)).epsilon(1e-12));

  // rotation by grid angles relabels nodes, and rotations compose
  const auto r3 = rotate_nodes(f, 3);
  const auto r5 = rotate_nodes(r3, 2);
  const auto direct = rotate_nodes(f, 5);
  const std::size_t n = g->angles;
  for (std::size_t ring = 0; ring < g->rings; ring += 5) {
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t i = ring * n + a, j = ring * n + (a + n - 3) % n;
      CHECK(r3.value(i) == doctest::Approx(f.value(j)).epsilon(1e-9));
      CHECK(r5.value(i) == doctest::Approx(direct.value(i)).epsilon(1e-9));
    }
  }

  // pushforward consistency of the area measure under a disk automorphism
  const cplx a0(0.2, 0.1);
  ConformalMap mob;
  mob.inverse = [a0](cplx w, cplx* d) {
    const cplx den = 1.0 + std::conj(a0) * w;
    *d = (1.0 - std::norm(a0)) / (den * den);
    return (w + a0) / den;
  };
  mob.forward = [a0](cplx z) { return (z - a0) / (1.0 - std::conj(a0) * z); };
  double before = 0.0, after = 0.0;
  const auto fine = std::make_shared<GridSpec>(disk_grid(64, 128, 2 * kPi / 256));
  CovarianceFactorization fcov(fine);
  for (int k = 0; k < 20; ++k) {
    auto h = sample_gff(fcov, rng::derive_seed(5, k));
    before += gmc::area_measure(h, p.gamma).total;
    after += gmc::area_measure(coordinate_change(h, mob, *fine, p.Q, Interpolation::Nearest), p.gamma).total;
  }
  CHECK(std::abs(after / before - 1.0) < 0.05);
}

TEST_CASE("Girsanov reweighting") {
  auto g = small_disk();
  CovarianceFactorization cov(g);
  std::vector<FieldSample> s;
  for (int k = 0; k < 5; ++k) s.push_back(sample_gff(cov, k));
  const auto same = girsanov_reweight(s, 1.0, 1.0, 0.0, 0.1);
  for (std::size_t k = 0; k < s.size(); ++k) CHECK(same[k].weight == doctest::Approx(s[k].weight));
}

TEST_CASE("sphere field") {
  const auto p = LqgParams::from_gamma(1.0);
  const double alpha = p.Q - p.gamma / 4;
  const auto g = std::make_shared<GridSpec>(cylinder_grid(24, 16, 6.0, 0.2));
  CovarianceFactorization cov(g);
  std::vector<double> excess;
  for (int k = 0; k < 2000; ++k) {
    const auto s = sample_sphere_field(p, alpha, cov, rng::derive_seed(23, k));
    if (k < 20) {
      for (double r : s.radial) CHECK(r < 0.0);
      CHECK(gmc::area_measure(s.field, p.gamma).total >= 1.0 - 1e-12);
      CHECK(s.field.weight == doctest::Approx(std::sqrt(s.area_before_shift)));
    }
    excess.push_back(s.shift_excess);
  }
  const double rate = p.gamma / 2;
  CHECK(stats::ks_one_sample(excess, [rate](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-rate * x); }).passed);
  CHECK_THROWS_AS(sample_sphere_field(p, p.Q, cov, 1), PreconditionError);
}

TEST_CASE("snapshot round trip") {
  const auto p = LqgParams::from_gamma(1.0);
  auto g = small_disk();
  CovarianceFactorization cov(g);
  const auto f = sample_lf_disk_fixed_length(p, p.Q - 0.25, 1.5, 1.0, cov, 4);
  const auto path = std::filesystem::temp_directory_path() / "lab_field_roundtrip.bin";
  save_field(f, path);
  CHECK(std::filesystem::exists(path.string() + ".json"));
  const auto h = load_field(path);
  CHECK(h.gaussian == f.gaussian);
  CHECK(h.constant == f.constant);
  CHECK(h.weight == f.weight);
  REQUIRE(h.insertions.size() == 2);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(h.value(i) == f.value(i));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}
