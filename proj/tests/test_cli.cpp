#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lab/cli.hpp"
#include "lab/error.hpp"
#include "lab/svg.hpp"

using namespace lab;
using namespace lab::cli;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("lab_test_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string read(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(
      "# comment\n"
      "experiment = crt-covariance\n"
      "kappa = 16   # trailing comment\n"
      "samples = 1e3\n"
      "seed = 42\n"
      "T = 0.5\n");
  CHECK(c.experiment == "crt-covariance");
  CHECK(*c.kappa == 16.0);
  CHECK_FALSE(c.gamma.has_value());
  CHECK(c.sample_count() == 1000);
  CHECK(c.seed == 42);
  CHECK(c.number("T") == 0.5);
  CHECK(c.number("step") == 0.01);  // catalog default
  CHECK_NOTHROW(validate(c));
  CHECK(c.params().gamma == doctest::Approx(1.0));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("experiment = crt-covariance\ngamma = 1\nkappa = 16\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = a\nexperiment = b\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("samples = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("samples = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("experiment = crt-covariance\nkappa = 16\nbogus = 1\n")), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("experiment = nope\nkappa = 16\n")), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("experiment = crt-covariance\n")), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("experiment = crt-covariance\nkappa = 4\n")), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("experiment = crt-covariance\nkappa = 16\nlevel = 2\n")), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("experiment = reversibility\nkappa = 10\npairs = 1:2i, 3\n")), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("experiment = area-law\ngamma = 1\nmethod = exact\n")), ConfigError);
}

TEST_CASE("overrides replace gamma and kappa") {
  auto c = parse_config("experiment = crt-covariance\nkappa = 16\n");
  apply_override(c, "gamma", "0.5");
  CHECK(*c.gamma == 0.5);
  CHECK_FALSE(c.kappa.has_value());
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("complex literals") {
  using cplx = std::complex<double>;
  CHECK(parse_complex("1") == cplx(1, 0));
  CHECK(parse_complex("-3") == cplx(-3, 0));
  CHECK(parse_complex("2i") == cplx(0, 2));
  CHECK(parse_complex("0.5i") == cplx(0, 0.5));
  CHECK(parse_complex("1+1i") == cplx(1, 1));
  CHECK(parse_complex("0.5-2i") == cplx(0.5, -2));
  CHECK(parse_complex("-i") == cplx(0, -1));
  CHECK(parse_complex("1e-1+2e0i") == cplx(0.1, 2));
  CHECK_THROWS_AS(parse_complex("abc"), ConfigError);
}

TEST_CASE("catalog covers criteria one to ten once each") {
  std::set<int> seen;
  std::set<std::string> names;
  for (const auto& e : catalog()) {
    CHECK(seen.insert(e.criterion).second);
    CHECK(names.insert(e.name).second);
    CHECK_FALSE(e.citation.empty());
    auto c = parse_config("experiment = " + e.name + "\n" + e.parameter.first + " = " + e.parameter.second + "\n");
    CHECK_NOTHROW(validate(c));
  }
  CHECK(seen == std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(find_experiment("area-law").criterion == 5);
  CHECK_THROWS_AS(find_experiment("unknown"), ConfigError);
}

TEST_CASE("runs are deterministic up to the timestamp") {
  auto c = parse_config("experiment = crt-covariance\nkappa = 16\nsamples = 2000\nseed = 9\n");
  std::string first;
  for (int k = 0; k < 2; ++k) {
    c.out = scratch("det" + std::to_string(k));
    const auto r = run_experiment(c);
    CHECK(r.reports.size() == 5);
    auto doc = nlohmann::json::parse(read(c.out / "results.json"));
    CHECK(doc.contains("timestamp"));
    doc.erase("timestamp");
    doc["params"]["config"].erase("out");
    if (k == 0) {
      first = doc.dump();
      for (const auto& a : r.artifacts) CHECK(std::filesystem::exists(c.out / a));
    } else {
      CHECK(doc.dump() == first);
    }
  }
  // parallel workers give the same numbers
  c.workers = 3;
  c.out = scratch("det_workers");
  auto doc = run_experiment(c).document;
  doc.erase("timestamp");
  doc["params"]["config"].erase("out");
  doc["params"]["config"].erase("workers");
  auto ref = nlohmann::json::parse(first);
  ref["params"]["config"].erase("workers");
  CHECK(doc.dump() == ref.dump());
}

TEST_CASE("results.json layout") {
  auto c = parse_config("experiment = first-passage-oracle\nkappa = 16\nsamples = 2000\n");
  c.out = scratch("layout");
  const auto doc = run_experiment(c).document;
  CHECK(doc["params"]["kappa"] == 16.0);
  CHECK(doc["params"]["a2"].get<double>() == doctest::Approx(2.0 * std::sqrt(2.0)));
  for (const auto& r : doc["reports"]) {
    for (const char* key : {"name", "statistic", "critical_value", "level", "n", "verdict", "metadata"}) {
      CHECK(r.contains(key));
    }
    CHECK(r["metadata"]["seed"] == 1);
  }
  const std::string svg = read(c.out / "first_passage_ecdf.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("seed: 1") != std::string::npos);
}

TEST_CASE("reversibility statistic") {
  ReversibilityOptions o;
  o.T0 = 4.0;
  o.T = 6.0;
  o.step = 4e-3;
  const std::vector<std::pair<std::complex<double>, std::complex<double>>> pairs{{{1.0, 0.0}, {0.0, 2.0}}};
  const auto rows = reversibility_statistic(10.0, pairs, 100, 5, o);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].n1 + rows[0].censored1 == 100);
  CHECK(rows[0].p1 > 0.0);
  CHECK(rows[0].p1 < 1.0);
  CHECK(rows[0].test.extras.count("p2"));
  // the nearer point is usually hit first, so the identity arm must look different
  o.map = SecondArmMap::Identity;
  const auto power = reversibility_statistic(10.0, pairs, 100, 5, o);
  CHECK(power[0].p1 == rows[0].p1);
  CHECK(power[0].p2 < 0.5);
  CHECK_THROWS_AS(reversibility_statistic(6.0, pairs, 10, 1, o), PreconditionError);
  CHECK_THROWS_AS(reversibility_statistic(10.0, {{{1.0, 0.0}, {1.0, 0.0}}}, 10, 1, o), PreconditionError);
  o.T = 0.01;
  o.T0 = 0.01;
  CHECK_THROWS_AS(reversibility_statistic(10.0, pairs, 20, 1, o), DiagnosticError);
}

TEST_CASE("svg writer") {
  svg::Plot p{"t", "x", "y", true, false, {}};
  p.series.push_back(svg::ecdf("s", std::vector<double>{3.0, 1.0, 2.0}));
  const auto path = scratch("plot.svg");
  svg::write(p, path, {{"note", "a -- b"}});
  const std::string s = read(path);
  CHECK(s.find("</svg>") != std::string::npos);
  CHECK(s.find("a -- b") == std::string::npos);  // "--" cannot appear inside an XML comment
}
