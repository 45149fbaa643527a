#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

#include "experiment.hpp"
#include "lab/error.hpp"
#include "lab/field.hpp"
#include "lab/gmc.hpp"
#include "lab/loewner.hpp"
#include "lab/mot.hpp"
#include "lab/parallel.hpp"
#include "lab/random.hpp"

namespace lab::cli {

using cplx = std::complex<double>;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    const auto b = item.find_first_not_of(' ');
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(' ') - b + 1));
  }
  return out;
}

std::string show(cplx z) {
  std::ostringstream os;
  os << z.real() << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
  return os.str();
}

/// Report for a statistic that must stay strictly below a bound.
stats::TestReport bound_report(const std::string& name, double statistic, double threshold, std::size_t n,
                               const std::string& note = {}) {
  stats::TestReport r;
  r.name = name;
  r.statistic = statistic;
  r.threshold = threshold;
  r.level = 0.0;
  r.p_value = std::numeric_limits<double>::quiet_NaN();
  r.n = n;
  r.passed = statistic < threshold;
  r.note = note;
  return r;
}

/// Derived seed for stream `arm` of the run.
std::uint64_t arm_seed(std::uint64_t seed, std::uint64_t arm, std::size_t i) {
  return rng::derive_seed(rng::hash(seed, arm), i);
}

svg::Series cdf_series(const std::string& label, double lo, double hi, const std::function<double(double)>& cdf,
                       bool log_x = false) {
  svg::Series s{label, {}, {}, svg::Style::Line};
  for (int k = 0; k <= 400; ++k) {
    const double f = k / 400.0;
    const double x = log_x ? lo * std::pow(hi / lo, f) : lo + (hi - lo) * f;
    s.x.push_back(x);
    s.y.push_back(cdf(x));
  }
  return s;
}

double quantile_of(std::vector<double> v, double q) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

// One arm of the hitting-order estimate: counts of tau_a < tau_b among decided runs.
struct ArmCount {
  std::size_t first = 0;
  std::size_t decided = 0;
  std::size_t censored = 0;
};

ArmCount hitting_order(double kappa, cplx a, cplx b, std::size_t n, std::uint64_t seed,
                       const ReversibilityOptions& o) {
  std::vector<int> outcome(n, -1);
  loewner::ChainOptions co;
  co.record_stride = 0;
  const std::vector<cplx> pts{a, b};
  parallel_for(
      n,
      [&](std::size_t i) {
        const auto chain = loewner::simulate_whole_plane(kappa, o.T0, o.T, o.step, rng::derive_seed(seed, i), pts, co);
        const auto& ta = chain.tracked[0].swallow_time;
        const auto& tb = chain.tracked[1].swallow_time;
        if (ta && (!tb || *ta < *tb)) {
          outcome[i] = 1;
        } else if (tb && (!ta || *tb < *ta)) {
          outcome[i] = 0;
        } else if (ta && tb) {
          outcome[i] = 2;  // same instant: counted as half
        }
      },
      o.workers);
  ArmCount c;
  std::size_t ties = 0;
  for (int v : outcome) {
    if (v < 0) {
      ++c.censored;
      continue;
    }
    ++c.decided;
    if (v == 1) ++c.first;
    if (v == 2) ++ties;
  }
  c.first += ties / 2;
  if (static_cast<double>(c.censored) > o.max_censored * static_cast<double>(n)) {
    throw DiagnosticError("hitting order of " + show(a) + ", " + show(b) + ": " + std::to_string(c.censored) + " of " +
                          std::to_string(n) + " runs undecided at the horizon");
  }
  return c;
}

}  // namespace

std::vector<ReversibilityRow> reversibility_statistic(double kappa, const std::vector<std::pair<cplx, cplx>>& pairs,
                                                      std::size_t n, std::uint64_t seed,
                                                      const ReversibilityOptions& o) {
  if (!(kappa > 8.0)) throw PreconditionError("reversibility statistic needs kappa > 8");
  if (n == 0) throw PreconditionError("reversibility statistic needs n > 0");
  std::vector<ReversibilityRow> rows;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [z, w] = pairs[p];
    // z = 1/z is harmless (the pair 1, 2i has it); only coincident or zero points are degenerate
    if (z == 0.0 || w == 0.0) throw PreconditionError("reversibility points must be nonzero");
    if (std::abs(z - w) < 1e-12) throw PreconditionError("reversibility pair needs z != w");
    const cplx zi = 1.0 / z, wi = 1.0 / w;
    ReversibilityRow row;
    row.z = z;
    row.w = w;
    const ArmCount a1 = hitting_order(kappa, z, w, n, rng::hash(seed, p, 1, 0), o);
    const ArmCount a2 = o.map == SecondArmMap::Inversion ? hitting_order(kappa, wi, zi, n, rng::hash(seed, p, 2, 0), o)
                                                          : hitting_order(kappa, w, z, n, rng::hash(seed, p, 3, 0), o);
    row.n1 = a1.decided;
    row.n2 = a2.decided;
    row.censored1 = a1.censored;
    row.censored2 = a2.censored;
    row.p1 = a1.decided ? static_cast<double>(a1.first) / static_cast<double>(a1.decided) : 0.0;
    row.p2 = a2.decided ? static_cast<double>(a2.first) / static_cast<double>(a2.decided) : 0.0;
    row.test = stats::two_proportion(a1.first, a1.decided, a2.first, a2.decided, o.level);
    row.test.name = std::string(o.map == SecondArmMap::Inversion ? "reversibility " : "power check ") + show(z) + ", " +
                    show(w);
    row.test.extras["p1"] = row.p1;
    row.test.extras["p2"] = row.p2;
    row.test.extras["censored1"] = static_cast<double>(a1.censored);
    row.test.extras["censored2"] = static_cast<double>(a2.censored);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

void capacity_convergence(Context& c) {
  const double kappa = c.params.kappa;
  const double T = c.config.number("T");
  auto steps = c.config.numbers("steps");
  std::sort(steps.begin(), steps.end(), std::greater<>());
  const std::size_t n = c.config.sample_count();
  loewner::ChainOptions o;
  o.track_derivative = true;
  const std::vector<cplx> origin{0.0};
  std::vector<std::vector<double>> errors(steps.size(), std::vector<double>(n));
  for (std::size_t s = 0; s < steps.size(); ++s) {
    parallel_for(
        n,
        [&](std::size_t i) {
          const auto chain = loewner::evolve_forward_radial(kappa, T, steps[s], rng::derive_seed(c.config.seed, i),
                                                            origin, o);
          errors[s][i] = loewner::capacity_error(chain);
        },
        c.config.workers);
  }
  std::vector<double> mean(steps.size());
  for (std::size_t s = 0; s < steps.size(); ++s) {
    mean[s] = std::accumulate(errors[s].begin(), errors[s].end(), 0.0) / static_cast<double>(n);
  }
  bool decreasing = true;
  for (std::size_t s = 1; s < mean.size(); ++s) decreasing = decreasing && mean[s] < mean[s - 1];
  const double order = stats::order_fit(steps, mean);
  const double min_order = c.config.number("min_order");
  stats::TestReport r;
  r.name = "capacity error order";
  r.statistic = order;
  r.threshold = min_order;
  r.level = 0.0;
  r.n = n;
  r.passed = decreasing && order >= min_order;
  r.note = "passes when the mean error decreases with the step and the fitted order reaches the threshold";
  for (std::size_t s = 0; s < steps.size(); ++s) r.extras["mean_error_" + std::to_string(s)] = mean[s];
  c.report(r);
  c.summary("order", order);
  c.csv("capacity_errors.csv", "step,path,error", [&](std::ostream& os) {
    for (std::size_t s = 0; s < steps.size(); ++s)
      for (std::size_t i = 0; i < n; ++i) os << steps[s] << ',' << i << ',' << errors[s][i] << '\n';
  });
  svg::Plot p{"capacity error", "step", "max |log g'(0) - t|", true, true, {}};
  p.series.push_back({"mean error", steps, mean, svg::Style::Line});
  std::vector<double> ref;
  for (double h : steps) ref.push_back(mean.front() * h / steps.front());
  p.series.push_back({"order 1", steps, ref, svg::Style::Line});
  c.plot("capacity_errors.svg", p);
}

void fixed_time_symmetry(Context& c) {
  const double kappa = c.params.kappa;
  const double T = c.config.number("T"), step = c.config.number("step");
  const cplx z0 = parse_complex(c.config.text("z0"));
  if (!(std::abs(z0) < 1.0)) throw ConfigError("z0 must lie in the open unit disk");
  const std::size_t n = c.config.sample_count();
  std::vector<cplx> forward(n), reverse(n);
  loewner::ChainOptions o;
  o.record_stride = 0;
  const std::vector<cplx> pts{z0};
  parallel_for(
      n,
      [&](std::size_t i) {
        loewner::LoewnerChain chain;
        chain.driving = loewner::sample_radial_driving(kappa, T, step, arm_seed(c.config.seed, 1, i));
        chain.kappa = kappa;
        chain.options = o;
        const std::size_t last = chain.driving.steps();
        forward[i] = loewner::invert_chain_at(chain, T, chain.driving.unit(last) * z0);
        reverse[i] = loewner::evolve_reverse_radial(kappa, T, step, arm_seed(c.config.seed, 2, i), pts, o)
                         .tracked[0]
                         .final_value;
      },
      c.config.workers);
  std::vector<double> fr(n), fi(n), rr(n), ri(n);
  for (std::size_t i = 0; i < n; ++i) {
    fr[i] = forward[i].real();
    fi[i] = forward[i].imag();
    rr[i] = reverse[i].real();
    ri[i] = reverse[i].imag();
  }
  auto re = stats::ks_two_sample(fr, rr, c.config.level);
  re.name = "KS Re";
  auto im = stats::ks_two_sample(fi, ri, c.config.level);
  im.name = "KS Im";
  c.report(re);
  c.report(im);
  c.csv("mapped_points.csv", "arm,re,im", [&](std::ostream& os) {
    for (std::size_t i = 0; i < n; ++i) os << "forward," << fr[i] << ',' << fi[i] << '\n';
    for (std::size_t i = 0; i < n; ++i) os << "reverse," << rr[i] << ',' << ri[i] << '\n';
  });
  svg::Plot p{"fixed-time images of z0: Re", "Re", "cdf", false, false, {}};
  p.series.push_back(svg::ecdf("forward inverse", fr));
  p.series.push_back(svg::ecdf("reverse flow", rr));
  c.plot("ecdf_re.svg", p);
  p.title = "fixed-time images of z0: Im";
  p.xlabel = "Im";
  p.series = {svg::ecdf("forward inverse", fi), svg::ecdf("reverse flow", ri)};
  c.plot("ecdf_im.svg", p);
}

void crt_covariance(Context& c) {
  const LqgParams& P = c.params;
  const double T = c.config.number("T"), step = c.config.number("step");
  const std::size_t n = c.config.sample_count();
  std::vector<double> x(n), y(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const auto path = mot::sample_crt(P, T, step, rng::derive_seed(c.config.seed, i));
        x[i] = path.X.back();
        y[i] = path.Y.back();
      },
      c.config.workers);
  auto var = [&](auto f) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = f(i);
      s += v;
      s2 += v * v;
    }
    const double m = s / static_cast<double>(n);
    return (s2 - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
  };
  const double vx = var([&](std::size_t i) { return x[i]; });
  const double vy = var([&](std::size_t i) { return y[i]; });
  const double vs = var([&](std::size_t i) { return x[i] + y[i]; });
  const double vd = var([&](std::size_t i) { return x[i] - y[i]; });
  double mx = 0.0, my = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) cxy += (x[i] - mx) * (y[i] - my);
  cxy /= static_cast<double>(n - 1);
  const double corr = cxy / std::sqrt(vx * vy);
  const double vt = c.config.number("variance_tolerance"), ct = c.config.number("corr_tolerance");
  c.report(bound_report("Var X / (a^2 T) - 1", std::abs(vx / (P.a2 * T) - 1.0), vt, n));
  c.report(bound_report("Var Y / (a^2 T) - 1", std::abs(vy / (P.a2 * T) - 1.0), vt, n));
  c.report(bound_report("corr + cos(4 pi / kappa)", std::abs(corr - P.corr), ct, n));
  c.report(bound_report("Var(X+Y) / (2 a^2 (1 + corr) T) - 1", std::abs(vs / (P.sum_variance() * T) - 1.0), vt, n));
  c.report(bound_report("Var(X-Y) / (2 a^2 (1 - corr) T) - 1", std::abs(vd / (P.difference_variance() * T) - 1.0), vt, n));
  c.summary("var_x_per_time", vx / T);
  c.summary("var_y_per_time", vy / T);
  c.summary("corr", corr);
  c.summary("a2", P.a2);
  c.summary("corr_expected", P.corr);
  const std::size_t shown = std::min<std::size_t>(n, 5000);
  c.csv("endpoints.csv", "X,Y", [&](std::ostream& os) {
    for (std::size_t i = 0; i < shown; ++i) os << x[i] << ',' << y[i] << '\n';
  });
  svg::Plot scatter{"(X_T, Y_T)", "X", "Y", false, false, {}};
  scatter.series.push_back({"endpoints", std::vector<double>(x.begin(), x.begin() + static_cast<long>(shown)),
                            std::vector<double>(y.begin(), y.begin() + static_cast<long>(shown)), svg::Style::Points});
  c.plot("endpoints.svg", scatter);
  const auto trace = mot::sample_crt(P, T, step, rng::derive_seed(c.config.seed, 0));
  svg::Plot tp{"sample path", "t", "value", false, false, {}};
  tp.series.push_back({"X", trace.times, trace.X, svg::Style::Line});
  tp.series.push_back({"Y", trace.times, trace.Y, svg::Style::Line});
  c.plot("trace.svg", tp);
}

void girsanov_exactness(Context& c) {
  const LqgParams& P = c.params;
  const std::size_t gn = c.config.count("grid");
  const double eps = c.config.number("eps");
  auto grid = std::make_shared<field::GridSpec>(field::disk_grid(gn, gn, eps));
  field::CovarianceFactorization cov(grid);
  const double a1 = P.Q + P.gamma / 4, a2 = P.Q - P.gamma / 4;
  // the circle is the ring of nodes closest to the requested radius
  const auto& rings = grid->ring_coord;
  std::size_t ring = 0;
  const double radius = c.config.number("radius");
  for (std::size_t r = 0; r + 1 < rings.size(); ++r) {
    if (std::abs(rings[r] - radius) < std::abs(rings[ring] - radius)) ring = r;
  }
  const double circle = rings[ring];
  const std::size_t na = grid->angles;
  std::vector<std::size_t> probes;
  for (int k = 0; k < 8; ++k) {
    const double r = 0.35 + 0.075 * k;
    const std::size_t ri = static_cast<std::size_t>(std::lround(r * static_cast<double>(gn) - 0.5));
    probes.push_back(ri * na + (static_cast<std::size_t>(k) * na / 8) % na);
  }
  for (std::size_t pr : probes) {
    if (std::abs(grid->nodes[pr]) <= 3 * circle) throw ConfigError("radius too large for the probe layout");
  }
  const std::size_t n = c.config.sample_count();
  std::vector<double> values(n * probes.size()), pairing(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        auto f = field::sample_gff(cov, rng::derive_seed(c.config.seed, i));
        f.insertions.push_back(field::Insertion{a1, 0.0, false});
        double s = 0.0;
        for (std::size_t a = 0; a < na; ++a) s += f.value(ring * na + a);
        pairing[i] = s / static_cast<double>(na);
        for (std::size_t k = 0; k < probes.size(); ++k) values[i * probes.size() + k] = f.gaussian[probes[k]];
      },
      c.config.workers);
  // weight eps^{(a2^2 - a1^2)/2} e^{(a2 - a1)(phi, theta_eps)}, scaled by a common constant
  std::vector<double> logw(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    logw[i] = 0.5 * (a2 * a2 - a1 * a1) * std::log(circle) + (a2 - a1) * pairing[i];
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(logw[i] - top);
  const double max_se = c.config.number("max_se");
  c.summary("circle_radius", circle);
  c.summary("effective_sample_size", stats::effective_sample_size(w));
  std::vector<std::array<double, 5>> rows;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = values[i * probes.size() + k];
    const auto wm = stats::weighted_mean(v, w);
    const auto um = stats::weighted_mean(v);
    const cplx z = grid->nodes[probes[k]];
    const double expected = (a2 - a1) * field::green_disk(z, 0.0);
    double grid_cov = 0.0;
    for (std::size_t a = 0; a < na; ++a) grid_cov += cov.covariance(probes[k], ring * na + a);
    grid_cov /= static_cast<double>(na);
    auto r = bound_report("mean shift at probe " + std::to_string(k), std::abs(wm.mean - expected) / wm.se, max_se, n,
                          "statistic is |weighted mean - (a2 - a1) G(z, 0)| in standard errors");
    r.extras["probe_x"] = z.real();
    r.extras["probe_y"] = z.imag();
    r.extras["weighted_mean"] = wm.mean;
    r.extras["standard_error"] = wm.se;
    r.extras["unweighted_mean"] = um.mean;
    r.extras["expected_shift"] = expected;
    r.extras["grid_covariance_shift"] = (a2 - a1) * grid_cov;
    c.report(r);
    rows.push_back({std::abs(z), wm.mean, wm.se, expected, (a2 - a1) * grid_cov});
  }
  c.csv("probe_shifts.csv", "radius,weighted_mean,standard_error,expected,grid_expected", [&](std::ostream& os) {
    for (const auto& r : rows) os << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << ',' << r[4] << '\n';
  });
  svg::Plot p{"weighted mean shift", "|z|", "shift", false, false, {}};
  svg::Series est{"weighted mean", {}, {}, svg::Style::Points}, th{"(a2 - a1) G(z, 0)", {}, {}, svg::Style::Line};
  for (const auto& r : rows) {
    est.x.push_back(r[0]);
    est.y.push_back(r[1]);
    th.x.push_back(r[0]);
    th.y.push_back(r[3]);
  }
  p.series = {th, est};
  c.plot("probe_shifts.svg", p);
}

void area_law(Context& c) {
  const LqgParams& P = c.params;
  const double ell = c.config.number("ell");
  const std::string method = c.config.text("method");
  const double alpha = P.Q - P.gamma / 4, beta = 1.5 * P.gamma;
  const std::size_t n = c.config.sample_count();
  std::vector<double> area(n), weight(n);
  if (method == "logpolar") {
    gmc::LogPolarOptions lo;
    lo.angles = c.config.count("angles");
    lo.depth = c.config.number("depth");
    const gmc::LogPolarDisk disk(P, alpha, beta, lo);
    parallel_for(
        n,
        [&](std::size_t i) {
          const auto f = disk.sample_fixed_length(ell, rng::derive_seed(c.config.seed, i));
          area[i] = f.area;
          weight[i] = f.weight;
        },
        c.config.workers);
  } else if (method == "grid") {
    const std::size_t gn = c.config.count("grid");
    auto grid = std::make_shared<field::GridSpec>(field::disk_grid(gn, gn, c.config.number("eps")));
    field::CovarianceFactorization cov(grid);
    parallel_for(
        n,
        [&](std::size_t i) {
          const auto f =
              field::sample_lf_disk_fixed_length(P, alpha, beta, ell, cov, rng::derive_seed(c.config.seed, i));
          area[i] = gmc::area_measure(f, P.gamma).total;
          weight[i] = f.weight;
        },
        c.config.workers);
  } else {
    throw ConfigError("method must be logpolar or grid");
  }
  const double b_star = P.first_passage_scale() * ell * ell;
  const mot::InverseGamma law(b_star);
  auto r = stats::weighted_ks(area, weight, [&](double a) { return law.cdf(a); }, c.config.level);
  r.name = "weighted KS distance to InverseGamma(1/2, b* ell^2)";
  const double max_distance = c.config.number("max_distance");
  r.extras["ks_critical_value"] = r.threshold;
  r.threshold = max_distance;
  r.passed = r.statistic < max_distance;
  const mot::InverseGamma tan_law(P.tangent_scale() * ell * ell), cot_law(P.first_passage_scale() * ell * ell);
  const double d_tan = stats::weighted_ks(area, weight, [&](double a) { return tan_law.cdf(a); }).statistic;
  const double d_cot = stats::weighted_ks(area, weight, [&](double a) { return cot_law.cdf(a); }).statistic;
  r.extras["distance_tan"] = d_tan;
  r.extras["distance_cot"] = d_cot;
  r.extras["b_star"] = b_star;
  r.note = "b* = cot(pi gamma^2 / 8) / 8, the scale fixed by the first-passage oracle";
  c.report(r);
  c.summary("b_star", b_star);
  c.summary("distance_tan", d_tan);
  c.summary("distance_cot", d_cot);
  c.summary("effective_sample_size", stats::effective_sample_size(weight));
  c.summary("median_area", quantile_of(area, 0.5));
  c.csv("areas.csv", "area,weight", [&](std::ostream& os) {
    for (std::size_t i = 0; i < n; ++i) os << area[i] << ',' << weight[i] << '\n';
  });
  const double lo = std::max(1e-4, quantile_of(area, 0.001)), hi = quantile_of(area, 0.99);
  svg::Plot p{"quantum area of the disk", "area", "cdf", true, false, {}};
  p.series.push_back(svg::ecdf("weighted samples", area, weight));
  p.series.push_back(cdf_series("b* (cot)", lo, hi, [&](double a) { return cot_law.cdf(a); }, true));
  p.series.push_back(cdf_series("tan candidate", lo, hi, [&](double a) { return tan_law.cdf(a); }, true));
  c.plot("area_ecdf.svg", p);
}

void first_passage_oracle(Context& c) {
  const LqgParams& P = c.params;
  const double ell0 = c.config.number("ell0");
  const double step = c.config.number("step_factor") * ell0 * ell0 / P.sum_variance();
  const double guard = c.config.number("guard_factor") * ell0 * ell0;
  const std::size_t n = c.config.sample_count();
  std::vector<double> tau(n);
  mot::StoppedCrtOptions o;
  o.record = false;
  parallel_for(
      n,
      [&](std::size_t i) {
        const auto path = mot::stopped_crt_disk(P, ell0, step, rng::derive_seed(c.config.seed, i), guard, o);
        tau[i] = path.censored ? std::numeric_limits<double>::infinity() : *path.stop_time;
      },
      c.config.workers);
  const std::size_t censored = static_cast<std::size_t>(std::count_if(tau.begin(), tau.end(), [](double t) {
    return !std::isfinite(t);
  }));
  const mot::InverseGamma cot_law(P.first_passage_scale() * ell0 * ell0), tan_law(P.tangent_scale() * ell0 * ell0);
  auto r = stats::ks_one_sample(tau, [&](double a) { return cot_law.cdf(a); }, c.config.level, guard);
  r.name = "KS first passage vs InverseGamma(1/2, ell0^2 / (2 sigma^2))";
  const auto alt = stats::ks_one_sample(tau, [&](double a) { return tan_law.cdf(a); }, c.config.level, guard);
  r.extras["distance_tan"] = alt.statistic;
  r.extras["b_cot"] = P.first_passage_scale();
  r.extras["b_tan"] = P.tangent_scale();
  c.report(r);
  const double frac = static_cast<double>(censored) / static_cast<double>(n);
  c.report(bound_report("censored fraction", frac, c.config.number("max_censored"), n,
                        "paths still alive at the guard time"));
  const double b_star = r.statistic <= alt.statistic ? P.first_passage_scale() : P.tangent_scale();
  c.summary("b_star", b_star);
  c.summary("distance_cot", r.statistic);
  c.summary("distance_tan", alt.statistic);
  c.summary("censored_fraction", frac);
  c.summary("guard_time", guard);
  c.csv("first_passage.csv", "tau", [&](std::ostream& os) {
    for (double t : tau) os << t << '\n';
  });
  const double lo = std::max(1e-6, quantile_of(tau, 0.001)), hi = quantile_of(tau, 0.99);
  svg::Plot p{"first passage of ell0 + X + Y", "tau", "cdf", true, false, {}};
  p.series.push_back(svg::ecdf("samples", tau));
  p.series.push_back(cdf_series("cot(pi g^2/8)/8", lo, hi, [&](double a) { return cot_law.cdf(a); }, true));
  p.series.push_back(cdf_series("tan(pi g^2/8)/8", lo, hi, [&](double a) { return tan_law.cdf(a); }, true));
  c.plot("first_passage_ecdf.svg", p);
}

void radial_mot(Context& c) {
  const LqgParams& P = c.params;
  const std::size_t gn = c.config.count("grid");
  const std::string eps_text = c.config.text("eps");
  const double eps = eps_text == "auto" ? kPi / static_cast<double>(gn) : c.config.number("eps");
  const double T = c.config.number("T"), step = c.config.number("step");
  const std::size_t count = c.config.count("schedule");
  if (count == 0) throw ConfigError("schedule needs at least one time");
  mot::ExtractionOptions eo;
  eo.boundary_nodes = c.config.count("boundary_nodes");
  eo.inner_offset = c.config.number("inner_offset");
  auto grid = std::make_shared<field::GridSpec>(field::disk_grid(gn, gn, eps));
  field::CovarianceFactorization cov(grid);
  const std::size_t total_steps = static_cast<std::size_t>(std::llround(T / step));
  std::vector<double> schedule;
  for (std::size_t j = 1; j <= count; ++j) {
    const std::size_t k = std::max<std::size_t>(1, j * total_steps / count);
    if (schedule.empty() || static_cast<double>(k) * step > schedule.back()) schedule.push_back(static_cast<double>(k) * step);
  }
  const std::size_t n = c.config.sample_count();
  std::vector<mot::BoundaryLengthProcess> runs(n);
  std::vector<double> weights(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const auto f = field::sample_lf_disk_fixed_length(P, P.Q - P.gamma / 4, 1.5 * P.gamma, 1.0, cov,
                                                          arm_seed(c.config.seed, 1, i));
        loewner::LoewnerChain chain;
        chain.driving = loewner::sample_radial_driving(P.kappa, T, step, arm_seed(c.config.seed, 2, i));
        chain.kappa = P.kappa;
        chain.options.record_stride = 0;
        runs[i] = mot::extract_boundary_process(f, P, chain, schedule, eo);
        weights[i] = f.weight;
      },
      c.config.workers);
  std::vector<double> dx, dy, da, w;
  double worst_identity = 0.0, worst_tolerance = 0.0, mean_ell0 = 0.0;
  std::size_t resets = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = runs[i];
    mean_ell0 += b.ell0 / static_cast<double>(n);
    resets += b.resets;
    for (std::size_t k = 0; k < b.L.size(); ++k) {
      worst_identity = std::max(worst_identity, std::abs(b.L[k] - (b.ell0 + b.X[k] + b.Y[k])) / b.L[k]);
      worst_tolerance = std::max(worst_tolerance, b.tolerance[k]);
      if (k == 0) continue;
      const double dA = b.area_times[k] - b.area_times[k - 1];
      if (!(dA > 0.0)) continue;  // no cell swallowed: the interval carries no area time
      dx.push_back(b.X[k] - b.X[k - 1]);
      dy.push_back(b.Y[k] - b.Y[k - 1]);
      da.push_back(dA);
      w.push_back(weights[i]);
    }
  }
  if (dx.size() < 2) throw DiagnosticError("too few intervals with positive area time");
  const auto cv = stats::cov_estimate(dx, dy, da, w);
  const double tol = c.config.number("covariance_tolerance");
  auto with_se = [](stats::TestReport r, double est, double se) {
    r.extras["estimate"] = est;
    r.extras["standard_error"] = se;
    return r;
  };
  c.report(with_se(bound_report("Var dX per area / a^2 - 1", std::abs(cv.xx / P.a2 - 1.0), tol, dx.size()), cv.xx,
                   cv.se_xx));
  c.report(with_se(bound_report("Var dY per area / a^2 - 1", std::abs(cv.yy / P.a2 - 1.0), tol, dx.size()), cv.yy,
                   cv.se_yy));
  c.report(with_se(bound_report("Cov(dX, dY) per area / (corr a^2) - 1", std::abs(cv.xy / (P.corr * P.a2) - 1.0), tol,
                                dx.size()),
                   cv.xy, cv.se_xy));
  c.report(bound_report("max |L - (ell0 + X + Y)| / L", worst_identity, c.config.number("identity_tolerance"), n));
  c.summary("mean_ell0", mean_ell0);
  c.summary("max_discretization_spread", worst_tolerance);
  c.summary("resets", static_cast<double>(resets));
  c.summary("intervals", static_cast<double>(dx.size()));
  c.summary("xx_ratio", cv.xx / P.a2);
  c.summary("yy_ratio", cv.yy / P.a2);
  c.summary("xy_ratio", cv.xy / (P.corr * P.a2));
  c.csv("increments.csv", "pair,dX,dY,dA,weight", [&](std::ostream& os) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 1; k < runs[i].L.size(); ++k) {
        const double dA = runs[i].area_times[k] - runs[i].area_times[k - 1];
        os << i << ',' << runs[i].X[k] - runs[i].X[k - 1] << ',' << runs[i].Y[k] - runs[i].Y[k - 1] << ',' << dA << ','
           << weights[i] << '\n';
        ++j;
      }
    }
  });
  for (std::size_t i = 0; i < std::min<std::size_t>(n, 4); ++i) {
    const std::string name = "process_" + std::to_string(i) + ".csv";
    mot::export_csv(runs[i], c.out / name);
    c.result.artifacts.push_back(name);
  }
  svg::Plot sc{"normalized increments", "dX / sqrt(dA)", "dY / sqrt(dA)", false, false, {}};
  svg::Series pts{"increments", {}, {}, svg::Style::Points};
  for (std::size_t k = 0; k < dx.size(); ++k) {
    pts.x.push_back(dx[k] / std::sqrt(da[k]));
    pts.y.push_back(dy[k] / std::sqrt(da[k]));
  }
  sc.series.push_back(pts);
  c.plot("increments.svg", sc);
  svg::Plot tr{"boundary length processes", "area time", "value", false, false, {}};
  for (std::size_t i = 0; i < std::min<std::size_t>(n, 3); ++i) {
    tr.series.push_back({"L " + std::to_string(i), runs[i].area_times, runs[i].L, svg::Style::Line});
  }
  c.plot("traces.svg", tr);
}

void reversibility(Context& c) {
  const double kappa = c.params.kappa;
  ReversibilityOptions o;
  o.T0 = c.config.number("T0");
  o.T = c.config.number("T");
  o.step = c.config.number("step");
  o.workers = c.config.workers;
  o.level = c.config.level;
  o.max_censored = c.config.number("max_censored");
  std::vector<std::pair<cplx, cplx>> pairs;
  for (const std::string& item : split_list(c.config.text("pairs"), ',')) {
    const auto parts = split_list(item, ':');
    pairs.emplace_back(parse_complex(parts.at(0)), parse_complex(parts.at(1)));
  }
  const std::size_t n = c.config.sample_count();
  const auto rows = reversibility_statistic(kappa, pairs, n, c.config.seed, o);
  for (const auto& row : rows) c.report(row.test);

  const cplx zc = parse_complex(c.config.text("conjugate"));
  const ArmCount conj = hitting_order(kappa, zc, std::conj(zc), n, rng::hash(c.config.seed, 99), o);
  const double pc = static_cast<double>(conj.first) / static_cast<double>(conj.decided);
  const auto [lo, hi] = stats::proportion_interval(conj.first, conj.decided, c.config.level);
  stats::TestReport cr;
  cr.name = "conjugate pair " + show(zc) + ", " + show(std::conj(zc));
  cr.statistic = pc;
  cr.threshold = 0.5;
  cr.level = c.config.level;
  cr.n = conj.decided;
  cr.passed = lo <= 0.5 && 0.5 <= hi;
  cr.extras["interval_low"] = lo;
  cr.extras["interval_high"] = hi;
  cr.note = "passes when 1/2 lies in the binomial interval of P[tau_z < tau_conj z]";
  c.report(cr);

  ReversibilityOptions power = o;
  power.map = SecondArmMap::Identity;
  const auto prow = reversibility_statistic(kappa, pairs, n, c.config.seed, power);
  std::size_t rejections = 0;
  stats::TestReport pr;
  pr.name = "power check: identity in place of inversion rejects on some pair";
  pr.level = c.config.level;
  pr.n = n;
  for (std::size_t k = 0; k < prow.size(); ++k) {
    rejections += !prow[k].test.passed;
    pr.extras["z_statistic_" + std::to_string(k)] = prow[k].test.statistic;
    pr.extras["p2_identity_" + std::to_string(k)] = prow[k].p2;
  }
  pr.statistic = static_cast<double>(rejections);
  pr.threshold = 1.0;
  pr.passed = rejections >= 1;
  pr.note = "statistic counts rejecting pairs; at least one is required";
  c.report(pr);

  c.csv("proportions.csv", "z,w,p1,n1,p2,n2,censored1,censored2,statistic,identity_p2", [&](std::ostream& os) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = rows[k];
      os << show(r.z) << ',' << show(r.w) << ',' << r.p1 << ',' << r.n1 << ',' << r.p2 << ',' << r.n2 << ','
         << r.censored1 << ',' << r.censored2 << ',' << r.test.statistic << ',' << prow[k].p2 << '\n';
    }
  });
  svg::Plot p{"hitting-order probabilities", "pair", "probability", false, false, {}};
  svg::Series s1{"P[tau_z < tau_w]", {}, {}, svg::Style::Points}, s2{"P[tau_1/w < tau_1/z]", {}, {}, svg::Style::Points},
      s3{"identity arm", {}, {}, svg::Style::Points};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    s1.x.push_back(static_cast<double>(k));
    s1.y.push_back(rows[k].p1);
    s2.x.push_back(static_cast<double>(k) + 0.1);
    s2.y.push_back(rows[k].p2);
    s3.x.push_back(static_cast<double>(k) + 0.2);
    s3.y.push_back(prow[k].p2);
  }
  p.series = {s1, s2, s3};
  c.plot("proportions.svg", p);
}

void excursion_limit(Context& c) {
  const LqgParams& P = c.params;
  const double t = c.config.number("t"), ell_min = c.config.number("ell_min");
  const auto ells = c.config.numbers("ells");
  const std::size_t n = c.config.sample_count();
  // common random numbers across starts: the distances then track the law, not the noise
  auto draw = [&](double ell) {
    std::vector<double> v(n);
    parallel_for(
        n, [&](std::size_t i) { v[i] = mot::conditioned_first_passage_marginal(P, ell, t, rng::derive_seed(c.config.seed, i)); },
        c.config.workers);
    return v;
  };
  const auto reference = draw(ell_min);
  const auto limit = draw(0.0);
  std::vector<double> distances;
  std::vector<std::vector<double>> samples;
  for (double ell : ells) {
    samples.push_back(draw(ell));
    distances.push_back(stats::ks_distance(samples.back(), reference));
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < distances.size(); ++k) {
    decreasing = decreasing && (ells[k] < ells[k - 1]) == (distances[k] < distances[k - 1]);
  }
  stats::TestReport mono;
  mono.name = "KS distance decreases with ell";
  mono.statistic = decreasing ? 1.0 : 0.0;
  mono.threshold = 1.0;
  mono.n = n;
  mono.passed = decreasing;
  for (std::size_t k = 0; k < ells.size(); ++k) mono.extras["distance_" + std::to_string(k)] = distances[k];
  c.report(mono);
  const std::size_t last = static_cast<std::size_t>(std::min_element(ells.begin(), ells.end()) - ells.begin());
  auto r = bound_report("KS distance at the smallest ell", distances[last], c.config.number("max_distance"), n);
  r.extras["ell"] = ells[last];
  r.extras["distance_reference_to_limit"] = stats::ks_distance(reference, limit);
  c.report(r);
  for (std::size_t k = 0; k < ells.size(); ++k) c.summary("distance_ell_" + std::to_string(k), distances[k]);
  c.summary("distance_ell_min_to_limit", stats::ks_distance(reference, limit));
  c.csv("marginals.csv", "ell,value", [&](std::ostream& os) {
    for (double v : reference) os << ell_min << ',' << v << '\n';
    for (std::size_t k = 0; k < ells.size(); ++k)
      for (double v : samples[k]) os << ells[k] << ',' << v << '\n';
  });
  svg::Plot p{"conditioned first-passage marginal at t", "value", "cdf", false, false, {}};
  p.series.push_back(svg::ecdf("ell_min", reference));
  for (std::size_t k = 0; k < ells.size(); ++k) {
    std::ostringstream label;
    label << "ell = " << ells[k];
    p.series.push_back(svg::ecdf(label.str(), samples[k]));
  }
  c.plot("marginals.svg", p);
}

void sphere_mot(Context& c) {
  const LqgParams& P = c.params;
  mot::SpherePairOptions o;
  o.ell_min = c.config.number("ell_min");
  o.max_steps = c.config.count("max_steps");
  const double step = c.config.number("step");
  const std::size_t n = c.config.sample_count();
  std::vector<double> tau(n), qv_l(n), qv_z(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const auto pair = mot::sample_sphere_pair(P, step, rng::derive_seed(c.config.seed, i), o);
        tau[i] = pair.tau;
        double l = 0.0, z = 0.0;
        for (std::size_t k = 1; k < pair.L.size(); ++k) {
          l += std::pow(pair.L[k] - pair.L[k - 1], 2);
          z += std::pow(pair.Z[k] - pair.Z[k - 1], 2);
        }
        qv_l[i] = l;
        qv_z[i] = z;
      },
      c.config.workers);
  const double min_tau = *std::min_element(tau.begin(), tau.end());
  stats::TestReport dr;
  dr.name = "all durations at least 1";
  dr.statistic = min_tau;
  dr.threshold = 1.0;
  dr.n = n;
  dr.passed = min_tau >= 1.0;
  dr.note = "statistic is the smallest duration";
  c.report(dr);
  const double ratio = std::accumulate(qv_z.begin(), qv_z.end(), 0.0) / std::accumulate(qv_l.begin(), qv_l.end(), 0.0);
  const double expected = std::pow(1.0 / std::tan(kPi * P.gamma * P.gamma / 8.0), 2);
  auto rr = bound_report("QV rate ratio Z / L vs cot^2(pi gamma^2 / 8)", std::abs(ratio / expected - 1.0),
                         c.config.number("ratio_tolerance"), n);
  rr.extras["ratio"] = ratio;
  rr.extras["expected"] = expected;
  c.report(rr);
  c.summary("qv_ratio", ratio);
  c.summary("qv_ratio_expected", expected);
  c.summary("median_duration", quantile_of(tau, 0.5));
  c.csv("pairs.csv", "tau,qv_L,qv_Z", [&](std::ostream& os) {
    for (std::size_t i = 0; i < n; ++i) os << tau[i] << ',' << qv_l[i] << ',' << qv_z[i] << '\n';
  });
  const auto example = mot::sample_sphere_pair(P, step, rng::derive_seed(c.config.seed, 0), o);
  mot::export_csv(example, c.out / "pair_0.csv");
  c.result.artifacts.push_back("pair_0.csv");
  svg::Plot tp{"excursion L and Brownian motion Z", "t", "value", false, false, {}};
  tp.series.push_back({"L", example.times, example.L, svg::Style::Line});
  tp.series.push_back({"Z", example.times, example.Z, svg::Style::Line});
  c.plot("pair_0.svg", tp);
  svg::Plot dp{"durations", "tau", "cdf", true, false, {}};
  dp.series.push_back(svg::ecdf("samples", tau));
  c.plot("durations.svg", dp);

  // Extraction on the quantum sphere; reported in the summary only.
  const std::size_t pairs = c.config.count("extraction_pairs");
  if (pairs == 0) return;
  const std::size_t gn = c.config.count("extraction_grid");
  const double T0 = c.config.number("extraction_T0"), T = c.config.number("extraction_T");
  const double s_max = std::max(T0, T) + 2.0;
  auto grid = std::make_shared<field::GridSpec>(field::cylinder_grid(gn, gn, s_max, kPi / static_cast<double>(gn)));
  field::CovarianceFactorization cov(grid);
  const double xstep = 1e-3;
  const std::size_t steps = static_cast<std::size_t>(std::llround((T0 + T) / xstep));
  std::vector<double> schedule;
  for (std::size_t j = 1; j <= 20; ++j) schedule.push_back(-T0 + static_cast<double>(j * steps / 20) * xstep);
  std::vector<double> dx, dy, da, w;
  double first_l = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto s = field::sample_sphere_field(P, P.Q - P.gamma / 4, cov, arm_seed(c.config.seed, 7, i));
    loewner::ChainOptions co;
    co.record_stride = 0;
    const auto chain = loewner::simulate_whole_plane(P.kappa, T0, T, xstep, arm_seed(c.config.seed, 8, i), {}, co);
    mot::ExtractionOptions eo;
    eo.boundary_nodes = 512;
    const auto b = mot::extract_sphere_boundary_process(s.field, P, chain, schedule, eo);
    first_l += b.ell0 / static_cast<double>(pairs);
    for (std::size_t k = 1; k < b.L.size(); ++k) {
      const double dA = b.area_times[k] - b.area_times[k - 1];
      if (!(dA > 0.0)) continue;
      dx.push_back(b.X[k] - b.X[k - 1]);
      dy.push_back(b.Y[k] - b.Y[k - 1]);
      da.push_back(dA);
      w.push_back(s.field.weight);
    }
  }
  c.summary("extraction_initial_length", first_l);
  if (dx.size() >= 2) {
    const auto cv = stats::cov_estimate(dx, dy, da, w);
    c.summary("extraction_xx_ratio", cv.xx / P.a2);
    c.summary("extraction_yy_ratio", cv.yy / P.a2);
    c.summary("extraction_xy_ratio", cv.xy / (P.corr * P.a2));
  }
}

}  // namespace detail

}  // namespace lab::cli
