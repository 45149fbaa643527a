#include "lab/mot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "lab/error.hpp"
#include "lab/gmc.hpp"
#include "lab/parallel.hpp"

namespace lab::mot {

using cplx = std::complex<double>;
using loewner::DrivingPath;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Inverse gamma law

InverseGamma::InverseGamma(double b) : b_(b) {
  if (!(b > 0.0) || !std::isfinite(b)) throw PreconditionError("inverse gamma scale must be positive");
}

double InverseGamma::density(double a) const {
  if (!(a > 0.0)) return 0.0;
  return std::sqrt(b_ / (std::numbers::pi * a * a * a)) * std::exp(-b_ / a);
}

double InverseGamma::cdf(double a) const {
  if (!(a > 0.0)) return 0.0;
  if (std::isinf(a)) return 1.0;
  return std::erfc(std::sqrt(b_ / a));
}

double InverseGamma::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw PreconditionError("inverse gamma quantile needs p in (0, 1)");
  const double x = boost::math::erfc_inv(p);
  return b_ / (x * x);
}

double InverseGamma::sample(rng::Stream& stream) const {
  const double z = stream.normal();
  return 2.0 * b_ / (z * z);
}

// ---------------------------------------------------------------------------
// Correlated Brownian motion

CrtPath sample_crt(const LqgParams& params, double T, double step, std::uint64_t seed) {
  if (!(T > 0.0) || !(step > 0.0)) throw PreconditionError("sample_crt needs T > 0 and step > 0");
  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(T / step)));
  const double h = T / static_cast<double>(n);
  const double sd = params.a() * std::sqrt(h);
  const double c = params.corr;
  const double s = std::sqrt(1.0 - c * c);
  CrtPath path;
  path.params = params;
  path.times.resize(n + 1);
  path.X.assign(n + 1, 0.0);
  path.Y.assign(n + 1, 0.0);
  rng::Stream stream(seed);
  for (std::size_t k = 0; k < n; ++k) {
    const double n1 = stream.normal();
    const double n2 = stream.normal();
    path.times[k + 1] = h * static_cast<double>(k + 1);
    path.X[k + 1] = path.X[k] + sd * n1;
    path.Y[k + 1] = path.Y[k] + sd * (c * n1 + s * n2);
  }
  return path;
}

double default_guard(double ell0) { return 1e4 * ell0 * ell0; }

CrtPath stopped_crt_disk(const LqgParams& params, double ell0, double step, std::uint64_t seed, double T_guard,
                         const StoppedCrtOptions& options) {
  if (!(ell0 > 0.0)) throw PreconditionError("stopped process needs ell0 > 0");
  if (!(step > 0.0) || !(T_guard > 0.0)) throw PreconditionError("stopped process needs step > 0 and T_guard > 0");
  const double var_s = params.sum_variance();
  const double sd_s = std::sqrt(var_s);
  const double sd_d = std::sqrt(params.difference_variance());
  rng::Stream stream(seed);
  CrtPath path;
  path.params = params;
  auto push = [&](double t, double s, double d) {
    path.times.push_back(t);
    path.X.push_back(0.5 * (s - ell0 + d));
    path.Y.push_back(0.5 * (s - ell0 - d));
  };
  push(0.0, ell0, 0.0);
  double t = 0.0, s = ell0, d = 0.0;
  const double floor = step * options.min_fraction;
  for (;;) {
    double h = std::max(step * (s / ell0) * (s / ell0), floor);
    bool last = false;
    if (t + h >= T_guard) {
      h = T_guard - t;
      last = true;
    }
    const double sq = std::sqrt(h);
    const double s_next = s + sd_s * sq * stream.normal();
    const double d_next = options.record ? d + sd_d * sq * stream.normal() : 0.0;
    bool crossed = s_next <= 0.0;
    double frac = 0.0;
    if (crossed) {
      frac = s / (s - s_next);
    } else {
      // probability that the Brownian bridge between s and s_next dips below 0
      const double e = -2.0 * s * s_next / (var_s * h);
      if (e > -40.0 && stream.uniform() < std::exp(e)) {
        crossed = true;
        frac = s / (s + s_next);
      }
    }
    if (crossed) {
      const double tau = t + frac * h;
      const double d_tau = options.record ? d + frac * (d_next - d) : sd_d * std::sqrt(tau) * stream.normal();
      push(tau, 0.0, d_tau);
      path.stop_time = tau;
      return path;
    }
    t += h;
    s = s_next;
    d = d_next;
    if (options.record) push(t, s, d);
    if (last) {
      if (!options.record) push(t, s, sd_d * std::sqrt(t) * stream.normal());
      path.censored = true;
      return path;
    }
  }
}

// ---------------------------------------------------------------------------
// Excursion pair

double conditioned_duration(const LqgParams& params, double ell, rng::Stream& stream) {
  if (!(ell >= 0.0)) throw PreconditionError("start must be non-negative");
  const double u = stream.uniform();
  if (ell == 0.0) return 1.0 / (u * u);
  // tau = (ell / sigma)^2 / Z^2 >= 1 iff |Z| <= ell / sigma
  const double z_max = ell / std::sqrt(params.sum_variance());
  const double z = std::sqrt(2.0) * boost::math::erf_inv(u * std::erf(z_max / std::sqrt(2.0)));
  if (!(z > 0.0)) return std::numeric_limits<double>::infinity();
  return std::max(1.0, z_max * z_max / (z * z));
}

double conditioned_first_passage_marginal(const LqgParams& params, double ell, double t, std::uint64_t seed) {
  if (!(t > 0.0 && t < 1.0)) throw PreconditionError("marginal time must lie in (0, 1)");
  rng::Stream stream(seed);
  const double sigma = std::sqrt(params.sum_variance());
  const double tau = conditioned_duration(params, ell, stream);
  // Bessel-3 bridge from ell / sigma to 0: norm of a 3d Brownian bridge
  const double sd = std::sqrt(t * (tau - t) / tau);
  const double x0 = (1.0 - t / tau) * ell / sigma;
  const double x = x0 + sd * stream.normal();
  const double y = sd * stream.normal();
  const double z = sd * stream.normal();
  return sigma * std::sqrt(x * x + y * y + z * z);
}

SpherePair sample_sphere_pair(const LqgParams& params, double step, std::uint64_t seed,
                              const SpherePairOptions& options) {
  if (!(step > 0.0)) throw PreconditionError("sphere pair needs step > 0");
  if (!(options.ell_min >= 0.0) || options.max_steps < 1) throw PreconditionError("invalid sphere pair options");
  rng::Stream stream(seed);
  const double sigma = std::sqrt(params.sum_variance());
  const double sd_z = std::sqrt(params.difference_variance());
  SpherePair pair;
  pair.tau = conditioned_duration(params, options.ell_min, stream);
  if (!std::isfinite(pair.tau)) throw DiagnosticError("excursion duration overflowed");
  const double steps = std::min(std::ceil(pair.tau / step), static_cast<double>(options.max_steps));
  const std::size_t n = std::max<std::size_t>(2, static_cast<std::size_t>(steps));
  const double h = pair.tau / static_cast<double>(n);
  pair.times.resize(n + 1);
  pair.L.resize(n + 1);
  pair.Z.resize(n + 1);
  double x[3] = {options.ell_min / sigma, 0.0, 0.0};
  pair.L[0] = options.ell_min;
  pair.Z[0] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double rest = pair.tau - h * static_cast<double>(k);
    if (k + 1 == n) {
      x[0] = x[1] = x[2] = 0.0;
    } else {
      const double pull = h / rest;
      const double sd = std::sqrt(h * (rest - h) / rest);
      for (double& c : x) c += -c * pull + sd * stream.normal();
    }
    pair.times[k + 1] = h * static_cast<double>(k + 1);
    pair.L[k + 1] = sigma * std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    pair.Z[k + 1] = pair.Z[k] + sd_z * std::sqrt(h) * stream.normal();
  }
  pair.times[n] = pair.tau;
  return pair;
}

// ---------------------------------------------------------------------------
// Extraction

namespace {

// Coordinates in which the remaining domain is the unit disk and the chain is a
// forward radial flow; to_source maps its time-t0 points to field coordinates.
struct Frame {
  DrivingPath driving;
  double kappa = 0.0;
  loewner::ChainOptions chain_options;
  std::function<cplx(cplx, cplx*)> to_source;
  std::vector<cplx> area_start;    // time-t0 positions of area cells still outside the hull
  std::vector<double> area_mass;   // their chaos mass
  double initial_area = 0.0;       // area already inside the hull at t0
  // Preimages closer than this to the unit circle are read as boundary points:
  // below the outermost ring spacing the source grid has no finer resolution.
  double boundary_layer = 0.0;
};

struct Evaluation {
  gmc::ChaosMeasure measure;
  double L = 0.0;
  double tolerance = 0.0;
};

std::size_t grid_index(const DrivingPath& d, double t) {
  const double x = (t - d.t0()) / d.step();
  const double k = std::round(x);
  if (std::abs(x - k) > 1e-6 || k < 0.0 || k > static_cast<double>(d.steps())) {
    throw PreconditionError("schedule time " + std::to_string(t) + " is not a grid time of the chain");
  }
  return static_cast<std::size_t>(k);
}

Evaluation evaluate(const field::FieldSample& field, const LqgParams& params, const Frame& frame, std::size_t k,
                    const ExtractionOptions& o) {
  const std::size_t m = o.boundary_nodes;
  const DrivingPath& d = frame.driving;
  const double dtheta = kTwoPi / static_cast<double>(m);
  const double radius = 1.0 - o.inner_offset * dtheta;
  const cplx u = d.unit(k);
  std::vector<cplx> pre(m), deriv(m);
  parallel_for(
      m,
      [&](std::size_t j) {
        const cplx w = radius * std::polar(1.0, dtheta * static_cast<double>(j)) * u;
        cplx dflow;
        const cplx z0 = loewner::backward_flow(d, frame.kappa, d.time(k), w, &dflow, frame.chain_options);
        cplx dsrc;
        pre[j] = frame.to_source(z0, &dsrc);
        const double r = std::abs(pre[j]);
        if (frame.boundary_layer > 0.0 && r > 1.0 - frame.boundary_layer) pre[j] /= r;
        deriv[j] = dsrc * dflow * u;
      },
      o.workers);
  field::ConformalMap map;
  map.inverse = [&](cplx w, cplx* dz) {
    const std::size_t j = static_cast<std::size_t>(std::llround(wrap(std::arg(w)) / dtheta)) % m;
    *dz = deriv[j];
    return pre[j];
  };
  field::FieldSample pushed;
  try {
    pushed = field::coordinate_change(field, map, field::boundary_circle(m, dtheta), params.Q,
                                          field::Interpolation::Nearest);
  } catch (const PreconditionError& e) {
    throw DiagnosticError(std::string("extraction left the source grid: ") + e.what());
  }
  Evaluation ev;
  ev.measure = gmc::boundary_measure(pushed, params.gamma);
  ev.L = ev.measure.total;
  double half = 0.0;
  for (std::size_t k2 = 0; k2 < ev.measure.mass.size(); k2 += 2) half += 2.0 * ev.measure.mass[k2];
  ev.tolerance = ev.L > 0.0 ? std::abs(ev.L - half) / ev.L : 0.0;
  return ev;
}

BoundaryLengthProcess run_extraction(const field::FieldSample& field, const LqgParams& params, const Frame& frame,
                                     std::span<const double> schedule, const ExtractionOptions& o) {
  if (o.boundary_nodes < 8 || o.boundary_nodes % 2 != 0) throw PreconditionError("boundary_nodes must be even, >= 8");
  if (!(o.inner_offset > 0.0) || o.inner_offset * kTwoPi / static_cast<double>(o.boundary_nodes) >= 0.5) {
    throw PreconditionError("inner_offset must be positive and small");
  }
  const DrivingPath& d = frame.driving;
  std::vector<std::size_t> ks;
  for (double t : schedule) {
    const std::size_t k = grid_index(d, t);
    if (!ks.empty() && k <= ks.back()) throw PreconditionError("schedule must be strictly increasing");
    if (k == 0) continue;
    ks.push_back(k);
  }
  if (ks.empty()) throw PreconditionError("schedule has no time after the start of the chain");

  // swallowing times of the area cells
  const std::size_t k_end = ks.back();
  std::vector<double> swallow(frame.area_start.size(), std::numeric_limits<double>::infinity());
  parallel_for(
      frame.area_start.size(),
      [&](std::size_t i) {
        loewner::PointState s{frame.area_start[i]};
        loewner::advance_forward(d, frame.kappa, s, 0, k_end, frame.chain_options, false, i);
        if (s.swallowed) swallow[i] = s.swallow_time;
      },
      o.workers);
  std::vector<std::size_t> order(swallow.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return swallow[a] < swallow[b]; });
  std::size_t cursor = 0;
  double area = frame.initial_area;
  auto area_at = [&](double t) {
    while (cursor < order.size() && swallow[order[cursor]] <= t) area += frame.area_mass[order[cursor++]];
    return area;
  };

  BoundaryLengthProcess out;
  const double ref = o.reference_angle;
  loewner::PointState p{std::polar(1.0, ref) * d.unit(0)};
  auto psi_of = [&](std::size_t k) { return wrap(std::arg(p.g / d.unit(k))); };

  auto record = [&](std::size_t k, double X, double Y, const Evaluation& ev) {
    out.capacity_times.push_back(d.time(k));
    out.area_times.push_back(area_at(d.time(k)));
    out.X.push_back(X);
    out.Y.push_back(Y);
    out.L.push_back(ev.L);
    out.tolerance.push_back(ev.tolerance);
    out.reset_counts.push_back(out.resets);
  };

  Evaluation ev = evaluate(field, params, frame, 0, o);
  out.ell0 = ev.L;
  auto [last_y, last_x] = gmc::arc_split(ev.measure, 0.0, psi_of(0));
  double X = 0.0, Y = 0.0;
  record(0, X, Y, ev);

  std::size_t k = 0;
  for (std::size_t target : ks) {
    while (k < target) {
      const double psi_before = psi_of(k);
      loewner::advance_forward(d, frame.kappa, p, k, k + 1, frame.chain_options, false);
      ++k;
      if (!p.swallowed) continue;
      // The arc between the tip and the reference point closed up: on the side
      // the point approached from, the arc length is 0 and the other holds L.
      ev = evaluate(field, params, frame, k, o);
      const bool from_ccw = psi_before < std::numbers::pi;
      const double y_end = from_ccw ? 0.0 : ev.L;
      X += (ev.L - y_end) - last_x;
      Y += y_end - last_y;
      p = loewner::PointState{std::polar(1.0, ref) * d.unit(k)};
      ++out.resets;
      std::tie(last_y, last_x) = gmc::arc_split(ev.measure, 0.0, psi_of(k));
      if (k == target) record(k, X, Y, ev);
    }
    if (!out.capacity_times.empty() && out.capacity_times.back() == d.time(target)) continue;
    ev = evaluate(field, params, frame, target, o);
    const auto [arc_y, arc_x] = gmc::arc_split(ev.measure, 0.0, psi_of(target));
    X += arc_x - last_x;
    Y += arc_y - last_y;
    last_x = arc_x;
    last_y = arc_y;
    record(target, X, Y, ev);
  }
  return out;
}

}  // namespace

BoundaryLengthProcess extract_boundary_process(const field::FieldSample& field, const LqgParams& params,
                                               const loewner::LoewnerChain& chain, std::span<const double> schedule,
                                               const ExtractionOptions& options) {
  if (!field.grid || field.grid->domain() != field::Domain::Disk || !field.grid->polar()) {
    throw PreconditionError("radial extraction needs a field on a polar disk grid");
  }
  if (chain.geometry != loewner::Geometry::Radial || chain.direction != loewner::Direction::Forward) {
    throw PreconditionError("radial extraction needs a forward radial chain");
  }
  Frame frame;
  frame.driving = chain.driving;
  frame.kappa = chain.kappa;
  frame.chain_options = chain.options;
  frame.to_source = [](cplx z, cplx* dz) {
    *dz = 1.0;
    return z;
  };
  const auto& rings = field.grid->ring_coord;
  frame.boundary_layer = 0.5 * (rings.back() - rings[rings.size() - 2]);
  const gmc::ChaosMeasure area = gmc::area_measure(field, params.gamma);
  for (std::size_t k = 0; k < area.nodes.size(); ++k) {
    frame.area_start.push_back(field.grid->nodes[area.nodes[k]]);
    frame.area_mass.push_back(area.mass[k]);
  }
  return run_extraction(field, params, frame, schedule, options);
}

BoundaryLengthProcess extract_sphere_boundary_process(const field::FieldSample& field, const LqgParams& params,
                                                      const loewner::LoewnerChain& chain,
                                                      std::span<const double> schedule,
                                                      const ExtractionOptions& options) {
  if (!field.grid || field.grid->domain() != field::Domain::Cylinder) {
    throw PreconditionError("sphere extraction needs a field on a cylinder grid");
  }
  if (chain.geometry != loewner::Geometry::WholePlane) throw PreconditionError("sphere extraction needs a whole-plane chain");
  Frame frame;
  frame.driving = chain.driving.conjugate();
  frame.kappa = chain.kappa;
  frame.chain_options = chain.options;
  const double T0 = -chain.driving.t0();
  // inverted coordinate W = exp(-T0) / z, cylinder coordinate log z = -T0 - log W
  frame.to_source = [T0](cplx w, cplx* dz) {
    *dz = -1.0 / w;
    const cplx zeta = -T0 - std::log(w);
    return cplx(zeta.real(), wrap(zeta.imag()));
  };
  const gmc::ChaosMeasure area = gmc::area_measure(field, params.gamma);
  for (std::size_t k = 0; k < area.nodes.size(); ++k) {
    const cplx zeta = field.grid->nodes[area.nodes[k]];
    const cplx w = std::exp(-T0 - zeta);
    if (std::abs(w) >= 1.0) {
      frame.initial_area += area.mass[k];
    } else {
      frame.area_start.push_back(w);
      frame.area_mass.push_back(area.mass[k]);
    }
  }
  return run_extraction(field, params, frame, schedule, options);
}

void export_csv(const BoundaryLengthProcess& process, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DiagnosticError("cannot open " + path.string());
  os.precision(17);
  os << "area_time,X,Y,L,tolerance\n";
  for (std::size_t i = 0; i < process.area_times.size(); ++i) {
    os << process.area_times[i] << ',' << process.X[i] << ',' << process.Y[i] << ',' << process.L[i] << ','
       << process.tolerance[i] << '\n';
  }
}

void export_csv(const SpherePair& pair, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DiagnosticError("cannot open " + path.string());
  os.precision(17);
  os << "t,L,Z\n";
  for (std::size_t i = 0; i < pair.times.size(); ++i) os << pair.times[i] << ',' << pair.L[i] << ',' << pair.Z[i] << '\n';
}

}  // namespace lab::mot
