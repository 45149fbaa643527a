#include "lab/loewner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "lab/error.hpp"
#include "lab/parallel.hpp"
#include "lab/random.hpp"

namespace lab::loewner {

namespace {

// Positions inside a grid interval are counted in units of step / 2^kFine.
constexpr int kFine = 60;
constexpr std::uint64_t kFull = std::uint64_t{1} << kFine;

int level_of(std::uint64_t pos) { return pos == 0 ? 0 : kFine - std::countr_zero(pos); }

double angle_at(const DrivingPath& d, std::size_t k, std::uint64_t pos) {
  if (pos == 0) return d.value(k);
  if (pos == kFull) return d.value(k + 1);
  const int level = level_of(pos);
  return d.refined(k, level, pos >> (kFine - level));
}

struct StepRule {
  double coef;  // allowed substep is coef * d^2
  double step;
  int max_refine;

  int level_for(double dist) const {
    const double allowed = coef * dist * dist;
    if (allowed >= step) return 0;
    if (allowed <= 0.0) return max_refine + 1;
    return static_cast<int>(std::ceil(std::log2(step / allowed)));
  }
};

StepRule make_rule(const DrivingPath& d, double kappa, const ChainOptions& o) {
  const double noise = kappa > 0.0 ? o.noise_fraction * o.noise_fraction / kappa : 1.0;
  return StepRule{std::min(0.5 * o.drift_fraction, noise), d.step(), o.max_refine};
}

void clamp_to_disk(cplx& g) {
  const double r = std::abs(g);
  if (r > 1.0) g /= r;
}

std::size_t grid_index(const DrivingPath& d, double t) {
  const double x = (t - d.t0()) / d.step();
  const double k = std::round(x);
  if (std::abs(x - k) > 1e-6 || k < 0.0 || k > static_cast<double>(d.steps())) {
    throw PreconditionError("time " + std::to_string(t) + " is not a grid time of the chain");
  }
  return static_cast<std::size_t>(k);
}

std::vector<std::size_t> record_indices(std::size_t steps, std::size_t stride) {
  std::vector<std::size_t> idx;
  if (stride == 0) {
    idx.push_back(steps);
    return idx;
  }
  for (std::size_t k = 0; k <= steps; k += stride) idx.push_back(k);
  if (idx.back() != steps) idx.push_back(steps);
  return idx;
}

void validate_step(double T, double step) {
  if (!(step > 0.0) || !(T >= 0.0) || !std::isfinite(T)) throw PreconditionError("need step > 0 and T >= 0");
}

std::size_t step_count(double T, double step) { return static_cast<std::size_t>(std::llround(T / step)); }

}  // namespace

cplx mobius_vector_field(cplx u, cplx z) {
  if (u == z) throw SingularityError("mobius_vector_field evaluated at z == u");
  return z * (u + z) / (u - z);
}

cplx mobius_vector_field_dz(cplx u, cplx z) {
  if (u == z) throw SingularityError("mobius_vector_field_dz evaluated at z == u");
  const cplx diff = u - z;
  return (u + z) / diff + 2.0 * u * z / (diff * diff);
}

DrivingPath::DrivingPath(Kind kind, std::vector<double> values, double step, double t0, double bridge_scale,
                         std::uint64_t seed)
    : kind_(kind), values_(std::move(values)), step_(step), t0_(t0), bridge_scale_(bridge_scale), seed_(seed) {
  if (values_.empty()) throw PreconditionError("driving path needs at least one value");
  if (!(step_ > 0.0)) throw PreconditionError("driving path step must be positive");
}

double DrivingPath::refined(std::size_t k, int level, std::uint64_t index) const {
  if (k >= steps()) {
    if (k == steps() && index == 0) return values_[k];
    throw PreconditionError("refined driving requested past the horizon");
  }
  if (level < 0 || level > kFine) throw PreconditionError("refinement level out of range");
  const std::uint64_t full = std::uint64_t{1} << level;
  if (index == 0) return values_[k];
  if (index >= full) return values_[k + 1];
  double a = values_[k], b = values_[k + 1];
  std::uint64_t lo = 0, hi = full;
  for (int depth = 1; depth <= level; ++depth) {
    const std::uint64_t mid = (lo + hi) / 2;
    double m = 0.5 * (a + b);
    if (bridge_scale_ != 0.0) {
      const std::uint64_t node = mid >> (level - depth);
      const double sd = bridge_scale_ * std::sqrt(step_ / static_cast<double>(std::uint64_t{1} << (depth + 1)));
      m += sd * rng::keyed_normal(rng::hash(seed_, k, static_cast<std::uint64_t>(depth), node));
    }
    if (index == mid) return m;
    if (index < mid) {
      hi = mid;
      b = m;
    } else {
      lo = mid;
      a = m;
    }
  }
  return 0.5 * (a + b);
}

DrivingPath DrivingPath::conjugate() const {
  std::vector<double> neg(values_);
  for (double& v : neg) v = -v;
  return DrivingPath(kind_, std::move(neg), step_, t0_, bridge_scale_, rng::hash(seed_, 0x1f));
}

DrivingPath sample_radial_driving(double kappa, double T, double step, std::uint64_t seed, double t0) {
  if (!(kappa > 0.0)) throw PreconditionError("kappa must be positive");
  validate_step(T, step);
  const std::size_t n = step_count(T, step);
  std::vector<double> theta(n + 1, 0.0);
  rng::Stream stream(seed);
  const double sd = std::sqrt(kappa * step);
  for (std::size_t k = 0; k < n; ++k) theta[k + 1] = theta[k] + sd * stream.normal();
  return DrivingPath(Kind::Radial, std::move(theta), step, t0, std::sqrt(kappa), rng::hash(seed, 0xb1d6e));
}

DrivingPath constant_radial_driving(double angle, double T, double step) {
  validate_step(T, step);
  return DrivingPath(Kind::Radial, std::vector<double>(step_count(T, step) + 1, angle), step, 0.0, 0.0, 0);
}

void advance_forward(const DrivingPath& d, double kappa, PointState& s, std::size_t k_begin, std::size_t k_end,
                     const ChainOptions& o, bool track_derivative, std::size_t point_index) {
  if (s.swallowed) return;
  const StepRule rule = make_rule(d, kappa, o);
  const double h = d.step();
  if (std::abs(s.g - d.unit(k_begin)) < o.swallow_tol) {
    s.swallowed = true;
    s.swallow_time = d.time(k_begin);
    return;
  }
  for (std::size_t k = k_begin; k < k_end; ++k) {
    const cplx u = d.unit(k);
    const int need = rule.level_for(std::abs(s.g - u));
    if (need == 0) {
      if (track_derivative) s.dg *= 1.0 + mobius_vector_field_dz(u, s.g) * h;
      s.g += mobius_vector_field(u, s.g) * h;
      clamp_to_disk(s.g);
    } else {
      std::uint64_t pos = 0;
      while (pos < kFull) {
        const cplx ul = std::polar(1.0, angle_at(d, k, pos));
        const double dist = std::abs(s.g - ul);
        if (dist < o.swallow_tol) {
          s.swallowed = true;
          s.swallow_time = d.time(k) + h * std::ldexp(static_cast<double>(pos), -kFine);
          return;
        }
        const int level = std::max(rule.level_for(dist), level_of(pos));
        if (level > o.max_refine) {
          throw StepUnderflowError("step-size underflow near the singularity for point " + std::to_string(point_index),
                                   point_index);
        }
        const double dt = std::ldexp(h, -level);
        if (track_derivative) s.dg *= 1.0 + mobius_vector_field_dz(ul, s.g) * dt;
        s.g += mobius_vector_field(ul, s.g) * dt;
        clamp_to_disk(s.g);
        pos += std::uint64_t{1} << (kFine - level);
      }
    }
    if (std::abs(s.g - d.unit(k + 1)) < o.swallow_tol) {
      s.swallowed = true;
      s.swallow_time = d.time(k + 1);
      return;
    }
  }
}

namespace {

LoewnerChain integrate_forward(const DrivingPath& driving, double kappa, std::span<const cplx> points,
                               const ChainOptions& options, Geometry geometry,
                               const std::vector<cplx>& start_values) {
  LoewnerChain chain;
  chain.geometry = geometry;
  chain.direction = Direction::Forward;
  chain.driving = driving;
  chain.options = options;
  chain.kappa = kappa;
  const auto rec = record_indices(driving.steps(), options.record_stride);
  for (std::size_t k : rec) chain.record_times.push_back(driving.time(k));
  chain.tracked.resize(points.size());
  parallel_for(
      points.size(),
      [&](std::size_t i) {
        TrackedPoint& tp = chain.tracked[i];
        tp.initial = points[i];
        PointState s{start_values[i]};
        std::size_t k = 0;
        for (std::size_t r : rec) {
          advance_forward(driving, kappa, s, k, r, options, options.track_derivative, i);
          k = r;
          if (options.record_stride != 0) {
            tp.trajectory.push_back(s.g);
            if (options.track_derivative) tp.derivative.push_back(s.dg);
          }
        }
        if (s.swallowed) tp.swallow_time = s.swallow_time;
        tp.final_value = s.g;
        tp.final_derivative = s.dg;
      },
      options.workers);
  return chain;
}

}  // namespace

LoewnerChain evolve_forward_radial(const DrivingPath& driving, double kappa, std::span<const cplx> points,
                                   const ChainOptions& options) {
  if (driving.kind() != Kind::Radial) throw PreconditionError("forward radial chain needs a radial driving path");
  std::vector<cplx> start(points.begin(), points.end());
  for (const cplx& z : start) {
    if (!(std::abs(z) <= 1.0)) throw PreconditionError("forward radial points must lie in the closed unit disk");
  }
  return integrate_forward(driving, kappa, points, options, Geometry::Radial, start);
}

LoewnerChain evolve_forward_radial(double kappa, double T, double step, std::uint64_t seed,
                                   std::span<const cplx> points, const ChainOptions& options) {
  return evolve_forward_radial(sample_radial_driving(kappa, T, step, seed), kappa, points, options);
}

cplx backward_flow(const DrivingPath& d, double kappa, double t, cplx w, cplx* inverse_derivative,
                   const ChainOptions& o) {
  if (!(std::abs(w) <= 1.0 + 1e-12)) throw PreconditionError("backward flow needs a point of the closed unit disk");
  const std::size_t kt = grid_index(d, t);
  const StepRule rule = make_rule(d, kappa, o);
  const double h = d.step();
  cplx z = w;
  cplx dz{1.0, 0.0};
  for (std::size_t k = kt; k-- > 0;) {
    const cplx ul0 = d.unit(k);
    const cplx ur0 = d.unit(k + 1);
    const int need = std::max(rule.level_for(std::abs(z - ul0)), rule.level_for(std::abs(z - ur0)));
    if (need == 0) {
      if (inverse_derivative) dz *= 1.0 - mobius_vector_field_dz(ul0, z) * h;
      z -= mobius_vector_field(ul0, z) * h;
      clamp_to_disk(z);
      continue;
    }
    std::uint64_t pos = kFull;
    while (pos > 0) {
      const cplx ur = std::polar(1.0, angle_at(d, k, pos));
      int level = std::max(rule.level_for(std::abs(z - ur)), level_of(pos));
      cplx ul;
      for (;;) {
        if (level > o.max_refine) throw StepUnderflowError("step-size underflow in backward flow", 0);
        ul = std::polar(1.0, angle_at(d, k, pos - (std::uint64_t{1} << (kFine - level))));
        const int again = rule.level_for(std::abs(z - ul));
        if (again <= level) break;
        level = again;
      }
      const double dt = std::ldexp(h, -level);
      if (inverse_derivative) dz *= 1.0 - mobius_vector_field_dz(ul, z) * dt;
      z -= mobius_vector_field(ul, z) * dt;
      clamp_to_disk(z);
      pos -= std::uint64_t{1} << (kFine - level);
    }
  }
  if (inverse_derivative) *inverse_derivative = dz;
  return z;
}

cplx invert_chain_at(const LoewnerChain& chain, double t, cplx w, double tol, int max_newton) {
  if (chain.geometry != Geometry::Radial || chain.direction != Direction::Forward) {
    throw PreconditionError("invert_chain_at needs a forward radial chain");
  }
  if (t > chain.horizon() + 1e-12 || t < chain.driving.t0()) throw PreconditionError("t outside chain horizon");
  const DrivingPath& d = chain.driving;
  const std::size_t kt = grid_index(d, t);
  cplx z = backward_flow(d, chain.kappa, t, w, nullptr, chain.options);
  double best = std::numeric_limits<double>::infinity();
  cplx best_z = z;
  for (int it = 0; it <= max_newton; ++it) {
    PointState s{z};
    try {
      advance_forward(d, chain.kappa, s, 0, kt, chain.options, true);
    } catch (const StepUnderflowError&) {
      break;
    }
    if (s.swallowed) break;
    const double residual = std::abs(s.g - w);
    if (residual < best) {
      best = residual;
      best_z = z;
    }
    if (residual < tol) return z;
    if (it == max_newton) break;
    cplx next = z - (s.g - w) / s.dg;
    if (std::abs(next) > 1.0) next /= std::abs(next);
    z = next;
  }
  if (best < tol) return best_z;
  throw ConvergenceError("Newton polish of the inverse map did not reach tolerance", best);
}

LoewnerChain evolve_reverse_radial(double kappa, double T, double step, std::uint64_t seed,
                                   std::span<const cplx> points, const ChainOptions& options) {
  validate_step(T, step);
  for (const cplx& z : points) {
    if (!(std::abs(z) <= 1.0)) throw PreconditionError("reverse radial points must lie in the closed unit disk");
    if (z == cplx(1.0, 0.0)) throw SingularityError("reverse radial flow is singular at the seed point 1");
  }
  const DrivingPath d = sample_radial_driving(kappa, T, step, seed);
  const StepRule rule = make_rule(d, kappa, options);
  const double h = d.step();
  LoewnerChain chain;
  chain.geometry = Geometry::Radial;
  chain.direction = Direction::Reverse;
  chain.driving = d;
  chain.options = options;
  chain.kappa = kappa;
  const auto rec = record_indices(d.steps(), options.record_stride);
  for (std::size_t k : rec) chain.record_times.push_back(d.time(k));
  chain.tracked.resize(points.size());

  auto drift = [](cplx f) { return (1.0 + f) / (1.0 - f); };
  auto drift_dz = [](cplx f) { return 2.0 / ((1.0 - f) * (1.0 - f)); };

  parallel_for(
      points.size(),
      [&](std::size_t i) {
        TrackedPoint& tp = chain.tracked[i];
        tp.initial = points[i];
        const bool origin = points[i] == cplx(0.0, 0.0);
        cplx y = origin ? cplx(0.0, 0.0) : std::log(points[i]);
        cplx logd{0.0, 0.0};
        auto value = [&] { return origin ? cplx(0.0, 0.0) : std::exp(y); };
        auto substep = [&](double dt, double dtheta) {
          const cplx f = value();
          const cplx b = origin ? cplx(1.0, 0.0) : drift(f);
          const cplx extra = origin ? cplx(0.0, 0.0) : drift_dz(f) * f;
          logd += -b * dt - cplx(0.0, dtheta) - extra * dt;
          if (!origin) y += -b * dt - cplx(0.0, dtheta);
          if (!origin && y.real() > 0.0) y = cplx(0.0, y.imag());
        };
        std::size_t next_rec = 0;
        auto record = [&](std::size_t k) {
          while (next_rec < rec.size() && rec[next_rec] == k) {
            if (options.record_stride != 0) {
              tp.trajectory.push_back(value());
              if (options.track_derivative) tp.derivative.push_back(std::exp(logd));
            }
            ++next_rec;
          }
        };
        record(0);
        for (std::size_t k = 0; k < d.steps(); ++k) {
          const double dist = origin ? 1.0 : std::abs(value() - 1.0);
          if (rule.level_for(dist) == 0) {
            substep(h, d.value(k + 1) - d.value(k));
          } else {
            std::uint64_t pos = 0;
            double theta = d.value(k);
            while (pos < kFull) {
              const int level = std::max(rule.level_for(std::abs(value() - 1.0)), level_of(pos));
              if (level > options.max_refine) {
                throw StepUnderflowError("step-size underflow in reverse flow for point " + std::to_string(i), i);
              }
              const std::uint64_t next = pos + (std::uint64_t{1} << (kFine - level));
              const double theta_next = angle_at(d, k, next);
              substep(std::ldexp(h, -level), theta_next - theta);
              theta = theta_next;
              pos = next;
            }
          }
          record(k + 1);
        }
        tp.final_value = value();
        tp.final_derivative = std::exp(logd);
      },
      options.workers);
  return chain;
}

ChordalRhoResult evolve_reverse_chordal_rho(double kappa, double rho, cplx z0, double T, double step,
                                            std::uint64_t seed, std::span<const cplx> points,
                                            const ChainOptions& options) {
  validate_step(T, step);
  if (!(kappa > 0.0)) throw PreconditionError("kappa must be positive");
  if (!(z0.imag() > 0.0)) throw PreconditionError("force point must lie in the open upper half-plane");
  for (const cplx& z : points) {
    if (!(z.imag() > 0.0)) throw PreconditionError("tracked points must lie in the open upper half-plane");
  }
  const std::size_t n = step_count(T, step);
  rng::Stream stream(seed);
  const double sd = std::sqrt(kappa * step);

  std::vector<double> w(n + 1, 0.0);
  std::vector<cplx> force(n + 1);
  std::vector<cplx> g(points.begin(), points.end());  // uncentered reverse maps
  cplx gf = z0;
  force[0] = gf;

  ChordalRhoResult out;
  LoewnerChain& chain = out.chain;
  chain.geometry = Geometry::Chordal;
  chain.direction = Direction::Reverse;
  chain.options = options;
  chain.kappa = kappa;
  const auto rec = record_indices(n, options.record_stride);
  chain.tracked.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) chain.tracked[i].initial = points[i];
  std::size_t next_rec = 0;
  auto record = [&](std::size_t k) {
    while (next_rec < rec.size() && rec[next_rec] == k) {
      chain.record_times.push_back(static_cast<double>(k) * step);
      if (options.record_stride != 0) {
        for (std::size_t i = 0; i < g.size(); ++i) chain.tracked[i].trajectory.push_back(g[i] - w[k]);
      }
      ++next_rec;
    }
  };
  record(0);
  for (std::size_t k = 0; k < n; ++k) {
    const cplx zf = gf - w[k];
    if (std::abs(zf) < options.swallow_tol) throw SingularityError("force point reached the driving function");
    const double dw = -rho * (1.0 / zf).real() * step + sd * stream.normal();
    gf += -2.0 / zf * step;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const cplx zi = g[i] - w[k];
      g[i] += -2.0 / zi * step;
    }
    w[k + 1] = w[k] + dw;
    force[k + 1] = gf - w[k + 1];
    record(k + 1);
  }
  for (std::size_t i = 0; i < g.size(); ++i) chain.tracked[i].final_value = g[i] - w[n];
  chain.driving = DrivingPath(Kind::Chordal, std::move(w), step, 0.0, 0.0, seed);
  out.force_trajectory = std::move(force);
  return out;
}

LoewnerChain simulate_whole_plane(double kappa, double T0, double T, double step, std::uint64_t seed,
                                  std::span<const cplx> points, const ChainOptions& options) {
  if (!(T0 > 0.0)) throw PreconditionError("whole-plane start offset T0 must be positive");
  validate_step(T0 + T, step);
  const double scale = std::exp(-T0);
  std::vector<cplx> start;
  for (const cplx& z : points) {
    if (!(std::abs(z) > scale)) {
      throw PreconditionError("whole-plane points must satisfy |z| > exp(-T0)");
    }
    start.push_back(scale / z);
  }
  // Inverted coordinates are driven by conj(U) = exp(-i theta).
  DrivingPath theta = sample_radial_driving(kappa, T0 + T, step, seed, -T0);
  const DrivingPath inverted = theta.conjugate();
  LoewnerChain chain = integrate_forward(inverted, kappa, points, options, Geometry::WholePlane, start);
  chain.driving = theta;
  for (TrackedPoint& tp : chain.tracked) {
    for (std::size_t r = 0; r < tp.trajectory.size(); ++r) {
      const cplx wv = tp.trajectory[r];
      if (!tp.derivative.empty()) tp.derivative[r] = tp.derivative[r] * scale / (tp.initial * tp.initial * wv * wv);
      tp.trajectory[r] = 1.0 / wv;
    }
    tp.final_derivative = tp.final_derivative * scale / (tp.initial * tp.initial * tp.final_value * tp.final_value);
    tp.final_value = 1.0 / tp.final_value;
  }
  return chain;
}

double capacity_error(const LoewnerChain& chain) {
  for (const TrackedPoint& tp : chain.tracked) {
    if (tp.initial != cplx(0.0, 0.0)) continue;
    if (tp.derivative.size() != chain.record_times.size()) {
      throw PreconditionError("capacity_error needs derivatives recorded at every record time");
    }
    double worst = 0.0;
    const double sign = chain.direction == Direction::Forward ? 1.0 : -1.0;
    for (std::size_t r = 0; r < tp.derivative.size(); ++r) {
      const double t = chain.record_times[r] - chain.driving.t0();
      worst = std::max(worst, std::abs(std::log(std::abs(tp.derivative[r])) - sign * t));
    }
    return worst;
  }
  throw PreconditionError("capacity_error needs the origin among the tracked points");
}

}  // namespace lab::loewner
