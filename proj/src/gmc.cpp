#include "lab/gmc.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <unsupported/Eigen/FFT>

#include "lab/error.hpp"
#include "lab/random.hpp"

namespace lab::gmc {

namespace {

void check_seiberg(const field::FieldSample& f, double gamma) {
  const double Q = 2.0 / gamma + gamma / 2.0;
  for (const field::Insertion& ins : f.insertions) {
    if (ins.strength >= Q) {
      throw PreconditionError("insertion " + std::to_string(ins.strength) + " violates the Seiberg bound Q = " +
                              std::to_string(Q));
    }
  }
}

ChaosMeasure build(const field::FieldSample& f, double gamma, MeasureKind kind) {
  if (!(gamma > 0.0 && gamma < 2.0)) throw PreconditionError("gamma must lie in (0, 2)");
  if (!f.grid || f.gaussian.size() != f.grid->size()) throw PreconditionError("field does not match its grid");
  check_seiberg(f, gamma);
  const field::GridSpec& g = *f.grid;
  ChaosMeasure m;
  m.kind = kind;
  m.gamma = gamma;
  m.grid = f.grid;
  const bool area = kind == MeasureKind::Area;
  const double coupling = area ? gamma : 0.5 * gamma;
  const double power = area ? gamma * gamma / 2.0 : gamma * gamma / 4.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.is_boundary(i) == area) continue;
    const double v = power * std::log(g.node_eps[i]) + coupling * f.value(i);
    const double mass = std::exp(v) * g.cell[i];
    m.nodes.push_back(i);
    m.mass.push_back(mass);
    m.total += mass;
  }
  if (!std::isfinite(m.total)) throw DiagnosticError("chaos measure overflowed");
  return m;
}

double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

}  // namespace

ChaosMeasure area_measure(const field::FieldSample& field, double gamma) { return build(field, gamma, MeasureKind::Area); }

ChaosMeasure boundary_measure(const field::FieldSample& field, double gamma) {
  return build(field, gamma, MeasureKind::Boundary);
}

std::pair<double, double> arc_split(const ChaosMeasure& m, double a1, double a2) {
  if (m.kind != MeasureKind::Boundary || !m.grid || m.grid->domain() != field::Domain::Disk) {
    throw PreconditionError("arc_split needs a disk boundary measure");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto wrap = [&](double a) {
    a = std::fmod(a, two_pi);
    return a < 0.0 ? a + two_pi : a;
  };
  const double len = wrap(a2 - a1);
  double first = 0.0;
  for (std::size_t k = 0; k < m.nodes.size(); ++k) {
    const std::size_t i = m.nodes[k];
    const double width = m.grid->cell[i];
    const double s = wrap(std::arg(m.grid->nodes[i]) - 0.5 * width - a1);
    const double covered = overlap(s, s + width, 0.0, len) + overlap(s - two_pi, s + width - two_pi, 0.0, len);
    first += m.mass[k] * std::min(1.0, covered / width);
  }
  return {first, m.total - first};
}

void export_csv(const ChaosMeasure& m, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DiagnosticError("cannot open " + path.string());
  os << "node,x,y,mass\n";
  os.precision(17);
  for (std::size_t k = 0; k < m.nodes.size(); ++k) {
    const auto z = m.grid->nodes[m.nodes[k]];
    os << m.nodes[k] << ',' << z.real() << ',' << z.imag() << ',' << m.mass[k] << '\n';
  }
}

LogPolarDisk::LogPolarDisk(const LqgParams& params, double alpha, double beta, const LogPolarOptions& options)
    : params_(params), alpha_(alpha), beta_(beta), angles_(options.angles) {
  const double g = params.gamma;
  if (alpha >= params.Q) throw PreconditionError("bulk insertion violates the Seiberg bound");
  if (!(g * beta / 2.0 < 1.0)) throw PreconditionError("boundary insertion needs gamma beta / 2 < 1");
  if (angles_ < 8 || angles_ % 2) throw PreconditionError("log-polar grid needs an even number of angles >= 8");
  if (!(options.depth > 0.0)) throw PreconditionError("log-polar depth must be positive");
  modes_ = angles_ / 2 - 1;
  spacing_ = 2.0 * std::numbers::pi / static_cast<double>(angles_);
  rings_ = static_cast<std::size_t>(std::ceil(options.depth / spacing_));
  const double h = spacing_;

  auto lateral_variance = [&](double t) {
    double v = 0.0;
    for (std::size_t k = 1; k <= modes_; ++k) v += (1.0 + std::exp(-2.0 * static_cast<double>(k) * t)) / static_cast<double>(k);
    return v;
  };
  boost::math::quadrature::tanh_sinh<double> ts;
  // radial factor |z|^2 e^{gamma alpha t} (1 - |z|^2)^{-gamma^2/2}, integrated over each ring's cell in t
  auto radial = [&](double s) { return std::exp((g * alpha - 2.0) * s) * std::pow(-std::expm1(-2.0 * s), -g * g / 2.0); };
  area_log_weight_.resize(rings_ * angles_);
  for (std::size_t i = 0; i < rings_; ++i) {
    const double t0 = static_cast<double>(i) * h, t = t0 + 0.5 * h;
    const double T = i == 0 ? ts.integrate(radial, t0, t0 + h)
                            : boost::math::quadrature::gauss_kronrod<double, 15>::integrate(radial, t0, t0 + h, 0);
    const double base = std::log(T) - g * g / 2.0 * (t + lateral_variance(t));
    for (std::size_t j = 0; j < angles_; ++j) {
      const double a0 = static_cast<double>(j) * h;
      // boundary insertion |1 - z|^{-gamma beta} across the cell at the node's radius
      auto angular = [&](double th) { return std::pow(std::abs(1.0 - std::polar(std::exp(-t), th)), -g * beta); };
      const double A = t < 1.0 ? boost::math::quadrature::gauss_kronrod<double, 15>::integrate(angular, a0, a0 + h, 5)
                               : angular(a0 + 0.5 * h) * h;
      area_log_weight_[i * angles_ + j] = base + std::log(A);
    }
  }
  double vb = 0.0;
  for (std::size_t k = 1; k <= modes_; ++k) vb += 2.0 / static_cast<double>(k);
  boundary_log_weight_.resize(angles_);
  auto edge = [&](double th) { return std::pow(std::abs(2.0 * std::sin(th / 2.0)), -g * beta / 2.0); };
  for (std::size_t j = 0; j < angles_; ++j) {
    const double a0 = static_cast<double>(j) * h;
    boundary_log_weight_[j] = -g * g / 8.0 * vb + std::log(ts.integrate(edge, a0, a0 + h));
  }
}

field::cplx LogPolarDisk::node(std::size_t ring, std::size_t angle) const {
  return std::polar(std::exp(-(static_cast<double>(ring) + 0.5) * spacing_), (static_cast<double>(angle) + 0.5) * spacing_);
}

template <class Sink>
void LogPolarDisk::generate(std::uint64_t seed, Sink&& sink) const {
  rng::Stream st(seed);
  const std::size_t K = modes_, N = angles_;
  std::vector<double> a(K + 1), b(K + 1);
  for (std::size_t k = 1; k <= K; ++k) {
    const double sd = std::sqrt(2.0 / static_cast<double>(k));
    a[k] = sd * st.normal();
    b[k] = sd * st.normal();
  }
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<std::complex<double>> spectrum(N), out(N);
  std::vector<double> values(N);
  std::vector<std::complex<double>> shift(K + 1);
  for (std::size_t k = 1; k <= K; ++k) shift[k] = std::polar(1.0, 0.5 * static_cast<double>(k) * spacing_);
  auto lateral = [&](double radial) {
    std::fill(spectrum.begin(), spectrum.end(), std::complex<double>(0.0));
    for (std::size_t k = 1; k <= K; ++k) spectrum[k] = std::complex<double>(a[k], -b[k]) * shift[k];
    fft.inv(out, spectrum);
    for (std::size_t j = 0; j < N; ++j) values[j] = radial + out[j].real();
  };
  lateral(0.0);
  sink(std::size_t(-1), std::span<const double>(values));
  // exact Ornstein-Uhlenbeck transitions for the half step to the first ring and the full steps after it
  std::vector<double> decay_half(K + 1), sd_half(K + 1), decay_full(K + 1), sd_full(K + 1);
  for (std::size_t k = 1; k <= K; ++k) {
    const double kk = static_cast<double>(k);
    decay_half[k] = std::exp(-kk * spacing_ / 2.0);
    sd_half[k] = std::sqrt(-std::expm1(-kk * spacing_) / kk);
    decay_full[k] = std::exp(-kk * spacing_);
    sd_full[k] = std::sqrt(-std::expm1(-2.0 * kk * spacing_) / kk);
  }
  double B = 0.0;
  for (std::size_t i = 0; i < rings_; ++i) {
    const bool first = i == 0;
    const double dt = first ? spacing_ / 2.0 : spacing_;
    B += std::sqrt(dt) * st.normal();
    const auto& decay = first ? decay_half : decay_full;
    const auto& sd = first ? sd_half : sd_full;
    for (std::size_t k = 1; k <= K; ++k) {
      a[k] = decay[k] * a[k] + sd[k] * st.normal();
      b[k] = decay[k] * b[k] + sd[k] * st.normal();
    }
    lateral(B);
    sink(i, std::span<const double>(values));
  }
}

void LogPolarDisk::sample_gaussian(std::uint64_t seed, std::vector<double>& interior, std::vector<double>& boundary) const {
  interior.assign(rings_ * angles_, 0.0);
  boundary.assign(angles_, 0.0);
  generate(seed, [&](std::size_t ring, std::span<const double> v) {
    if (ring == std::size_t(-1)) {
      std::copy(v.begin(), v.end(), boundary.begin());
    } else {
      std::copy(v.begin(), v.end(), interior.begin() + static_cast<std::ptrdiff_t>(ring * angles_));
    }
  });
}

LogPolarDisk::Masses LogPolarDisk::masses(std::span<const double> interior, std::span<const double> boundary) const {
  if (interior.size() != rings_ * angles_ || boundary.size() != angles_) {
    throw PreconditionError("field does not match the log-polar grid");
  }
  const double g = params_.gamma;
  Masses m;
  for (std::size_t i = 0; i < interior.size(); ++i) m.area += std::exp(g * interior[i] + area_log_weight_[i]);
  for (std::size_t j = 0; j < angles_; ++j) m.length += std::exp(0.5 * g * boundary[j] + boundary_log_weight_[j]);
  if (!std::isfinite(m.area) || !std::isfinite(m.length)) throw DiagnosticError("log-polar chaos overflowed");
  return m;
}

LogPolarDisk::Masses LogPolarDisk::sample_masses(std::uint64_t seed) const {
  const double g = params_.gamma;
  Masses m;
  generate(seed, [&](std::size_t ring, std::span<const double> v) {
    if (ring == std::size_t(-1)) {
      for (std::size_t j = 0; j < angles_; ++j) m.length += std::exp(0.5 * g * v[j] + boundary_log_weight_[j]);
    } else {
      const double* w = area_log_weight_.data() + ring * angles_;
      for (std::size_t j = 0; j < angles_; ++j) m.area += std::exp(g * v[j] + w[j]);
    }
  });
  if (!std::isfinite(m.area) || !std::isfinite(m.length)) throw DiagnosticError("log-polar chaos overflowed");
  return m;
}

LogPolarDisk::FixedLength LogPolarDisk::sample_fixed_length(double ell, std::uint64_t seed) const {
  if (!(ell > 0.0)) throw PreconditionError("boundary length must be positive");
  const Masses m = sample_masses(seed);
  const double g = params_.gamma;
  const double p = (2.0 * alpha_ + beta_ - 2.0 * params_.Q) / g;
  FixedLength f;
  f.raw_length = m.length;
  f.area = m.area * (ell / m.length) * (ell / m.length);
  f.weight = 2.0 / g * std::pow(ell, p - 1.0) / std::pow(m.length, p);
  return f;
}

}  // namespace lab::gmc
