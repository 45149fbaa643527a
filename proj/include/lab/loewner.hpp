#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lab::loewner {

using cplx = std::complex<double>;

/// Radial Loewner vector field z (u + z) / (u - z). Throws SingularityError at z == u.
cplx mobius_vector_field(cplx u, cplx z);

/// Derivative of mobius_vector_field in z.
cplx mobius_vector_field_dz(cplx u, cplx z);

enum class Kind { Radial, Chordal };

/// Brownian driving function on a uniform grid t_k = t0 + k h, k = 0..steps.
/// Radial paths store the unwrapped angle theta = sqrt(kappa) B, so U = exp(i theta);
/// chordal paths store the real driving value itself.
///
/// Values strictly inside a grid interval come from dyadic Brownian-bridge
/// refinement whose normals are keyed by (seed, interval, level, index), so every
/// point integrated against the path sees the same refined driving.
class DrivingPath {
 public:
  DrivingPath() = default;
  /// values[k] at t0 + k step; bridge_scale is the diffusivity used for refinement
  /// (sqrt(kappa) for SLE, 0 for deterministic driving interpolated linearly).
  DrivingPath(Kind kind, std::vector<double> values, double step, double t0, double bridge_scale,
              std::uint64_t seed);

  Kind kind() const { return kind_; }
  double step() const { return step_; }
  std::size_t steps() const { return values_.size() - 1; }
  double t0() const { return t0_; }
  double time(std::size_t k) const { return t0_ + static_cast<double>(k) * step_; }
  double horizon() const { return time(steps()); }
  double value(std::size_t k) const { return values_[k]; }
  const std::vector<double>& values() const { return values_; }
  double bridge_scale() const { return bridge_scale_; }

  /// Driving value at t_k + index * step / 2^level (0 <= index <= 2^level).
  double refined(std::size_t k, int level, std::uint64_t index) const;

  /// exp(i theta) at a grid time; radial paths only.
  cplx unit(std::size_t k) const { return std::polar(1.0, values_[k]); }

  /// The negated path (conj(U) for radial paths) with its own bridge keys.
  DrivingPath conjugate() const;

 private:
  Kind kind_ = Kind::Radial;
  std::vector<double> values_{0.0};
  double step_ = 1.0;
  double t0_ = 0.0;
  double bridge_scale_ = 0.0;
  std::uint64_t seed_ = 0;
};

/// Radial SLE driving angle sqrt(kappa) B on [0, T], starting at U_0 = 1.
DrivingPath sample_radial_driving(double kappa, double T, double step, std::uint64_t seed, double t0 = 0.0);

/// Constant driving U = exp(i angle); useful as a deterministic reference.
DrivingPath constant_radial_driving(double angle, double T, double step);

struct ChainOptions {
  double swallow_tol = 1e-4;
  /// Record every record_stride-th grid value; 0 keeps only the final state.
  std::size_t record_stride = 1;
  bool track_derivative = false;
  /// Substeps satisfy h <= d^2 min(drift_fraction / 2, noise_fraction^2 / kappa),
  /// d the distance to the singularity.
  double drift_fraction = 0.1;
  double noise_fraction = 0.5;
  int max_refine = 48;
  /// Workers for per-point parallelism; 0 uses the hardware count.
  unsigned workers = 1;
};

enum class Direction { Forward, Reverse };
enum class Geometry { Radial, Chordal, WholePlane };

struct TrackedPoint {
  cplx initial;
  /// Map value at the recorded times (forward: g_t(z); reverse: centered map;
  /// whole-plane: g_t(z)). Entries after swallowing repeat the last value.
  std::vector<cplx> trajectory;
  /// Spatial derivative at the recorded times, when tracked.
  std::vector<cplx> derivative;
  std::optional<double> swallow_time;
  cplx final_value;
  cplx final_derivative{1.0, 0.0};
};

/// Result of integrating a Loewner evolution: the driving path, the tracked
/// points and the time grid on which they were recorded.
struct LoewnerChain {
  Geometry geometry = Geometry::Radial;
  Direction direction = Direction::Forward;
  DrivingPath driving;
  ChainOptions options;
  double kappa = 0.0;
  std::vector<double> record_times;
  std::vector<TrackedPoint> tracked;

  double horizon() const { return driving.horizon(); }
};

/// Forward radial Loewner chain dg = Phi(U, g) dt for the given points of the
/// closed unit disk. Explicit Euler with adaptive dyadic substeps near U.
LoewnerChain evolve_forward_radial(const DrivingPath& driving, double kappa, std::span<const cplx> points,
                                   const ChainOptions& options = {});
LoewnerChain evolve_forward_radial(double kappa, double T, double step, std::uint64_t seed,
                                   std::span<const cplx> points, const ChainOptions& options = {});

/// State of a single forward-integrated point; exposed for callers that need to
/// integrate extra points against an existing chain.
struct PointState {
  cplx g;
  cplx dg{1.0, 0.0};
  bool swallowed = false;
  double swallow_time = 0.0;
};

/// Advances a point of the forward radial flow from grid index k_begin to k_end.
void advance_forward(const DrivingPath& driving, double kappa, PointState& state, std::size_t k_begin,
                     std::size_t k_end, const ChainOptions& options, bool track_derivative, std::size_t point_index = 0);

/// Integrates the radial flow backward from time t to 0 (explicit reverse-time
/// Euler). Returns g_t^{-1}(w) and, if requested, the derivative of the inverse.
cplx backward_flow(const DrivingPath& driving, double kappa, double t, cplx w, cplx* inverse_derivative,
                   const ChainOptions& options = {});

/// g_t^{-1}(w): backward flow followed by Newton corrections on the forward map.
/// Throws ConvergenceError (with the best residual) when |g_t(z) - w| stays above tol.
cplx invert_chain_at(const LoewnerChain& chain, double t, cplx w, double tol = 1e-9, int max_newton = 6);

/// Reverse radial flow df = -Phi(U, f) dt centered at U, i.e. in log coordinates
/// y = log f: dy = -(1 + f)/(1 - f) dt - i sqrt(kappa) dB. The noise enters as an
/// exact rotation (Stratonovich reading), which keeps |f'_t(0)| = exp(-t).
LoewnerChain evolve_reverse_radial(double kappa, double T, double step, std::uint64_t seed,
                                   std::span<const cplx> points, const ChainOptions& options = {});

struct ChordalRhoResult {
  LoewnerChain chain;                  // tracked points hold centered values g_t(z) - W_t
  std::vector<cplx> force_trajectory;  // centered force point at every grid time
};

/// Reverse chordal SLE_kappa(rho) in the upper half-plane with interior force
/// point z0: dW = sqrt(kappa) dB + Re(rho / (W - g_t(z0))) dt, dg = -2/(g - W) dt.
ChordalRhoResult evolve_reverse_chordal_rho(double kappa, double rho, cplx z0, double T, double step,
                                            std::uint64_t seed, std::span<const cplx> points = {},
                                            const ChainOptions& options = {});

/// Whole-plane SLE_kappa from 0 to infinity started at time -T0 and run to T.
/// Points are integrated in inverted coordinates w = 1/g, which obey the interior
/// radial flow driven by conj(U). Swallowing times are on the whole-plane clock.
LoewnerChain simulate_whole_plane(double kappa, double T0, double T, double step, std::uint64_t seed,
                                  std::span<const cplx> points, const ChainOptions& options = {});

/// max over recorded times of |log |g_t'(0)| - t| for a chain tracking 0 with derivatives.
double capacity_error(const LoewnerChain& chain);

}  // namespace lab::loewner
