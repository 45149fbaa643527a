#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lab/field.hpp"
#include "lab/loewner.hpp"
#include "lab/params.hpp"
#include "lab/random.hpp"

namespace lab::mot {

/// Correlated two-dimensional Brownian motion (X, Y) in quantum-area time with
/// Var X_t = Var Y_t = a^2 t and Cov(X_t, Y_t) = corr a^2 t.
struct CrtPath {
  std::vector<double> times;
  std::vector<double> X;
  std::vector<double> Y;
  LqgParams params;
  /// Set for stopped paths: the interpolated time at which ell0 + X + Y hits 0.
  std::optional<double> stop_time;
  /// Stopped path that reached the guard time without hitting 0.
  bool censored = false;
};

/// Left/right boundary length changes read off an SLE on a Liouville field.
struct BoundaryLengthProcess {
  std::vector<double> capacity_times;
  std::vector<double> area_times;
  std::vector<double> X;
  std::vector<double> Y;
  std::vector<double> L;
  /// |L at M nodes - L at M/2 nodes| / L: the boundary discretization spread.
  std::vector<double> tolerance;
  double ell0 = 0.0;
  bool terminated = false;
  /// Number of times the reference point was swallowed and reset.
  std::size_t resets = 0;
  /// Resets that happened up to each recorded time.
  std::vector<std::size_t> reset_counts;
};

/// Brownian excursion L of duration tau >= 1 and an independent Brownian motion Z.
struct SpherePair {
  double tau = 0.0;
  std::vector<double> times;
  std::vector<double> L;
  std::vector<double> Z;
};

/// Inverse gamma law with shape 1/2 and scale b: density sqrt(b / (pi a^3)) e^{-b/a}.
class InverseGamma {
 public:
  explicit InverseGamma(double b);
  double scale() const { return b_; }
  double density(double a) const;
  /// erfc(sqrt(b / a)).
  double cdf(double a) const;
  double quantile(double p) const;
  /// 2b / Z^2 with Z standard normal.
  double sample(rng::Stream& stream) const;

 private:
  double b_;
};

/// Exact Gaussian increments on a uniform grid of [0, T].
CrtPath sample_crt(const LqgParams& params, double T, double step, std::uint64_t seed);

struct StoppedCrtOptions {
  /// Substep at ell0 + X + Y = s is step (s / ell0)^2, floored at step * min_fraction.
  double min_fraction = 1e-10;
  /// Keep the whole path; otherwise only the start and the stopped state.
  bool record = true;
};

/// Runs the correlated motion until ell0 + X + Y first hits 0 or until T_guard.
///
/// X + Y and X - Y are independent Brownian motions, so the sum is stepped with
/// an adaptive previsible step and a Brownian-bridge crossing check on every
/// step; the first-passage law is therefore exact up to the location of the
/// crossing inside one (tiny) step, which is linearly interpolated.
CrtPath stopped_crt_disk(const LqgParams& params, double ell0, double step, std::uint64_t seed, double T_guard,
                         const StoppedCrtOptions& options = {});

/// Default guard time: 1e4 ell0^2 keeps censoring near 0.6% at kappa = 16.
double default_guard(double ell0);

/// Duration of the first-passage process of ell + X + Y started at ell,
/// conditioned to be at least 1, sampled exactly by inverting the restricted law.
double conditioned_duration(const LqgParams& params, double ell, rng::Stream& stream);

/// Value at time t of the first-passage process from ell conditioned on
/// duration >= 1 (given the duration, a scaled Bessel-3 bridge). t must be < 1.
double conditioned_first_passage_marginal(const LqgParams& params, double ell, double t, std::uint64_t seed);

struct SpherePairOptions {
  double ell_min = 1e-3;  // 0 gives the exact excursion limit
  std::size_t max_steps = 100000;
};

/// L: first-passage process from ell_min with quadratic variation 4 tan(pi gamma^2/8),
/// conditioned on duration >= 1; Z: independent Brownian motion with rate
/// 4 cot(pi gamma^2/8). The conditioning is exact (no rejection loop).
SpherePair sample_sphere_pair(const LqgParams& params, double step, std::uint64_t seed,
                              const SpherePairOptions& options = {});

struct ExtractionOptions {
  /// Nodes of the fresh boundary grid of the remaining domain.
  std::size_t boundary_nodes = 1024;
  /// Depth below the unit circle at which boundary nodes are pulled back, in
  /// units of the boundary node spacing 2 pi / boundary_nodes. Exactly on the
  /// circle the backward flow cannot leave it, so frontier nodes need a depth;
  /// it should stay inside the source grid's boundary layer.
  double inner_offset = 0.15;
  /// Angle, relative to the tip, at which the reference point is (re)placed.
  double reference_angle = 3.141592653589793;
  unsigned workers = 1;
};

/// Reads (X, Y, L) off a forward radial chain on a disk Liouville field.
///
/// At every scheduled capacity time t the field is pushed along the centered
/// inverse map (tip to 1, 0 to 0) onto a fresh boundary grid; its boundary chaos
/// gives L_t and the split at the tip and the reference point gives the two arc
/// lengths. The reference point starts opposite the tip and is reset there each
/// time it is swallowed (an extra evaluation is inserted at that grid time);
/// increments are chained across resets. Area time is the area chaos of the
/// interior cells swallowed by t. Schedule times must be grid times of the chain.
BoundaryLengthProcess extract_boundary_process(const field::FieldSample& field, const LqgParams& params,
                                               const loewner::LoewnerChain& chain, std::span<const double> schedule,
                                               const ExtractionOptions& options = {});

/// The same extraction for a sphere field on the cylinder (s + i theta stands
/// for exp(s + i theta)) explored by a whole-plane chain, read in the inverted
/// coordinate 1/g_t. L is the total frontier length, with no ell0 term; ell0
/// reports L at the truncation start.
BoundaryLengthProcess extract_sphere_boundary_process(const field::FieldSample& field, const LqgParams& params,
                                                      const loewner::LoewnerChain& chain,
                                                      std::span<const double> schedule,
                                                      const ExtractionOptions& options = {});

/// Columns area_time, X, Y, L, tolerance.
void export_csv(const BoundaryLengthProcess& process, const std::filesystem::path& path);
/// Columns t, L, Z.
void export_csv(const SpherePair& pair, const std::filesystem::path& path);

}  // namespace lab::mot
