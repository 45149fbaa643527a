#pragma once

#include <filesystem>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "lab/field.hpp"
#include "lab/params.hpp"

namespace lab::gmc {

enum class MeasureKind { Area, Boundary };

/// Discretized chaos measure: one atom per grid cell (area) or boundary arc.
struct ChaosMeasure {
  MeasureKind kind = MeasureKind::Area;
  double gamma = 0.0;
  std::shared_ptr<const field::GridSpec> grid;
  std::vector<std::size_t> nodes;
  std::vector<double> mass;
  double total = 0.0;
};

/// Area measure eps^{gamma^2/2} e^{gamma phi_eps} dA over the interior cells.
/// Rejects interior insertions at or above the Seiberg bound Q.
ChaosMeasure area_measure(const field::FieldSample& field, double gamma);

/// Boundary measure eps^{gamma^2/4} e^{gamma phi_eps / 2} dx over the boundary arcs.
ChaosMeasure boundary_measure(const field::FieldSample& field, double gamma);

/// Splits a disk boundary measure at the boundary angles a1 and a2. Returns the
/// mass of the counterclockwise arc from a1 to a2 and of its complement; arcs
/// cut by a split point contribute in proportion to the overlap.
std::pair<double, double> arc_split(const ChaosMeasure& boundary, double a1, double a2);

/// Writes node, x, y, mass rows.
void export_csv(const ChaosMeasure& measure, const std::filesystem::path& path);

struct LogPolarOptions {
  /// Nodes per ring; the lateral field keeps Fourier modes 1 .. angles/2 - 1.
  std::size_t angles = 256;
  /// Deepest log radius t = -log|z| resolved; rings are spaced 2 pi / angles.
  double depth = 60.0;
};

/// Disk Liouville field h + alpha G(., 0) + (beta/2) G(., 1) on a log-polar grid.
///
/// In t = -log|z| the circle average of h about 0 is a standard Brownian motion
/// in t and each lateral Fourier coefficient is an independent Ornstein-Uhlenbeck
/// process with rate k started from N(0, 2/k), so the grid reaches depths that a
/// uniform disk grid cannot. This matters when alpha is close to Q: the area
/// density then decays like exp(B_t - (Q - alpha) gamma t) and most of the upper
/// tail of the area sits at log radii far below any uniform grid spacing.
/// Chaos masses are Wick-normalized with the exact lattice variance and carry
/// the factor e^{gamma^2 g / 2}, g the regular part of the Green function, so
/// they converge to the circle-average measures.
class LogPolarDisk {
 public:
  LogPolarDisk(const LqgParams& params, double alpha, double beta, const LogPolarOptions& options = {});

  std::size_t rings() const { return rings_; }
  std::size_t angles() const { return angles_; }
  /// Interior node at log radius (ring + 1/2) h and angle (j + 1/2) h, h = 2 pi / angles.
  field::cplx node(std::size_t ring, std::size_t angle) const;

  /// Gaussian part at the interior nodes (ring-major) and at the boundary nodes.
  void sample_gaussian(std::uint64_t seed, std::vector<double>& interior, std::vector<double>& boundary) const;

  struct Masses {
    double area = 0.0;
    double length = 0.0;
  };
  /// Quantum area and boundary length of the field with constant 0.
  Masses masses(std::span<const double> interior, std::span<const double> boundary) const;
  /// The same without storing the field.
  Masses sample_masses(std::uint64_t seed) const;

  struct FixedLength {
    double area = 0.0;
    /// Disintegration weight (2/gamma) ell^{p-1} / L^p, p = (2 alpha + beta - 2Q)/gamma.
    double weight = 0.0;
    /// Boundary length before the shift.
    double raw_length = 0.0;
  };
  /// Area of a sample conditioned on boundary length ell, with its weight.
  FixedLength sample_fixed_length(double ell, std::uint64_t seed) const;

 private:
  template <class Sink>
  void generate(std::uint64_t seed, Sink&& sink) const;

  LqgParams params_;
  double alpha_, beta_;
  std::size_t angles_, modes_, rings_;
  double spacing_;
  std::vector<double> area_log_weight_;      // per interior node
  std::vector<double> boundary_log_weight_;  // per boundary node
};

}  // namespace lab::gmc
