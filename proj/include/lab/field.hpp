#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lab/params.hpp"

namespace lab::field {

using cplx = std::complex<double>;

enum class Domain { Disk, HalfPlane, Cylinder };
enum class NodeKind : std::uint8_t { Interior, Boundary };

/// Construction parameters; enough to rebuild a grid bit for bit.
struct GridParams {
  Domain domain = Domain::Disk;
  std::size_t n1 = 0;  // disk: rings; half-plane: columns; cylinder: rings
  std::size_t n2 = 0;  // disk/cylinder: angles; half-plane: rows
  double eps = 0.0;
  double extent1 = 0.0;  // half-plane: width; cylinder: half-length
  double extent2 = 0.0;  // half-plane: height
};

/// Node layout of a discretized domain.
///
/// Every node carries its own circle-average radius (node_eps) and the measure
/// of the cell it represents (area for interior nodes, length for boundary
/// nodes). Polar grids (disk, cylinder) are ring-major with `angles` equally
/// spaced nodes per ring; the disk boundary is the last ring. Cylinder nodes
/// are stored as s + i theta.
struct GridSpec {
  GridParams params;
  std::vector<cplx> nodes;
  std::vector<NodeKind> kind;
  std::vector<double> node_eps;
  std::vector<double> cell;
  std::vector<std::size_t> boundary;  // counterclockwise (disk) or left to right (half-plane)
  std::size_t rings = 0;
  std::size_t angles = 0;
  std::vector<double> ring_coord;  // disk: radius; cylinder: s

  Domain domain() const { return params.domain; }
  double eps() const { return params.eps; }
  std::size_t size() const { return nodes.size(); }
  bool polar() const { return rings > 0; }
  bool is_boundary(std::size_t i) const { return kind[i] == NodeKind::Boundary; }

  /// Circle-average radius the grid would assign to a point (used when a field
  /// is evaluated off the nodes).
  double eps_at(cplx z) const;
  /// Whether z lies in the closed domain covered by the grid.
  bool contains(cplx z) const;
};

/// Polar disk grid: n_r interior rings at radii (i + 1/2)/n_r and one boundary
/// ring, n_theta nodes each. Interior radius min(eps, dist/2); boundary radius
/// min(eps, 1/n_theta), which makes the discrete boundary mean exactly
/// degenerate as it is for the continuum field.
GridSpec disk_grid(std::size_t n_r, std::size_t n_theta, double eps);

/// Rectangle [-width/2, width/2] x (0, height] of the upper half-plane with a
/// row of boundary nodes on the real axis.
GridSpec half_plane_grid(std::size_t nx, std::size_t ny, double width, double height, double eps);

/// Cylinder R x [0, 2 pi) truncated to |s| <= s_max, n_s rings of n_theta nodes.
GridSpec cylinder_grid(std::size_t n_s, std::size_t n_theta, double s_max, double eps);

/// Unit circle alone: n equally spaced boundary nodes, as used for the
/// boundary of a remaining domain after a conformal map.
GridSpec boundary_circle(std::size_t n, double eps);

GridSpec rebuild_grid(const GridParams& params);

/// Dirichlet-free (zero boundary average) Green function of the unit disk.
double green_disk(cplx z, cplx w);
/// Free-boundary Green function of the upper half-plane, normalized on the unit semicircle.
double green_halfplane(cplx z, cplx w);
/// Limit of green_halfplane as w tends to infinity: 2 log_+ |z|.
double green_halfplane_infinity(cplx z);

/// (1/2 pi) int -log max(|d + e1 exp(i t)|, e2) dt: the covariance of two
/// circle averages of a -log kernel with radii e1, e2 and centers d apart.
double circle_log_average(double d, double e1, double e2);

/// Regularized covariance between two grid nodes.
double node_covariance(const GridSpec& grid, std::size_t i, std::size_t j);

/// Square root of the regularized covariance of a grid.
///
/// Polar grids are rotation invariant, so the covariance is block circulant
/// in the angle: a real Fourier transform in the angle reduces it to one
/// rings x rings block per frequency, each factored by Cholesky (with jitter,
/// falling back to eigenvalue clipping). Other grids use a dense Cholesky.
class CovarianceFactorization {
 public:
  explicit CovarianceFactorization(std::shared_ptr<const GridSpec> grid);

  const GridSpec& grid() const { return *grid_; }
  std::shared_ptr<const GridSpec> grid_ptr() const { return grid_; }
  std::size_t size() const { return grid_->size(); }
  std::size_t noise_size() const { return grid_->size(); }

  /// out = F noise, where F F^T is the regularized covariance.
  void apply(std::span<const double> noise, std::span<double> out) const;

  /// (F F^T)_{ij}, reconstructed from the stored factor.
  double covariance(std::size_t i, std::size_t j) const;

  /// Sum of negative eigenvalues removed by clipping (0 when Cholesky succeeded).
  double clipped() const { return clipped_; }
  /// Smallest eigenvalue seen among factored blocks when clipping was needed.
  double min_eigenvalue() const { return min_eigenvalue_; }
  bool block_circulant() const { return grid_->polar(); }

 private:
  std::shared_ptr<const GridSpec> grid_;
  // block-circulant factor: one lower factor per frequency 0..angles/2
  std::vector<Eigen::MatrixXd> blocks_;
  // dense factor for non-polar grids
  Eigen::MatrixXd dense_;
  double clipped_ = 0.0;
  double min_eigenvalue_ = 0.0;

  Eigen::MatrixXd factor_block(Eigen::MatrixXd block);
};

/// Log singularity added to the Gaussian part: an interior insertion alpha G(., w)
/// or a boundary insertion (beta/2) G(., s). A boundary insertion with infinite
/// location means the point at infinity of the half-plane.
struct Insertion {
  double strength;
  cplx location;
  bool boundary;
};

/// A field on a grid: value at node i is gaussian[i] + singular part + constant,
/// where the singular part is the circle average of the insertion terms at the
/// node's radius. weight is the importance weight relative to the target law.
struct FieldSample {
  std::shared_ptr<const GridSpec> grid;
  std::vector<double> gaussian;
  std::vector<Insertion> insertions;
  double constant = 0.0;
  double weight = 1.0;

  double singular(std::size_t i) const;
  double value(std::size_t i) const { return gaussian[i] + singular(i) + constant; }
  std::vector<double> values() const;
};

/// Circle average of the insertion terms of `field` at an arbitrary point.
double singular_at(const FieldSample& field, cplx z, double eps, bool boundary_point);

/// Interpolates the Gaussian part at an arbitrary point of the grid's domain.
double interpolate_gaussian(const FieldSample& field, cplx z);

/// Full field value at an arbitrary point, regularized at the grid's local radius.
double evaluate(const FieldSample& field, cplx z);

/// Free-boundary GFF sample with zero boundary average (disk), zero circle
/// averages (cylinder) or the raw regularized field (half-plane).
FieldSample sample_gff(const CovarianceFactorization& cov, std::uint64_t seed);

/// Liouville field on the disk with interior insertion alpha at 0 and boundary
/// insertion beta at 1, shifted so its boundary length equals ell. The weight is
/// (2/gamma) ell^{p-1} / L^p with p = (2 alpha + beta - 2Q)/gamma, L the boundary
/// length before the shift.
FieldSample sample_lf_disk_fixed_length(const LqgParams& params, double alpha, double beta, double ell,
                                        const CovarianceFactorization& cov, std::uint64_t seed);

/// Conformal map described through its inverse on the target domain.
struct ConformalMap {
  /// Returns f^{-1}(w) and writes (f^{-1})'(w).
  std::function<cplx(cplx, cplx*)> inverse;
  /// Optional forward map, used to carry insertions across; without it the
  /// insertion terms are folded into the Gaussian part.
  std::function<cplx(cplx)> forward;
};

/// How off-node values are read from a grid: linear between neighbouring
/// nodes, or the value of the node whose cell contains the point. Cell lookup
/// keeps each value's variance, so chaos masses are preserved on average.
enum class Interpolation { Linear, Nearest };

/// Pushes a field forward: value(w) = field(f^{-1} w) + Q log |(f^{-1})'(w)|.
/// Target nodes get circle-average radius eps(f^{-1} w) / |(f^{-1})'(w)|, the image
/// of the source circle, so chaos measures transform covariantly; eps(z) is the
/// node radius interpolated like the field value itself.
FieldSample coordinate_change(const FieldSample& field, const ConformalMap& map, const GridSpec& target,
                              double Q, Interpolation mode = Interpolation::Linear);

/// Average of the field over the circle of radius eps around center.
double circle_average(const FieldSample& field, cplx center, double eps, std::size_t points = 64);

/// Reweights samples of an alpha1-insertion field at `center` towards alpha2 by
/// eps^{(alpha2^2 - alpha1^2)/2} exp((alpha2 - alpha1) (field, circle_eps)).
std::vector<FieldSample> girsanov_reweight(std::span<const FieldSample> samples, double alpha1, double alpha2,
                                           cplx center, double eps);

/// Unit-area quantum sphere in cylinder coordinates.
struct SphereSample {
  FieldSample field;            // gaussian = radial part + lateral part
  std::vector<double> radial;   // radial part per ring
  double area_before_shift = 0; // area of the field without its constant
  double shift_excess = 0;      // constant minus the threshold making area 1
};

/// Samples the radial part as two Bessel-3 processes with drift Q - alpha
/// (exact, as norms of drifted 3d Brownian motions started at 0), adds the
/// lateral field and draws the constant from (gamma/2) e^{2(alpha - Q)c} dc
/// restricted to area >= 1. The weight is the mass of that restriction.
SphereSample sample_sphere_field(const LqgParams& params, double alpha, const CovarianceFactorization& lateral,
                                 std::uint64_t seed);

/// Binary snapshot plus a JSON sidecar (path + ".json").
void save_field(const FieldSample& field, const std::filesystem::path& path);
FieldSample load_field(const std::filesystem::path& path);

}  // namespace lab::field
