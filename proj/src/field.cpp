#include "lab/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss.hpp>
#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "lab/error.hpp"
#include "lab/gmc.hpp"
#include "lab/random.hpp"

namespace lab::field {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double log_plus(cplx z) { return std::max(0.0, std::log(std::abs(z))); }

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

void require(bool ok, const char* what) {
  if (!ok) throw PreconditionError(what);
}

void finish_grid(GridSpec& g) {
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.kind[i] == NodeKind::Boundary) g.boundary.push_back(i);
  }
}

double disk_boundary_eps(const GridSpec& g) { return std::min(g.eps(), 1.0 / static_cast<double>(g.angles)); }

double halfplane_spacing(const GridParams& p) { return p.extent1 / static_cast<double>(p.n1); }

// Remainder -log|(1 - e^{-z}) / z|, smooth at z = 0.
double cylinder_remainder(cplx z) {
  if (std::abs(z) < 1e-4) return -std::log(std::abs(1.0 - z / 2.0 + z * z / 6.0));
  return -std::log(std::abs((1.0 - std::exp(-z)) / z));
}

}  // namespace

// ---------------------------------------------------------------------------
// Grids

double GridSpec::eps_at(cplx z) const {
  switch (params.domain) {
    case Domain::Disk: {
      const double r = std::abs(z);
      if (r >= 1.0 - 1e-12) return disk_boundary_eps(*this);
      return std::min(params.eps, 0.5 * (1.0 - r));
    }
    case Domain::HalfPlane:
      if (z.imag() <= 1e-12) return std::min(params.eps, halfplane_spacing(params) / kTwoPi);
      return std::min(params.eps, 0.5 * z.imag());
    case Domain::Cylinder:
      return params.eps;
  }
  return params.eps;
}

bool GridSpec::contains(cplx z) const {
  switch (params.domain) {
    case Domain::Disk:
      return std::abs(z) <= 1.0 + 1e-9;
    case Domain::HalfPlane:
      return z.imag() >= -1e-12 && std::abs(z.real()) <= 0.5 * params.extent1 + 1e-12 &&
             z.imag() <= params.extent2 + 1e-12;
    case Domain::Cylinder:
      return std::abs(z.real()) <= params.extent1 + 1e-12;
  }
  return false;
}

GridSpec disk_grid(std::size_t n_r, std::size_t n_theta, double eps) {
  require(n_r >= 1 && n_theta >= 4 && n_theta % 2 == 0, "disk grid needs n_r >= 1 and even n_theta >= 4");
  require(eps > 0.0 && eps < 0.5, "disk grid eps must lie in (0, 1/2)");
  GridSpec g;
  g.params = {Domain::Disk, n_r, n_theta, eps, 0.0, 0.0};
  g.rings = n_r + 1;
  g.angles = n_theta;
  const double dtheta = kTwoPi / static_cast<double>(n_theta);
  const double nr = static_cast<double>(n_r);
  for (std::size_t i = 0; i <= n_r; ++i) {
    const bool bdy = i == n_r;
    const double r = bdy ? 1.0 : (static_cast<double>(i) + 0.5) / nr;
    g.ring_coord.push_back(r);
    const double area = 0.5 * dtheta * (static_cast<double>((i + 1) * (i + 1)) - static_cast<double>(i * i)) / (nr * nr);
    for (std::size_t a = 0; a < n_theta; ++a) {
      g.nodes.push_back(std::polar(r, dtheta * static_cast<double>(a)));
      g.kind.push_back(bdy ? NodeKind::Boundary : NodeKind::Interior);
      g.node_eps.push_back(bdy ? std::min(eps, 1.0 / static_cast<double>(n_theta)) : std::min(eps, 0.5 * (1.0 - r)));
      g.cell.push_back(bdy ? dtheta : area);
    }
  }
  finish_grid(g);
  return g;
}

GridSpec half_plane_grid(std::size_t nx, std::size_t ny, double width, double height, double eps) {
  require(nx >= 2 && ny >= 1 && width > 0.0 && height > 0.0 && eps > 0.0, "invalid half-plane grid");
  GridSpec g;
  g.params = {Domain::HalfPlane, nx, ny, eps, width, height};
  const double dx = width / static_cast<double>(nx);
  const double dy = height / static_cast<double>(ny);
  for (std::size_t l = 0; l < ny; ++l) {
    for (std::size_t j = 0; j < nx; ++j) {
      const double y = (static_cast<double>(l) + 0.5) * dy;
      g.nodes.emplace_back(-0.5 * width + (static_cast<double>(j) + 0.5) * dx, y);
      g.kind.push_back(NodeKind::Interior);
      g.node_eps.push_back(std::min(eps, 0.5 * y));
      g.cell.push_back(dx * dy);
    }
  }
  for (std::size_t j = 0; j < nx; ++j) {
    g.nodes.emplace_back(-0.5 * width + (static_cast<double>(j) + 0.5) * dx, 0.0);
    g.kind.push_back(NodeKind::Boundary);
    g.node_eps.push_back(std::min(eps, dx / kTwoPi));
    g.cell.push_back(dx);
  }
  finish_grid(g);
  return g;
}

GridSpec cylinder_grid(std::size_t n_s, std::size_t n_theta, double s_max, double eps) {
  require(n_s >= 1 && n_theta >= 4 && n_theta % 2 == 0 && s_max > 0.0 && eps > 0.0,
          "cylinder grid needs n_s >= 1, even n_theta >= 4, s_max > 0, eps > 0");
  GridSpec g;
  g.params = {Domain::Cylinder, n_s, n_theta, eps, s_max, 0.0};
  g.rings = n_s;
  g.angles = n_theta;
  const double ds = 2.0 * s_max / static_cast<double>(n_s);
  const double dtheta = kTwoPi / static_cast<double>(n_theta);
  for (std::size_t i = 0; i < n_s; ++i) {
    const double s = -s_max + (static_cast<double>(i) + 0.5) * ds;
    g.ring_coord.push_back(s);
    for (std::size_t a = 0; a < n_theta; ++a) {
      g.nodes.emplace_back(s, dtheta * static_cast<double>(a));
      g.kind.push_back(NodeKind::Interior);
      g.node_eps.push_back(eps);
      g.cell.push_back(ds * dtheta);
    }
  }
  finish_grid(g);
  return g;
}

GridSpec boundary_circle(std::size_t n, double eps) {
  require(n >= 4 && eps > 0.0, "boundary circle needs n >= 4 and eps > 0");
  GridSpec g;
  g.params = {Domain::Disk, 0, n, eps, 0.0, 0.0};
  g.angles = n;
  const double dtheta = kTwoPi / static_cast<double>(n);
  for (std::size_t a = 0; a < n; ++a) {
    g.nodes.push_back(std::polar(1.0, dtheta * static_cast<double>(a)));
    g.kind.push_back(NodeKind::Boundary);
    g.node_eps.push_back(std::min(eps, 1.0 / static_cast<double>(n)));
    g.cell.push_back(dtheta);
  }
  finish_grid(g);
  return g;
}

GridSpec rebuild_grid(const GridParams& p) {
  switch (p.domain) {
    case Domain::Disk:
      return p.n1 == 0 ? boundary_circle(p.n2, p.eps) : disk_grid(p.n1, p.n2, p.eps);
    case Domain::HalfPlane:
      return half_plane_grid(p.n1, p.n2, p.extent1, p.extent2, p.eps);
    case Domain::Cylinder:
      return cylinder_grid(p.n1, p.n2, p.extent1, p.eps);
  }
  throw PreconditionError("unknown domain");
}

// ---------------------------------------------------------------------------
// Green functions and regularized covariances

double green_disk(cplx z, cplx w) {
  if (z == w) throw SingularityError("green_disk on the diagonal");
  return -std::log(std::abs(z - w)) - std::log(std::abs(1.0 - z * std::conj(w)));
}

double green_halfplane(cplx z, cplx w) {
  if (z == w) throw SingularityError("green_halfplane on the diagonal");
  return -std::log(std::abs(z - w)) - std::log(std::abs(z - std::conj(w))) + 2.0 * log_plus(z) + 2.0 * log_plus(w);
}

double green_halfplane_infinity(cplx z) { return 2.0 * log_plus(z); }

double circle_log_average(double d, double e1, double e2) {
  if (e1 > e2) std::swap(e1, e2);
  if (d >= e1 + e2) return -std::log(d);
  if (e1 == 0.0 || d == 0.0) return -std::log(std::max(d, e2));
  // the smaller circle crosses the larger one's ball at cos(t) = c
  const double c = (e2 * e2 - d * d - e1 * e1) / (2.0 * d * e1);
  if (c >= 1.0) return -std::log(e2);
  if (c <= -1.0) return -std::log(std::max(d, e1));
  const double ts = std::acos(c);
  auto f = [&](double t) { return -0.5 * std::log(d * d + e1 * e1 + 2.0 * d * e1 * std::cos(t)); };
  using Gauss = boost::math::quadrature::gauss<double, 30>;
  const double inner = Gauss::integrate(f, 0.0, 0.5 * ts) + Gauss::integrate(f, 0.5 * ts, ts);
  return (inner - (std::numbers::pi - ts) * std::log(e2)) / std::numbers::pi;
}

double node_covariance(const GridSpec& g, std::size_t i, std::size_t j) {
  const cplx z = g.nodes[i];
  const cplx w = g.nodes[j];
  const double ez = g.node_eps[i];
  const double ew = g.node_eps[j];
  const bool interior = !g.is_boundary(i) && !g.is_boundary(j);
  switch (g.domain()) {
    case Domain::Disk: {
      const double k = circle_log_average(std::abs(z - w), ez, ew);
      if (interior) return k - std::log(std::abs(1.0 - z * std::conj(w)));
      return 2.0 * k;
    }
    case Domain::HalfPlane: {
      const double k = circle_log_average(std::abs(z - w), ez, ew);
      const double tail = 2.0 * log_plus(z) + 2.0 * log_plus(w);
      if (interior) return k - std::log(std::abs(z - std::conj(w))) + tail;
      return 2.0 * k + tail;
    }
    case Domain::Cylinder: {
      double delta = wrap_angle(z.imag() - w.imag());
      if (delta > std::numbers::pi) delta -= kTwoPi;
      const cplx zeta(std::abs(z.real() - w.real()), -delta);
      const double dist = std::abs(zeta);
      if (dist >= ez + ew) return -std::log(std::abs(1.0 - std::exp(-zeta)));
      return circle_log_average(dist, ez, ew) + cylinder_remainder(zeta);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Factorization

Eigen::MatrixXd CovarianceFactorization::factor_block(Eigen::MatrixXd block) {
  const Eigen::Index n = block.rows();
  if (block.cwiseAbs().maxCoeff() == 0.0) return Eigen::MatrixXd::Zero(n, n);
  const double jitter = 1e-12 * std::max(block.trace(), block.cwiseAbs().maxCoeff());
  Eigen::MatrixXd jittered = block;
  jittered.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(jittered);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block);
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    min_eigenvalue_ = std::min(min_eigenvalue_, lambda[k]);
    if (lambda[k] < 0.0) {
      clipped_ -= lambda[k];
      lambda[k] = 0.0;
    }
  }
  return eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
}

CovarianceFactorization::CovarianceFactorization(std::shared_ptr<const GridSpec> grid) : grid_(std::move(grid)) {
  if (!grid_) throw PreconditionError("covariance needs a grid");
  const GridSpec& g = *grid_;
  if (!g.polar()) {
    const Eigen::Index n = static_cast<Eigen::Index>(g.size());
    if (n > 20000) throw PreconditionError("dense covariance limited to 20000 nodes");
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        c(i, j) = c(j, i) = node_covariance(g, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      }
    }
    dense_ = factor_block(std::move(c));
    return;
  }
  const std::size_t R = g.rings;
  const std::size_t n = g.angles;
  const std::size_t half = n / 2;
  std::vector<Eigen::MatrixXd> spectral(half + 1, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(R),
                                                                         static_cast<Eigen::Index>(R)));
  Eigen::FFT<double> fft;
  std::vector<cplx> in(n), out(n);
  for (std::size_t p = 0; p < R; ++p) {
    for (std::size_t q = p; q < R; ++q) {
      for (std::size_t m = 0; m < n; ++m) in[m] = node_covariance(g, p * n, q * n + m);
      fft.fwd(out, in);
      for (std::size_t k = 0; k <= half; ++k) {
        const auto P = static_cast<Eigen::Index>(p), Qi = static_cast<Eigen::Index>(q);
        spectral[k](P, Qi) = spectral[k](Qi, P) = out[k].real();
      }
    }
  }
  // The continuum field has zero boundary mean (disk) or zero circle averages
  // (cylinder lateral part); impose that on the zero frequency exactly.
  if (g.domain() == Domain::Disk) {
    const auto b = static_cast<Eigen::Index>(R - 1);
    spectral[0].row(b).setZero();
    spectral[0].col(b).setZero();
  } else if (g.domain() == Domain::Cylinder) {
    spectral[0].setZero();
  }
  blocks_.reserve(half + 1);
  for (auto& s : spectral) blocks_.push_back(factor_block(std::move(s)));
}

void CovarianceFactorization::apply(std::span<const double> noise, std::span<double> out) const {
  const GridSpec& g = *grid_;
  if (noise.size() != noise_size() || out.size() != size()) throw PreconditionError("factor size mismatch");
  if (!g.polar()) {
    Eigen::Map<const Eigen::VectorXd> x(noise.data(), static_cast<Eigen::Index>(noise.size()));
    Eigen::Map<Eigen::VectorXd> y(out.data(), static_cast<Eigen::Index>(out.size()));
    y.noalias() = dense_ * x;
    return;
  }
  const std::size_t R = g.rings;
  const std::size_t n = g.angles;
  const std::size_t half = n / 2;
  const auto Ri = static_cast<Eigen::Index>(R);
  // modes: 0 and half carry cosines only; k in (0, half) carries cos (slot k) and sin (slot n - k)
  Eigen::MatrixXd Y(Ri, static_cast<Eigen::Index>(n));
  for (std::size_t md = 0; md < n; ++md) {
    const std::size_t k = md <= half ? md : n - md;
    Eigen::Map<const Eigen::VectorXd> xi(noise.data() + md * R, Ri);
    Y.col(static_cast<Eigen::Index>(md)).noalias() = blocks_[k] * xi;
  }
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<cplx> spectrum(n), vals(n);
  const double root_half = std::sqrt(0.5);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t p = 0; p < R; ++p) {
    const auto P = static_cast<Eigen::Index>(p);
    spectrum[0] = Y(P, 0);
    spectrum[half] = Y(P, static_cast<Eigen::Index>(half));
    for (std::size_t k = 1; k < half; ++k) {
      const cplx a = root_half * cplx(Y(P, static_cast<Eigen::Index>(k)), -Y(P, static_cast<Eigen::Index>(n - k)));
      spectrum[k] = a;
      spectrum[n - k] = std::conj(a);
    }
    fft.inv(vals, spectrum);
    for (std::size_t a = 0; a < n; ++a) out[p * n + a] = vals[a].real() * norm;
  }
}

double CovarianceFactorization::covariance(std::size_t i, std::size_t j) const {
  const GridSpec& g = *grid_;
  if (!g.polar()) {
    return dense_.row(static_cast<Eigen::Index>(i)).dot(dense_.row(static_cast<Eigen::Index>(j)));
  }
  const std::size_t n = g.angles;
  const std::size_t half = n / 2;
  const auto p = static_cast<Eigen::Index>(i / n);
  const auto q = static_cast<Eigen::Index>(j / n);
  const std::size_t m = (j % n + n - i % n) % n;
  double sum = 0.0;
  for (std::size_t k = 0; k <= half; ++k) {
    const double ck = blocks_[k].row(p).dot(blocks_[k].row(q));
    const double w = (k == 0 || k == half) ? 1.0 : 2.0;
    sum += w * ck * std::cos(kTwoPi * static_cast<double>(k * m) / static_cast<double>(n));
  }
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Field samples

double singular_at(const FieldSample& field, cplx z, double e, bool boundary_point) {
  if (field.insertions.empty()) return 0.0;
  const Domain domain = field.grid->domain();
  double s = 0.0;
  for (const Insertion& ins : field.insertions) {
    const cplx w = ins.location;
    switch (domain) {
      case Domain::Disk:
        if (ins.boundary || boundary_point) {
          const double scale = ins.boundary ? 0.5 * ins.strength : ins.strength;
          s += scale * (-2.0 * std::log(std::max(std::abs(z - w), e)));
        } else {
          s += ins.strength * (-std::log(std::max(std::abs(z - w), e)) - std::log(std::abs(1.0 - z * std::conj(w))));
        }
        break;
      case Domain::HalfPlane:
        if (ins.boundary && std::isinf(w.real())) {
          s += 0.5 * ins.strength * 2.0 * log_plus(z);
        } else if (ins.boundary) {
          s += 0.5 * ins.strength * (-2.0 * std::log(std::max(std::abs(z - w), e)) + 2.0 * log_plus(z) + 2.0 * log_plus(w));
        } else {
          s += ins.strength * (-std::log(std::max(std::abs(z - w), e)) - std::log(std::abs(z - std::conj(w))) +
                               2.0 * log_plus(z) + 2.0 * log_plus(w));
        }
        break;
      case Domain::Cylinder:
        throw PreconditionError("cylinder fields carry no insertions");
    }
  }
  return s;
}

double FieldSample::singular(std::size_t i) const {
  return singular_at(*this, grid->nodes[i], grid->node_eps[i], grid->is_boundary(i));
}

std::vector<double> FieldSample::values() const {
  std::vector<double> v(gaussian.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = value(i);
  return v;
}

namespace {

// Linear interpolation around ring p at angle phi.
double ring_value(const GridSpec& g, std::span<const double> v, std::size_t p, double phi) {
  const std::size_t n = g.angles;
  const double x = wrap_angle(phi) / (kTwoPi / static_cast<double>(n));
  const double fl = std::floor(x);
  const double t = x - fl;
  const std::size_t a = static_cast<std::size_t>(fl) % n;
  return (1.0 - t) * v[p * n + a] + t * v[p * n + (a + 1) % n];
}

double ring_mean(const GridSpec& g, std::span<const double> v, std::size_t p) {
  double s = 0.0;
  for (std::size_t a = 0; a < g.angles; ++a) s += v[p * g.angles + a];
  return s / static_cast<double>(g.angles);
}

}  // namespace

namespace {

double interpolate_values(const GridSpec& g, std::span<const double> v, cplx z) {
  if (!g.contains(z)) throw PreconditionError("interpolation point outside the grid domain");
  switch (g.domain()) {
    case Domain::Disk:
    case Domain::Cylinder: {
      const bool disk = g.domain() == Domain::Disk;
      double r = disk ? std::min(std::abs(z), 1.0) : z.real();
      const double phi = disk ? std::arg(z) : z.imag();
      const auto& rc = g.ring_coord;
      if (r <= rc.front()) {
        if (!disk) return ring_value(g, v, 0, phi);
        const double t = r / rc.front();
        return (1.0 - t) * ring_mean(g, v, 0) + t * ring_value(g, v, 0, phi);
      }
      if (r >= rc.back()) return ring_value(g, v, g.rings - 1, phi);
      const std::size_t p = static_cast<std::size_t>(std::upper_bound(rc.begin(), rc.end(), r) - rc.begin()) - 1;
      const double t = (r - rc[p]) / (rc[p + 1] - rc[p]);
      return (1.0 - t) * ring_value(g, v, p, phi) + t * ring_value(g, v, p + 1, phi);
    }
    case Domain::HalfPlane: {
      const std::size_t nx = g.params.n1, ny = g.params.n2;
      const double dx = g.params.extent1 / static_cast<double>(nx);
      const double dy = g.params.extent2 / static_cast<double>(ny);
      const double fx = std::clamp((z.real() + 0.5 * g.params.extent1) / dx - 0.5, 0.0, static_cast<double>(nx - 1));
      const std::size_t j = std::min(static_cast<std::size_t>(fx), nx - 2);
      const double tx = fx - static_cast<double>(j);
      // rows: boundary row at y = 0, then interior rows at (l + 1/2) dy
      auto node = [&](std::size_t row, std::size_t col) { return row == 0 ? nx * ny + col : (row - 1) * nx + col; };
      auto row_y = [&](std::size_t row) { return row == 0 ? 0.0 : (static_cast<double>(row) - 0.5) * dy; };
      const double y = std::clamp(z.imag(), 0.0, row_y(ny));
      std::size_t row = 0;
      while (row + 1 < ny && row_y(row + 1) < y) ++row;
      const double ty = std::clamp((y - row_y(row)) / (row_y(row + 1) - row_y(row)), 0.0, 1.0);
      auto at = [&](std::size_t r) { return (1.0 - tx) * v[node(r, j)] + tx * v[node(r, j + 1)]; };
      return (1.0 - ty) * at(row) + ty * at(row + 1);
    }
  }
  return 0.0;
}

std::size_t nearest_node(const GridSpec& g, cplx z) {
  if (!g.contains(z)) throw PreconditionError("lookup point outside the grid domain");
  auto nearest_index = [](const std::vector<double>& coords, double x) {
    const auto it = std::lower_bound(coords.begin(), coords.end(), x);
    if (it == coords.begin()) return std::size_t{0};
    if (it == coords.end()) return coords.size() - 1;
    const auto i = static_cast<std::size_t>(it - coords.begin());
    return x - coords[i - 1] <= coords[i] - x ? i - 1 : i;
  };
  switch (g.domain()) {
    case Domain::Disk:
    case Domain::Cylinder: {
      const bool disk = g.domain() == Domain::Disk;
      const double r = disk ? std::min(std::abs(z), 1.0) : z.real();
      const double phi = disk ? std::arg(z) : z.imag();
      const std::size_t p = nearest_index(g.ring_coord, r);
      const std::size_t n = g.angles;
      const auto a = static_cast<std::size_t>(std::llround(wrap_angle(phi) / (kTwoPi / static_cast<double>(n)))) % n;
      return p * n + a;
    }
    case Domain::HalfPlane: {
      const std::size_t nx = g.params.n1, ny = g.params.n2;
      const double dx = g.params.extent1 / static_cast<double>(nx);
      const double dy = g.params.extent2 / static_cast<double>(ny);
      const double fx = std::clamp((z.real() + 0.5 * g.params.extent1) / dx - 0.5, 0.0, static_cast<double>(nx - 1));
      const auto j = static_cast<std::size_t>(std::llround(fx));
      // the boundary row owns y < dy / 4, halfway to the first interior row
      if (z.imag() < 0.25 * dy) return nx * ny + j;
      const double fy = std::clamp(z.imag() / dy - 0.5, 0.0, static_cast<double>(ny - 1));
      return static_cast<std::size_t>(std::llround(fy)) * nx + j;
    }
  }
  return 0;
}

double lookup(const GridSpec& g, std::span<const double> v, cplx z, Interpolation mode) {
  return mode == Interpolation::Nearest ? v[nearest_node(g, z)] : interpolate_values(g, v, z);
}

}  // namespace

double interpolate_gaussian(const FieldSample& field, cplx z) {
  return interpolate_values(*field.grid, field.gaussian, z);
}

double evaluate(const FieldSample& field, cplx z) {
  const GridSpec& g = *field.grid;
  const bool on_boundary = (g.domain() == Domain::Disk && std::abs(z) >= 1.0 - 1e-12) ||
                           (g.domain() == Domain::HalfPlane && z.imag() <= 1e-12);
  return interpolate_gaussian(field, z) + singular_at(field, z, g.eps_at(z), on_boundary) + field.constant;
}

FieldSample sample_gff(const CovarianceFactorization& cov, std::uint64_t seed) {
  const GridSpec& g = cov.grid();
  std::vector<double> noise(cov.noise_size());
  rng::Stream stream(seed);
  for (double& x : noise) x = stream.normal();
  FieldSample f;
  f.grid = cov.grid_ptr();
  f.gaussian.assign(g.size(), 0.0);
  cov.apply(noise, f.gaussian);
  if (g.domain() == Domain::Disk) {
    double mean = 0.0;
    for (std::size_t i : g.boundary) mean += f.gaussian[i];
    mean /= static_cast<double>(g.boundary.size());
    for (double& x : f.gaussian) x -= mean;
  } else if (g.domain() == Domain::Cylinder) {
    for (std::size_t p = 0; p < g.rings; ++p) {
      const double m = ring_mean(g, f.gaussian, p);
      for (std::size_t a = 0; a < g.angles; ++a) f.gaussian[p * g.angles + a] -= m;
    }
  }
  return f;
}

FieldSample sample_lf_disk_fixed_length(const LqgParams& params, double alpha, double beta, double ell,
                                        const CovarianceFactorization& cov, std::uint64_t seed) {
  if (cov.grid().domain() != Domain::Disk) throw PreconditionError("fixed-length disk field needs a disk grid");
  if (!(ell > 0.0)) throw PreconditionError("boundary length must be positive");
  if (!(beta < params.Q)) throw PreconditionError("boundary insertion must satisfy beta < Q");
  FieldSample f = sample_gff(cov, seed);
  f.insertions = {Insertion{alpha, cplx(0.0, 0.0), false}, Insertion{beta, cplx(1.0, 0.0), true}};
  const double L = gmc::boundary_measure(f, params.gamma).total;
  if (!(L > 0.0) || !std::isfinite(L)) throw DiagnosticError("boundary length is not a positive finite number");
  const double p = (2.0 * alpha + beta - 2.0 * params.Q) / params.gamma;
  f.constant = 2.0 / params.gamma * std::log(ell / L);
  f.weight = 2.0 / params.gamma * std::pow(ell, p - 1.0) * std::pow(L, -p);
  return f;
}

FieldSample coordinate_change(const FieldSample& field, const ConformalMap& map, const GridSpec& target, double Q,
                              Interpolation mode) {
  if (!map.inverse) throw PreconditionError("coordinate change needs the inverse map");
  auto grid = std::make_shared<GridSpec>(target);
  FieldSample out;
  out.constant = field.constant;
  out.weight = field.weight;
  if (map.forward) {
    for (const Insertion& ins : field.insertions) {
      out.insertions.push_back(Insertion{ins.strength, map.forward(ins.location), ins.boundary});
    }
  }
  const GridSpec& src = *field.grid;
  // An interpolated value mixes node values regularized at their own radii, so
  // its radius is interpolated the same way (geometrically).
  std::vector<double> log_eps(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) log_eps[i] = std::log(src.node_eps[i]);
  std::vector<double> total(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    cplx dz;
    const cplx z = map.inverse(target.nodes[i], &dz);
    if (!src.contains(z)) throw PreconditionError("coordinate change maps a target node outside the source domain");
    const bool on_boundary = (src.domain() == Domain::Disk && std::abs(z) >= 1.0 - 1e-12) ||
                             (src.domain() == Domain::HalfPlane && z.imag() <= 1e-12);
    const double e = std::exp(lookup(src, log_eps, z, mode));
    const double scale = std::abs(dz);
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DiagnosticError("degenerate derivative in coordinate change");
    grid->node_eps[i] = e / scale;
    total[i] = lookup(src, field.gaussian, z, mode) + singular_at(field, z, e, on_boundary) + Q * std::log(scale);
  }
  out.grid = grid;
  out.gaussian.resize(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) out.gaussian[i] = total[i] - out.singular(i);
  return out;
}

double circle_average(const FieldSample& field, cplx center, double eps, std::size_t points) {
  double s = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    s += evaluate(field, center + std::polar(eps, kTwoPi * static_cast<double>(k) / static_cast<double>(points)));
  }
  return s / static_cast<double>(points);
}

std::vector<FieldSample> girsanov_reweight(std::span<const FieldSample> samples, double alpha1, double alpha2,
                                           cplx center, double eps) {
  std::vector<FieldSample> out(samples.begin(), samples.end());
  for (FieldSample& f : out) {
    const double avg = circle_average(f, center, eps);
    const double log_factor = 0.5 * (alpha2 * alpha2 - alpha1 * alpha1) * std::log(eps) + (alpha2 - alpha1) * avg;
    f.weight *= std::exp(log_factor);
  }
  return out;
}

SphereSample sample_sphere_field(const LqgParams& params, double alpha, const CovarianceFactorization& lateral,
                                 std::uint64_t seed) {
  const GridSpec& g = lateral.grid();
  if (g.domain() != Domain::Cylinder) throw PreconditionError("sphere field needs a cylinder grid");
  const double mu = params.Q - alpha;
  if (!(mu > 0.0)) throw PreconditionError("sphere insertion must satisfy alpha < Q");
  SphereSample out;
  out.field = sample_gff(lateral, rng::hash(seed, 1));
  rng::Stream stream(rng::hash(seed, 2));

  // Drifted Brownian motion conditioned to stay negative is minus the norm of a
  // 3d Brownian motion with drift of length mu started at the origin.
  out.radial.assign(g.rings, 0.0);
  auto run_side = [&](bool positive) {
    double pos[3] = {0.0, 0.0, 0.0};
    double t_prev = 0.0;
    for (std::size_t step = 0; step < g.rings; ++step) {
      const std::size_t p = positive ? step : g.rings - 1 - step;
      const double s = g.ring_coord[p];
      if (positive ? s <= 0.0 : s >= 0.0) continue;
      const double t = std::abs(s);
      const double dt = t - t_prev;
      const double sd = std::sqrt(dt);
      pos[0] += sd * stream.normal() + mu * dt;
      pos[1] += sd * stream.normal();
      pos[2] += sd * stream.normal();
      out.radial[p] = -std::sqrt(pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]);
      t_prev = t;
    }
  };
  run_side(true);
  run_side(false);
  for (std::size_t p = 0; p < g.rings; ++p) {
    for (std::size_t a = 0; a < g.angles; ++a) out.field.gaussian[p * g.angles + a] += out.radial[p];
  }
  const double area = gmc::area_measure(out.field, params.gamma).total;
  if (!(area > 0.0) || !std::isfinite(area)) throw DiagnosticError("sphere area is not a positive finite number");
  const double rate = 2.0 * mu;
  out.area_before_shift = area;
  out.shift_excess = stream.exponential(rate);
  out.field.constant = -std::log(area) / params.gamma + out.shift_excess;
  out.field.weight = params.gamma / (2.0 * rate) * std::pow(area, rate / params.gamma);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'L', 'Q', 'G', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DiagnosticError("truncated field snapshot");
  return v;
}

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::Disk:
      return "disk";
    case Domain::HalfPlane:
      return "half-plane";
    case Domain::Cylinder:
      return "cylinder";
  }
  return "?";
}

}  // namespace

void save_field(const FieldSample& field, const std::filesystem::path& path) {
  const GridSpec& g = *field.grid;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DiagnosticError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<std::uint32_t>(g.params.domain));
  put(os, static_cast<std::uint64_t>(g.params.n1));
  put(os, static_cast<std::uint64_t>(g.params.n2));
  put(os, g.params.eps);
  put(os, g.params.extent1);
  put(os, g.params.extent2);
  put(os, static_cast<std::uint64_t>(g.size()));
  os.write(reinterpret_cast<const char*>(g.node_eps.data()), static_cast<std::streamsize>(g.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(field.gaussian.data()),
           static_cast<std::streamsize>(g.size() * sizeof(double)));
  put(os, static_cast<std::uint64_t>(field.insertions.size()));
  for (const Insertion& ins : field.insertions) {
    put(os, ins.strength);
    put(os, ins.location.real());
    put(os, ins.location.imag());
    put(os, static_cast<std::uint8_t>(ins.boundary));
  }
  put(os, field.constant);
  put(os, field.weight);
  if (!os) throw DiagnosticError("failed writing " + path.string());

  nlohmann::json j;
  j["format"] = "lqgf";
  j["version"] = kVersion;
  j["domain"] = domain_name(g.params.domain);
  j["n1"] = g.params.n1;
  j["n2"] = g.params.n2;
  j["eps"] = g.params.eps;
  j["extent1"] = g.params.extent1;
  j["extent2"] = g.params.extent2;
  j["nodes"] = g.size();
  j["constant"] = field.constant;
  j["weight"] = field.weight;
  for (const Insertion& ins : field.insertions) {
    j["insertions"].push_back({{"strength", ins.strength},
                               {"location", {ins.location.real(), ins.location.imag()}},
                               {"boundary", ins.boundary}});
  }
  std::ofstream js(path.string() + ".json");
  js << j.dump(2) << "\n";
}

FieldSample load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DiagnosticError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw DiagnosticError("not a field snapshot: " + path.string());
  if (get<std::uint32_t>(is) != kVersion) throw DiagnosticError("unsupported snapshot version");
  GridParams p;
  p.domain = static_cast<Domain>(get<std::uint32_t>(is));
  p.n1 = get<std::uint64_t>(is);
  p.n2 = get<std::uint64_t>(is);
  p.eps = get<double>(is);
  p.extent1 = get<double>(is);
  p.extent2 = get<double>(is);
  auto grid = std::make_shared<GridSpec>(rebuild_grid(p));
  const auto n = get<std::uint64_t>(is);
  if (n != grid->size()) throw DiagnosticError("snapshot node count does not match its grid");
  is.read(reinterpret_cast<char*>(grid->node_eps.data()), static_cast<std::streamsize>(n * sizeof(double)));
  FieldSample f;
  f.gaussian.resize(n);
  is.read(reinterpret_cast<char*>(f.gaussian.data()), static_cast<std::streamsize>(n * sizeof(double)));
  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t k = 0; k < count; ++k) {
    Insertion ins{};
    ins.strength = get<double>(is);
    const double re = get<double>(is);
    const double im = get<double>(is);
    ins.location = cplx(re, im);
    ins.boundary = get<std::uint8_t>(is) != 0;
    f.insertions.push_back(ins);
  }
  f.constant = get<double>(is);
  f.weight = get<double>(is);
  f.grid = grid;
  return f;
}

}  // namespace lab::field
