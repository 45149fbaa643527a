#include "lab/params.hpp"

#include <cmath>
#include <string>

#include "lab/error.hpp"

namespace lab {

namespace {

LqgParams build(double gamma, double kappa) {
  LqgParams p{};
  p.gamma = gamma;
  p.kappa = kappa;
  p.Q = 2.0 / gamma + gamma / 2.0;
  const double angle = 4.0 * std::numbers::pi / kappa;
  p.a2 = 2.0 / std::sin(angle);
  p.corr = -std::cos(angle);
  return p;
}

}  // namespace

LqgParams LqgParams::from_gamma(double gamma) {
  if (!(gamma > 0.0) || !(gamma < std::numbers::sqrt2)) {
    throw PreconditionError("gamma must lie in (0, sqrt 2), got " + std::to_string(gamma));
  }
  return build(gamma, 16.0 / (gamma * gamma));
}

LqgParams LqgParams::from_kappa(double kappa) {
  if (!(kappa > 8.0) || !std::isfinite(kappa)) {
    throw PreconditionError("kappa must exceed 8, got " + std::to_string(kappa));
  }
  return build(4.0 / std::sqrt(kappa), kappa);
}

double LqgParams::a() const { return std::sqrt(a2); }

double LqgParams::tangent_scale() const {
  return std::tan(std::numbers::pi * gamma * gamma / 8.0) / 8.0;
}

}  // namespace lab
