#pragma once

#include <numbers>

namespace lab {

/// Coupled LQG / SLE parameters. Construct through from_gamma or from_kappa;
/// both enforce the space-filling regime kappa > 8, i.e. 0 < gamma < sqrt(2).
struct LqgParams {
  double gamma;
  double kappa;
  double Q;     // 2/gamma + gamma/2
  double a2;    // mating-of-trees variance 2 / sin(4 pi / kappa)
  double corr;  // -cos(4 pi / kappa)

  static LqgParams from_gamma(double gamma);
  static LqgParams from_kappa(double kappa);

  double a() const;

  /// Scaling weight of an insertion, alpha/2 (Q - alpha/2).
  double delta(double alpha) const { return 0.5 * alpha * (Q - 0.5 * alpha); }

  /// Quadratic variation rate of X + Y, 2 a^2 (1 + corr) = 4 tan(pi gamma^2 / 8).
  double sum_variance() const { return 2.0 * a2 * (1.0 + corr); }
  /// Quadratic variation rate of X - Y, 4 cot(pi gamma^2 / 8).
  double difference_variance() const { return 2.0 * a2 * (1.0 - corr); }

  /// Scale b of the first-passage law of ell0 + X + Y: InverseGamma(1/2, b ell0^2)
  /// with b = 1 / (2 sum_variance) = cot(pi gamma^2 / 8) / 8.
  double first_passage_scale() const { return 1.0 / (2.0 * sum_variance()); }
  /// The alternative candidate tan(pi gamma^2 / 8) / 8, kept for comparison runs.
  double tangent_scale() const;

  /// Largest admissible interior insertion for chaos-mass purposes.
  double seiberg_bound() const { return Q; }
};

}  // namespace lab
